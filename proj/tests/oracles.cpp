#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "ftsim/reduce.hpp"

namespace oracle {

using ftsim::Rank;
using ftsim::RowRange;
using ftsim::SolverConfig;
using ftsim::tree_dot;

SeqMatrix seq_from_problem(const ftsim::Problem& p) {
  ftsim::LocalProblem lp = p.block_of(RowRange{0, p.global_rows});
  SeqMatrix m;
  m.n = p.global_rows;
  m.row_ptr = lp.a.row_ptr;
  m.col = lp.a.col;
  m.val = lp.a.val;
  m.b = lp.b;
  return m;
}

SeqMatrix stencil_poisson27(int n) {
  SeqMatrix m;
  m.n = static_cast<std::int64_t>(n) * n * n;
  m.row_ptr.assign(1, 0);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::int64_t i =
            static_cast<std::int64_t>(x) + static_cast<std::int64_t>(n) * y +
            static_cast<std::int64_t>(n) * n * z;
        std::vector<std::int64_t> cols;
        for (int dz = -1; dz <= 1; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx, yy = y + dy, zz = z + dz;
              if (xx < 0 || xx >= n || yy < 0 || yy >= n || zz < 0 || zz >= n) continue;
              cols.push_back(static_cast<std::int64_t>(xx) +
                             static_cast<std::int64_t>(n) * yy +
                             static_cast<std::int64_t>(n) * n * zz);
            }
          }
        }
        std::sort(cols.begin(), cols.end());
        double row_sum = 0.0;
        for (std::int64_t j : cols) {
          const double v = j == i ? 26.0 : -1.0;
          m.col.push_back(j);
          m.val.push_back(v);
          row_sum += v;
        }
        m.row_ptr.push_back(static_cast<std::int64_t>(m.col.size()));
        m.b.push_back(row_sum);
      }
    }
  }
  return m;
}

std::vector<double> spmv(const SeqMatrix& A, const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(A.n), 0.0);
  for (std::int64_t i = 0; i < A.n; ++i) {
    double acc = 0.0;
    for (std::int64_t k = A.row_ptr[static_cast<std::size_t>(i)];
         k < A.row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
      acc += A.val[static_cast<std::size_t>(k)] *
             x[static_cast<std::size_t>(A.col[static_cast<std::size_t>(k)])];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<double> lu_solve(const SeqMatrix& A) {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(A.n, A.n);
  for (std::int64_t i = 0; i < A.n; ++i)
    for (std::int64_t k = A.row_ptr[static_cast<std::size_t>(i)];
         k < A.row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
      dense(i, A.col[static_cast<std::size_t>(k)]) += A.val[static_cast<std::size_t>(k)];
  Eigen::VectorXd rhs(A.n);
  for (std::int64_t i = 0; i < A.n; ++i) rhs(i) = A.b[static_cast<std::size_t>(i)];
  Eigen::VectorXd x = dense.partialPivLu().solve(rhs);
  std::vector<double> out(static_cast<std::size_t>(A.n));
  for (std::int64_t i = 0; i < A.n; ++i) out[static_cast<std::size_t>(i)] = x(i);
  return out;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return tree_dot(a.data(), b.data(), a.size());
}

double nrm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

SeqFgmresResult seq_fgmres(const SeqMatrix& A, const SolverConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(A.n);
  const int m_in = cfg.m_inner;
  const int m_out = cfg.m_outer;

  std::vector<double> x(n, 0.0);
  std::vector<double> H(static_cast<std::size_t>(m_out + 1) * m_out, 0.0);
  std::vector<double> cs(static_cast<std::size_t>(m_out), 0.0);
  std::vector<double> sn(static_cast<std::size_t>(m_out), 0.0);
  std::vector<double> s(static_cast<std::size_t>(m_out) + 1, 0.0);
  auto href = [&](int i, int j) -> double& {
    return H[static_cast<std::size_t>(j) * (m_out + 1) + i];
  };

  std::vector<std::vector<double>> V, Z;
  std::vector<double> scratch;
  bool have_scratch = false;
  double bnorm = 0.0;
  bool bnorm_set = false;
  auto bref = [&]() { return bnorm > 0.0 ? bnorm : 1.0; };

  SeqFgmresResult res;
  std::int64_t next_step = 0;
  std::int64_t jc = 0;
  int converged = 0;
  double final_rel = 0.0;

  auto inner_solve = [&]() {
    const auto& vj = V[static_cast<std::size_t>(jc)];
    const double beta = nrm(vj);
    if (beta == 0.0) {
      Z.emplace_back(n, 0.0);
      return;
    }
    std::vector<std::vector<double>> Q;
    {
      std::vector<double> q0(n);
      for (std::size_t i = 0; i < n; ++i) q0[i] = vj[i] / beta;
      Q.push_back(std::move(q0));
    }
    std::vector<double> Hi(static_cast<std::size_t>(m_in + 1) * m_in, 0.0);
    std::vector<double> ics(static_cast<std::size_t>(m_in), 0.0);
    std::vector<double> isn(static_cast<std::size_t>(m_in), 0.0);
    std::vector<double> si(static_cast<std::size_t>(m_in) + 1, 0.0);
    auto hij = [&](int i, int j) -> double& {
      return Hi[static_cast<std::size_t>(j) * (m_in + 1) + i];
    };
    si[0] = beta;

    int done = 0;
    bool breakdown = false;
    for (int i = 1; i <= m_in && !breakdown; ++i) {
      const int c = i - 1;
      std::vector<double> w = spmv(A, Q[static_cast<std::size_t>(c)]);
      for (int k = 0; k <= c; ++k) {
        const double h = dot(Q[static_cast<std::size_t>(k)], w);
        for (std::size_t ii = 0; ii < n; ++ii) w[ii] -= h * Q[static_cast<std::size_t>(k)][ii];
        hij(k, c) = h;
      }
      const double wn = nrm(w);
      hij(i, c) = wn;
      if (wn > 0.0) {
        std::vector<double> q(n);
        for (std::size_t ii = 0; ii < n; ++ii) q[ii] = w[ii] / wn;
        Q.push_back(std::move(q));
      } else {
        breakdown = true;
      }
      for (int k = 0; k < c; ++k) {
        const double a = hij(k, c), b = hij(k + 1, c);
        hij(k, c) = ics[static_cast<std::size_t>(k)] * a + isn[static_cast<std::size_t>(k)] * b;
        hij(k + 1, c) = -isn[static_cast<std::size_t>(k)] * a + ics[static_cast<std::size_t>(k)] * b;
      }
      {
        const double a = hij(c, c), b = hij(c + 1, c);
        const double denom = std::sqrt(a * a + b * b);
        if (denom > 0.0) {
          ics[static_cast<std::size_t>(c)] = a / denom;
          isn[static_cast<std::size_t>(c)] = b / denom;
        } else {
          ics[static_cast<std::size_t>(c)] = 1.0;
          isn[static_cast<std::size_t>(c)] = 0.0;
        }
        hij(c, c) = ics[static_cast<std::size_t>(c)] * a + isn[static_cast<std::size_t>(c)] * b;
        hij(c + 1, c) = 0.0;
        si[static_cast<std::size_t>(c) + 1] =
            -isn[static_cast<std::size_t>(c)] * si[static_cast<std::size_t>(c)];
        si[static_cast<std::size_t>(c)] =
            ics[static_cast<std::size_t>(c)] * si[static_cast<std::size_t>(c)];
      }
      done = i;
      res.inner_iterations += 1;
    }

    std::vector<double> y(static_cast<std::size_t>(done), 0.0);
    for (int i = done - 1; i >= 0; --i) {
      double acc = si[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < done; ++k) acc -= hij(i, k) * y[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(i)] = hij(i, i) != 0.0 ? acc / hij(i, i) : 0.0;
    }
    std::vector<double> z(n, 0.0);
    for (int k = 0; k < done; ++k)
      for (std::size_t ii = 0; ii < n; ++ii)
        z[ii] += y[static_cast<std::size_t>(k)] * Q[static_cast<std::size_t>(k)][ii];
    Z.push_back(std::move(z));
  };

  auto outer_step = [&]() {
    inner_solve();
    std::vector<double> w = spmv(A, Z[static_cast<std::size_t>(jc)]);
    for (int k = 0; k <= jc; ++k) {
      const double h = dot(V[static_cast<std::size_t>(k)], w);
      for (std::size_t ii = 0; ii < n; ++ii) w[ii] -= h * V[static_cast<std::size_t>(k)][ii];
      href(k, static_cast<int>(jc)) = h;
    }
    const double hh = nrm(w);
    href(static_cast<int>(jc) + 1, static_cast<int>(jc)) = hh;
    {
      std::vector<double> v(n, 0.0);
      if (hh > 0.0)
        for (std::size_t ii = 0; ii < n; ++ii) v[ii] = w[ii] / hh;
      V.push_back(std::move(v));
    }
    for (int k = 0; k < jc; ++k) {
      const double a = href(k, static_cast<int>(jc)), b = href(k + 1, static_cast<int>(jc));
      href(k, static_cast<int>(jc)) =
          cs[static_cast<std::size_t>(k)] * a + sn[static_cast<std::size_t>(k)] * b;
      href(k + 1, static_cast<int>(jc)) =
          -sn[static_cast<std::size_t>(k)] * a + cs[static_cast<std::size_t>(k)] * b;
    }
    {
      const int j = static_cast<int>(jc);
      const double a = href(j, j), b = href(j + 1, j);
      const double denom = std::sqrt(a * a + b * b);
      if (denom > 0.0) {
        cs[static_cast<std::size_t>(j)] = a / denom;
        sn[static_cast<std::size_t>(j)] = b / denom;
      } else {
        cs[static_cast<std::size_t>(j)] = 1.0;
        sn[static_cast<std::size_t>(j)] = 0.0;
      }
      href(j, j) = cs[static_cast<std::size_t>(j)] * a + sn[static_cast<std::size_t>(j)] * b;
      href(j + 1, j) = 0.0;
      s[static_cast<std::size_t>(j) + 1] = -sn[static_cast<std::size_t>(j)] * s[static_cast<std::size_t>(j)];
      s[static_cast<std::size_t>(j)] = cs[static_cast<std::size_t>(j)] * s[static_cast<std::size_t>(j)];
    }
    res.history.push_back(std::abs(s[static_cast<std::size_t>(jc) + 1]) / bref());
    jc += 1;
    next_step += 1;
  };

  auto estimate_hit = [&]() {
    return jc > 0 && std::abs(s[static_cast<std::size_t>(jc)]) <= cfg.tol * bref();
  };

  while (true) {
    if (converged == 2) break;
    if (jc == 0) {
      if (next_step >= cfg.max_outer) break;
      if (!bnorm_set) {
        bnorm = nrm(A.b);
        bnorm_set = true;
      }
      std::vector<double> r0;
      if (have_scratch) {
        r0 = std::move(scratch);
        have_scratch = false;
      } else {
        std::vector<double> ax = spmv(A, x);
        r0.resize(n);
        for (std::size_t i = 0; i < n; ++i) r0[i] = A.b[i] - ax[i];
      }
      const double beta = nrm(r0);
      if (beta <= cfg.tol * bref()) {
        converged = 2;
        final_rel = beta / bref();
        break;
      }
      V.clear();
      Z.clear();
      std::vector<double> v0(n);
      for (std::size_t i = 0; i < n; ++i) v0[i] = r0[i] / beta;
      V.push_back(std::move(v0));
      std::fill(H.begin(), H.end(), 0.0);
      std::fill(cs.begin(), cs.end(), 0.0);
      std::fill(sn.begin(), sn.end(), 0.0);
      std::fill(s.begin(), s.end(), 0.0);
      s[0] = beta;
    }
    while (jc < m_out && next_step < cfg.max_outer && !estimate_hit()) outer_step();
    {
      const int j = static_cast<int>(jc);
      if (j > 0) {
        std::vector<double> y(static_cast<std::size_t>(j), 0.0);
        for (int i = j - 1; i >= 0; --i) {
          double acc = s[static_cast<std::size_t>(i)];
          for (int k = i + 1; k < j; ++k) acc -= href(i, k) * y[static_cast<std::size_t>(k)];
          y[static_cast<std::size_t>(i)] = href(i, i) != 0.0 ? acc / href(i, i) : 0.0;
        }
        for (int k = 0; k < j; ++k)
          for (std::size_t ii = 0; ii < n; ++ii)
            x[ii] += y[static_cast<std::size_t>(k)] * Z[static_cast<std::size_t>(k)][ii];
      }
      std::vector<double> ax = spmv(A, x);
      std::vector<double> r(n);
      for (std::size_t i = 0; i < n; ++i) r[i] = A.b[i] - ax[i];
      const double rho = nrm(r);
      final_rel = rho / bref();
      if (final_rel <= cfg.tol) converged = 2;
      scratch = std::move(r);
      have_scratch = true;
      jc = 0;
    }
    if (next_step >= cfg.max_outer) break;
  }

  res.x = std::move(x);
  res.outer_steps = next_step;
  res.final_residual = final_rel;
  res.converged = converged == 2;
  return res;
}

namespace {

bool hosts_replica(Rank host, Rank owner, int p, int redundancy) {
  const int span = std::min(redundancy, p - 1);
  const int d = (static_cast<int>(host) - static_cast<int>(owner) + p) % p;
  return d >= 1 && d <= span;
}

}  // namespace

std::string check_transfer_plan(const ftsim::TransferPlan& plan,
                                const std::vector<Rank>& failed_old, int redundancy) {
  const int p_old = plan.old_dist.parts();
  std::vector<bool> dead(static_cast<std::size_t>(p_old), false);
  for (Rank f : failed_old) dead[static_cast<std::size_t>(f)] = true;

  std::vector<Rank> survivors;
  for (Rank r = 0; r < p_old; ++r)
    if (!dead[static_cast<std::size_t>(r)]) survivors.push_back(r);
  if (survivors != plan.survivors_old) return "survivor list mismatch";
  if (plan.new_dist.parts() != static_cast<int>(survivors.size()))
    return "new distribution has wrong part count";
  if (plan.new_dist.rows != plan.old_dist.rows) return "row count changed";

  // row-by-row coverage: every new-range row served exactly once
  for (Rank nr = 0; nr < plan.new_dist.parts(); ++nr) {
    const Rank d = survivors[static_cast<std::size_t>(nr)];
    const RowRange want = plan.new_dist.range_of(nr);
    const RowRange own = plan.old_dist.range_of(d);
    std::vector<int> served(static_cast<std::size_t>(want.size()), 0);
    for (std::int64_t row = want.begin; row < want.end; ++row)
      if (row >= own.begin && row < own.end) served[static_cast<std::size_t>(row - want.begin)] += 1;
    for (const auto& it : plan.items) {
      if (it.dst_new != nr) continue;
      for (std::int64_t row = it.rows.begin; row < it.rows.end; ++row) {
        if (row < want.begin || row >= want.end) return "item outside destination range";
        served[static_cast<std::size_t>(row - want.begin)] += 1;
      }
    }
    for (std::size_t i = 0; i < served.size(); ++i) {
      if (served[i] != 1) {
        std::ostringstream ss;
        ss << "row " << want.begin + static_cast<std::int64_t>(i) << " of new rank " << nr
           << " served " << served[i] << " times";
        return ss.str();
      }
    }
  }

  for (const auto& it : plan.items) {
    if (it.rows.size() <= 0) return "empty item";
    if (it.dst_new < 0 || it.dst_new >= plan.new_dist.parts()) return "bad dst_new";
    if (survivors[static_cast<std::size_t>(it.dst_new)] != it.dst_old)
      return "dst_old does not match dst_new";
    for (std::int64_t row = it.rows.begin; row < it.rows.end; ++row)
      if (plan.old_dist.owner_of(row) != it.owner_old) return "item spans owners";
    if (it.owner_old == it.dst_old) return "item for rows the destination already owns";
    if (dead[static_cast<std::size_t>(it.served_by_old)]) return "item served by a dead rank";

    if (it.kind == ftsim::SourceKind::LocalMemory) {
      if (it.served_by_old != it.owner_old) return "local item not served by owner";
      if (dead[static_cast<std::size_t>(it.owner_old)]) return "local item from dead owner";
      if (hosts_replica(it.dst_old, it.owner_old, p_old, redundancy))
        return "destination-hosted replica should have been preferred";
    } else {
      if (!hosts_replica(it.served_by_old, it.owner_old, p_old, redundancy))
        return "backup item served by a non-buddy";
      if (it.served_by_old != it.dst_old) {
        // remote replica read is the last resort: owner dead, destination
        // hosts nothing, and the host is the lowest-ranked surviving buddy
        if (!dead[static_cast<std::size_t>(it.owner_old)])
          return "remote backup used while owner is alive";
        if (hosts_replica(it.dst_old, it.owner_old, p_old, redundancy))
          return "remote backup used while destination hosts a replica";
        for (Rank h = 0; h < it.served_by_old; ++h)
          if (!dead[static_cast<std::size_t>(h)] &&
              hosts_replica(h, it.owner_old, p_old, redundancy))
            return "remote backup host is not the lowest surviving buddy";
      }
    }
  }
  return "";
}

double r_squared(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return 0.0;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = slope * xs[i] + intercept;
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - mean) * (ys[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  if (got.size() != want.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::abs(want[i]), 1e-300);
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

double rel_norm_diff(const std::vector<double>& got, const std::vector<double>& want) {
  if (got.size() != want.size()) return std::numeric_limits<double>::infinity();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace oracle
