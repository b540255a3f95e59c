#include "ftsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ftsim/errors.hpp"
#include "ftsim/reduce.hpp"
#include "ftsim/serialize.hpp"

namespace ftsim {

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ConfigError("solver: tol must be positive");
  if (m_inner < 1) throw ConfigError("solver: m_inner must be >= 1");
  if (m_outer < 1) throw ConfigError("solver: m_outer must be >= 1");
  if (max_outer < 1) throw ConfigError("solver: max_outer must be >= 1");
}

DistributedSolver::DistributedSolver(World& world, CheckpointService& ckpt,
                                     SolverConfig cfg, const Problem& problem)
    : world_(world), ckpt_(ckpt), cfg_(cfg) {
  cfg_.validate();
  if (problem.global_rows < world.comm().size())
    throw ConfigError("solver: fewer rows than processes");
  const int p = world_.comm().size();
  dist_ = canonical_distribution(problem.global_rows, p);
  states_.resize(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) {
    auto& st = states_[static_cast<size_t>(r)];
    st.prob = problem.block_of(dist_.range_of(r));
    st.x_seed.assign(st.prob.b.size(), 0.0);
  }
  shared_.H.assign(static_cast<size_t>(cfg_.m_outer + 1) * cfg_.m_outer, 0.0);
  shared_.cs.assign(static_cast<size_t>(cfg_.m_outer), 0.0);
  shared_.sn.assign(static_cast<size_t>(cfg_.m_outer), 0.0);
  shared_.s.assign(static_cast<size_t>(cfg_.m_outer) + 1, 0.0);
  rebuild_patterns(Category::Useful);
}

double& DistributedSolver::href(int i, int j) {
  return shared_.H[static_cast<size_t>(j) * (cfg_.m_outer + 1) + i];
}

double DistributedSolver::bnorm_ref() const {
  return shared_.bnorm > 0.0 ? shared_.bnorm : 1.0;
}

bool DistributedSolver::estimate_hit() const {
  return shared_.jc > 0 &&
         std::abs(shared_.s[static_cast<size_t>(shared_.jc)]) <= cfg_.tol * bnorm_ref();
}

void DistributedSolver::rebuild_patterns(Category cat) {
  const int p = nranks();
  std::vector<const CsrBlock*> blocks(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) blocks[static_cast<size_t>(r)] = &states_[static_cast<size_t>(r)].prob.a;
  auto patterns = build_patterns(blocks, dist_);

  std::vector<double> flops(static_cast<size_t>(p));
  std::size_t handshake_bytes = 0;
  for (Rank r = 0; r < p; ++r) {
    auto& st = states_[static_cast<size_t>(r)];
    st.pattern = std::move(patterns[static_cast<size_t>(r)]);
    st.ext_ids.clear();
    for (const auto& pi : st.pattern.recv)
      st.ext_ids.insert(st.ext_ids.end(), pi.indices.begin(), pi.indices.end());
    st.ext.assign(st.ext_ids.size(), 0.0);

    const RowRange own = st.prob.a.rows;
    st.col_map.resize(st.prob.a.col.size());
    for (size_t k = 0; k < st.prob.a.col.size(); ++k) {
      const std::int64_t c = st.prob.a.col[k];
      if (own.contains(c)) {
        st.col_map[k] = c - own.begin;
      } else {
        const auto it = std::lower_bound(st.ext_ids.begin(), st.ext_ids.end(), c);
        if (it == st.ext_ids.end() || *it != c)
          throw SimInvariantError("rebuild_patterns: import index missing");
        st.col_map[k] = own.size() + (it - st.ext_ids.begin());
      }
    }
    flops[static_cast<size_t>(r)] = 2.0 * static_cast<double>(st.prob.a.nnz());
    handshake_bytes += sizeof(std::int64_t) * static_cast<size_t>(st.pattern.recv_count());
  }

  for (auto& st : states_) st.send_plan.clear();
  for (Rank dstr = 0; dstr < p; ++dstr) {
    std::int64_t off = 0;
    for (const auto& pi : states_[static_cast<size_t>(dstr)].pattern.recv) {
      auto& sender = states_[static_cast<size_t>(pi.peer)];
      const std::vector<std::int64_t>* src_indices = nullptr;
      for (const auto& se : sender.pattern.send) {
        if (se.peer == dstr) {
          src_indices = &se.indices;
          break;
        }
      }
      if (src_indices == nullptr)
        throw SimInvariantError("rebuild_patterns: send/recv lists disagree");
      sender.send_plan.push_back(SendRun{dstr, src_indices, off});
      off += static_cast<std::int64_t>(pi.indices.size());
    }
  }

  world_.compute_phase(cat, flops);
  // peers agree on who imports what before the first exchange
  world_.collective_charge(cat, handshake_bytes);
}

double DistributedSolver::dist_dot(Category cat, const VecOf& a, const VecOf& b,
                                   double extra_flops_per_row) {
  const int p = nranks();
  std::vector<double> partial(static_cast<size_t>(p)), flops(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) {
    const auto& av = a(r);
    const auto& bv = b(r);
    if (av.size() != bv.size()) throw SimInvariantError("dist_dot: slice size mismatch");
    partial[static_cast<size_t>(r)] = tree_dot(av.data(), bv.data(), av.size());
    flops[static_cast<size_t>(r)] = (2.0 + extra_flops_per_row) * static_cast<double>(av.size());
  }
  world_.compute_phase(cat, flops);
  return world_.allreduce_sum(cat, partial, sizeof(double));
}

double DistributedSolver::dist_norm(Category cat, const VecOf& a) {
  return std::sqrt(dist_dot(cat, a, a));
}

void DistributedSolver::dist_spmv(Category cat, const VecOf& x,
                                  std::vector<std::vector<double>>& out) {
  const int p = nranks();
  std::vector<Msg> msgs;
  // Submit the exchange as an ascending sweep then a descending one. The
  // phase engine serializes per endpoint in submission order, so rank-major
  // submission would chain distinct pairs behind each other and the phase
  // would grow with p instead of staying at two message times.
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (Rank r = 0; r < p; ++r) {
      const auto& st = states_[static_cast<size_t>(r)];
      const std::vector<double>* src = &x(r);
      const std::int64_t base = st.prob.a.rows.begin;
      for (const SendRun& run : st.send_plan) {
        if ((run.dst > r) != (sweep == 0)) continue;
        std::vector<double>* dst_ext = &states_[static_cast<size_t>(run.dst)].ext;
        const std::vector<std::int64_t>* ids = run.indices;
        const std::int64_t off = run.dst_offset;
        msgs.push_back(world_.make_msg(world_.comm().pid_of(r), world_.comm().pid_of(run.dst),
                                       ids->size() * sizeof(double),
                                       [src, ids, base, off, dst_ext]() {
                                         for (size_t t = 0; t < ids->size(); ++t)
                                           (*dst_ext)[static_cast<size_t>(off) + t] =
                                               (*src)[static_cast<size_t>((*ids)[t] - base)];
                                       }));
      }
    }
  }
  world_.message_phase(cat, std::move(msgs));

  std::vector<double> flops(static_cast<size_t>(p));
  out.resize(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) {
    const auto& st = states_[static_cast<size_t>(r)];
    const auto& xr = x(r);
    const std::int64_t len = st.prob.a.rows.size();
    auto& o = out[static_cast<size_t>(r)];
    o.assign(static_cast<size_t>(len), 0.0);
    for (std::int64_t i = 0; i < len; ++i) {
      double acc = 0.0;
      for (std::int64_t k = st.prob.a.row_ptr[static_cast<size_t>(i)];
           k < st.prob.a.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
        const std::int64_t j = st.col_map[static_cast<size_t>(k)];
        const double v = j < len ? xr[static_cast<size_t>(j)]
                                 : st.ext[static_cast<size_t>(j - len)];
        acc += st.prob.a.val[static_cast<size_t>(k)] * v;
      }
      o[static_cast<size_t>(i)] = acc;
    }
    flops[static_cast<size_t>(r)] = 2.0 * static_cast<double>(st.prob.a.nnz());
  }
  world_.compute_phase(cat, flops);
}

void DistributedSolver::cycle_prologue(Category cat) {
  const int p = nranks();
  if (!shared_.bnorm_set) {
    shared_.bnorm = dist_norm(
        cat, [this](Rank r) -> const std::vector<double>& { return states_[static_cast<size_t>(r)].prob.b; });
    shared_.bnorm_set = 1;
  }

  std::vector<std::vector<double>> r0;
  if (have_r0_scratch_) {
    r0 = std::move(r0_scratch_);
    r0_scratch_.clear();
    have_r0_scratch_ = false;
  } else {
    dist_spmv(cat,
              [this](Rank r) -> const std::vector<double>& { return states_[static_cast<size_t>(r)].x_seed; },
              r0);
    std::vector<double> flops(static_cast<size_t>(p));
    for (Rank r = 0; r < p; ++r) {
      auto& st = states_[static_cast<size_t>(r)];
      auto& v = r0[static_cast<size_t>(r)];
      for (size_t i = 0; i < v.size(); ++i) v[i] = st.prob.b[i] - v[i];
      flops[static_cast<size_t>(r)] = static_cast<double>(v.size());
    }
    world_.compute_phase(cat, flops);
  }

  const double beta =
      dist_norm(cat, [&r0](Rank r) -> const std::vector<double>& { return r0[static_cast<size_t>(r)]; });
  if (beta <= cfg_.tol * bnorm_ref()) {
    shared_.converged = 2;
    final_rel_residual_ = beta / bnorm_ref();
    return;
  }

  std::vector<double> flops(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) {
    auto& st = states_[static_cast<size_t>(r)];
    st.V.clear();
    st.Z.clear();
    auto& rv = r0[static_cast<size_t>(r)];
    std::vector<double> v0(rv.size());
    for (size_t i = 0; i < rv.size(); ++i) v0[i] = rv[i] / beta;
    st.V.push_back(std::move(v0));
    flops[static_cast<size_t>(r)] = static_cast<double>(rv.size());
  }
  world_.compute_phase(cat, flops);

  std::fill(shared_.H.begin(), shared_.H.end(), 0.0);
  std::fill(shared_.cs.begin(), shared_.cs.end(), 0.0);
  std::fill(shared_.sn.begin(), shared_.sn.end(), 0.0);
  std::fill(shared_.s.begin(), shared_.s.end(), 0.0);
  shared_.s[0] = beta;
}

void DistributedSolver::inner_solve(std::int64_t step, Category cat_step) {
  const int p = nranks();
  const int m = cfg_.m_inner;
  const int jc = static_cast<int>(shared_.jc);
  auto vj = [this, jc](Rank r) -> const std::vector<double>& {
    return states_[static_cast<size_t>(r)].V[static_cast<size_t>(jc)];
  };

  const double beta = dist_norm(cat_step, vj);
  if (beta == 0.0) {
    for (auto& st : states_) st.Z.emplace_back(st.x_seed.size(), 0.0);
    return;
  }

  std::vector<std::vector<std::vector<double>>> Q(static_cast<size_t>(p));
  {
    std::vector<double> flops(static_cast<size_t>(p));
    for (Rank r = 0; r < p; ++r) {
      const auto& v = vj(r);
      std::vector<double> q0(v.size());
      for (size_t i = 0; i < v.size(); ++i) q0[i] = v[i] / beta;
      Q[static_cast<size_t>(r)].push_back(std::move(q0));
      flops[static_cast<size_t>(r)] = static_cast<double>(v.size());
    }
    world_.compute_phase(cat_step, flops);
  }

  std::vector<double> Hi(static_cast<size_t>(m + 1) * m, 0.0);
  std::vector<double> cs(static_cast<size_t>(m), 0.0), sn(static_cast<size_t>(m), 0.0);
  std::vector<double> si(static_cast<size_t>(m) + 1, 0.0);
  auto hij = [&](int i, int j) -> double& { return Hi[static_cast<size_t>(j) * (m + 1) + i]; };
  si[0] = beta;

  int done = 0;
  bool breakdown = false;
  for (int i = 1; i <= m && !breakdown; ++i) {
    world_.fire_inner(step, i);
    const Category cat =
        (shared_.ell + 1 <= ell_hw_) ? Category::Recompute : Category::Useful;
    const int c = i - 1;

    std::vector<std::vector<double>> w;
    dist_spmv(cat,
              [&Q, c](Rank r) -> const std::vector<double>& {
                return Q[static_cast<size_t>(r)][static_cast<size_t>(c)];
              },
              w);

    for (int k = 0; k <= c; ++k) {
      const double h = dist_dot(
          cat,
          [&Q, k](Rank r) -> const std::vector<double>& {
            return Q[static_cast<size_t>(r)][static_cast<size_t>(k)];
          },
          [&w](Rank r) -> const std::vector<double>& { return w[static_cast<size_t>(r)]; },
          2.0);
      for (Rank r = 0; r < p; ++r) {
        auto& wr = w[static_cast<size_t>(r)];
        const auto& qk = Q[static_cast<size_t>(r)][static_cast<size_t>(k)];
        for (size_t ii = 0; ii < wr.size(); ++ii) wr[ii] -= h * qk[ii];
      }
      hij(k, c) = h;
    }

    const double nrm = dist_norm(
        cat, [&w](Rank r) -> const std::vector<double>& { return w[static_cast<size_t>(r)]; });
    hij(i, c) = nrm;
    if (nrm > 0.0) {
      std::vector<double> flops(static_cast<size_t>(p));
      for (Rank r = 0; r < p; ++r) {
        auto& wr = w[static_cast<size_t>(r)];
        std::vector<double> q(wr.size());
        for (size_t ii = 0; ii < wr.size(); ++ii) q[ii] = wr[ii] / nrm;
        Q[static_cast<size_t>(r)].push_back(std::move(q));
        flops[static_cast<size_t>(r)] = static_cast<double>(wr.size());
      }
      world_.compute_phase(cat, flops);
    } else {
      breakdown = true;  // exact solution inside the current subspace
    }

    for (int k = 0; k < c; ++k) {
      const double a = hij(k, c), b = hij(k + 1, c);
      hij(k, c) = cs[static_cast<size_t>(k)] * a + sn[static_cast<size_t>(k)] * b;
      hij(k + 1, c) = -sn[static_cast<size_t>(k)] * a + cs[static_cast<size_t>(k)] * b;
    }
    {
      const double a = hij(c, c), b = hij(c + 1, c);
      const double denom = std::sqrt(a * a + b * b);
      if (denom > 0.0) {
        cs[static_cast<size_t>(c)] = a / denom;
        sn[static_cast<size_t>(c)] = b / denom;
      } else {
        cs[static_cast<size_t>(c)] = 1.0;
        sn[static_cast<size_t>(c)] = 0.0;
      }
      hij(c, c) = cs[static_cast<size_t>(c)] * a + sn[static_cast<size_t>(c)] * b;
      hij(c + 1, c) = 0.0;
      si[static_cast<size_t>(c) + 1] = -sn[static_cast<size_t>(c)] * si[static_cast<size_t>(c)];
      si[static_cast<size_t>(c)] = cs[static_cast<size_t>(c)] * si[static_cast<size_t>(c)];
    }
    world_.uniform_compute(cat, 6.0 * i);

    done = i;
    shared_.ell += 1;
    ell_hw_ = std::max(ell_hw_, shared_.ell);
    executed_inner_ += 1;
  }

  std::vector<double> y(static_cast<size_t>(done), 0.0);
  for (int i = done - 1; i >= 0; --i) {
    double acc = si[static_cast<size_t>(i)];
    for (int k = i + 1; k < done; ++k) acc -= hij(i, k) * y[static_cast<size_t>(k)];
    y[static_cast<size_t>(i)] = hij(i, i) != 0.0 ? acc / hij(i, i) : 0.0;
  }
  world_.uniform_compute(cat_step, static_cast<double>(done) * done);

  std::vector<double> flops(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r) {
    auto& st = states_[static_cast<size_t>(r)];
    std::vector<double> z(st.x_seed.size(), 0.0);
    for (int k = 0; k < done; ++k) {
      const auto& qk = Q[static_cast<size_t>(r)][static_cast<size_t>(k)];
      for (size_t ii = 0; ii < z.size(); ++ii) z[ii] += y[static_cast<size_t>(k)] * qk[ii];
    }
    st.Z.push_back(std::move(z));
    flops[static_cast<size_t>(r)] = 2.0 * done * static_cast<double>(st.x_seed.size());
  }
  world_.compute_phase(cat_step, flops);
}

void DistributedSolver::outer_step(const Hooks& hooks) {
  const std::int64_t t = next_step_;
  const Category cat = t <= step_hw_ ? Category::Recompute : Category::Useful;
  world_.fire_boundary(t);
  if (world_.config().proactive_barrier_every > 0 && t > 0 &&
      t % world_.config().proactive_barrier_every == 0)
    world_.barrier(cat);

  const int p = nranks();
  const int jc = static_cast<int>(shared_.jc);
  inner_solve(t, cat);

  std::vector<std::vector<double>> w;
  dist_spmv(cat,
            [this, jc](Rank r) -> const std::vector<double>& {
              return states_[static_cast<size_t>(r)].Z[static_cast<size_t>(jc)];
            },
            w);

  for (int k = 0; k <= jc; ++k) {
    const double h = dist_dot(
        cat,
        [this, k](Rank r) -> const std::vector<double>& {
          return states_[static_cast<size_t>(r)].V[static_cast<size_t>(k)];
        },
        [&w](Rank r) -> const std::vector<double>& { return w[static_cast<size_t>(r)]; },
        2.0);
    for (Rank r = 0; r < p; ++r) {
      auto& wr = w[static_cast<size_t>(r)];
      const auto& vk = states_[static_cast<size_t>(r)].V[static_cast<size_t>(k)];
      for (size_t ii = 0; ii < wr.size(); ++ii) wr[ii] -= h * vk[ii];
    }
    href(k, jc) = h;
  }

  const double hh = dist_norm(
      cat, [&w](Rank r) -> const std::vector<double>& { return w[static_cast<size_t>(r)]; });
  href(jc + 1, jc) = hh;
  {
    std::vector<double> flops(static_cast<size_t>(p));
    for (Rank r = 0; r < p; ++r) {
      auto& wr = w[static_cast<size_t>(r)];
      std::vector<double> v(wr.size());
      if (hh > 0.0) {
        for (size_t ii = 0; ii < wr.size(); ++ii) v[ii] = wr[ii] / hh;
      }
      states_[static_cast<size_t>(r)].V.push_back(std::move(v));
      flops[static_cast<size_t>(r)] = static_cast<double>(wr.size());
    }
    world_.compute_phase(cat, flops);
  }

  for (int k = 0; k < jc; ++k) {
    const double a = href(k, jc), b = href(k + 1, jc);
    href(k, jc) = shared_.cs[static_cast<size_t>(k)] * a + shared_.sn[static_cast<size_t>(k)] * b;
    href(k + 1, jc) = -shared_.sn[static_cast<size_t>(k)] * a + shared_.cs[static_cast<size_t>(k)] * b;
  }
  {
    const double a = href(jc, jc), b = href(jc + 1, jc);
    const double denom = std::sqrt(a * a + b * b);
    if (denom > 0.0) {
      shared_.cs[static_cast<size_t>(jc)] = a / denom;
      shared_.sn[static_cast<size_t>(jc)] = b / denom;
    } else {
      shared_.cs[static_cast<size_t>(jc)] = 1.0;
      shared_.sn[static_cast<size_t>(jc)] = 0.0;
    }
    href(jc, jc) = shared_.cs[static_cast<size_t>(jc)] * a + shared_.sn[static_cast<size_t>(jc)] * b;
    href(jc + 1, jc) = 0.0;
    shared_.s[static_cast<size_t>(jc) + 1] =
        -shared_.sn[static_cast<size_t>(jc)] * shared_.s[static_cast<size_t>(jc)];
    shared_.s[static_cast<size_t>(jc)] =
        shared_.cs[static_cast<size_t>(jc)] * shared_.s[static_cast<size_t>(jc)];
  }
  world_.uniform_compute(cat, 6.0 * (jc + 1));

  shared_.history.push_back(std::abs(shared_.s[static_cast<size_t>(jc) + 1]) / bnorm_ref());
  shared_.jc = jc + 1;
  next_step_ = t + 1;
  step_hw_ = std::max(step_hw_, t);
  if (hooks.after_outer_step) hooks.after_outer_step(t);
}

void DistributedSolver::cycle_epilogue(Category cat) {
  const int p = nranks();
  const int j = static_cast<int>(shared_.jc);
  if (j > 0) {
    std::vector<double> y(static_cast<size_t>(j), 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double acc = shared_.s[static_cast<size_t>(i)];
      for (int k = i + 1; k < j; ++k) acc -= href(i, k) * y[static_cast<size_t>(k)];
      y[static_cast<size_t>(i)] = href(i, i) != 0.0 ? acc / href(i, i) : 0.0;
    }
    world_.uniform_compute(cat, static_cast<double>(j) * j);

    std::vector<double> flops(static_cast<size_t>(p));
    for (Rank r = 0; r < p; ++r) {
      auto& st = states_[static_cast<size_t>(r)];
      for (int k = 0; k < j; ++k) {
        const auto& zk = st.Z[static_cast<size_t>(k)];
        for (size_t ii = 0; ii < st.x_seed.size(); ++ii)
          st.x_seed[ii] += y[static_cast<size_t>(k)] * zk[ii];
      }
      flops[static_cast<size_t>(r)] = 2.0 * j * static_cast<double>(st.x_seed.size());
    }
    world_.compute_phase(cat, flops);
  }

  // true residual decides convergence and seeds the next cycle
  std::vector<std::vector<double>> res;
  dist_spmv(cat,
            [this](Rank r) -> const std::vector<double>& { return states_[static_cast<size_t>(r)].x_seed; },
            res);
  {
    std::vector<double> flops(static_cast<size_t>(p));
    for (Rank r = 0; r < p; ++r) {
      auto& st = states_[static_cast<size_t>(r)];
      auto& v = res[static_cast<size_t>(r)];
      for (size_t i = 0; i < v.size(); ++i) v[i] = st.prob.b[i] - v[i];
      flops[static_cast<size_t>(r)] = static_cast<double>(v.size());
    }
    world_.compute_phase(cat, flops);
  }
  const double rho = dist_norm(
      cat, [&res](Rank r) -> const std::vector<double>& { return res[static_cast<size_t>(r)]; });
  final_rel_residual_ = rho / bnorm_ref();
  if (final_rel_residual_ <= cfg_.tol) shared_.converged = 2;
  r0_scratch_ = std::move(res);
  have_r0_scratch_ = true;
  shared_.jc = 0;
}

SolveStats DistributedSolver::run(const Hooks& hooks) {
  while (true) {
    if (shared_.converged == 2) break;
    if (shared_.jc == 0) {
      if (next_step_ >= cfg_.max_outer) break;
      const Category cat = next_step_ <= step_hw_ ? Category::Recompute : Category::Useful;
      cycle_prologue(cat);
      if (shared_.converged == 2) break;
    }
    while (shared_.jc < cfg_.m_outer && next_step_ < cfg_.max_outer && !estimate_hit())
      outer_step(hooks);
    {
      const Category cat = next_step_ <= step_hw_ ? Category::Recompute : Category::Useful;
      cycle_epilogue(cat);
    }
    if (next_step_ >= cfg_.max_outer) break;
  }
  return stats();
}

SolveStats DistributedSolver::stats() const {
  SolveStats st;
  st.outer_steps = next_step_;
  st.inner_iterations = shared_.ell;
  st.executed_inner = executed_inner_;
  st.final_residual = final_rel_residual_;
  st.converged = shared_.converged == 2;
  st.history = shared_.history;
  return st;
}

std::vector<std::uint8_t> DistributedSolver::payload_static(Rank r) const {
  return serialize_problem(states_.at(static_cast<size_t>(r)).prob);
}

std::vector<std::uint8_t> DistributedSolver::serialize_shared() const {
  ByteWriter w;
  w.i64(shared_.jc);
  w.i64(next_step_);
  w.i64(shared_.ell);
  w.u32(shared_.converged);
  w.u32(shared_.bnorm_set);
  w.f64(shared_.bnorm);
  w.f64_array(shared_.H);
  w.f64_array(shared_.cs);
  w.f64_array(shared_.sn);
  w.f64_array(shared_.s);
  w.f64_array(shared_.history);
  return w.take();
}

void DistributedSolver::restore_shared(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  shared_.jc = r.i64();
  next_step_ = r.i64();
  shared_.ell = r.i64();
  shared_.converged = r.u32();
  shared_.bnorm_set = r.u32();
  shared_.bnorm = r.f64();
  shared_.H = r.f64_array();
  shared_.cs = r.f64_array();
  shared_.sn = r.f64_array();
  shared_.s = r.f64_array();
  shared_.history = r.f64_array();
  r.done();
  if (shared_.H.size() != static_cast<size_t>(cfg_.m_outer + 1) * cfg_.m_outer ||
      shared_.cs.size() != static_cast<size_t>(cfg_.m_outer) ||
      shared_.sn.size() != static_cast<size_t>(cfg_.m_outer) ||
      shared_.s.size() != static_cast<size_t>(cfg_.m_outer) + 1 ||
      shared_.jc < 0 || shared_.jc > cfg_.m_outer)
    throw SimInvariantError("restore_shared: malformed replicated block");
}

std::vector<std::uint8_t> DistributedSolver::payload_dynamic(Rank r) const {
  const auto& st = states_.at(static_cast<size_t>(r));
  ByteWriter w;
  w.blob(serialize_shared());
  w.i64(st.prob.a.rows.begin);
  w.i64(st.prob.a.rows.end);
  w.f64_array(st.x_seed);
  w.u64(st.V.size());
  for (const auto& v : st.V) w.f64_array(v);
  w.u64(st.Z.size());
  for (const auto& z : st.Z) w.f64_array(z);
  return w.take();
}

void DistributedSolver::apply_dynamic_payload(Rank slot, const std::vector<std::uint8_t>& bytes,
                                              bool adopt_shared) {
  ByteReader r(bytes);
  const auto rep = r.blob();
  if (adopt_shared) {
    restore_shared(rep);
  } else if (rep != serialize_shared()) {
    // replicated blocks are produced by one code path; divergence means the
    // deterministic-replication contract broke somewhere upstream
    throw SimInvariantError("apply_dynamic_payload: replicated state divergence");
  }
  auto& st = states_.at(static_cast<size_t>(slot));
  const std::int64_t begin = r.i64();
  const std::int64_t end = r.i64();
  const RowRange want = dist_.range_of(slot);
  if (RowRange{begin, end} != want)
    throw SimInvariantError("apply_dynamic_payload: row range mismatch");
  st.x_seed = r.f64_array();
  const std::uint64_t nv = r.u64();
  st.V.clear();
  for (std::uint64_t k = 0; k < nv; ++k) st.V.push_back(r.f64_array());
  const std::uint64_t nz = r.u64();
  st.Z.clear();
  for (std::uint64_t k = 0; k < nz; ++k) st.Z.push_back(r.f64_array());
  r.done();

  const auto rows = static_cast<size_t>(want.size());
  if (st.x_seed.size() != rows)
    throw SimInvariantError("apply_dynamic_payload: seed size mismatch");
  for (const auto& v : st.V)
    if (v.size() != rows) throw SimInvariantError("apply_dynamic_payload: basis size mismatch");
  for (const auto& z : st.Z)
    if (z.size() != rows) throw SimInvariantError("apply_dynamic_payload: correction size mismatch");
}

void DistributedSolver::reset_dynamic() {
  for (auto& st : states_) {
    st.x_seed.assign(st.prob.b.size(), 0.0);
    st.V.clear();
    st.Z.clear();
  }
  std::fill(shared_.H.begin(), shared_.H.end(), 0.0);
  std::fill(shared_.cs.begin(), shared_.cs.end(), 0.0);
  std::fill(shared_.sn.begin(), shared_.sn.end(), 0.0);
  std::fill(shared_.s.begin(), shared_.s.end(), 0.0);
  shared_.history.clear();
  shared_.jc = 0;
  shared_.ell = 0;
  shared_.converged = 0;
  shared_.bnorm_set = 0;
  shared_.bnorm = 0.0;
  next_step_ = 0;
  final_rel_residual_ = 0.0;
  r0_scratch_.clear();
  have_r0_scratch_ = false;
}

namespace {

// distributed slices of one owner's solver state, parsed or sliced row-wise
struct DynSlices {
  RowRange rows{0, 0};
  std::vector<double> x;
  std::vector<std::vector<double>> V, Z;
};

DynSlices parse_dyn_payload(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  (void)r.blob();  // replicated block, not needed row-wise
  DynSlices d;
  d.rows.begin = r.i64();
  d.rows.end = r.i64();
  d.x = r.f64_array();
  const std::uint64_t nv = r.u64();
  for (std::uint64_t k = 0; k < nv; ++k) d.V.push_back(r.f64_array());
  const std::uint64_t nz = r.u64();
  for (std::uint64_t k = 0; k < nz; ++k) d.Z.push_back(r.f64_array());
  r.done();
  return d;
}

DynSlices slice_dyn(const DynSlices& src, RowRange take) {
  DynSlices out;
  out.rows = take;
  const auto a = static_cast<size_t>(take.begin - src.rows.begin);
  const auto b = static_cast<size_t>(take.end - src.rows.begin);
  out.x.assign(src.x.begin() + a, src.x.begin() + b);
  for (const auto& v : src.V) out.V.emplace_back(v.begin() + a, v.begin() + b);
  for (const auto& z : src.Z) out.Z.emplace_back(z.begin() + a, z.begin() + b);
  return out;
}

std::vector<std::uint8_t> serialize_dyn(const DynSlices& d) {
  ByteWriter w;
  w.i64(d.rows.begin);
  w.i64(d.rows.end);
  w.f64_array(d.x);
  w.u64(d.V.size());
  for (const auto& v : d.V) w.f64_array(v);
  w.u64(d.Z.size());
  for (const auto& z : d.Z) w.f64_array(z);
  return w.take();
}

DynSlices deserialize_dyn(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  DynSlices d;
  d.rows.begin = r.i64();
  d.rows.end = r.i64();
  d.x = r.f64_array();
  const std::uint64_t nv = r.u64();
  for (std::uint64_t k = 0; k < nv; ++k) d.V.push_back(r.f64_array());
  const std::uint64_t nz = r.u64();
  for (std::uint64_t k = 0; k < nz; ++k) d.Z.push_back(r.f64_array());
  r.done();
  return d;
}

}  // namespace

void DistributedSolver::shrink_redistribute(const TransferPlan& plan,
                                            const std::vector<ProcId>& old_members,
                                            std::int64_t tag) {
  if (!(plan.old_dist == dist_))
    throw SimInvariantError("shrink_redistribute: plan built for a different distribution");
  if (static_cast<int>(old_members.size()) != dist_.parts())
    throw SimInvariantError("shrink_redistribute: old membership size mismatch");
  const int p_new = plan.new_dist.parts();
  if (world_.comm().size() != p_new)
    throw SimInvariantError("shrink_redistribute: world not shrunk yet");

  // survivors first roll their own solver state back to the resume snapshot
  if (tag != kNoTag) {
    bool adopted = false;
    for (Rank nr = 0; nr < p_new; ++nr) {
      const Rank old_r = plan.survivors_old[static_cast<size_t>(nr)];
      const ProcId pid = old_members[static_cast<size_t>(old_r)];
      const Snapshot* snap = ckpt_.peek(pid, pid, SnapshotKind::Dynamic);
      if (snap == nullptr || snap->tag != tag)
        throw SimInvariantError("shrink_redistribute: missing local snapshot at resume tag");
      apply_dynamic_payload(old_r, snap->payload, !adopted);
      adopted = true;
    }
  }

  struct StatPiece {
    RowRange rows{0, 0};
    LocalProblem prob;
  };
  std::vector<std::vector<StatPiece>> stat_in(static_cast<size_t>(p_new));
  std::vector<std::vector<DynSlices>> dyn_in(static_cast<size_t>(p_new));

  // deserialize each hosted backup at most once per (host, owner)
  std::map<std::pair<Rank, Rank>, LocalProblem> stat_cache;
  std::map<std::pair<Rank, Rank>, DynSlices> dyn_cache;
  auto backup_static = [&](Rank host, Rank owner) -> const LocalProblem& {
    auto key = std::make_pair(host, owner);
    auto it = stat_cache.find(key);
    if (it != stat_cache.end()) return it->second;
    const Snapshot* snap =
        ckpt_.peek(old_members[static_cast<size_t>(host)], old_members[static_cast<size_t>(owner)],
                   SnapshotKind::Static);
    if (snap == nullptr)
      throw SimInvariantError("shrink_redistribute: planned backup host lacks the rows");
    return stat_cache.emplace(key, deserialize_problem(snap->payload)).first->second;
  };
  auto backup_dyn = [&](Rank host, Rank owner) -> const DynSlices& {
    auto key = std::make_pair(host, owner);
    auto it = dyn_cache.find(key);
    if (it != dyn_cache.end()) return it->second;
    const Snapshot* snap =
        ckpt_.peek(old_members[static_cast<size_t>(host)], old_members[static_cast<size_t>(owner)],
                   SnapshotKind::Dynamic);
    if (snap == nullptr || snap->tag != tag)
      throw SimInvariantError("shrink_redistribute: backup snapshot missing at resume tag");
    return dyn_cache.emplace(key, parse_dyn_payload(snap->payload)).first->second;
  };

  auto live_dyn = [&](Rank owner) {
    const auto& st = states_[static_cast<size_t>(owner)];
    DynSlices d;
    d.rows = st.prob.a.rows;
    d.x = st.x_seed;
    d.V = st.V;
    d.Z = st.Z;
    return d;
  };

  std::vector<Msg> msgs;
  for (const TransferItem& item : plan.items) {
    const ProcId src_pid = old_members[static_cast<size_t>(item.served_by_old)];
    const ProcId dst_pid = old_members[static_cast<size_t>(item.dst_old)];
    const Rank dst_new = item.dst_new;

    std::vector<std::uint8_t> stat_blob;
    if (item.kind == SourceKind::Backup) {
      stat_blob = serialize_problem(slice(backup_static(item.served_by_old, item.owner_old), item.rows));
    } else {
      stat_blob = serialize_problem(slice(states_[static_cast<size_t>(item.owner_old)].prob, item.rows));
    }
    const std::size_t stat_bytes = stat_blob.size();
    msgs.push_back(world_.make_msg(
        src_pid, dst_pid, stat_bytes,
        [&stat_in, dst_new, blob = std::move(stat_blob)]() {
          LocalProblem piece = deserialize_problem(blob);
          stat_in[static_cast<size_t>(dst_new)].push_back(
              StatPiece{piece.a.rows, std::move(piece)});
        }));

    if (tag != kNoTag) {
      DynSlices dslice;
      if (item.kind == SourceKind::Backup) {
        dslice = slice_dyn(backup_dyn(item.served_by_old, item.owner_old), item.rows);
      } else {
        dslice = slice_dyn(live_dyn(item.owner_old), item.rows);
      }
      auto dyn_blob = serialize_dyn(dslice);
      const std::size_t dyn_bytes = dyn_blob.size();
      msgs.push_back(world_.make_msg(
          src_pid, dst_pid, dyn_bytes,
          [&dyn_in, dst_new, blob = std::move(dyn_blob)]() {
            dyn_in[static_cast<size_t>(dst_new)].push_back(deserialize_dyn(blob));
          }));
    }
  }
  world_.message_phase(Category::Restore, std::move(msgs));

  // rows each survivor simply keeps
  for (Rank nr = 0; nr < p_new; ++nr) {
    const Rank old_r = plan.survivors_old[static_cast<size_t>(nr)];
    const RowRange had = dist_.range_of(old_r);
    const RowRange want = plan.new_dist.range_of(nr);
    const RowRange keep{std::max(had.begin, want.begin), std::min(had.end, want.end)};
    if (keep.begin >= keep.end) continue;
    stat_in[static_cast<size_t>(nr)].push_back(
        StatPiece{keep, slice(states_[static_cast<size_t>(old_r)].prob, keep)});
    if (tag != kNoTag)
      dyn_in[static_cast<size_t>(nr)].push_back(slice_dyn(live_dyn(old_r), keep));
  }

  std::vector<RankState> fresh(static_cast<size_t>(p_new));
  for (Rank nr = 0; nr < p_new; ++nr) {
    const RowRange want = plan.new_dist.range_of(nr);
    auto& sp = stat_in[static_cast<size_t>(nr)];
    std::sort(sp.begin(), sp.end(),
              [](const StatPiece& a, const StatPiece& b) { return a.rows.begin < b.rows.begin; });
    LocalProblem assembled;
    for (const StatPiece& piece : sp) append_rows(assembled, piece.prob, piece.rows);
    if (!(assembled.a.rows == want))
      throw SimInvariantError("shrink_redistribute: assembled rows do not cover the new range");
    auto& st = fresh[static_cast<size_t>(nr)];
    st.prob = std::move(assembled);

    if (tag != kNoTag) {
      auto& dp = dyn_in[static_cast<size_t>(nr)];
      std::sort(dp.begin(), dp.end(),
                [](const DynSlices& a, const DynSlices& b) { return a.rows.begin < b.rows.begin; });
      const size_t nv = dp.empty() ? 0 : dp.front().V.size();
      const size_t nz = dp.empty() ? 0 : dp.front().Z.size();
      st.V.assign(nv, {});
      st.Z.assign(nz, {});
      std::int64_t cursor = want.begin;
      for (const DynSlices& piece : dp) {
        if (piece.rows.begin != cursor)
          throw SimInvariantError("shrink_redistribute: solver-state rows out of order");
        if (piece.V.size() != nv || piece.Z.size() != nz)
          throw SimInvariantError("shrink_redistribute: basis counts disagree between owners");
        st.x_seed.insert(st.x_seed.end(), piece.x.begin(), piece.x.end());
        for (size_t k = 0; k < nv; ++k)
          st.V[k].insert(st.V[k].end(), piece.V[k].begin(), piece.V[k].end());
        for (size_t k = 0; k < nz; ++k)
          st.Z[k].insert(st.Z[k].end(), piece.Z[k].begin(), piece.Z[k].end());
        cursor = piece.rows.end;
      }
      if (cursor != want.end)
        throw SimInvariantError("shrink_redistribute: solver-state rows incomplete");
    }
  }

  states_ = std::move(fresh);
  dist_ = plan.new_dist;
  r0_scratch_.clear();
  have_r0_scratch_ = false;
  if (tag == kNoTag) reset_dynamic();
}

void DistributedSolver::substitute_restore(
    const std::vector<std::pair<Rank, ProcId>>& stitched,
    const std::vector<ProcId>& old_members, std::int64_t tag) {
  const int p = nranks();
  if (static_cast<int>(old_members.size()) != p)
    throw SimInvariantError("substitute_restore: old membership size mismatch");
  if (world_.comm().size() != p)
    throw SimInvariantError("substitute_restore: membership shape changed");

  std::vector<char> is_stitched(static_cast<size_t>(p), 0);
  for (const auto& [slot, spare] : stitched) {
    if (slot < 0 || slot >= p)
      throw SimInvariantError("substitute_restore: slot out of range");
    is_stitched[static_cast<size_t>(slot)] = 1;
  }

  r0_scratch_.clear();
  have_r0_scratch_ = false;

  if (tag == kNoTag) {
    reset_dynamic();
  } else {
    bool adopted = false;
    for (Rank r = 0; r < p; ++r) {
      if (is_stitched[static_cast<size_t>(r)]) continue;
      const ProcId pid = world_.comm().pid_of(r);
      const Snapshot* snap = ckpt_.peek(pid, pid, SnapshotKind::Dynamic);
      if (snap == nullptr || snap->tag != tag)
        throw SimInvariantError("substitute_restore: missing local snapshot at resume tag");
      apply_dynamic_payload(r, snap->payload, !adopted);
      adopted = true;
    }
  }

  for (const auto& [slot, spare] : stitched) {
    const ProcId old_pid = old_members[static_cast<size_t>(slot)];
    auto fs = ckpt_.fetch(Category::Restore, spare, old_pid, SnapshotKind::Static);
    LocalProblem prob = deserialize_problem(fs.snap->payload);
    if (!(prob.a.rows == dist_.range_of(slot)))
      throw SimInvariantError("substitute_restore: fetched rows mismatch the slot");
    auto& st = states_[static_cast<size_t>(slot)];
    st.prob = std::move(prob);
    if (tag != kNoTag) {
      auto fd = ckpt_.fetch(Category::Restore, spare, old_pid, SnapshotKind::Dynamic);
      if (fd.snap->tag != tag)
        throw SimInvariantError("substitute_restore: snapshot tag mismatch");
      apply_dynamic_payload(slot, fd.snap->payload, false);
    } else {
      st.x_seed.assign(st.prob.b.size(), 0.0);
      st.V.clear();
      st.Z.clear();
    }
    // halo pattern and column map depend only on rows, which are unchanged
  }
}

void DistributedSolver::sync_shared(Category cat) {
  world_.broadcast_charge(cat, serialize_shared().size());
}

std::vector<double> DistributedSolver::gather_solution() const {
  std::vector<double> x;
  for (const auto& st : states_) x.insert(x.end(), st.x_seed.begin(), st.x_seed.end());
  return x;
}

std::uint64_t DistributedSolver::state_bytes(Rank r) const {
  return payload_static(r).size() + payload_dynamic(r).size();
}

}  // namespace ftsim
