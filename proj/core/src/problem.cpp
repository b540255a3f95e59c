#include "ftsim/problem.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

#include "ftsim/errors.hpp"

namespace ftsim {

namespace {

void check_range(const RowRange& take, const RowRange& have, const char* who) {
  if (take.begin < have.begin || take.end > have.end || take.begin > take.end) {
    std::ostringstream msg;
    msg << who << ": rows [" << take.begin << ", " << take.end << ") not inside ["
        << have.begin << ", " << have.end << ")";
    throw SimInvariantError(msg.str());
  }
}

}  // namespace

std::int64_t poisson27_rows(int n) {
  const auto nn = static_cast<std::int64_t>(n);
  return nn * nn * nn;
}

std::int64_t poisson27_nnz(int n) {
  const auto m = static_cast<std::int64_t>(3) * n - 2;
  return m * m * m;
}

Problem make_poisson27(int n) {
  if (n < 1) throw ConfigError("poisson27: grid size must be >= 1");
  Problem prob;
  prob.name = "poisson27(n=" + std::to_string(n) + ")";
  prob.global_rows = poisson27_rows(n);
  const std::int64_t global_rows = prob.global_rows;
  prob.block_of = [n, global_rows](RowRange rows) {
    check_range(rows, RowRange{0, global_rows}, "poisson27");
    const std::int64_t nn = n;
    LocalProblem out;
    out.a.rows = rows;
    out.a.global_rows = global_rows;
    out.a.row_ptr.reserve(static_cast<size_t>(rows.size()) + 1);
    for (std::int64_t r = rows.begin; r < rows.end; ++r) {
      const std::int64_t x = r % nn;
      const std::int64_t y = (r / nn) % nn;
      const std::int64_t z = r / (nn * nn);
      double row_sum = 0.0;
      // dz outermost keeps column ids strictly ascending within the row
      for (int dz = -1; dz <= 1; ++dz) {
        const std::int64_t zz = z + dz;
        if (zz < 0 || zz >= nn) continue;
        for (int dy = -1; dy <= 1; ++dy) {
          const std::int64_t yy = y + dy;
          if (yy < 0 || yy >= nn) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const std::int64_t xx = x + dx;
            if (xx < 0 || xx >= nn) continue;
            const std::int64_t c = (zz * nn + yy) * nn + xx;
            const double v = (c == r) ? 26.0 : -1.0;
            out.a.col.push_back(c);
            out.a.val.push_back(v);
            row_sum += v;
          }
        }
      }
      out.a.row_ptr.push_back(out.a.nnz());
      out.b.push_back(row_sum);
    }
    return out;
  };
  return prob;
}

namespace {

struct FullCsr {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int64_t> col;
  std::vector<double> val;
};

FullCsr load_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty matrix file: " + path);
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix")
    throw ConfigError("not a MatrixMarket matrix: " + path);
  if (format != "coordinate")
    throw ConfigError("only coordinate format is supported: " + path);
  const bool pattern = field == "pattern";
  if (field != "real" && field != "integer" && !pattern)
    throw ConfigError("unsupported value field '" + field + "': " + path);
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw ConfigError("unsupported symmetry '" + symmetry + "': " + path);

  do {
    if (!std::getline(in, line)) throw ConfigError("missing size line: " + path);
  } while (!line.empty() && line[0] == '%');

  std::int64_t rows = 0, cols = 0, nnz = 0;
  {
    std::istringstream sizes(line);
    if (!(sizes >> rows >> cols >> nnz))
      throw ConfigError("bad size line: " + path);
  }
  if (rows != cols) throw ConfigError("matrix must be square: " + path);

  struct Entry {
    std::int64_t r, c;
    double v;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<size_t>(symmetric ? 2 * nnz : nnz));
  for (std::int64_t k = 0; k < nnz; ++k) {
    std::int64_t i = 0, j = 0;
    double v = 1.0;
    if (!(in >> i >> j)) throw ConfigError("truncated entries: " + path);
    if (!pattern && !(in >> v)) throw ConfigError("truncated entries: " + path);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ConfigError("entry index out of range: " + path);
    entries.push_back({i - 1, j - 1, v});
    if (symmetric && i != j) entries.push_back({j - 1, i - 1, v});
  }

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });

  FullCsr csr;
  csr.n = rows;
  csr.row_ptr.assign(static_cast<size_t>(rows) + 1, 0);
  for (size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].r == entries[k - 1].r && entries[k].c == entries[k - 1].c) {
      csr.val.back() += entries[k].v;  // duplicates accumulate
      continue;
    }
    csr.col.push_back(entries[k].c);
    csr.val.push_back(entries[k].v);
    csr.row_ptr[static_cast<size_t>(entries[k].r) + 1] =
        static_cast<std::int64_t>(csr.col.size());
  }
  for (size_t r = 1; r < csr.row_ptr.size(); ++r)
    csr.row_ptr[r] = std::max(csr.row_ptr[r], csr.row_ptr[r - 1]);
  return csr;
}

}  // namespace

Problem make_from_matrix_market(const std::string& path) {
  auto csr = std::make_shared<const FullCsr>(load_matrix_market(path));
  Problem prob;
  prob.name = "mtx(" + path + ")";
  prob.global_rows = csr->n;
  prob.block_of = [csr](RowRange rows) {
    check_range(rows, RowRange{0, csr->n}, "mtx");
    LocalProblem out;
    out.a.rows = rows;
    out.a.global_rows = csr->n;
    for (std::int64_t r = rows.begin; r < rows.end; ++r) {
      double row_sum = 0.0;
      for (std::int64_t k = csr->row_ptr[static_cast<size_t>(r)];
           k < csr->row_ptr[static_cast<size_t>(r) + 1]; ++k) {
        out.a.col.push_back(csr->col[static_cast<size_t>(k)]);
        out.a.val.push_back(csr->val[static_cast<size_t>(k)]);
        row_sum += csr->val[static_cast<size_t>(k)];
      }
      out.a.row_ptr.push_back(out.a.nnz());
      out.b.push_back(row_sum);
    }
    return out;
  };
  return prob;
}

LocalProblem slice(const LocalProblem& src, RowRange take) {
  check_range(take, src.a.rows, "slice");
  LocalProblem out;
  out.a.rows = take;
  out.a.global_rows = src.a.global_rows;
  const std::int64_t base = take.begin - src.a.rows.begin;
  const std::int64_t k0 = src.a.row_ptr[static_cast<size_t>(base)];
  for (std::int64_t r = 0; r < take.size(); ++r) {
    const std::int64_t kend = src.a.row_ptr[static_cast<size_t>(base + r) + 1];
    out.a.row_ptr.push_back(kend - k0);
    out.b.push_back(src.b[static_cast<size_t>(base + r)]);
  }
  const std::int64_t k1 = src.a.row_ptr[static_cast<size_t>(base + take.size())];
  out.a.col.assign(src.a.col.begin() + k0, src.a.col.begin() + k1);
  out.a.val.assign(src.a.val.begin() + k0, src.a.val.begin() + k1);
  return out;
}

void append_rows(LocalProblem& dst, const LocalProblem& src, RowRange take) {
  LocalProblem piece = slice(src, take);
  if (dst.b.empty() && dst.a.rows.size() == 0) {
    dst.a.rows = RowRange{take.begin, take.begin};
    dst.a.global_rows = src.a.global_rows;
  }
  if (dst.a.rows.end != take.begin)
    throw SimInvariantError("append_rows: non-contiguous append");
  if (dst.a.global_rows != src.a.global_rows)
    throw SimInvariantError("append_rows: mixing different matrices");
  const std::int64_t base_nnz = dst.a.nnz();
  for (size_t r = 1; r < piece.a.row_ptr.size(); ++r)
    dst.a.row_ptr.push_back(base_nnz + piece.a.row_ptr[r]);
  dst.a.col.insert(dst.a.col.end(), piece.a.col.begin(), piece.a.col.end());
  dst.a.val.insert(dst.a.val.end(), piece.a.val.begin(), piece.a.val.end());
  dst.b.insert(dst.b.end(), piece.b.begin(), piece.b.end());
  dst.a.rows.end = take.end;
}

std::vector<std::uint8_t> serialize_problem(const LocalProblem& p) {
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(p.a.global_rows));
  w.i64(p.a.rows.begin);
  w.i64(p.a.rows.end);
  w.i64_array(p.a.row_ptr);
  w.i64_array(p.a.col);
  w.f64_array(p.a.val);
  w.f64_array(p.b);
  return w.take();
}

LocalProblem deserialize_problem(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  LocalProblem p;
  p.a.global_rows = static_cast<std::int64_t>(r.u64());
  p.a.rows.begin = r.i64();
  p.a.rows.end = r.i64();
  p.a.row_ptr = r.i64_array();
  p.a.col = r.i64_array();
  p.a.val = r.f64_array();
  p.b = r.f64_array();
  r.done();
  const auto nrows = static_cast<size_t>(p.a.rows.size());
  if (p.a.rows.size() < 0 || p.a.row_ptr.size() != nrows + 1 ||
      p.a.col.size() != p.a.val.size() || p.b.size() != nrows ||
      p.a.row_ptr.back() != p.a.nnz())
    throw SimInvariantError("deserialize_problem: malformed payload");
  return p;
}

std::int64_t ImportPattern::recv_count() const {
  std::int64_t total = 0;
  for (const auto& pi : recv) total += static_cast<std::int64_t>(pi.indices.size());
  return total;
}

std::vector<PeerIndices> compute_imports(const CsrBlock& a, const BlockDistribution& dist,
                                         Rank self) {
  if (dist.range_of(self) != a.rows)
    throw SimInvariantError("compute_imports: block does not match distribution");
  std::vector<std::int64_t> ext;
  for (std::int64_t c : a.col) {
    if (!a.rows.contains(c)) ext.push_back(c);
  }
  std::sort(ext.begin(), ext.end());
  ext.erase(std::unique(ext.begin(), ext.end()), ext.end());

  std::vector<PeerIndices> out;
  for (std::int64_t c : ext) {
    const Rank owner = dist.owner_of(c);
    if (out.empty() || out.back().peer != owner) out.push_back(PeerIndices{owner, {}});
    out.back().indices.push_back(c);
  }
  return out;
}

std::vector<ImportPattern> build_patterns(const std::vector<const CsrBlock*>& blocks,
                                          const BlockDistribution& dist) {
  const int p = dist.parts();
  if (static_cast<int>(blocks.size()) != p)
    throw SimInvariantError("build_patterns: block count does not match distribution");
  std::vector<ImportPattern> patterns(static_cast<size_t>(p));
  for (Rank r = 0; r < p; ++r)
    patterns[static_cast<size_t>(r)].recv = compute_imports(*blocks[static_cast<size_t>(r)], dist, r);
  for (Rank r = 0; r < p; ++r) {
    for (const PeerIndices& pi : patterns[static_cast<size_t>(r)].recv) {
      // appended in ascending r, so each send list stays peer-sorted
      patterns[static_cast<size_t>(pi.peer)].send.push_back(PeerIndices{r, pi.indices});
    }
  }
  return patterns;
}

}  // namespace ftsim
