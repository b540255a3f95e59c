#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ftsim/distribution.hpp"
#include "ftsim/serialize.hpp"

namespace ftsim {

/// Row-contiguous CSR slice of a global sparse matrix. Column indices are
/// global and strictly ascending within each row; every consumer relies on
/// that order for reproducible arithmetic.
struct CsrBlock {
  RowRange rows{0, 0};
  std::int64_t global_rows = 0;
  std::vector<std::int64_t> row_ptr{0};  // local, rows.size()+1 entries
  std::vector<std::int64_t> col;
  std::vector<double> val;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col.size()); }
};

/// One rank's share of the linear system: matrix rows plus the matching
/// right-hand-side slice.
struct LocalProblem {
  CsrBlock a;
  std::vector<double> b;
};

/// A problem instance the harness can carve into blocks. `block_of` is pure:
/// same range in, same rows out, regardless of call order.
struct Problem {
  std::string name;
  std::int64_t global_rows = 0;
  std::function<LocalProblem(RowRange)> block_of;
};

/// 27-point stencil on an n*n*n grid: diagonal 26, every grid neighbor -1,
/// right-hand side chosen so the exact solution is all ones (b = row sums).
Problem make_poisson27(int n);
std::int64_t poisson27_rows(int n);
std::int64_t poisson27_nnz(int n);  // (3n-2)^3

/// Coordinate-format Matrix Market file (real general or symmetric). The
/// right-hand side is b = A*ones, matching the stencil convention.
Problem make_from_matrix_market(const std::string& path);

LocalProblem slice(const LocalProblem& src, RowRange take);
void append_rows(LocalProblem& dst, const LocalProblem& src, RowRange take);

std::vector<std::uint8_t> serialize_problem(const LocalProblem& p);
LocalProblem deserialize_problem(const std::vector<std::uint8_t>& bytes);

/// Halo exchange shape for y = A*x with x block-distributed by rows.
struct PeerIndices {
  Rank peer = 0;
  std::vector<std::int64_t> indices;  // global, sorted ascending

  bool operator==(const PeerIndices&) const = default;
};

struct ImportPattern {
  std::vector<PeerIndices> recv;  // ascending peer rank
  std::vector<PeerIndices> send;

  std::int64_t recv_count() const;
  bool operator==(const ImportPattern&) const = default;
};

/// Off-block column indices of `a`, grouped by owning rank.
std::vector<PeerIndices> compute_imports(const CsrBlock& a, const BlockDistribution& dist,
                                         Rank self);

/// Full exchange pattern for all ranks; send lists are the transpose of the
/// recv lists.
std::vector<ImportPattern> build_patterns(const std::vector<const CsrBlock*>& blocks,
                                          const BlockDistribution& dist);

}  // namespace ftsim
