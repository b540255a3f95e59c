// Reference implementations the simulator is checked against. Everything here
// is written independently of the library internals: straight loops, full
// vectors, set arithmetic. The sequential solver mirrors the distributed
// operation order (same pairwise reductions, same left-to-right row sums) so
// results match bitwise when slice boundaries line up on powers of two.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftsim/problem.hpp"
#include "ftsim/solver.hpp"
#include "ftsim/transfer_plan.hpp"

namespace oracle {

struct SeqMatrix {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr;  // size n + 1
  std::vector<std::int64_t> col;
  std::vector<double> val;
  std::vector<double> b;
};

// Whole problem assembled through the library's own block interface.
SeqMatrix seq_from_problem(const ftsim::Problem& p);

// Brute-force 27-point stencil on an n^3 grid: walk all neighbor offsets per
// point, no incremental index tricks. Diagonal 26, off-diagonal -1, rhs = row
// sums.
SeqMatrix stencil_poisson27(int n);

std::vector<double> spmv(const SeqMatrix& A, const std::vector<double>& x);

// Dense LU solve of A x = b (Eigen), for solution verification.
std::vector<double> lu_solve(const SeqMatrix& A);

struct SeqFgmresResult {
  std::vector<double> x;
  std::int64_t outer_steps = 0;
  std::int64_t inner_iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> history;
};

SeqFgmresResult seq_fgmres(const SeqMatrix& A, const ftsim::SolverConfig& cfg);

// Full validity check of a shrink transfer plan by set arithmetic: exact row
// coverage per destination, correct owners, sources legal under the
// replica-first/owner/lowest-buddy rule. Returns "" when valid, else a
// description of the first violation.
std::string check_transfer_plan(const ftsim::TransferPlan& plan,
                                const std::vector<ftsim::Rank>& failed_old,
                                int redundancy);

// Coefficient of determination of the least-squares line through (x, y).
double r_squared(const std::vector<double>& xs, const std::vector<double>& ys);

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want);

// ||got - want|| / ||want||, the usual solution-agreement metric.
double rel_norm_diff(const std::vector<double>& got, const std::vector<double>& want);

}  // namespace oracle
