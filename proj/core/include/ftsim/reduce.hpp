#pragma once

#include <cstddef>

namespace ftsim {

/// Balanced pairwise summation (split at n/2). Used for every floating-point
/// reduction in the simulator so that a sum over a power-of-two index range
/// produces bit-identical results no matter how the range is partitioned
/// across ranks: each aligned slice is a complete subtree of the same
/// reduction tree.
inline double tree_fold_sum(const double* v, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return v[0];
  if (n == 2) return v[0] + v[1];
  std::size_t half = n / 2;
  return tree_fold_sum(v, half) + tree_fold_sum(v + half, n - half);
}

/// Pairwise dot product with the same tree shape as tree_fold_sum applied to
/// the elementwise products.
inline double tree_dot(const double* a, const double* b, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return a[0] * b[0];
  if (n == 2) {
    double p0 = a[0] * b[0];
    double p1 = a[1] * b[1];
    return p0 + p1;
  }
  std::size_t half = n / 2;
  return tree_dot(a, b, half) + tree_dot(a + half, b + half, n - half);
}

}  // namespace ftsim
