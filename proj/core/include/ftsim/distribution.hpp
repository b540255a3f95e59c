#pragma once

#include <cstdint>
#include <vector>

#include "ftsim/errors.hpp"

namespace ftsim {

struct RowRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  std::int64_t size() const { return end - begin; }
  bool contains(std::int64_t row) const { return row >= begin && row < end; }
  bool operator==(const RowRange&) const = default;
};

/// Contiguous block distribution of R rows over P ranks. Sizes differ by at
/// most one; the first R mod P ranks carry the extra row.
struct BlockDistribution {
  std::int64_t rows = 0;
  std::vector<RowRange> ranges;  // by rank

  int parts() const { return static_cast<int>(ranges.size()); }
  const RowRange& range_of(Rank r) const { return ranges.at(static_cast<std::size_t>(r)); }
  Rank owner_of(std::int64_t row) const;
  bool operator==(const BlockDistribution&) const = default;
};

BlockDistribution canonical_distribution(std::int64_t rows, int parts);

/// Minimum extra rows some survivor must absorb after one rank is dropped:
/// R/(P-1) - R/P, evaluated in exact real arithmetic.
double extra_rows_lower_bound(std::int64_t rows, int parts);

}  // namespace ftsim
