#include "ftsim/distribution.hpp"

namespace ftsim {

Rank BlockDistribution::owner_of(std::int64_t row) const {
  for (std::size_t r = 0; r < ranges.size(); ++r)
    if (ranges[r].contains(row)) return static_cast<Rank>(r);
  throw SimInvariantError("owner_of: row outside distribution");
}

BlockDistribution canonical_distribution(std::int64_t rows, int parts) {
  if (parts < 1) throw ConfigError("distribution: parts must be >= 1");
  if (rows < 0) throw ConfigError("distribution: rows must be >= 0");
  BlockDistribution d;
  d.rows = rows;
  d.ranges.resize(static_cast<std::size_t>(parts));
  std::int64_t base = rows / parts;
  std::int64_t extra = rows % parts;
  std::int64_t cursor = 0;
  for (int r = 0; r < parts; ++r) {
    std::int64_t len = base + (r < extra ? 1 : 0);
    d.ranges[static_cast<std::size_t>(r)] = RowRange{cursor, cursor + len};
    cursor += len;
  }
  return d;
}

double extra_rows_lower_bound(std::int64_t rows, int parts) {
  if (parts < 2) throw ConfigError("extra_rows_lower_bound: needs at least two parts");
  double r = static_cast<double>(rows);
  return r / static_cast<double>(parts - 1) - r / static_cast<double>(parts);
}

}  // namespace ftsim
