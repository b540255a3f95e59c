#include "doctest.h"
#include "ftsim/distribution.hpp"
#include "ftsim/errors.hpp"

using namespace ftsim;

TEST_CASE("canonical distribution: near-equal contiguous blocks") {
  auto d = canonical_distribution(10, 3);
  REQUIRE(d.parts() == 3);
  CHECK(d.range_of(0) == RowRange{0, 4});  // first R mod P ranks get the extra row
  CHECK(d.range_of(1) == RowRange{4, 7});
  CHECK(d.range_of(2) == RowRange{7, 10});
  CHECK(d.rows == 10);
}

TEST_CASE("even split") {
  auto d = canonical_distribution(12, 4);
  for (Rank r = 0; r < 4; ++r) CHECK(d.range_of(r).size() == 3);
}

TEST_CASE("more parts than rows leaves trailing parts empty") {
  auto d = canonical_distribution(2, 4);
  CHECK(d.range_of(0).size() == 1);
  CHECK(d.range_of(1).size() == 1);
  CHECK(d.range_of(2).size() == 0);
  CHECK(d.range_of(3).size() == 0);
}

TEST_CASE("owner_of agrees with the ranges") {
  auto d = canonical_distribution(97, 7);
  for (std::int64_t row = 0; row < 97; ++row) {
    const Rank o = d.owner_of(row);
    CHECK(d.range_of(o).contains(row));
  }
  // out-of-range lookups are caller bugs, not configuration mistakes
  CHECK_THROWS_AS(d.owner_of(-1), SimInvariantError);
  CHECK_THROWS_AS(d.owner_of(97), SimInvariantError);
}

TEST_CASE("invalid arguments") {
  CHECK_THROWS_AS(canonical_distribution(-1, 2), ConfigError);
  CHECK_THROWS_AS(canonical_distribution(5, 0), ConfigError);
}

TEST_CASE("extra rows lower bound after dropping one part") {
  // 12 rows over 4 parts: blocks of 3; over 3 parts: blocks of 4
  CHECK(extra_rows_lower_bound(12, 4) == doctest::Approx(1.0));
  CHECK(extra_rows_lower_bound(100, 10) == doctest::Approx(100.0 / 9 - 10.0));
}
