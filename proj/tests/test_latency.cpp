#include <cmath>
#include <vector>

#include "doctest.h"
#include "ftsim/latency.hpp"
#include "ftsim/reduce.hpp"

using namespace ftsim;

TEST_CASE("node placement is consecutive fill") {
  NodeMap nm{4};
  CHECK(nm.node_of(0) == 0);
  CHECK(nm.node_of(3) == 0);
  CHECK(nm.node_of(4) == 1);
  CHECK(nm.node_of(11) == 2);
}

TEST_CASE("alpha scales with node distance") {
  LatencyModel lm;
  lm.alpha_intra = 1e-6;
  lm.alpha_inter = 5e-5;
  CHECK(lm.alpha(2, 2) == 1e-6);
  CHECK(lm.alpha(0, 1) == 5e-5);
  CHECK(lm.alpha(1, 0) == 5e-5);
  CHECK(lm.alpha(0, 3) == 3 * 5e-5);
}

TEST_CASE("p2p cost: alpha plus serialization, self free") {
  LatencyModel lm;
  lm.alpha_intra = 1e-6;
  lm.bandwidth_bps = 1e8;
  CHECK(lm.p2p_cost(0, 0, 1000, false) == doctest::Approx(1e-6 + 1e-5).epsilon(1e-12));
  CHECK(lm.p2p_cost(0, 0, 1 << 20, true) == 0.0);
}

TEST_CASE("tree rounds is ceil(log2)") {
  CHECK(LatencyModel::tree_rounds(1) == 0);
  CHECK(LatencyModel::tree_rounds(2) == 1);
  CHECK(LatencyModel::tree_rounds(3) == 2);
  CHECK(LatencyModel::tree_rounds(4) == 2);
  CHECK(LatencyModel::tree_rounds(5) == 3);
  CHECK(LatencyModel::tree_rounds(8) == 3);
  CHECK(LatencyModel::tree_rounds(9) == 4);
}

TEST_CASE("collective cost formula") {
  LatencyModel lm;
  lm.bandwidth_bps = 1e8;
  lm.tree_factor = 1.0;
  CHECK(lm.collective_cost(1, 1e-6, 100) == 0.0);
  // 8 members: 3 rounds of (alpha + bytes/bw)
  CHECK(lm.collective_cost(8, 2e-6, 800) ==
        doctest::Approx(3.0 * (2e-6 + 8e-6)).epsilon(1e-12));
}

TEST_CASE("pairwise sum splits align with power-of-two slices") {
  std::vector<double> v;
  for (int i = 0; i < 64; ++i) v.push_back(std::sin(i) * 1e3);

  const double whole = tree_fold_sum(v.data(), v.size());
  // any power-of-two block partition folds to the bitwise-identical value
  for (int parts : {2, 4, 8, 16}) {
    const std::size_t slice = v.size() / parts;
    std::vector<double> partials;
    for (int p = 0; p < parts; ++p)
      partials.push_back(tree_fold_sum(v.data() + p * slice, slice));
    CHECK(tree_fold_sum(partials.data(), partials.size()) == whole);
  }
}

TEST_CASE("pairwise dot matches the sum of elementwise products") {
  std::vector<double> a, b;
  for (int i = 0; i < 37; ++i) {
    a.push_back(1.0 + i);
    b.push_back(2.0);
  }
  // exact in integer-valued doubles
  CHECK(tree_dot(a.data(), b.data(), a.size()) == 37.0 * 38.0);
  CHECK(tree_dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("distributed dot equals sequential dot on aligned slices") {
  std::vector<double> a, b;
  for (int i = 0; i < 512; ++i) {
    a.push_back(std::cos(0.1 * i));
    b.push_back(std::sin(0.2 * i) + 0.5);
  }
  const double whole = tree_dot(a.data(), b.data(), a.size());
  for (int parts : {2, 4, 8}) {
    const std::size_t slice = a.size() / parts;
    std::vector<double> partials;
    for (int p = 0; p < parts; ++p)
      partials.push_back(tree_dot(a.data() + p * slice, b.data() + p * slice, slice));
    CHECK(tree_fold_sum(partials.data(), partials.size()) == whole);
  }
}
