#pragma once

#include <cstddef>
#include <cstdint>

#include "ftsim/errors.hpp"

namespace ftsim {

/// Placement of processes onto nodes: consecutive fill, cores_per_node per node.
/// Spares carry the highest process ids and therefore land on the last node(s).
struct NodeMap {
  int cores_per_node = 1;

  int node_of(ProcId p) const { return static_cast<int>(p) / cores_per_node; }
};

/// Linear cost model for point-to-point traffic plus a log-tree collective model.
///
/// A message costs alpha + bytes / bandwidth. alpha is alpha_intra when both
/// endpoints share a node; across nodes it is alpha_inter scaled by the node
/// distance, so traffic to far-away (e.g. spare) nodes is progressively more
/// expensive. A collective over P members runs ceil(log2 P) * tree_factor
/// rounds, each priced at the worst member-pair latency.
struct LatencyModel {
  double alpha_intra = 1e-6;
  double alpha_inter = 5e-5;
  double bandwidth_bps = 215e6;
  double tree_factor = 1.0;

  void validate() const;

  double alpha(int node_a, int node_b) const {
    if (node_a == node_b) return alpha_intra;
    int d = node_a > node_b ? node_a - node_b : node_b - node_a;
    return alpha_inter * static_cast<double>(d);
  }

  /// Cost of moving one message; a self-message is a free local copy.
  double p2p_cost(int node_src, int node_dst, std::size_t bytes, bool self) const {
    if (self) return 0.0;
    return alpha(node_src, node_dst) + static_cast<double>(bytes) / bandwidth_bps;
  }

  /// ceil(log2(members)) without touching libm, so costs stay bit-reproducible.
  static int tree_rounds(int members);

  double collective_cost(int members, double worst_alpha, std::size_t bytes) const {
    if (members <= 1) return 0.0;
    double rounds = static_cast<double>(tree_rounds(members)) * tree_factor;
    return rounds * (worst_alpha + static_cast<double>(bytes) / bandwidth_bps);
  }
};

}  // namespace ftsim
