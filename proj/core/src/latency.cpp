#include "ftsim/latency.hpp"

namespace ftsim {

void LatencyModel::validate() const {
  if (alpha_intra < 0 || alpha_inter < 0) throw ConfigError("latency: negative alpha");
  if (alpha_inter < alpha_intra)
    throw ConfigError("latency: alpha_inter must be >= alpha_intra");
  if (bandwidth_bps <= 0) throw ConfigError("latency: bandwidth must be positive");
  if (tree_factor <= 0) throw ConfigError("latency: tree_factor must be positive");
}

int LatencyModel::tree_rounds(int members) {
  if (members <= 1) return 0;
  int rounds = 0;
  unsigned span = 1;
  while (span < static_cast<unsigned>(members)) {
    span <<= 1;
    ++rounds;
  }
  return rounds;
}

}  // namespace ftsim
