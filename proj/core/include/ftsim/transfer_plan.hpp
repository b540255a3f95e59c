#pragma once

#include <cstdint>
#include <vector>

#include "ftsim/distribution.hpp"

namespace ftsim {

enum class SourceKind : std::uint8_t {
  LocalMemory,  // served from the surviving old owner's working copy
  Backup,       // served from a replica hosted by one of the owner's buddies
};

/// One contiguous row run headed to one destination. Ranks are old-epoch
/// ranks except `dst_new`, which indexes the post-shrink distribution.
struct TransferItem {
  RowRange rows;
  Rank dst_new = 0;
  Rank dst_old = 0;
  SourceKind kind = SourceKind::LocalMemory;
  Rank owner_old = 0;      // rank whose data the run is (snapshot owner for Backup)
  Rank served_by_old = 0;  // surviving rank that supplies the bytes

  bool local() const { return served_by_old == dst_old; }
};

struct TransferPlan {
  BlockDistribution old_dist;
  BlockDistribution new_dist;
  std::vector<Rank> survivors_old;  // ascending; index = new rank
  std::vector<TransferItem> items;
};

/// Plans the row movement that re-establishes a canonical block distribution
/// over the survivors of `failed_old` (old-epoch ranks).
///
/// Source selection per needed run, in order:
///   1. the destination's own hosted replica of the old owner (free local read),
///   2. the old owner's working copy when the owner survives,
///   3. the owner's replica at the lowest-ranked surviving buddy.
/// Replica hosting follows the ring rule: rank i is backed up by the next
/// min(redundancy, P-1) ranks. Rule 1 is what keeps survivors above a single
/// failed rank free of incoming traffic.
TransferPlan plan_shrink_transfers(const BlockDistribution& old_dist,
                                   const std::vector<Rank>& failed_old, int redundancy);

}  // namespace ftsim
