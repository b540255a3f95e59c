#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ftsim/checkpoint.hpp"
#include "ftsim/solver.hpp"
#include "ftsim/world.hpp"

namespace ftsim {

enum class RecoveryStrategy {
  Shrink,      // continue on the survivors, rows redistributed
  Substitute,  // warm spares take over the failed slots, rows stay put
};

struct RecoveryReport {
  std::vector<ProcId> failed;  // pids that died this round
  RecoveryStrategy applied = RecoveryStrategy::Shrink;
  bool fell_back = false;      // wanted spares, none left, shrank instead
  std::int64_t resume_tag = kNoTag;
  int ranks_after = 0;
  std::vector<std::pair<Rank, ProcId>> stitched;
  double t_detect = 0.0;   // seconds this round added per bucket
  double t_reconfig = 0.0;
  double t_restore = 0.0;
};

/// Runs one full repair round after the solver throws ProcFailed: agree on
/// the failed set, rebuild the communicator (shrink, or stitch in spares),
/// agree on the newest snapshot every row can be restored to, move state back
/// into place, and re-establish replica coverage for the new membership.
class RecoveryCoordinator {
 public:
  RecoveryCoordinator(World& world, CheckpointService& ckpt, DistributedSolver& solver,
                      RecoveryStrategy strategy, bool fallback_to_shrink);

  RecoveryReport recover();

  RecoveryStrategy strategy() const { return strategy_; }
  const std::vector<RecoveryReport>& rounds() const { return rounds_; }

 private:
  World& world_;
  CheckpointService& ckpt_;
  DistributedSolver& solver_;
  RecoveryStrategy strategy_;
  bool fallback_to_shrink_;
  std::vector<RecoveryReport> rounds_;
};

}  // namespace ftsim
