#include "ftsim/recovery.hpp"

#include <algorithm>

#include "ftsim/errors.hpp"
#include "ftsim/transfer_plan.hpp"

namespace ftsim {

RecoveryCoordinator::RecoveryCoordinator(World& world, CheckpointService& ckpt,
                                         DistributedSolver& solver,
                                         RecoveryStrategy strategy, bool fallback_to_shrink)
    : world_(world),
      ckpt_(ckpt),
      solver_(solver),
      strategy_(strategy),
      fallback_to_shrink_(fallback_to_shrink) {}

RecoveryReport RecoveryCoordinator::recover() {
  const OverheadBreakdown before = world_.breakdown();
  RecoveryReport rep;

  rep.failed = world_.detect_and_propagate();
  if (rep.failed.empty())
    throw SimInvariantError("recover: no failed process to agree on");

  const BlockDistribution old_dist = solver_.dist();
  const std::vector<ProcId> removed = world_.shrink_comm();
  const std::vector<ProcId>& old_members = world_.previous_members();

  std::vector<Rank> failed_old;  // removal scan keeps old rank order
  for (ProcId pid : removed) {
    for (std::size_t i = 0; i < old_members.size(); ++i) {
      if (old_members[i] == pid) {
        failed_old.push_back(static_cast<Rank>(i));
        break;
      }
    }
  }

  RecoveryStrategy applied = strategy_;
  if (strategy_ == RecoveryStrategy::Substitute && fallback_to_shrink_ &&
      world_.spares_available().size() < removed.size()) {
    applied = RecoveryStrategy::Shrink;
    rep.fell_back = true;
  }
  rep.applied = applied;

  if (applied == RecoveryStrategy::Shrink) {
    // may throw UnrecoverableError when some rows lost every copy
    TransferPlan plan = plan_shrink_transfers(old_dist, failed_old, ckpt_.redundancy());
    world_.uniform_compute(
        Category::Reconfig,
        static_cast<double>(plan.items.size() + old_members.size()));

    const std::int64_t local = ckpt_.latest_consistent_tag(old_members);
    const std::int64_t tag = world_.allreduce_min(
        Category::Reconfig,
        std::vector<std::int64_t>(static_cast<std::size_t>(world_.comm().size()), local));
    rep.resume_tag = tag;
    if (tag == kNoTag) ckpt_.drop_all_dynamic();

    solver_.shrink_redistribute(plan, old_members, tag);
    solver_.rebuild_patterns(Category::Reconfig);

    // replica coverage over the new, smaller ring
    ckpt_.push(Category::Restore, SnapshotKind::Static, 0,
               [this](Rank r) { return solver_.payload_static(r); });
    if (tag != kNoTag) {
      ckpt_.push(Category::Restore, SnapshotKind::Dynamic, tag,
                 [this](Rank r) { return solver_.payload_dynamic(r); });
    }
  } else {
    rep.stitched = world_.stitch_spares();  // throws when the pool is short

    const std::int64_t local = ckpt_.latest_consistent_tag(old_members);
    const std::int64_t tag = world_.allreduce_min(
        Category::Reconfig,
        std::vector<std::int64_t>(static_cast<std::size_t>(world_.comm().size()), local));
    rep.resume_tag = tag;
    if (tag == kNoTag) ckpt_.drop_all_dynamic();

    solver_.substitute_restore(rep.stitched, old_members, tag);
    solver_.sync_shared(Category::Restore);

    // only snapshots that lived on, or belong to, a replaced slot need a
    // fresh push; everyone else's replicas never left live hosts
    const int p = world_.comm().size();
    std::vector<char> affected(static_cast<std::size_t>(p), 0);
    for (const auto& [slot, spare] : rep.stitched) {
      affected[static_cast<std::size_t>(slot)] = 1;
      for (Rank r = 0; r < p; ++r) {
        for (Rank b : buddy_set(r, p, ckpt_.redundancy())) {
          if (b == slot) affected[static_cast<std::size_t>(r)] = 1;
        }
      }
    }
    std::vector<Rank> ranks;
    for (Rank r = 0; r < p; ++r)
      if (affected[static_cast<std::size_t>(r)]) ranks.push_back(r);

    ckpt_.push_subset(Category::Restore, SnapshotKind::Static, 0, ranks,
                      [this](Rank r) { return solver_.payload_static(r); });
    if (tag != kNoTag) {
      ckpt_.push_subset(Category::Restore, SnapshotKind::Dynamic, tag, ranks,
                        [this](Rank r) { return solver_.payload_dynamic(r); });
    }
  }

  rep.ranks_after = world_.comm().size();
  const OverheadBreakdown after = world_.breakdown();
  rep.t_detect = after.t_pfd - before.t_pfd;
  rep.t_reconfig = after.t_pfr - before.t_pfr;
  rep.t_restore = after.t_pfx - before.t_pfx;
  rounds_.push_back(rep);
  return rep;
}

}  // namespace ftsim
