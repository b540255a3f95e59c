#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "ftsim/world.hpp"

namespace ftsim {

inline constexpr std::int64_t kNoTag = -1;

enum class SnapshotKind : std::uint8_t {
  Static,   // problem data: matrix rows, right-hand side
  Dynamic,  // solver state captured at an outer-step boundary
};

struct Snapshot {
  ProcId owner = -1;  // process whose data this is, not the host
  SnapshotKind kind = SnapshotKind::Static;
  std::int64_t tag = kNoTag;  // completed outer-step index; Static stays at 0
  std::uint32_t epoch = 0;    // comm epoch at capture, breaks tag ties on refresh
  std::vector<std::uint8_t> payload;

  std::uint64_t bytes() const { return payload.size(); }
};

/// Per-process snapshot memory. Keeps only the newest committed snapshot per
/// (owner, kind). Writes are two-phase: stage() buffers, commit() publishes,
/// abort_staged() drops the buffer so an interrupted round leaves the last
/// committed set untouched.
class BackupStore {
 public:
  void stage(Snapshot snap);
  void commit();
  void abort_staged();
  bool has_staged() const { return !staged_.empty(); }

  const Snapshot* find(ProcId owner, SnapshotKind kind) const;
  std::vector<const Snapshot*> entries() const;  // committed, (owner, kind) order
  std::uint64_t committed_bytes() const;
  void drop_dynamic();  // discard committed solver-state snapshots

 private:
  using Key = std::pair<ProcId, std::uint8_t>;
  std::map<Key, Snapshot> committed_;
  std::map<Key, Snapshot> staged_;
};

/// Replica hosts for `rank`: the next min(redundancy, nranks-1) ranks on the
/// ring, in ascending hop order.
std::vector<Rank> buddy_set(Rank rank, int nranks, int redundancy);

/// Interval between snapshots that minimizes expected lost plus protection
/// time for a given per-snapshot cost and mean time to failure:
/// sqrt(2 * cost * mttf).
double optimal_interval(double checkpoint_seconds, double mttf_seconds);

struct StoreEntry {
  ProcId host = -1;
  ProcId owner = -1;
  SnapshotKind kind = SnapshotKind::Static;
  std::int64_t tag = kNoTag;
  std::uint32_t epoch = 0;
  std::uint64_t bytes = 0;
};

struct CheckpointStats {
  std::int64_t commits = 0;         // completed two-phase rounds
  std::uint64_t bytes_pushed = 0;   // network copies only, self copies excluded
};

/// Drives buddy replication on top of a World: serializes per-rank payloads,
/// ships each to its ring buddies in one message phase, and commits after a
/// barrier. A process failure surfacing mid-round aborts all staged entries
/// and rethrows, so stores never mix rounds.
class CheckpointService {
 public:
  using PayloadFn = std::function<std::vector<std::uint8_t>(Rank)>;

  CheckpointService(World& world, int redundancy);

  int redundancy() const { return redundancy_; }

  /// Full-membership round over the current epoch.
  void push(Category cat, SnapshotKind kind, std::int64_t tag, const PayloadFn& payload_of);

  /// Round restricted to `ranks` (current-epoch ranks). The commit barrier
  /// still spans the whole membership.
  void push_subset(Category cat, SnapshotKind kind, std::int64_t tag,
                   const std::vector<Rank>& ranks, const PayloadFn& payload_of);

  /// Newest solver-state tag available for every owner in `owners`, i.e.
  /// min over owners of the max tag held on live hosts. kNoTag means some
  /// owner has no surviving copy and the solve must restart from scratch.
  std::int64_t latest_consistent_tag(const std::vector<ProcId>& owners) const;

  struct FetchResult {
    const Snapshot* snap = nullptr;
    ProcId host = -1;
  };

  /// Pulls the best copy of (owner, kind) to `dst`: highest (tag, epoch),
  /// then closest node, then lowest host id. Charges the transfer to `cat`.
  /// Throws UnrecoverableError when no live host has a copy.
  FetchResult fetch(Category cat, ProcId dst, ProcId owner, SnapshotKind kind);

  const Snapshot* peek(ProcId host, ProcId owner, SnapshotKind kind) const;

  void abort_staged_all();
  /// Forgets every solver-state snapshot on every store. Used when the agreed
  /// resume tag is kNoTag: the solve restarts, and leftover copies from the
  /// abandoned run would read as tag regressions on the next push.
  void drop_all_dynamic();
  BackupStore& store(ProcId host);
  std::vector<StoreEntry> inventory() const;  // live hosts only
  CheckpointStats stats() const { return stats_; }

 private:
  World& world_;
  int redundancy_;
  std::vector<BackupStore> stores_;  // indexed by pid, spares included
  CheckpointStats stats_;
};

}  // namespace ftsim
