#include "ftsim/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ftsim/errors.hpp"

namespace ftsim {

void BackupStore::stage(Snapshot snap) {
  if (snap.owner < 0) throw SimInvariantError("BackupStore: snapshot without owner");
  Key key{snap.owner, static_cast<std::uint8_t>(snap.kind)};
  staged_[key] = std::move(snap);
}

void BackupStore::commit() {
  for (auto& [key, snap] : staged_) {
    auto it = committed_.find(key);
    if (it != committed_.end()) {
      const Snapshot& old = it->second;
      const bool newer_tag = snap.tag > old.tag;
      const bool refresh = snap.tag == old.tag && snap.epoch > old.epoch;
      if (!newer_tag && !refresh) {
        std::ostringstream msg;
        msg << "BackupStore: commit would regress owner " << snap.owner << " kind "
            << int(snap.kind) << " from tag " << old.tag << "/e" << old.epoch
            << " to tag " << snap.tag << "/e" << snap.epoch;
        throw SimInvariantError(msg.str());
      }
    }
    committed_[key] = std::move(snap);
  }
  staged_.clear();
}

void BackupStore::abort_staged() { staged_.clear(); }

void BackupStore::drop_dynamic() {
  for (auto it = committed_.begin(); it != committed_.end();) {
    if (it->second.kind == SnapshotKind::Dynamic) it = committed_.erase(it);
    else ++it;
  }
}

const Snapshot* BackupStore::find(ProcId owner, SnapshotKind kind) const {
  auto it = committed_.find(Key{owner, static_cast<std::uint8_t>(kind)});
  return it == committed_.end() ? nullptr : &it->second;
}

std::vector<const Snapshot*> BackupStore::entries() const {
  std::vector<const Snapshot*> out;
  out.reserve(committed_.size());
  for (const auto& [key, snap] : committed_) out.push_back(&snap);
  return out;
}

std::uint64_t BackupStore::committed_bytes() const {
  std::uint64_t total = 0;
  for (const auto& [key, snap] : committed_) total += snap.bytes();
  return total;
}

std::vector<Rank> buddy_set(Rank rank, int nranks, int redundancy) {
  if (nranks <= 0) throw ConfigError("buddy_set: nranks must be positive");
  if (rank < 0 || rank >= nranks) throw ConfigError("buddy_set: rank out of range");
  if (redundancy < 1) throw ConfigError("buddy_set: redundancy must be >= 1");
  const int span = std::min(redundancy, nranks - 1);
  std::vector<Rank> out;
  out.reserve(static_cast<size_t>(span));
  for (int k = 1; k <= span; ++k) out.push_back(static_cast<Rank>((rank + k) % nranks));
  return out;
}

double optimal_interval(double checkpoint_seconds, double mttf_seconds) {
  if (!(checkpoint_seconds > 0.0))
    throw ConfigError("optimal_interval: checkpoint cost must be positive");
  if (!(mttf_seconds > 0.0))
    throw ConfigError("optimal_interval: mttf must be positive");
  return std::sqrt(2.0 * checkpoint_seconds * mttf_seconds);
}

CheckpointService::CheckpointService(World& world, int redundancy)
    : world_(world), redundancy_(redundancy) {
  if (redundancy_ < 1) throw ConfigError("CheckpointService: redundancy must be >= 1");
  stores_.resize(static_cast<size_t>(world_.total_processes()));
}

void CheckpointService::push(Category cat, SnapshotKind kind, std::int64_t tag,
                             const PayloadFn& payload_of) {
  const int p = world_.comm().size();
  std::vector<Rank> all(static_cast<size_t>(p));
  for (int r = 0; r < p; ++r) all[static_cast<size_t>(r)] = r;
  push_subset(cat, kind, tag, all, payload_of);
}

void CheckpointService::push_subset(Category cat, SnapshotKind kind, std::int64_t tag,
                                    const std::vector<Rank>& ranks,
                                    const PayloadFn& payload_of) {
  const CommEpoch& comm = world_.comm();
  const int p = comm.size();

  std::vector<Snapshot> snaps;
  snaps.reserve(ranks.size());
  for (Rank r : ranks) {
    if (r < 0 || r >= p) throw SimInvariantError("push_subset: rank out of range");
    const ProcId owner = comm.pid_of(r);
    Snapshot snap;
    snap.owner = owner;
    snap.kind = kind;
    snap.tag = tag;
    snap.epoch = comm.epoch;
    snap.payload = payload_of(r);

    // Owner keeps its own copy too; a local write costs nothing on the wire.
    stores_[static_cast<size_t>(owner)].stage(snap);
    snaps.push_back(std::move(snap));
  }

  // One sweep per buddy offset: every owner's first copy goes out in parallel,
  // then every second copy. Rank-major submission would serialize the whole
  // phase end to end in the per-endpoint engine.
  std::vector<Msg> msgs;
  std::uint64_t wire_bytes = 0;
  for (int k = 0; k < redundancy_; ++k) {
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      const auto buddies = buddy_set(ranks[i], p, redundancy_);
      if (k >= static_cast<int>(buddies.size())) continue;
      const ProcId host = comm.pid_of(buddies[static_cast<size_t>(k)]);
      Snapshot copy = snaps[i];
      const std::size_t nbytes = copy.bytes();
      wire_bytes += nbytes;
      msgs.push_back(world_.make_msg(snaps[i].owner, host, nbytes,
                                     [this, host, copy = std::move(copy)]() mutable {
                                       stores_[static_cast<size_t>(host)].stage(
                                           std::move(copy));
                                     }));
    }
  }

  try {
    world_.message_phase(cat, std::move(msgs));
    world_.barrier(cat);  // commit point: everyone confirms receipt
  } catch (const ProcFailed&) {
    abort_staged_all();
    throw;
  }

  for (auto& store : stores_) store.commit();
  stats_.commits += 1;
  stats_.bytes_pushed += wire_bytes;
}

std::int64_t CheckpointService::latest_consistent_tag(
    const std::vector<ProcId>& owners) const {
  std::int64_t worst = std::numeric_limits<std::int64_t>::max();
  for (ProcId owner : owners) {
    std::int64_t best = kNoTag;
    for (ProcId host = 0; host < world_.total_processes(); ++host) {
      if (world_.status(host) != ProcessStatus::Active) continue;
      const Snapshot* snap =
          stores_[static_cast<size_t>(host)].find(owner, SnapshotKind::Dynamic);
      if (snap != nullptr) best = std::max(best, snap->tag);
    }
    worst = std::min(worst, best);
  }
  return owners.empty() ? kNoTag : worst;
}

CheckpointService::FetchResult CheckpointService::fetch(Category cat, ProcId dst,
                                                        ProcId owner, SnapshotKind kind) {
  ProcId best_host = -1;
  const Snapshot* best = nullptr;
  int best_dist = 0;
  for (ProcId host = 0; host < world_.total_processes(); ++host) {
    if (world_.status(host) != ProcessStatus::Active) continue;
    const Snapshot* snap = stores_[static_cast<size_t>(host)].find(owner, kind);
    if (snap == nullptr) continue;
    const int dist = std::abs(world_.node_of(dst) - world_.node_of(host));
    bool better = false;
    if (best == nullptr) {
      better = true;
    } else if (snap->tag != best->tag) {
      better = snap->tag > best->tag;
    } else if (snap->epoch != best->epoch) {
      better = snap->epoch > best->epoch;
    } else if (dist != best_dist) {
      better = dist < best_dist;
    }  // equal tag/epoch/distance: keep the lower host id
    if (better) {
      best = snap;
      best_host = host;
      best_dist = dist;
    }
  }
  if (best == nullptr) {
    std::ostringstream msg;
    msg << "no surviving replica of "
        << (kind == SnapshotKind::Static ? "static" : "solver-state")
        << " data for process " << owner;
    throw UnrecoverableError(msg.str());
  }
  world_.p2p_transfer(cat, best_host, dst, best->bytes(), nullptr);
  return FetchResult{best, best_host};
}

const Snapshot* CheckpointService::peek(ProcId host, ProcId owner,
                                        SnapshotKind kind) const {
  if (host < 0 || host >= world_.total_processes())
    throw SimInvariantError("peek: host out of range");
  return stores_[static_cast<size_t>(host)].find(owner, kind);
}

void CheckpointService::abort_staged_all() {
  for (auto& store : stores_) store.abort_staged();
}

void CheckpointService::drop_all_dynamic() {
  for (auto& store : stores_) store.drop_dynamic();
}

BackupStore& CheckpointService::store(ProcId host) {
  if (host < 0 || host >= world_.total_processes())
    throw SimInvariantError("store: host out of range");
  return stores_[static_cast<size_t>(host)];
}

std::vector<StoreEntry> CheckpointService::inventory() const {
  std::vector<StoreEntry> out;
  for (ProcId host = 0; host < world_.total_processes(); ++host) {
    if (world_.status(host) == ProcessStatus::Failed) continue;
    for (const Snapshot* snap : stores_[static_cast<size_t>(host)].entries()) {
      out.push_back(
          StoreEntry{host, snap->owner, snap->kind, snap->tag, snap->epoch, snap->bytes()});
    }
  }
  return out;
}

}  // namespace ftsim
