#include "ftsim/transfer_plan.hpp"

#include <algorithm>
#include <sstream>

#include "ftsim/errors.hpp"

namespace ftsim {

namespace {

// Ring rule over the old epoch: owner o is replicated at ranks (o+1..o+r) mod P.
bool hosts_replica_of(Rank host, Rank owner, int p_old, int redundancy) {
  const int span = std::min<int>(redundancy, p_old - 1);
  for (int k = 1; k <= span; ++k) {
    if ((owner + k) % p_old == host) return true;
  }
  return false;
}

}  // namespace

TransferPlan plan_shrink_transfers(const BlockDistribution& old_dist,
                                   const std::vector<Rank>& failed_old, int redundancy) {
  const int p_old = old_dist.parts();
  if (p_old <= 0) throw ConfigError("plan_shrink_transfers: empty old distribution");
  if (redundancy < 1) throw ConfigError("plan_shrink_transfers: redundancy must be >= 1");

  std::vector<char> dead(static_cast<size_t>(p_old), 0);
  for (Rank f : failed_old) {
    if (f < 0 || f >= p_old)
      throw ConfigError("plan_shrink_transfers: failed rank out of range");
    dead[static_cast<size_t>(f)] = 1;
  }

  TransferPlan plan;
  plan.old_dist = old_dist;
  for (Rank r = 0; r < p_old; ++r) {
    if (!dead[static_cast<size_t>(r)]) plan.survivors_old.push_back(r);
  }
  if (plan.survivors_old.empty())
    throw UnrecoverableError("plan_shrink_transfers: no survivors");

  plan.new_dist =
      canonical_distribution(old_dist.rows, static_cast<int>(plan.survivors_old.size()));

  auto pick_backup_host = [&](Rank owner) -> Rank {
    Rank best = -1;
    const int span = std::min<int>(redundancy, p_old - 1);
    for (int k = 1; k <= span; ++k) {
      const Rank h = static_cast<Rank>((owner + k) % p_old);
      if (!dead[static_cast<size_t>(h)] && (best < 0 || h < best)) best = h;
    }
    return best;
  };

  for (Rank nr = 0; nr < plan.new_dist.parts(); ++nr) {
    const Rank s_d = plan.survivors_old[static_cast<size_t>(nr)];
    const RowRange want = plan.new_dist.range_of(nr);

    std::int64_t cursor = want.begin;
    while (cursor < want.end) {
      const Rank o = old_dist.owner_of(cursor);
      const std::int64_t run_end = std::min(want.end, old_dist.range_of(o).end);
      if (o == s_d) {
        cursor = run_end;  // rows the destination already owns
        continue;
      }
      TransferItem item;
      item.rows = {cursor, run_end};
      item.dst_new = nr;
      item.dst_old = s_d;
      item.owner_old = o;
      if (hosts_replica_of(s_d, o, p_old, redundancy)) {
        item.kind = SourceKind::Backup;
        item.served_by_old = s_d;  // destination reads its own hosted replica
      } else if (!dead[static_cast<size_t>(o)]) {
        item.kind = SourceKind::LocalMemory;
        item.served_by_old = o;
      } else {
        const Rank host = pick_backup_host(o);
        if (host < 0) {
          std::ostringstream msg;
          msg << "rows [" << cursor << ", " << run_end << ") of rank " << o
              << " are unrecoverable: owner and all " << redundancy
              << " replica hosts failed";
          throw UnrecoverableError(msg.str());
        }
        item.kind = SourceKind::Backup;
        item.served_by_old = host;
      }
      plan.items.push_back(item);
      cursor = run_end;
    }
  }
  return plan;
}

}  // namespace ftsim
