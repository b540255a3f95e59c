#include "ftsim/world.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <string>

namespace ftsim {

void WorldConfig::validate() const {
  if (processes < 1) throw ConfigError("world: processes must be >= 1");
  if (spares < 0) throw ConfigError("world: spares must be >= 0");
  if (cores_per_node < 1) throw ConfigError("world: cores_per_node must be >= 1");
  if (detection_timeout_s < 0) throw ConfigError("world: detection_timeout_s must be >= 0");
  if (flop_time_s <= 0) throw ConfigError("world: flop_time_s must be positive");
  if (proactive_barrier_every < 0) throw ConfigError("world: proactive_barrier_every must be >= 0");
  LatencyModel m{alpha_intra, alpha_inter, bandwidth_bytes_per_s, collective_tree_factor};
  m.validate();
}

void FaultPlan::validate(int processes, int redundancy, std::int64_t max_steps,
                         std::int64_t m_inner) const {
  std::map<std::int64_t, int> per_window;
  std::vector<Rank> seen;
  for (const auto& inj : injections) {
    if (inj.rank < 0 || inj.rank >= processes)
      throw PlanError("fault plan: rank " + std::to_string(inj.rank) + " out of range");
    if (std::find(seen.begin(), seen.end(), inj.rank) != seen.end())
      throw PlanError("fault plan: rank " + std::to_string(inj.rank) + " appears twice");
    seen.push_back(inj.rank);
    if (inj.outer_iteration < 0 || inj.outer_iteration >= max_steps)
      throw PlanError("fault plan: trigger " + std::to_string(inj.outer_iteration) +
                      " outside the solver step budget");
    if (inj.window_offset < 0 || inj.window_offset >= m_inner)
      throw PlanError("fault plan: window offset " + std::to_string(inj.window_offset) +
                      " outside one inner solve");
    if (++per_window[inj.outer_iteration] > redundancy)
      throw PlanError("fault plan: more than " + std::to_string(redundancy) +
                      " deaths in window " + std::to_string(inj.outer_iteration) +
                      " cannot be survived at this redundancy");
  }
}

World::World(const WorldConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  lat_ = LatencyModel{cfg_.alpha_intra, cfg_.alpha_inter, cfg_.bandwidth_bytes_per_s,
                      cfg_.collective_tree_factor};
  nodes_ = NodeMap{cfg_.cores_per_node};
  int total = cfg_.processes + cfg_.spares;
  status_.assign(static_cast<std::size_t>(total), ProcessStatus::Spare);
  for (int p = 0; p < cfg_.processes; ++p) status_[static_cast<std::size_t>(p)] = ProcessStatus::Active;
  epoch_.epoch = 0;
  epoch_.members.resize(static_cast<std::size_t>(cfg_.processes));
  for (int p = 0; p < cfg_.processes; ++p) epoch_.members[static_cast<std::size_t>(p)] = p;
  clock_.compute_s.assign(static_cast<std::size_t>(total), 0.0);
  clock_.comm_s.assign(static_cast<std::size_t>(total), 0.0);
}

std::vector<ProcId> World::spares_available() const {
  std::vector<ProcId> out;
  for (std::size_t p = 0; p < status_.size(); ++p)
    if (status_[p] == ProcessStatus::Spare) out.push_back(static_cast<ProcId>(p));
  return out;
}

double* bucket_of(OverheadBreakdown& acc, Category cat) {
  switch (cat) {
    case Category::Useful: return &acc.t_solve_useful;
    case Category::Checkpoint: return &acc.t_check;
    case Category::Detection: return &acc.t_pfd;
    case Category::Reconfig: return &acc.t_pfr;
    case Category::Restore: return &acc.t_pfx;
    case Category::Recompute: return &acc.t_recompute;
  }
  return &acc.t_solve_useful;
}

void World::charge(Category cat, double seconds) {
  clock_.now += seconds;
  *bucket_of(acc_, cat) += seconds;
}

void World::charge_bytes(Category cat, std::uint64_t bytes) {
  if (cat == Category::Checkpoint) acc_.bytes_checkpointed += bytes;
  if (cat == Category::Restore || cat == Category::Reconfig) acc_.bytes_recovered += bytes;
}

double World::worst_member_alpha() const {
  if (epoch_.members.empty()) return 0.0;
  int lo = node_of(epoch_.members.front());
  int hi = lo;
  for (ProcId p : epoch_.members) {
    int n = node_of(p);
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  return lat_.alpha(lo, hi);
}

void World::check_members_alive() const {
  std::vector<ProcId> dead;
  for (ProcId p : epoch_.members)
    if (status(p) == ProcessStatus::Failed) dead.push_back(p);
  if (!dead.empty()) throw ProcFailed(std::move(dead));
}

void World::push_trace(TraceKind kind, std::int64_t a, std::int64_t b, std::uint64_t bytes) {
  trace_.push_back(TraceEvent{clock_.now, seq_++, kind, a, b, bytes});
}

void World::compute_phase(Category cat, const std::vector<double>& flops_by_rank) {
  if (flops_by_rank.size() != epoch_.members.size())
    throw SimInvariantError("compute_phase: one flop count per member required");
  double makespan = 0.0;
  for (std::size_t r = 0; r < flops_by_rank.size(); ++r) {
    double s = flops_by_rank[r] * cfg_.flop_time_s;
    clock_.compute_s[static_cast<std::size_t>(epoch_.members[r])] += s;
    makespan = std::max(makespan, s);
  }
  charge(cat, makespan);
  push_trace(TraceKind::Compute, epoch_.size(), 0, 0);
}

void World::uniform_compute(Category cat, double flops_each) {
  compute_phase(cat, std::vector<double>(epoch_.members.size(), flops_each));
}

Msg World::make_msg(ProcId src, ProcId dst, std::size_t bytes, std::function<void()> deliver) {
  return Msg{src, dst, bytes, epoch_.epoch, std::move(deliver)};
}

double World::message_phase(Category cat, std::vector<Msg> msgs) {
  for (const Msg& m : msgs)
    if (m.epoch != epoch_.epoch)
      throw SimInvariantError("message_phase: message stamped with stale epoch " +
                              std::to_string(m.epoch));
  std::vector<ProcId> dead;
  for (const Msg& m : msgs) {
    if (status(m.src) == ProcessStatus::Failed) dead.push_back(m.src);
    if (status(m.dst) == ProcessStatus::Failed) dead.push_back(m.dst);
  }
  if (!dead.empty()) {
    std::sort(dead.begin(), dead.end());
    dead.erase(std::unique(dead.begin(), dead.end()), dead.end());
    throw ProcFailed(std::move(dead));
  }

  // Endpoint serialization: a process injects one message at a time and
  // drains one at a time; sends overlap receives, distinct pairs overlap
  // freely. Completion order (time, submission index) is the delivery order.
  double start = clock_.now;
  std::size_t total = status_.size();
  std::vector<double> send_free(total, start), recv_free(total, start), busy(total, start);
  struct Completion {
    double t;
    std::size_t idx;
  };
  std::vector<Completion> order;
  order.reserve(msgs.size());
  std::uint64_t phase_bytes = 0;
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    const Msg& m = msgs[i];
    bool self = m.src == m.dst;
    double dur = lat_.p2p_cost(node_of(m.src), node_of(m.dst), m.bytes, self);
    double s = std::max(send_free[static_cast<std::size_t>(m.src)],
                        recv_free[static_cast<std::size_t>(m.dst)]);
    double f = s + dur;
    if (!self) {
      send_free[static_cast<std::size_t>(m.src)] = f;
      recv_free[static_cast<std::size_t>(m.dst)] = f;
    }
    busy[static_cast<std::size_t>(m.src)] = std::max(busy[static_cast<std::size_t>(m.src)], f);
    busy[static_cast<std::size_t>(m.dst)] = std::max(busy[static_cast<std::size_t>(m.dst)], f);
    order.push_back(Completion{f, i});
    if (!self) phase_bytes += m.bytes;  // local hand-offs never cross the wire
  }
  std::stable_sort(order.begin(), order.end(), [](const Completion& a, const Completion& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.idx < b.idx;
  });
  double makespan = 0.0;
  for (const Completion& c : order) {
    const Msg& m = msgs[c.idx];
    trace_.push_back(TraceEvent{c.t, seq_++, TraceKind::Message, m.src, m.dst, m.bytes});
    if (m.deliver) m.deliver();
    makespan = std::max(makespan, c.t - start);
  }
  for (std::size_t p = 0; p < total; ++p)
    if (busy[p] > start) clock_.comm_s[p] += busy[p] - start;
  charge(cat, makespan);
  charge_bytes(cat, phase_bytes);
  return makespan;
}

double World::p2p_transfer(Category cat, ProcId src, ProcId dst, std::size_t bytes,
                           std::function<void()> deliver) {
  std::vector<Msg> one;
  one.push_back(make_msg(src, dst, bytes, std::move(deliver)));
  return message_phase(cat, std::move(one));
}

double World::p2p_cost(ProcId src, ProcId dst, std::size_t bytes) const {
  return lat_.p2p_cost(node_of(src), node_of(dst), bytes, src == dst);
}

double World::collective_charge(Category cat, std::size_t bytes) {
  check_members_alive();
  double cost = lat_.collective_cost(epoch_.size(), worst_member_alpha(), bytes);
  for (ProcId p : epoch_.members) clock_.comm_s[static_cast<std::size_t>(p)] += cost;
  charge(cat, cost);
  push_trace(TraceKind::Collective, epoch_.size(), 0, bytes);
  return cost;
}

double World::allreduce_sum(Category cat, const std::vector<double>& by_rank, std::size_t bytes) {
  if (by_rank.size() != epoch_.members.size())
    throw SimInvariantError("allreduce_sum: one contribution per member required");
  collective_charge(cat, bytes);
  return tree_fold_sum(by_rank.data(), by_rank.size());
}

std::int64_t World::allreduce_min(Category cat, const std::vector<std::int64_t>& by_rank) {
  if (by_rank.size() != epoch_.members.size())
    throw SimInvariantError("allreduce_min: one contribution per member required");
  collective_charge(cat, sizeof(std::int64_t));
  std::int64_t m = by_rank.front();
  for (std::int64_t v : by_rank) m = std::min(m, v);
  return m;
}

std::vector<ProcId> World::allreduce_union(Category cat,
                                           const std::vector<std::vector<ProcId>>& by_rank) {
  if (by_rank.size() != epoch_.members.size())
    throw SimInvariantError("allreduce_union: one contribution per member required");
  std::size_t bytes = 0;
  for (const auto& v : by_rank) bytes += v.size() * sizeof(ProcId);
  collective_charge(cat, bytes);
  std::vector<ProcId> out;
  for (const auto& v : by_rank) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void World::arm(const FaultPlan& plan) {
  armed_.clear();
  for (const auto& inj : plan.injections) armed_.push_back(Armed{inj, false});
}

void World::fire_boundary(std::int64_t outer_step) {
  for (Armed& a : armed_)
    if (!a.fired && a.inj.outer_iteration == outer_step && a.inj.window_offset == 0) {
      a.fired = true;
      kill(a.inj.rank);
    }
}

void World::fire_inner(std::int64_t outer_step, std::int64_t inner_index) {
  for (Armed& a : armed_)
    if (!a.fired && a.inj.outer_iteration == outer_step && a.inj.window_offset == inner_index) {
      a.fired = true;
      kill(a.inj.rank);
    }
}

void World::kill(ProcId p) {
  if (p < 0 || static_cast<std::size_t>(p) >= status_.size())
    throw SimInvariantError("kill: no such process");
  if (status_[static_cast<std::size_t>(p)] == ProcessStatus::Failed)
    throw SimInvariantError("kill: process " + std::to_string(p) + " already failed");
  status_[static_cast<std::size_t>(p)] = ProcessStatus::Failed;
  push_trace(TraceKind::Failure, p, 0, 0);
  if (on_kill_) on_kill_(p);
}

std::vector<ProcId> World::detect_and_propagate() {
  std::vector<ProcId> failed;
  std::vector<ProcId> survivors;
  for (ProcId p : epoch_.members)
    (status(p) == ProcessStatus::Failed ? failed : survivors).push_back(p);
  double cost = failed.empty() ? 0.0 : cfg_.detection_timeout_s;
  if (survivors.size() > 1) {
    int lo = node_of(survivors.front());
    int hi = lo;
    for (ProcId p : survivors) {
      int n = node_of(p);
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    cost += lat_.collective_cost(static_cast<int>(survivors.size()), lat_.alpha(lo, hi),
                                 sizeof(ProcId) * epoch_.members.size());
  }
  for (ProcId p : survivors) clock_.comm_s[static_cast<std::size_t>(p)] += cost;
  charge(Category::Detection, cost);
  push_trace(TraceKind::Detect, static_cast<std::int64_t>(failed.size()), 0, 0);
  return failed;
}

std::vector<ProcId> World::shrink_comm() {
  prev_members_ = epoch_.members;
  std::vector<ProcId> survivors;
  last_removed_.clear();
  for (ProcId p : epoch_.members)
    (status(p) == ProcessStatus::Failed ? last_removed_ : survivors).push_back(p);
  if (survivors.empty()) throw UnrecoverableError("shrink: no surviving process");
  epoch_.members = survivors;
  epoch_.epoch += 1;
  for (ProcId p : last_removed_) epoch_.failed.push_back(p);
  std::sort(epoch_.failed.begin(), epoch_.failed.end());
  collective_charge(Category::Reconfig, sizeof(ProcId) * prev_members_.size());
  push_trace(TraceKind::Epoch, epoch_.epoch, epoch_.size(), 0);
  return last_removed_;
}

std::vector<std::pair<Rank, ProcId>> World::stitch_spares() {
  if (last_removed_.empty())
    throw SimInvariantError("stitch_spares: nothing was removed by the last shrink");
  std::vector<ProcId> pool = spares_available();
  if (pool.size() < last_removed_.size())
    throw UnrecoverableError("stitch_spares: spares exhausted (" + std::to_string(pool.size()) +
                             " left, " + std::to_string(last_removed_.size()) + " needed)");
  std::vector<std::pair<Rank, ProcId>> placed;
  std::vector<ProcId> members = prev_members_;
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < members.size(); ++slot) {
    if (std::find(last_removed_.begin(), last_removed_.end(), members[slot]) !=
        last_removed_.end()) {
      ProcId spare = pool[next++];
      members[slot] = spare;
      status_[static_cast<std::size_t>(spare)] = ProcessStatus::Active;
      placed.emplace_back(static_cast<Rank>(slot), spare);
    }
  }
  epoch_.members = members;
  epoch_.epoch += 1;
  collective_charge(Category::Reconfig, sizeof(ProcId) * members.size());
  push_trace(TraceKind::Epoch, epoch_.epoch, epoch_.size(), 0);
  last_removed_.clear();
  return placed;
}

std::uint64_t World::trace_digest() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const TraceEvent& e : trace_) {
    mix(&e.t, sizeof(e.t));
    mix(&e.seq, sizeof(e.seq));
    mix(&e.kind, sizeof(e.kind));
    mix(&e.a, sizeof(e.a));
    mix(&e.b, sizeof(e.b));
    mix(&e.bytes, sizeof(e.bytes));
  }
  return h;
}

void World::note(std::int64_t a, std::int64_t b) { push_trace(TraceKind::Note, a, b, 0); }

}  // namespace ftsim
