#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ftsim/errors.hpp"
#include "ftsim/latency.hpp"
#include "ftsim/reduce.hpp"

namespace ftsim {

enum class ProcessStatus : std::uint8_t { Active, Spare, Failed };

/// Where simulated seconds are attributed. Every phase charges exactly one
/// bucket, which is what makes the accounting identity total == useful + waste
/// hold by construction.
enum class Category : std::uint8_t {
  Useful,      // solver progress
  Checkpoint,  // snapshot staging, transfer and commit
  Detection,   // failure detection timeout + agreement on the failed set
  Reconfig,    // communicator repair, redistribution planning, pattern rebuild
  Restore,     // state movement back into place (fetches, transfers, refresh)
  Recompute,   // re-executed inner iterations after a rollback
};

struct OverheadBreakdown {
  double t_solve_useful = 0.0;
  double t_check = 0.0;
  double t_pfd = 0.0;
  double t_pfr = 0.0;
  double t_pfx = 0.0;
  double t_recompute = 0.0;
  std::uint64_t bytes_checkpointed = 0;
  std::uint64_t bytes_recovered = 0;

  double waste() const { return t_check + t_pfd + t_pfr + t_pfx + t_recompute; }
  double total() const { return t_solve_useful + waste(); }
};

struct WorldConfig {
  int processes = 0;
  int spares = 0;
  int cores_per_node = 1;
  double alpha_intra = 1e-6;
  double alpha_inter = 5e-5;
  double bandwidth_bytes_per_s = 215e6;
  std::uint64_t seed = 0;
  double detection_timeout_s = 0.1;
  double flop_time_s = 1e-9;
  double collective_tree_factor = 1.0;
  int proactive_barrier_every = 0;  // 0 = disabled

  void validate() const;
};

/// One communicator generation. Members are the active processes in rank
/// order; every repair (shrink or stitch) produces a new epoch.
struct CommEpoch {
  std::uint32_t epoch = 0;
  std::vector<ProcId> members;
  std::vector<ProcId> failed;  // cumulative, sorted

  int size() const { return static_cast<int>(members.size()); }
  ProcId pid_of(Rank r) const { return members.at(static_cast<std::size_t>(r)); }
  Rank rank_of(ProcId p) const {
    for (std::size_t i = 0; i < members.size(); ++i)
      if (members[i] == p) return static_cast<Rank>(i);
    return -1;
  }
};

struct SimClock {
  double now = 0.0;
  std::vector<double> compute_s;  // by pid
  std::vector<double> comm_s;     // by pid
};

/// One scheduled process death. `rank` is the rank in the initial epoch
/// (equal to the pid of an initially active process). `outer_iteration` is
/// the global outer-step index at whose boundary the process dies;
/// `window_offset` delays the death that many inner iterations into the step.
struct FaultInjection {
  Rank rank = 0;
  std::int64_t outer_iteration = 0;
  std::int64_t window_offset = 0;
};

struct FaultPlan {
  std::vector<FaultInjection> injections;

  /// Enforces: valid target ranks, one entry per rank, offsets inside one
  /// inner solve, at most `redundancy` deaths per trigger window, triggers
  /// inside the solver's step budget.
  void validate(int processes, int redundancy, std::int64_t max_steps,
                std::int64_t m_inner) const;
};

enum class TraceKind : std::uint8_t {
  Compute,
  Message,
  Collective,
  Failure,
  Detect,
  Epoch,
  Note,
};

struct TraceEvent {
  double t = 0.0;
  std::uint64_t seq = 0;
  TraceKind kind = TraceKind::Note;
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::uint64_t bytes = 0;

  bool operator==(const TraceEvent&) const = default;
};

/// A message inside one transfer phase. `deliver` runs when the message
/// completes; payload hand-off must happen only through these callbacks so
/// that no state crosses ranks outside the engine.
struct Msg {
  ProcId src = 0;
  ProcId dst = 0;
  std::size_t bytes = 0;
  std::uint32_t epoch = 0;
  std::function<void()> deliver;
};

/// Deterministic single-threaded simulation world: process table, communicator
/// epochs, virtual clocks, cost accounting, fault injection and the message
/// engine. Application state lives outside; the world only calls back to
/// destroy it when a process dies.
///
/// Timing model: execution advances in phases. A compute phase costs the
/// maximum of the per-rank flop times; a transfer phase costs its makespan
/// under per-endpoint send/receive serialization (distinct pairs overlap); a
/// collective costs ceil(log2 P) rounds at the worst member-pair latency.
class World {
 public:
  explicit World(const WorldConfig& cfg);

  const WorldConfig& config() const { return cfg_; }
  const LatencyModel& latency() const { return lat_; }
  const CommEpoch& comm() const { return epoch_; }
  int total_processes() const { return static_cast<int>(status_.size()); }
  ProcessStatus status(ProcId p) const { return status_.at(static_cast<std::size_t>(p)); }
  int node_of(ProcId p) const { return nodes_.node_of(p); }
  std::vector<ProcId> spares_available() const;

  double now() const { return clock_.now; }
  const SimClock& clock() const { return clock_; }
  const OverheadBreakdown& breakdown() const { return acc_; }

  // --- phases ---------------------------------------------------------
  void compute_phase(Category cat, const std::vector<double>& flops_by_rank);
  void uniform_compute(Category cat, double flops_each);
  Msg make_msg(ProcId src, ProcId dst, std::size_t bytes, std::function<void()> deliver = {});
  double message_phase(Category cat, std::vector<Msg> msgs);
  double p2p_transfer(Category cat, ProcId src, ProcId dst, std::size_t bytes,
                      std::function<void()> deliver = {});
  double p2p_cost(ProcId src, ProcId dst, std::size_t bytes) const;

  // --- collectives ----------------------------------------------------
  /// Failure-checks the membership and charges one collective of the given
  /// payload size. All typed collectives are folds layered on top of this.
  double collective_charge(Category cat, std::size_t bytes);
  void barrier(Category cat) { collective_charge(cat, 0); }
  double allreduce_sum(Category cat, const std::vector<double>& by_rank,
                       std::size_t bytes = sizeof(double));
  std::int64_t allreduce_min(Category cat, const std::vector<std::int64_t>& by_rank);
  /// Union of per-rank id sets; result is sorted. Union is commutative, so the
  /// agreed value does not depend on delivery order.
  std::vector<ProcId> allreduce_union(Category cat,
                                      const std::vector<std::vector<ProcId>>& by_rank);
  template <class T>
  std::vector<T> allgather(Category cat, std::vector<T> by_rank, std::size_t bytes_each) {
    collective_charge(cat, bytes_each * static_cast<std::size_t>(epoch_.size()));
    return by_rank;
  }
  void broadcast_charge(Category cat, std::size_t bytes) { collective_charge(cat, bytes); }

  // --- faults and repair ---------------------------------------------
  void arm(const FaultPlan& plan);
  void fire_boundary(std::int64_t outer_step);
  void fire_inner(std::int64_t outer_step, std::int64_t inner_index);
  void kill(ProcId p);
  void set_kill_callback(std::function<void(ProcId)> fn) { on_kill_ = std::move(fn); }

  /// Timeout plus one agreement round; every survivor ends up with the same
  /// sorted failed set. Empty result at plain collective cost when nothing
  /// has failed.
  std::vector<ProcId> detect_and_propagate();
  /// Order-preserving removal of failed members; new epoch. Returns the
  /// removed pids (also kept for a following stitch).
  std::vector<ProcId> shrink_comm();
  /// Replaces the slots removed by the last shrink with spare processes,
  /// restoring the pre-failure membership shape. Returns (rank, spare pid).
  std::vector<std::pair<Rank, ProcId>> stitch_spares();
  const std::vector<ProcId>& last_removed() const { return last_removed_; }
  /// Membership of the epoch the last shrink retired, in old rank order.
  const std::vector<ProcId>& previous_members() const { return prev_members_; }

  // --- trace ----------------------------------------------------------
  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::uint64_t trace_digest() const;
  void note(std::int64_t a, std::int64_t b = 0);

 private:
  struct Armed {
    FaultInjection inj;
    bool fired = false;
  };

  void charge(Category cat, double seconds);
  void charge_bytes(Category cat, std::uint64_t bytes);
  double worst_member_alpha() const;
  void check_members_alive() const;
  void push_trace(TraceKind kind, std::int64_t a, std::int64_t b, std::uint64_t bytes);

  WorldConfig cfg_;
  LatencyModel lat_;
  NodeMap nodes_;
  std::vector<ProcessStatus> status_;
  CommEpoch epoch_;
  std::vector<ProcId> prev_members_;
  std::vector<ProcId> last_removed_;
  SimClock clock_;
  OverheadBreakdown acc_;
  std::vector<Armed> armed_;
  std::function<void(ProcId)> on_kill_;
  std::vector<TraceEvent> trace_;
  std::uint64_t seq_ = 0;
};

}  // namespace ftsim
