#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ftsim/checkpoint.hpp"
#include "ftsim/distribution.hpp"
#include "ftsim/problem.hpp"
#include "ftsim/transfer_plan.hpp"
#include "ftsim/world.hpp"

namespace ftsim {

struct SolverConfig {
  double tol = 1e-8;          // on true residual, relative to ||b||
  int m_inner = 5;            // iterations of the inner correction solve
  int m_outer = 10;           // outer basis columns per cycle
  std::int64_t max_outer = 1000;

  void validate() const;
};

struct SolveStats {
  std::int64_t outer_steps = 0;       // completed outer steps
  std::int64_t inner_iterations = 0;  // inner iterations on the surviving path
  std::int64_t executed_inner = 0;    // includes iterations redone after rollback
  double final_residual = 0.0;        // true relative residual
  bool converged = false;
  std::vector<double> history;        // per-step residual estimate, relative
};

/// Nested-GMRES solve run against a World: an outer flexible-GMRES cycle whose
/// correction vectors come from a fixed-length inner GMRES pass. All global
/// reductions fold pairwise so distributed results can match a sequential
/// reference exactly when slice sizes line up on powers of two.
///
/// run() throws ProcFailed when a peer dies mid-phase; the caller repairs the
/// World, restores state via shrink_redistribute()/substitute_restore(), and
/// calls run() again to resume from the last snapshot.
class DistributedSolver {
 public:
  struct Hooks {
    // invoked after outer step `tag` completes; snapshot cadence hangs here
    std::function<void(std::int64_t tag)> after_outer_step;
  };

  DistributedSolver(World& world, CheckpointService& ckpt, SolverConfig cfg,
                    const Problem& problem);

  SolveStats run(const Hooks& hooks);
  SolveStats stats() const;

  const SolverConfig& config() const { return cfg_; }
  const BlockDistribution& dist() const { return dist_; }
  int nranks() const { return dist_.parts(); }
  std::int64_t next_step() const { return next_step_; }
  std::int64_t high_water_step() const { return step_hw_; }

  // snapshot payloads for the checkpoint service
  std::vector<std::uint8_t> payload_static(Rank r) const;
  std::vector<std::uint8_t> payload_dynamic(Rank r) const;

  /// Roll every survivor back to snapshot `tag` and move rows per `plan` so
  /// state matches the post-shrink distribution. `old_members` maps old-epoch
  /// ranks to pids. tag = kNoTag restarts the solve from scratch instead.
  /// Transfer traffic and compute are charged to Category::Restore.
  void shrink_redistribute(const TransferPlan& plan,
                           const std::vector<ProcId>& old_members, std::int64_t tag);

  /// Roll survivors back to `tag` from their local snapshots and fill each
  /// stitched slot by pulling the dead owner's snapshots from live hosts.
  /// The row distribution is unchanged.
  void substitute_restore(const std::vector<std::pair<Rank, ProcId>>& stitched,
                          const std::vector<ProcId>& old_members, std::int64_t tag);

  /// Recompute halo exchange patterns and column maps for the current
  /// distribution; charged to `cat` (setup work or post-shrink replanning).
  void rebuild_patterns(Category cat);

  /// Charge the broadcast that re-aligns replicated solver scalars after a
  /// repair. State itself is already consistent by construction.
  void sync_shared(Category cat);

  std::vector<double> gather_solution() const;  // diagnostic, free of charge
  std::uint64_t state_bytes(Rank r) const;      // payload size, diagnostics

 private:
  struct Shared {
    std::vector<double> H;        // (m_outer+1) x m_outer, column-major
    std::vector<double> cs, sn, s;
    std::vector<double> history;
    std::int64_t jc = 0;          // columns completed in the current cycle
    std::int64_t ell = 0;         // cumulative inner iterations
    std::uint32_t converged = 0;  // 2 once the true residual meets tol
    std::uint32_t bnorm_set = 0;
    double bnorm = 0.0;
  };

  struct SendRun {
    Rank dst = 0;
    const std::vector<std::int64_t>* indices = nullptr;
    std::int64_t dst_offset = 0;  // position in the destination's import buffer
  };

  struct RankState {
    LocalProblem prob;
    std::vector<double> x_seed;
    std::vector<std::vector<double>> V, Z;
    // derived, rebuilt by rebuild_patterns(), never snapshotted
    ImportPattern pattern;
    std::vector<std::int64_t> ext_ids;  // imported globals, ascending
    std::vector<double> ext;
    std::vector<std::int64_t> col_map;  // nnz -> own row offset or rows+ext pos
    std::vector<SendRun> send_plan;
  };

  using VecOf = std::function<const std::vector<double>&(Rank)>;

  double dist_dot(Category cat, const VecOf& a, const VecOf& b,
                  double extra_flops_per_row = 0.0);
  double dist_norm(Category cat, const VecOf& a);
  void dist_spmv(Category cat, const VecOf& x, std::vector<std::vector<double>>& out);

  void cycle_prologue(Category cat);
  void cycle_epilogue(Category cat);
  void outer_step(const Hooks& hooks);
  void inner_solve(std::int64_t step, Category cat_step);
  bool estimate_hit() const;
  double bnorm_ref() const;

  void reset_dynamic();
  void apply_dynamic_payload(Rank slot, const std::vector<std::uint8_t>& bytes,
                             bool adopt_shared);
  std::vector<std::uint8_t> serialize_shared() const;
  void restore_shared(const std::vector<std::uint8_t>& bytes);
  double& href(int i, int j);  // Hessenberg entry, column-major

  World& world_;
  CheckpointService& ckpt_;
  SolverConfig cfg_;
  BlockDistribution dist_;
  std::vector<RankState> states_;
  Shared shared_;
  std::int64_t next_step_ = 0;  // index of the next outer step

  // survive rollbacks: work at or below these marks is re-execution
  std::int64_t step_hw_ = -1;
  std::int64_t ell_hw_ = 0;
  std::int64_t executed_inner_ = 0;

  double final_rel_residual_ = 0.0;
  std::vector<std::vector<double>> r0_scratch_;  // residual handed to next cycle
  bool have_r0_scratch_ = false;
};

}  // namespace ftsim
