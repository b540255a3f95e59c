#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftsim/checkpoint.hpp"
#include "ftsim/recovery.hpp"
#include "ftsim/solver.hpp"
#include "ftsim/world.hpp"

namespace ftsim {

enum class CheckpointMode : std::uint8_t {
  FixedInterval,  // push every `every_outer` completed outer steps
  Young,          // cadence derived from sqrt(2 * C * MTTF) after measuring C
};

struct CheckpointPolicy {
  bool enabled = true;
  CheckpointMode mode = CheckpointMode::FixedInterval;
  std::int64_t every_outer = 1;
  double c_seconds = 0.0;  // Young: per-snapshot cost; <= 0 means measure it
  double mttf_seconds = 3600.0;
  int redundancy = 1;

  void validate() const;
};

struct ExperimentConfig {
  std::string name;
  WorldConfig world;
  SolverConfig solver;
  CheckpointPolicy checkpoint;
  RecoveryStrategy strategy = RecoveryStrategy::Shrink;
  bool fallback_to_shrink = false;
  bool baseline = false;  // no protection, no recovery; a failure aborts

  std::string problem_kind = "poisson27";  // or "mtx"
  int poisson_n = 8;
  std::string mtx_path;
  std::string plan_path;  // optional; loader resolves it against the config dir

  void validate() const;
};

ExperimentConfig parse_experiment_config_text(const std::string& text,
                                              const std::string& name_hint);
ExperimentConfig load_experiment_config(const std::string& path);

FaultPlan parse_fault_plan_text(const std::string& text);
FaultPlan load_fault_plan(const std::string& path);
/// Parse and validate against the run the plan is meant for.
FaultPlan load_fault_plan(const std::string& path, const ExperimentConfig& cfg);
std::string plan_to_json(const FaultPlan& plan);

/// Built-in placements. `worst_case_shrink` kills the k highest ranks;
/// `worst_case_substitute` kills the k highest ranks living on nodes that
/// host no spare. Triggers are staggered (start, start + gap, ...) so each
/// death is a separate detection round.
FaultPlan make_preset_plan(const std::string& preset, const WorldConfig& world, int k,
                           std::int64_t start = 1, std::int64_t gap = 2);

/// One CSV line of a run. Numeric fields are snapped to the emitter's
/// precision when the row is built, so parse(emit(rows)) == rows exactly.
struct ResultRow {
  int processes = 0;
  std::string strategy;  // "shrink" | "substitute" | "baseline"
  int failures = 0;
  double total_s = 0.0;
  double t_check_s = 0.0;
  double t_pfd_s = 0.0;
  double t_pfr_s = 0.0;
  double t_pfx_s = 0.0;
  double t_recompute_s = 0.0;
  double slowdown = 1.0;       // vs the no-protection run at the same scale
  double pct_check = 0.0;      // of total
  double pct_recovery = 0.0;   // detection + state restore, of total
  double pct_reconfig = 0.0;   // of total
  std::string status;          // converged | maxit | unrecoverable | aborted

  bool operator==(const ResultRow&) const = default;
};

/// Sum of the five non-useful components.
double compute_waste(const OverheadBreakdown& bd);

struct RunOutput {
  ResultRow row;
  SolveStats solve;
  OverheadBreakdown breakdown;
  std::vector<RecoveryReport> recoveries;
  std::vector<StoreEntry> stores;                  // snapshot inventory at exit
  std::vector<std::uint64_t> state_bytes_by_rank;  // dynamic payload sizes at exit
  std::int64_t cadence_pushes = 0;                 // refresh pushes excluded
  double baseline_total_s = 0.0;
  std::uint64_t trace_digest = 0;
  std::string note;  // detail for aborted / unrecoverable runs
};

/// Runs one experiment end to end: build the world and solver, arm the plan,
/// checkpoint on cadence, repair and resume on every failure. Unrecoverable
/// runs come back as rows with a failure status, never as exceptions.
/// `baseline_total_s` < 0 means run the matching no-protection baseline first
/// to get the slowdown denominator.
RunOutput run_experiment(const ExperimentConfig& cfg, const FaultPlan& plan,
                         double baseline_total_s = -1.0);

/// Total simulated seconds of the no-protection run of `cfg`.
double baseline_total(const ExperimentConfig& cfg);

/// Shrink and substitute rows for one (P, failure count), side by side.
/// Ratios are substitute over shrink; equal values (including 0/0) give 1.
struct StrategyComparison {
  int processes = 0;
  int failures = 0;
  ResultRow shrink;
  ResultRow substitute;
  double slowdown_ratio = 1.0;
  double check_pct_ratio = 1.0;
  double recovery_pct_ratio = 1.0;
  double reconfig_pct_ratio = 1.0;
};

/// Pairs rows by (P, failures). Every key must have exactly one shrink and
/// one substitute row; anything else is a ConfigError.
std::vector<StrategyComparison> compare_strategies(const std::vector<ResultRow>& rows);

inline constexpr const char* kCsvHeader =
    "P,strategy,failures,total_s,t_check_s,t_pfd_s,t_pfr_s,t_pfx_s,"
    "t_recompute_s,slowdown,pct_check,pct_recovery,pct_reconfig,status";

std::string csv_text(const std::vector<ResultRow>& rows);
void emit_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> parse_csv_text(const std::string& text);

struct SweepResult {
  std::vector<ResultRow> rows;      // one per config, in filename order
  std::vector<std::string> names;   // matching experiment names
};

/// Runs every *.json config in `config_dir` in lexicographic filename order.
/// Each run computes its own baseline for normalization.
SweepResult run_sweep(const std::string& config_dir);

}  // namespace ftsim
