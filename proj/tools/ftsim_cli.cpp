// Command line front end: run one experiment, sweep a config directory,
// emit preset fault plans, or time the no-protection baseline.
//
// Exit codes: 0 run completed (converged or hit the step budget),
// 2 configuration or plan problem, 3 the simulated run aborted or could not
// recover, 1 anything unexpected.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "ftsim/errors.hpp"
#include "ftsim/harness.hpp"

namespace {

using namespace ftsim;

bool run_ok(const ResultRow& row) {
  return row.status == "converged" || row.status == "maxit";
}

void print_summary(const ExperimentConfig& cfg, const RunOutput& out) {
  const ResultRow& r = out.row;
  std::printf("experiment: %s  (P=%d, %s)\n", cfg.name.c_str(), r.processes,
              r.strategy.c_str());
  std::printf("status: %s after %lld outer steps, residual %.3e\n", r.status.c_str(),
              static_cast<long long>(out.solve.outer_steps), out.solve.final_residual);
  if (!out.note.empty()) std::printf("note: %s\n", out.note.c_str());
  std::printf("total: %.9f s  (baseline %.9f s, slowdown %.6f)\n", r.total_s,
              out.baseline_total_s, r.slowdown);
  std::printf(
      "waste: check %.9f | detect %.9f | reconfig %.9f | restore %.9f | recompute %.9f\n",
      r.t_check_s, r.t_pfd_s, r.t_pfr_s, r.t_pfx_s, r.t_recompute_s);
  std::printf("failures handled: %d in %zu recovery rounds\n", r.failures,
              out.recoveries.size());
  std::printf("bytes: checkpointed %llu, recovered %llu\n",
              static_cast<unsigned long long>(out.breakdown.bytes_checkpointed),
              static_cast<unsigned long long>(out.breakdown.bytes_recovered));
}

void dump_stores_json(const RunOutput& out, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const StoreEntry& e : out.stores) {
    nlohmann::json j;
    j["host"] = e.host;
    j["owner"] = e.owner;
    j["kind"] = e.kind == SnapshotKind::Static ? "static" : "dynamic";
    j["tag"] = e.tag;
    j["epoch"] = e.epoch;
    j["bytes"] = e.bytes;
    arr.push_back(j);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << arr.dump(2) << '\n';
}

int cmd_run(const std::string& config_path, const std::string& plan_path,
            const std::string& out_csv, const std::string& stores_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string effective = plan_path.empty() ? cfg.plan_path : plan_path;
  FaultPlan plan;
  if (!effective.empty()) plan = load_fault_plan(effective, cfg);
  RunOutput out = run_experiment(cfg, plan);
  print_summary(cfg, out);
  if (!out_csv.empty()) emit_csv({out.row}, out_csv);
  if (!stores_path.empty()) dump_stores_json(out, stores_path);
  return run_ok(out.row) ? 0 : 3;
}

int cmd_sweep(const std::string& dir, const std::string& out_csv) {
  SweepResult res = run_sweep(dir);
  emit_csv(res.rows, out_csv);
  bool all_ok = true;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const ResultRow& r = res.rows[i];
    std::printf("%-28s P=%-3d %-10s failures=%d total=%.9f slowdown=%.6f %s\n",
                res.names[i].c_str(), r.processes, r.strategy.c_str(), r.failures,
                r.total_s, r.slowdown, r.status.c_str());
    all_ok = all_ok && run_ok(r);
  }
  std::printf("wrote %zu rows to %s\n", res.rows.size(), out_csv.c_str());
  return all_ok ? 0 : 3;
}

int cmd_plan(const std::string& preset, int p, int k, int spares, int cpn,
             long long start, long long gap, const std::string& out_path) {
  WorldConfig world;
  world.processes = p;
  world.spares = spares;
  world.cores_per_node = cpn;
  FaultPlan plan = make_preset_plan(preset, world, k, start, gap);
  const std::string text = plan_to_json(plan);
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + out_path);
    f << text;
  }
  return 0;
}

int cmd_baseline(const std::string& config_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  const double total = baseline_total(cfg);
  std::printf("baseline_total_s %.9f\n", total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator of failure recovery in a distributed solver"};
  app.require_subcommand(1);

  std::string run_config, run_plan, run_out, run_stores;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->add_option("--plan", run_plan, "fault plan JSON, overrides the config's plan");
  run->add_option("--out", run_out, "write the result row as CSV");
  run->add_option("--dump-stores", run_stores, "write the snapshot inventory as JSON");

  std::string sweep_dir, sweep_out;
  CLI::App* sweep = app.add_subcommand("sweep", "run every *.json config in a directory");
  sweep->add_option("--configs", sweep_dir, "config directory")->required();
  sweep->add_option("--out", sweep_out, "output CSV")->required();

  std::string preset, plan_out;
  int plan_p = 0, plan_k = 0, plan_spares = 0, plan_cpn = 1;
  long long plan_start = 1, plan_gap = 2;
  CLI::App* plan = app.add_subcommand("plan", "emit a preset fault plan");
  plan->add_option("--preset", preset, "placement rule")
      ->required()
      ->check(CLI::IsMember({"worst_case_shrink", "worst_case_substitute"}));
  plan->add_option("--p", plan_p, "active process count")->required();
  plan->add_option("--k", plan_k, "number of failures")->required();
  plan->add_option("--spares", plan_spares, "spare count, used for node placement");
  plan->add_option("--cores-per-node", plan_cpn, "processes per node");
  plan->add_option("--start", plan_start, "outer step of the first failure");
  plan->add_option("--gap", plan_gap, "outer steps between failures");
  plan->add_option("--out", plan_out, "output path, stdout when omitted");

  std::string base_config;
  CLI::App* base = app.add_subcommand("baseline", "time the no-protection run");
  base->add_option("--config", base_config, "experiment config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return cmd_run(run_config, run_plan, run_out, run_stores);
    if (sweep->parsed()) return cmd_sweep(sweep_dir, sweep_out);
    if (plan->parsed())
      return cmd_plan(preset, plan_p, plan_k, plan_spares, plan_cpn, plan_start,
                      plan_gap, plan_out);
    if (base->parsed()) return cmd_baseline(base_config);
  } catch (const ConfigError& e) {  // PlanError derives from ConfigError
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
