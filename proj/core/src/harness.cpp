#include "ftsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "ftsim/errors.hpp"
#include "ftsim/problem.hpp"

namespace ftsim {
namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(what + ": malformed JSON");
  return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

// Fixed-decimal formatting; the CSV contract is byte stability, so every
// numeric field goes through exactly these two formatters.
std::string fmt_seconds(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

std::string fmt_ratio(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double snap_seconds(double v) { return std::strtod(fmt_seconds(v).c_str(), nullptr); }
double snap_ratio(double v) { return std::strtod(fmt_ratio(v).c_str(), nullptr); }

Problem make_problem(const ExperimentConfig& cfg) {
  if (cfg.problem_kind == "poisson27") return make_poisson27(cfg.poisson_n);
  if (cfg.problem_kind == "mtx") return make_from_matrix_market(cfg.mtx_path);
  throw ConfigError("unknown problem kind '" + cfg.problem_kind + "'");
}

double ratio_of(double num, double den) {
  if (num == den) return 1.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void CheckpointPolicy::validate() const {
  if (every_outer < 1) throw ConfigError("checkpoint.every_outer must be >= 1");
  if (redundancy < 1) throw ConfigError("checkpoint.redundancy must be >= 1");
  if (mode == CheckpointMode::Young && !(mttf_seconds > 0.0))
    throw ConfigError("checkpoint.mttf_seconds must be > 0 for young mode");
}

void ExperimentConfig::validate() const {
  world.validate();
  solver.validate();
  checkpoint.validate();
  if (problem_kind == "poisson27") {
    if (poisson_n < 1) throw ConfigError("problem.n must be >= 1");
  } else if (problem_kind == "mtx") {
    if (mtx_path.empty()) throw ConfigError("problem.path required for mtx");
  } else {
    throw ConfigError("unknown problem kind '" + problem_kind + "'");
  }
}

ExperimentConfig parse_experiment_config_text(const std::string& text,
                                              const std::string& name_hint) {
  json j = parse_json(text, "experiment config");
  if (!j.is_object()) throw ConfigError("experiment config: top level must be an object");
  check_keys(j,
             {"name", "world", "problem", "solver", "checkpoint", "strategy",
              "fallback_to_shrink", "baseline", "plan"},
             "experiment config");

  ExperimentConfig cfg;
  cfg.name = name_hint;
  get_to(j, "name", cfg.name);

  if (j.contains("world")) {
    const json& w = j.at("world");
    check_keys(w,
               {"processes", "spares", "cores_per_node", "alpha_intra", "alpha_inter",
                "bandwidth_bytes_per_s", "seed", "detection_timeout_s", "flop_time_s",
                "collective_tree_factor", "proactive_barrier_every"},
               "world");
    get_to(w, "processes", cfg.world.processes);
    get_to(w, "spares", cfg.world.spares);
    get_to(w, "cores_per_node", cfg.world.cores_per_node);
    get_to(w, "alpha_intra", cfg.world.alpha_intra);
    get_to(w, "alpha_inter", cfg.world.alpha_inter);
    get_to(w, "bandwidth_bytes_per_s", cfg.world.bandwidth_bytes_per_s);
    get_to(w, "seed", cfg.world.seed);
    get_to(w, "detection_timeout_s", cfg.world.detection_timeout_s);
    get_to(w, "flop_time_s", cfg.world.flop_time_s);
    get_to(w, "collective_tree_factor", cfg.world.collective_tree_factor);
    get_to(w, "proactive_barrier_every", cfg.world.proactive_barrier_every);
  }

  if (j.contains("problem")) {
    const json& p = j.at("problem");
    check_keys(p, {"kind", "n", "path"}, "problem");
    get_to(p, "kind", cfg.problem_kind);
    get_to(p, "n", cfg.poisson_n);
    get_to(p, "path", cfg.mtx_path);
  }

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, {"tol", "m_inner", "m_outer", "max_outer"}, "solver");
    get_to(s, "tol", cfg.solver.tol);
    get_to(s, "m_inner", cfg.solver.m_inner);
    get_to(s, "m_outer", cfg.solver.m_outer);
    get_to(s, "max_outer", cfg.solver.max_outer);
  }

  if (j.contains("checkpoint")) {
    const json& c = j.at("checkpoint");
    check_keys(c, {"enabled", "mode", "every_outer", "c_seconds", "mttf_seconds", "redundancy"},
               "checkpoint");
    get_to(c, "enabled", cfg.checkpoint.enabled);
    if (c.contains("mode")) {
      const std::string mode = c.at("mode").get<std::string>();
      if (mode == "fixed_interval") cfg.checkpoint.mode = CheckpointMode::FixedInterval;
      else if (mode == "young") cfg.checkpoint.mode = CheckpointMode::Young;
      else throw ConfigError("checkpoint.mode must be fixed_interval or young");
    }
    get_to(c, "every_outer", cfg.checkpoint.every_outer);
    get_to(c, "c_seconds", cfg.checkpoint.c_seconds);
    get_to(c, "mttf_seconds", cfg.checkpoint.mttf_seconds);
    get_to(c, "redundancy", cfg.checkpoint.redundancy);
  }

  if (j.contains("strategy")) {
    const std::string s = j.at("strategy").get<std::string>();
    if (s == "shrink") cfg.strategy = RecoveryStrategy::Shrink;
    else if (s == "substitute") cfg.strategy = RecoveryStrategy::Substitute;
    else throw ConfigError("strategy must be shrink or substitute");
  }
  get_to(j, "fallback_to_shrink", cfg.fallback_to_shrink);
  get_to(j, "baseline", cfg.baseline);
  get_to(j, "plan", cfg.plan_path);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  ExperimentConfig cfg = parse_experiment_config_text(read_file(path), p.stem().string());
  if (!cfg.plan_path.empty() && fs::path(cfg.plan_path).is_relative())
    cfg.plan_path = (p.parent_path() / cfg.plan_path).string();
  return cfg;
}

FaultPlan parse_fault_plan_text(const std::string& text) {
  json j = parse_json(text, "fault plan");
  if (!j.is_array()) throw PlanError("fault plan: top level must be an array");
  FaultPlan plan;
  for (const json& e : j) {
    if (!e.is_object()) throw PlanError("fault plan: entries must be objects");
    check_keys(e, {"rank", "outer_iteration", "window_offset"}, "fault plan entry");
    if (!e.contains("rank") || !e.contains("outer_iteration"))
      throw PlanError("fault plan entry needs rank and outer_iteration");
    FaultInjection inj;
    e.at("rank").get_to(inj.rank);
    e.at("outer_iteration").get_to(inj.outer_iteration);
    get_to(e, "window_offset", inj.window_offset);
    plan.injections.push_back(inj);
  }
  return plan;
}

FaultPlan load_fault_plan(const std::string& path) {
  return parse_fault_plan_text(read_file(path));
}

FaultPlan load_fault_plan(const std::string& path, const ExperimentConfig& cfg) {
  FaultPlan plan = parse_fault_plan_text(read_file(path));
  plan.validate(cfg.world.processes, cfg.checkpoint.redundancy, cfg.solver.max_outer,
                cfg.solver.m_inner);
  return plan;
}

std::string plan_to_json(const FaultPlan& plan) {
  json arr = json::array();
  for (const FaultInjection& inj : plan.injections) {
    json e;
    e["rank"] = inj.rank;
    e["outer_iteration"] = inj.outer_iteration;
    e["window_offset"] = inj.window_offset;
    arr.push_back(e);
  }
  return arr.dump(2) + "\n";
}

FaultPlan make_preset_plan(const std::string& preset, const WorldConfig& world, int k,
                           std::int64_t start, std::int64_t gap) {
  if (k < 0) throw PlanError("preset plan: k must be >= 0");
  if (k > world.processes) throw PlanError("preset plan: k exceeds process count");
  if (start < 0 || gap < 1) throw PlanError("preset plan: need start >= 0, gap >= 1");

  std::vector<Rank> targets;
  if (preset == "worst_case_shrink") {
    for (int i = 0; i < k; ++i) targets.push_back(static_cast<Rank>(world.processes - 1 - i));
  } else if (preset == "worst_case_substitute") {
    std::set<int> spare_nodes;
    for (int pid = world.processes; pid < world.processes + world.spares; ++pid)
      spare_nodes.insert(pid / world.cores_per_node);
    for (int r = world.processes - 1; r >= 0 && static_cast<int>(targets.size()) < k; --r)
      if (!spare_nodes.count(r / world.cores_per_node)) targets.push_back(static_cast<Rank>(r));
    if (static_cast<int>(targets.size()) < k)
      throw PlanError("preset plan: not enough ranks on spare-free nodes");
  } else {
    throw ConfigError("unknown plan preset '" + preset + "'");
  }

  FaultPlan plan;
  std::int64_t trigger = start;
  for (Rank r : targets) {
    plan.injections.push_back(FaultInjection{r, trigger, 0});
    trigger += gap;
  }
  return plan;
}

double compute_waste(const OverheadBreakdown& bd) { return bd.waste(); }

double baseline_total(const ExperimentConfig& cfg) {
  ExperimentConfig base = cfg;
  base.baseline = true;
  // slowdown denominator 0 stops the recursion; the baseline row reports 1.0
  RunOutput out = run_experiment(base, FaultPlan{}, 0.0);
  return out.row.total_s;
}

RunOutput run_experiment(const ExperimentConfig& cfg, const FaultPlan& plan,
                         double baseline_total_s) {
  cfg.validate();
  plan.validate(cfg.world.processes, cfg.checkpoint.redundancy, cfg.solver.max_outer,
                cfg.solver.m_inner);
  if (!cfg.baseline && cfg.strategy == RecoveryStrategy::Substitute &&
      !cfg.fallback_to_shrink &&
      cfg.world.spares < static_cast<int>(plan.injections.size()))
    throw ConfigError(
        "substitute strategy needs spares >= planned failures (or fallback_to_shrink)");

  const bool protect = !cfg.baseline && cfg.checkpoint.enabled;

  Problem problem = make_problem(cfg);
  World world(cfg.world);
  CheckpointService svc(world, cfg.checkpoint.redundancy);
  DistributedSolver solver(world, svc, cfg.solver, problem);
  RecoveryCoordinator rc(world, svc, solver, cfg.strategy, cfg.fallback_to_shrink);

  world.arm(plan);

  RunOutput out;
  if (protect) {
    svc.push(Category::Checkpoint, SnapshotKind::Static, 0,
             [&](Rank r) { return solver.payload_static(r); });
  }

  std::int64_t last_tag = kNoTag;
  std::int64_t young_interval = 1;
  bool young_measured = false;
  double first_step_dur = -1.0;
  const double solve_t0 = world.now();

  DistributedSolver::Hooks hooks;
  if (protect) {
    hooks.after_outer_step = [&](std::int64_t tag) {
      if (first_step_dur < 0.0) first_step_dur = world.now() - solve_t0;
      bool push_now;
      if (cfg.checkpoint.mode == CheckpointMode::FixedInterval) {
        push_now = (tag - last_tag) >= cfg.checkpoint.every_outer;
      } else {
        push_now = !young_measured || (tag - last_tag) >= young_interval;
      }
      if (!push_now) return;
      const double push_t0 = world.now();
      svc.push(Category::Checkpoint, SnapshotKind::Dynamic, tag,
               [&](Rank r) { return solver.payload_dynamic(r); });
      ++out.cadence_pushes;
      last_tag = tag;
      if (cfg.checkpoint.mode == CheckpointMode::Young && !young_measured) {
        young_measured = true;
        const double c = cfg.checkpoint.c_seconds > 0.0 ? cfg.checkpoint.c_seconds
                                                        : world.now() - push_t0;
        const double step = std::max(first_step_dur, 1e-12);
        young_interval = std::max<std::int64_t>(
            1, std::llround(optimal_interval(c, cfg.checkpoint.mttf_seconds) / step));
      }
    };
  }

  SolveStats stats;
  std::string status;
  while (true) {
    try {
      stats = solver.run(hooks);
      status = stats.converged ? "converged" : "maxit";
      break;
    } catch (const ProcFailed& pf) {
      if (cfg.baseline) {
        std::ostringstream ss;
        ss << "baseline run aborted: process";
        for (ProcId p : pf.observed()) ss << ' ' << p;
        ss << " failed";
        out.note = ss.str();
        status = "aborted";
        stats = solver.stats();
        break;
      }
      try {
        RecoveryReport rep = rc.recover();
        if (rep.resume_tag == kNoTag) last_tag = kNoTag;
      } catch (const UnrecoverableError& ue) {
        out.note = ue.what();
        status = "unrecoverable";
        stats = solver.stats();
        break;
      }
    }
  }

  const OverheadBreakdown bd = world.breakdown();
  const double total = world.now();

  int failures = 0;
  for (ProcId p = 0; p < world.total_processes(); ++p)
    if (world.status(p) == ProcessStatus::Failed) ++failures;

  double denom = baseline_total_s;
  if (denom < 0.0) denom = cfg.baseline ? 0.0 : baseline_total(cfg);

  ResultRow row;
  row.processes = cfg.world.processes;
  row.strategy = cfg.baseline
                     ? "baseline"
                     : (cfg.strategy == RecoveryStrategy::Shrink ? "shrink" : "substitute");
  row.failures = failures;
  row.total_s = snap_seconds(total);
  row.t_check_s = snap_seconds(bd.t_check);
  row.t_pfd_s = snap_seconds(bd.t_pfd);
  row.t_pfr_s = snap_seconds(bd.t_pfr);
  row.t_pfx_s = snap_seconds(bd.t_pfx);
  row.t_recompute_s = snap_seconds(bd.t_recompute);
  // ratio of snapped values: a run identical to its baseline lands on 1.0
  // exactly instead of picking up truncation jitter from the denominator
  row.slowdown = snap_ratio(denom > 0.0 ? row.total_s / denom : 1.0);
  row.pct_check = snap_ratio(total > 0.0 ? bd.t_check / total : 0.0);
  row.pct_recovery = snap_ratio(total > 0.0 ? (bd.t_pfd + bd.t_pfx) / total : 0.0);
  row.pct_reconfig = snap_ratio(total > 0.0 ? bd.t_pfr / total : 0.0);
  row.status = status;

  out.row = std::move(row);
  out.solve = stats;
  out.breakdown = bd;
  out.recoveries = rc.rounds();
  out.stores = svc.inventory();
  out.state_bytes_by_rank.resize(static_cast<std::size_t>(solver.nranks()));
  for (Rank r = 0; r < solver.nranks(); ++r)
    out.state_bytes_by_rank[static_cast<std::size_t>(r)] = solver.state_bytes(r);
  // a baseline run is its own reference; report the snapped row value so the
  // number matches what baseline_total() hands to protected runs
  out.baseline_total_s = cfg.baseline ? out.row.total_s : denom;
  out.trace_digest = world.trace_digest();
  return out;
}

std::vector<StrategyComparison> compare_strategies(const std::vector<ResultRow>& rows) {
  std::map<std::pair<int, int>, StrategyComparison> table;
  std::map<std::pair<int, int>, std::pair<int, int>> seen;  // shrink, substitute counts
  for (const ResultRow& r : rows) {
    if (r.strategy == "baseline") continue;
    const std::pair<int, int> key{r.processes, r.failures};
    if (r.strategy == "shrink") {
      table[key].shrink = r;
      seen[key].first++;
    } else if (r.strategy == "substitute") {
      table[key].substitute = r;
      seen[key].second++;
    } else {
      throw ConfigError("compare_strategies: unknown strategy '" + r.strategy + "'");
    }
  }
  if (table.empty()) throw ConfigError("compare_strategies: no strategy rows");
  for (const auto& [key, counts] : seen) {
    if (counts.first != 1 || counts.second != 1) {
      std::ostringstream ss;
      ss << "compare_strategies: P=" << key.first << " failures=" << key.second << " has "
         << counts.first << " shrink and " << counts.second << " substitute rows";
      throw ConfigError(ss.str());
    }
  }
  std::vector<StrategyComparison> out;
  for (auto& [key, cmp] : table) {
    cmp.processes = key.first;
    cmp.failures = key.second;
    cmp.slowdown_ratio = ratio_of(cmp.substitute.slowdown, cmp.shrink.slowdown);
    cmp.check_pct_ratio = ratio_of(cmp.substitute.pct_check, cmp.shrink.pct_check);
    cmp.recovery_pct_ratio = ratio_of(cmp.substitute.pct_recovery, cmp.shrink.pct_recovery);
    cmp.reconfig_pct_ratio = ratio_of(cmp.substitute.pct_reconfig, cmp.shrink.pct_reconfig);
    out.push_back(std::move(cmp));
  }
  return out;
}

std::string csv_text(const std::vector<ResultRow>& rows) {
  std::ostringstream ss;
  ss << kCsvHeader << '\n';
  for (const ResultRow& r : rows) {
    ss << r.processes << ',' << r.strategy << ',' << r.failures << ','
       << fmt_seconds(r.total_s) << ',' << fmt_seconds(r.t_check_s) << ','
       << fmt_seconds(r.t_pfd_s) << ',' << fmt_seconds(r.t_pfr_s) << ','
       << fmt_seconds(r.t_pfx_s) << ',' << fmt_seconds(r.t_recompute_s) << ','
       << fmt_ratio(r.slowdown) << ',' << fmt_ratio(r.pct_check) << ','
       << fmt_ratio(r.pct_recovery) << ',' << fmt_ratio(r.pct_reconfig) << ','
       << r.status << '\n';
  }
  return ss.str();
}

void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("emit_csv: cannot write " + path);
  out << csv_text(rows);
  if (!out) throw ConfigError("emit_csv: write failed for " + path);
}

std::vector<ResultRow> parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("parse_csv: empty input");
  if (line != kCsvHeader) throw ConfigError("parse_csv: unexpected header: " + line);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 14) throw ConfigError("parse_csv: bad field count in: " + line);
    ResultRow r;
    r.processes = std::stoi(f[0]);
    r.strategy = f[1];
    r.failures = std::stoi(f[2]);
    r.total_s = std::strtod(f[3].c_str(), nullptr);
    r.t_check_s = std::strtod(f[4].c_str(), nullptr);
    r.t_pfd_s = std::strtod(f[5].c_str(), nullptr);
    r.t_pfr_s = std::strtod(f[6].c_str(), nullptr);
    r.t_pfx_s = std::strtod(f[7].c_str(), nullptr);
    r.t_recompute_s = std::strtod(f[8].c_str(), nullptr);
    r.slowdown = std::strtod(f[9].c_str(), nullptr);
    r.pct_check = std::strtod(f[10].c_str(), nullptr);
    r.pct_recovery = std::strtod(f[11].c_str(), nullptr);
    r.pct_reconfig = std::strtod(f[12].c_str(), nullptr);
    r.status = f[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

SweepResult run_sweep(const std::string& config_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(config_dir))
    throw ConfigError("run_sweep: not a directory: " + config_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(config_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  SweepResult result;
  for (const fs::path& file : files) {
    ExperimentConfig cfg = load_experiment_config(file.string());
    FaultPlan plan;
    if (!cfg.plan_path.empty()) plan = load_fault_plan(cfg.plan_path, cfg);
    RunOutput out = run_experiment(cfg, plan);
    result.rows.push_back(out.row);
    result.names.push_back(cfg.name);
  }
  return result;
}

}  // namespace ftsim
