// unicron: workload manager for elastic distributed training, evaluated
// against a deterministic simulated cluster.
//
// Subcommands: plan, trace-gen, simulate, compare, verify-transition,
// calibrate. Exit codes: 0 success, 2 usage, 3 invalid config/input,
// 4 oracle mismatch or resumption inequality.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "unicron/config.hpp"
#include "unicron/kernels.hpp"
#include "unicron/planner.hpp"
#include "unicron/simulator.hpp"
#include "unicron/transition.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitMismatch = 4;

std::uint64_t seed_or_env(std::uint64_t seed_flag, bool seed_given) {
  if (seed_given) return seed_flag;
  if (const char* env = std::getenv("UNICRON_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

unicron::RunConfig load_config_checked(const std::string& path) {
  return unicron::load_config(path);
}

unicron::sim::SimConfig prepare_sim(unicron::RunConfig& cfg, const std::string& calib_path) {
  unicron::sim::SimConfig sim = cfg.sim;
  if (!calib_path.empty()) {
    sim.calibration =
        unicron::bind_min_workers(unicron::load_calibration_csv(calib_path), sim.tasks);
  }
  sim.calibration = unicron::ensure_calibration(sim.tasks, sim.calibration,
                                                sim.nodes * sim.workers_per_node, sim.synth);
  return sim;
}

nlohmann::json plan_to_json(const unicron::Plan& plan, const std::string& digest) {
  nlohmann::json out;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, e] : plan.tasks) {
    tasks.push_back({{"id", id},
                     {"x", e.workers},
                     {"dp", e.layout.dp},
                     {"pp", e.layout.pp},
                     {"tp", e.layout.tp}});
  }
  out["tasks"] = tasks;
  out["objective"] = plan.objective;
  out["config_digest"] = digest;
  return out;
}

int cmd_plan(const std::string& config_path, const std::string& calib_path,
             const std::string& fault_node, int join_nodes, bool oracle,
             const std::string& out_path) {
  unicron::RunConfig cfg = load_config_checked(config_path);
  unicron::sim::SimConfig sim = prepare_sim(cfg, calib_path);

  unicron::RewardInputs inputs;
  inputs.tasks = sim.tasks;
  inputs.healthy_workers = sim.nodes * sim.workers_per_node;
  inputs.cost = sim.cost;
  inputs.calibration = &sim.calibration;
  inputs.micro_batches_per_rank = sim.micro_batches_per_rank;

  if (!fault_node.empty()) {
    // perturbation: one node lost before planning; tasks are assigned to
    // contiguous worker ranges of the initial optimal plan
    unicron::Plan initial = unicron::solve(inputs);
    int cursor = 0;
    const int wpn = sim.workers_per_node;
    std::string node = fault_node;
    if (node.rfind("node:", 0) == 0) node = node.substr(5);
    int node_index = -1;
    for (int n = 0; n < sim.nodes; ++n)
      if ("n" + std::to_string(n) == node) node_index = n;
    if (node_index < 0) {
      std::cerr << "unknown node '" << node << "' (expected n0..n" << sim.nodes - 1 << ")\n";
      return kExitConfig;
    }
    const int lo = node_index * wpn, hi = lo + wpn;
    for (const auto& [id, e] : initial.tasks) {
      inputs.current_workers[id] = e.workers;
      const int task_lo = cursor, task_hi = cursor + e.workers;
      if (task_lo < hi && lo < task_hi) inputs.faulted_tasks.insert(id);
      cursor += e.workers;
    }
    inputs.healthy_workers -= wpn;
  }
  if (join_nodes > 0) inputs.healthy_workers += join_nodes * sim.workers_per_node;

  unicron::Plan plan = unicron::solve(inputs);

  if (oracle) {
    try {
      unicron::Plan reference = unicron::brute_force_solve(inputs);
      if (!(reference == plan)) {
        std::cerr << "oracle mismatch: solver objective " << plan.objective
                  << " vs exhaustive " << reference.objective << "\n";
        return kExitMismatch;
      }
    } catch (const unicron::InstanceTooLarge& e) {
      std::cerr << "oracle skipped: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  const std::string text = plan_to_json(plan, cfg.digest).dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else unicron::write_file_atomic(out_path, text);
  return kExitOk;
}

int cmd_trace_gen(const std::string& preset, double lambda, double horizon, int nodes,
                  int workers_per_node, std::uint64_t seed, const std::string& out_path) {
  unicron::sim::TraceGenParams params;
  if (preset == "trace-a") {
    params = unicron::sim::trace_a_preset(seed, nodes, workers_per_node);
  } else if (preset == "trace-b") {
    params = unicron::sim::trace_b_preset(seed, nodes, workers_per_node);
  } else if (preset.empty()) {
    params.nodes = nodes;
    params.workers_per_node = workers_per_node;
    params.lambda_node = lambda;
    params.horizon_s = horizon;
    params.seed = seed;
  } else {
    std::cerr << "unknown preset '" << preset << "' (expected trace-a or trace-b)\n";
    return kExitUsage;
  }
  if (lambda >= 0 && !preset.empty()) {
    // explicit lambda overrides the preset rate
    params.lambda_node = lambda;
  }

  unicron::sim::FailureTrace trace = unicron::sim::generate_trace(params);
  const auto counts = unicron::sim::count_trace(trace);
  unicron::write_file_atomic(out_path, unicron::sim::trace_to_jsonl(trace));
  std::printf("wrote %s: horizon=%.0fs events=%zu (sev1=%d sev2=%d sev3=%d repairs=%d)\n",
              out_path.c_str(), trace.horizon_s, trace.events.size(), counts.sev1, counts.sev2,
              counts.sev3, counts.repairs);
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& calib_path,
                 const std::string& trace_path, const std::string& policy_name,
                 std::uint64_t seed, const std::string& out_csv, const std::string& out_summary,
                 bool hot_spare, bool audit) {
  unicron::RunConfig cfg = load_config_checked(config_path);
  unicron::sim::SimConfig sim = prepare_sim(cfg, calib_path);
  sim.record_audit = audit;

  auto kind = unicron::sim::policy_from_name(policy_name);
  if (!kind) {
    std::cerr << "unknown policy '" << policy_name << "'\n";
    return kExitUsage;
  }
  unicron::sim::PolicyParams policy = cfg.policy;
  policy.kind = *kind;
  policy.hot_spare = policy.hot_spare || hot_spare;

  unicron::sim::FailureTrace trace =
      unicron::sim::trace_from_jsonl(unicron::read_file(trace_path));

  unicron::sim::SimResult result = unicron::sim::run_simulation(sim, trace, policy);
  unicron::write_file_atomic(out_csv, unicron::sim::metrics_csv(result, cfg.digest, seed));
  const std::string summary =
      unicron::sim::summary_json(result, policy, cfg.digest, seed) + "\n";
  if (out_summary.empty()) std::cout << summary;
  else unicron::write_file_atomic(out_summary, summary);
  if (audit) {
    std::string lines;
    for (const auto& l : result.audit_jsonl) lines += l + "\n";
    unicron::write_file_atomic(out_csv + ".audit.jsonl", lines);
  }
  return kExitOk;
}

int cmd_compare(const std::string& config_path, const std::string& calib_path,
                const std::string& trace_path, const std::vector<std::string>& policy_names,
                std::uint64_t seed, const std::string& out_path) {
  unicron::RunConfig cfg = load_config_checked(config_path);
  unicron::sim::SimConfig sim = prepare_sim(cfg, calib_path);

  std::vector<unicron::sim::PolicyParams> policies;
  std::vector<std::string> names = policy_names;
  if (names.empty())
    for (auto k : unicron::sim::all_policies()) names.push_back(unicron::sim::policy_name(k));
  for (const auto& n : names) {
    auto kind = unicron::sim::policy_from_name(n);
    if (!kind) {
      std::cerr << "unknown policy '" << n << "'\n";
      return kExitUsage;
    }
    unicron::sim::PolicyParams p = cfg.policy;
    p.kind = *kind;
    policies.push_back(p);
  }

  unicron::sim::FailureTrace trace =
      unicron::sim::trace_from_jsonl(unicron::read_file(trace_path));
  auto report = unicron::sim::compare_policies(sim, trace, policies);
  const std::string text =
      unicron::sim::comparison_json(report, cfg.digest, seed) + "\n";
  if (out_path.empty()) std::cout << text;
  else unicron::write_file_atomic(out_path, text);
  return kExitOk;
}

std::string digest_of(const unicron::transition::GradVec& v) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (auto x : v) {
    h ^= static_cast<std::uint64_t>(x);
    h = unicron::mix64(h);
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

struct TransitionCase {
  int dp, pp, micro_batches, fail_rank, fail_after_mb, reduced, fail_stage;
};

// returns true when the resumed aggregate equals the failure-free reference
bool run_transition_case(const TransitionCase& c, const unicron::transition::GradConfig& cfg,
                         bool print) {
  using namespace unicron::transition;
  IterationLayout layout = IterationLayout::balanced(c.dp, c.pp, c.micro_batches);
  GradVec reference = reference_aggregate(layout, cfg);

  ResumeResult resumed;
  if (c.reduced == 0) {
    GradientState st = compute_until(layout, cfg, c.fail_after_mb);
    resumed = resume_scenario1(st, layout, cfg, c.fail_rank);
  } else {
    GradientState st = compute_until(layout, cfg, layout.per_rank());
    reduce_segments(st, layout, cfg, c.reduced);
    resumed = resume_scenario2(st, layout, cfg, c.fail_rank, c.fail_stage);
  }
  const bool equal = resumed.aggregate == reference;
  if (print) {
    std::printf("reference %s\nresumed   %s\n%s\n", digest_of(reference).c_str(),
                digest_of(resumed.aggregate).c_str(), equal ? "EQUAL" : "UNEQUAL");
  }
  return equal;
}

int cmd_verify_transition(int dp, int pp, int micro_batches, int dims, int fail_rank,
                          int fail_after_mb, int reduced, int fail_stage, std::uint64_t seed,
                          bool sweep) {
  unicron::transition::GradConfig cfg;
  cfg.seed = seed;
  cfg.iteration = 1;
  cfg.dims = dims;

  if (sweep) {
    int cases = 0;
    for (int d : {2, 3, 4, 8}) {
      for (int p : {1, 2, 4}) {
        for (int bmul : {1, 2, 4}) {
          const int b = d * bmul;
          const int k = b / d;
          for (int r = 0; r < d; ++r) {
            for (int mb = 0; mb <= k; ++mb) {
              if (!run_transition_case({d, p, b, r, mb, 0, 0}, cfg, false)) {
                std::printf("UNEQUAL at dp=%d pp=%d B=%d rank=%d mb=%d\n", d, p, b, r, mb);
                return kExitMismatch;
              }
              ++cases;
            }
            for (int red = 1; red <= p; ++red) {
              for (int st = 0; st < p; ++st) {
                if (!run_transition_case({d, p, b, r, k, red, st}, cfg, false)) {
                  std::printf("UNEQUAL at dp=%d pp=%d B=%d rank=%d reduced=%d stage=%d\n", d, p,
                              b, r, red, st);
                  return kExitMismatch;
                }
                ++cases;
              }
            }
          }
        }
      }
    }
    std::printf("sweep: %d failure points, all EQUAL\n", cases);
    return kExitOk;
  }

  if (dp == 1) {
    if (fail_after_mb >= 0 || reduced > 0) {
      std::printf("dp=1 leaves no surviving replica; falling back to checkpoint restart\n");
      return kExitOk;  // expected behavior, distinct from UNEQUAL
    }
    std::printf("EQUAL\n");
    return kExitOk;
  }
  if (micro_batches % dp != 0) {
    std::cerr << "micro-batches must be divisible by dp\n";
    return kExitUsage;
  }
  TransitionCase c;
  c.dp = dp;
  c.pp = pp;
  c.micro_batches = micro_batches;
  c.fail_rank = fail_rank;
  c.fail_after_mb = fail_after_mb < 0 ? micro_batches / dp : fail_after_mb;
  c.reduced = reduced;
  c.fail_stage = fail_stage < 0 ? pp - 1 : fail_stage;
  return run_transition_case(c, cfg, true) ? kExitOk : kExitMismatch;
}

int cmd_calibrate(const std::string& calib_path, const std::string& config_path,
                  const std::string& synth_out, std::uint64_t /*seed*/) {
  if (!calib_path.empty()) {
    unicron::Calibration calib = unicron::load_calibration_csv(calib_path);
    std::size_t points = 0;
    for (const auto& [task, table] : calib) points += table.entries().size();
    std::printf("%s: %zu tasks, %zu calibrated points, all rows valid\n", calib_path.c_str(),
                calib.size(), points);
    return kExitOk;
  }
  if (config_path.empty() || synth_out.empty()) {
    std::cerr << "calibrate needs either --csv to validate or --config and --out to synthesize\n";
    return kExitUsage;
  }
  unicron::RunConfig cfg = load_config_checked(config_path);
  unicron::Calibration calib = unicron::ensure_calibration(
      cfg.sim.tasks, {}, cfg.sim.nodes * cfg.sim.workers_per_node, cfg.sim.synth);
  unicron::write_file_atomic(synth_out, unicron::calibration_to_csv(calib));
  std::printf("wrote synthetic calibration for %zu tasks to %s\n", calib.size(),
              synth_out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unicron: self-healing training workload manager (simulated cluster)"};
  app.require_subcommand(1);

  std::string config_path, calib_path, trace_path, out_path, summary_path;
  std::string fault_node, preset, policy = "unicron";
  std::vector<std::string> policies;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool oracle = false, hot_spare = false, audit = false, sweep = false;
  int join_nodes = 0;
  double lambda = -1.0, horizon = 7 * 86400.0;
  int nodes = 16, workers_per_node = 8;
  int dp = 4, pp = 2, micro_batches = -1, dims = 64;
  int fail_rank = 0, fail_after_mb = -1, reduced = 0, fail_stage = -1;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "random seed (falls back to UNICRON_SEED)")
        ->each([&](const std::string&) { seed_given = true; });
  };

  auto* plan = app.add_subcommand("plan", "compute the optimal reconfiguration plan");
  plan->add_option("--config", config_path, "cluster/task config JSON")->required();
  plan->add_option("--calibration", calib_path, "calibration CSV");
  plan->add_option("--fault", fault_node, "plan for a lost node, e.g. node:n3");
  plan->add_option("--join", join_nodes, "plan for this many joining nodes");
  plan->add_flag("--oracle", oracle, "cross-check against exhaustive enumeration");
  plan->add_option("--out", out_path, "write plan JSON here instead of stdout");

  auto* tgen = app.add_subcommand("trace-gen", "generate a failure trace (JSONL)");
  tgen->add_option("--preset", preset, "trace-a or trace-b");
  tgen->add_option("--lambda", lambda, "per-node failure rate (events/s)");
  tgen->add_option("--horizon", horizon, "trace horizon in seconds");
  tgen->add_option("--nodes", nodes, "node count");
  tgen->add_option("--workers-per-node", workers_per_node, "workers per node");
  tgen->add_option("--out", out_path, "output trace path")->required();
  add_seed(tgen);

  auto* simc = app.add_subcommand("simulate", "run one policy over a trace");
  simc->add_option("--config", config_path, "cluster/task config JSON")->required();
  simc->add_option("--calibration", calib_path, "calibration CSV");
  simc->add_option("--trace", trace_path, "failure trace JSONL")->required();
  simc->add_option("--policy", policy, "policy name");
  simc->add_option("--out", out_path, "metrics CSV path")->required();
  simc->add_option("--summary", summary_path, "summary JSON path (default stdout)");
  simc->add_flag("--hot-spare", hot_spare, "restart baseline uses a hot spare");
  simc->add_flag("--audit", audit, "write recovery audit JSONL next to the CSV");
  add_seed(simc);

  auto* cmp = app.add_subcommand("compare", "run several policies on one trace");
  cmp->add_option("--config", config_path, "cluster/task config JSON")->required();
  cmp->add_option("--calibration", calib_path, "calibration CSV");
  cmp->add_option("--trace", trace_path, "failure trace JSONL")->required();
  cmp->add_option("--policies", policies, "policy names (default: all)");
  cmp->add_option("--out", out_path, "report JSON path (default stdout)");
  add_seed(cmp);

  auto* vt = app.add_subcommand("verify-transition",
                                "check resumption equals the failure-free iteration");
  vt->add_option("--dp", dp, "data-parallel degree");
  vt->add_option("--pp", pp, "pipeline stages");
  vt->add_option("--microbatches", micro_batches, "global-batch micro-batch count");
  vt->add_option("--dims", dims, "gradient components");
  vt->add_option("--fail-rank", fail_rank, "DP rank that fails");
  vt->add_option("--fail-after-mb", fail_after_mb, "micro-batch boundary of the failure");
  vt->add_option("--fail-after-reduced-segments", reduced,
                 "segments already reduced when the worker fails");
  vt->add_option("--fail-stage", fail_stage, "pipeline stage of the failed worker");
  vt->add_flag("--sweep", sweep, "run the full verification grid");
  add_seed(vt);

  auto* cal = app.add_subcommand("calibrate", "validate or synthesize a calibration CSV");
  cal->add_option("--csv", calib_path, "calibration CSV to validate");
  cal->add_option("--config", config_path, "config JSON for synthesis");
  cal->add_option("--out", out_path, "synthetic calibration output path");
  add_seed(cal);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::uint64_t effective_seed = seed_or_env(seed, seed_given);

  try {
    if (plan->parsed())
      return cmd_plan(config_path, calib_path, fault_node, join_nodes, oracle, out_path);
    if (tgen->parsed())
      return cmd_trace_gen(preset, lambda, horizon, nodes, workers_per_node, effective_seed,
                           out_path);
    if (simc->parsed())
      return cmd_simulate(config_path, calib_path, trace_path, policy, effective_seed, out_path,
                          summary_path, hot_spare, audit);
    if (cmp->parsed())
      return cmd_compare(config_path, calib_path, trace_path, policies, effective_seed,
                         out_path);
    if (vt->parsed()) {
      if (micro_batches < 0) micro_batches = 4 * dp;
      return cmd_verify_transition(dp, pp, micro_batches, dims, fail_rank, fail_after_mb,
                                   reduced, fail_stage, effective_seed, sweep);
    }
    if (cal->parsed())
      return cmd_calibrate(calib_path, config_path, out_path, effective_seed);
  } catch (const unicron::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitUsage;
}
