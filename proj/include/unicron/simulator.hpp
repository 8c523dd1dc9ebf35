#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unicron/detection.hpp"
#include "unicron/domain.hpp"
#include "unicron/planner.hpp"
#include "unicron/transition.hpp"

// Deterministic discrete-event cluster simulator: Poisson failure-trace
// generation, policy execution (the full recovery pipeline and the
// restart/static baselines), and WAF metrics over time. Identical
// (config, trace, policy) inputs produce bit-identical results.

namespace unicron::sim {

// trace event kinds
inline constexpr const char* kSev1NodeFault = "sev1_node_fault";
inline constexpr const char* kSev2Error = "sev2_error";
inline constexpr const char* kSev3Error = "sev3_error";
inline constexpr const char* kNodeRepair = "node_repair";

struct TraceEvent {
  double t = 0.0;
  std::string kind;
  std::string subject;  // node id, or worker id for sev2/sev3
};

struct FailureTrace {
  double horizon_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<TraceEvent> events;  // time-sorted
};

struct TraceGenParams {
  int nodes = 16;
  int workers_per_node = 8;
  double lambda_node = 0.0;  // arrivals per second per node
  // severity mix; must sum to 1
  double sev1_fraction = 0.12;
  double sev2_fraction = 0.15;
  double sev3_fraction = 0.73;
  // sev1 repair delay: uniform range, or exponential when repair_mean_s > 0
  double repair_min_s = 86400.0;
  double repair_max_s = 604800.0;
  double repair_mean_s = 0.0;
  double horizon_s = 0.0;
  std::uint64_t seed = 0;
};

// 8-week trace shaped to roughly 10 node faults plus 33 lesser failures on
// a 16-node cluster, with day-to-week repairs
TraceGenParams trace_a_preset(std::uint64_t seed, int nodes = 16, int workers_per_node = 8);
// the same failure process at 20x frequency over 7 days; repairs arrive at
// a similar rate to keep the pool stable
TraceGenParams trace_b_preset(std::uint64_t seed, int nodes = 16, int workers_per_node = 8);

FailureTrace generate_trace(const TraceGenParams& params);

struct TraceCounts {
  int sev1 = 0;
  int sev2 = 0;
  int sev3 = 0;
  int repairs = 0;
};
TraceCounts count_trace(const FailureTrace& trace);

std::string trace_to_jsonl(const FailureTrace& trace);
FailureTrace trace_from_jsonl(const std::string& text);

enum class PolicyKind {
  unicron,
  restart_checkpoint,
  affected_task_only,
  static_equally,
  static_weighted,
  static_sized,
};
const char* policy_name(PolicyKind kind);
std::optional<PolicyKind> policy_from_name(const std::string& name);
std::vector<PolicyKind> all_policies();

struct PolicyParams {
  PolicyKind kind = PolicyKind::unicron;
  // restart-style baselines detect through the framework timeout rather
  // than in-band monitoring, and pay a resubmission + environment setup
  // penalty on every restart
  double timeout_detect_s = 1800.0;
  double node_loss_detect_s = 5.7;
  double restart_overhead_s = 1380.0;
  bool hot_spare = false;  // substitute a spare instead of waiting for repair
};

struct SimConfig {
  std::vector<TaskSpec> tasks;
  int nodes = 16;
  int workers_per_node = 8;
  Calibration calibration;
  CostParams cost;
  DetectionThresholds detection;
  transition::MigrationCosts migration;
  SynthModelParams synth;  // used when calibration entries are missing

  // in-band detection latencies (end-to-end, simulated)
  double detect_node_loss_s = 5.6;
  double detect_process_exit_s = 1.8;
  double detect_exception_s = 0.3;

  double reattempt_backoff_s = 1.0;
  double recompute_scale = 1.0;  // scales lost-work recomputation (0 disables it)
  // fraction of sev2 errors that first look like transient network errors,
  // exercising the reattempt -> restart escalation
  double escalation_fraction = 0.1;
  double tick_s = 60.0;  // metrics sampling cadence (accumulation is exact)
  int micro_batches_per_rank = 8;
  bool record_samples = true;
  bool record_audit = false;
  // validate cluster invariants at every event; throws on violation
  bool check_invariants = false;
};

struct MetricsSample {
  double t = 0.0;
  std::vector<double> task_waf;  // aligned with SimResult::task_ids
  double cluster_waf = 0.0;
  double accumulated_waf = 0.0;
};

struct SimResult {
  std::vector<std::string> task_ids;
  std::vector<MetricsSample> samples;
  double accumulated_waf = 0.0;
  double horizon_s = 0.0;
  Plan initial_plan;
  std::map<std::string, double> downtime_s;  // failure/transition downtime per task
  TraceCounts counts;
  int reconfigurations = 0;
  int escalations = 0;
  int lookup_hits = 0;
  int lookup_misses = 0;
  std::vector<std::string> audit_jsonl;
};

SimResult run_simulation(const SimConfig& config, const FailureTrace& trace,
                         const PolicyParams& policy);

struct ComparisonReport {
  std::map<std::string, double> accumulated_waf;
  std::map<std::string, double> ratio_vs_unicron;  // unicron / policy
};

ComparisonReport compare_policies(const SimConfig& config, const FailureTrace& trace,
                                  const std::vector<PolicyParams>& policies);

// static baseline allocations (also used by tests)
std::map<std::string, int> static_allocation(const SimConfig& config, PolicyKind kind);

// CSV in `time_s,task_id,waf,cluster_waf,accumulated_waf` layout with a
// leading provenance comment; byte-stable across reruns
std::string metrics_csv(const SimResult& result, const std::string& config_digest,
                        std::uint64_t seed);
std::string summary_json(const SimResult& result, const PolicyParams& policy,
                         const std::string& config_digest, std::uint64_t seed);
std::string comparison_json(const ComparisonReport& report, const std::string& config_digest,
                            std::uint64_t seed);

}  // namespace unicron::sim
