#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Core data model shared by every module: tasks, throughput calibration,
// cluster state, error events, plans and cost parameters. All types are
// immutable value objects once constructed.

namespace unicron {

struct ParallelLayout {
  int dp = 1;
  int pp = 1;
  int tp = 1;

  int workers() const { return dp * pp * tp; }
  bool operator==(const ParallelLayout&) const = default;
};

// Calibrated achieved aggregate FLOP/s per worker count, with the layout
// that achieved it. Values may dip as x grows; that is measured behavior,
// not an error, and lookups never interpolate.
class ThroughputTable {
 public:
  struct Entry {
    double flops = 0.0;  // aggregate FLOP/s at this worker count
    ParallelLayout layout;
  };

  ThroughputTable() = default;
  explicit ThroughputTable(int min_workers) : min_workers_(min_workers) {}

  void set(int x, double flops, ParallelLayout layout) { entries_[x] = Entry{flops, layout}; }

  // stored T(t,x); 0 when x is below the minimum requirement or uncalibrated
  double lookup(int x) const {
    if (x < min_workers_) return 0.0;
    auto it = entries_.find(x);
    return it == entries_.end() ? 0.0 : it->second.flops;
  }

  std::optional<ParallelLayout> layout_for(int x) const {
    auto it = entries_.find(x);
    if (it == entries_.end()) return std::nullopt;
    return it->second.layout;
  }

  int min_workers() const { return min_workers_; }
  const std::map<int, Entry>& entries() const { return entries_; }

 private:
  int min_workers_ = 1;
  std::map<int, Entry> entries_;
};

struct TaskSpec {
  std::string task_id;
  double model_size = 0.0;  // parameter count
  double weight = 1.0;      // w(t), priority multiplier
  int min_workers = 1;      // minimum requirement
  double d_iter_s = 60.0;   // nominal iteration duration
};

// calibration tables keyed by task id
using Calibration = std::map<std::string, ThroughputTable>;

// rebind loaded tables to each task's minimum requirement so lookups below
// it yield 0
Calibration bind_min_workers(const Calibration& calibration, const std::vector<TaskSpec>& tasks);

enum class Health { healthy, lost, drained };

struct Worker {
  std::string worker_id;
  Health health = Health::healthy;
  std::optional<std::string> assigned_task;
};

struct Node {
  std::string node_id;
  std::vector<std::string> worker_ids;
  Health health = Health::healthy;
};

struct TaskAssignment {
  int worker_count = 0;
  std::set<std::string> worker_ids;

  bool operator==(const TaskAssignment&) const = default;
};

struct ClusterState {
  std::vector<Node> nodes;
  std::vector<Worker> workers;
  std::map<std::string, TaskAssignment> assignment;  // task id -> workers

  int healthy_worker_count() const;
  const Node* find_node(const std::string& node_id) const;
  const Worker* find_worker(const std::string& worker_id) const;
};

// empty iff all ClusterState invariants hold; violations are data, not errors
std::vector<std::string> validate_cluster(const ClusterState& state);

// sev1 is the most severe level
enum class Severity { sev1 = 1, sev2 = 2, sev3 = 3 };

inline bool more_severe(Severity a, Severity b) {
  return static_cast<int>(a) < static_cast<int>(b);
}
const char* severity_name(Severity s);

enum class DetectionSource {
  node_health,
  process_supervision,
  exception_propagation,
  statistical_monitoring,
};
const char* detection_source_name(DetectionSource s);

// severity classification of every known error status (exception labels are
// resolved by classify_exception in the detection module)
Severity severity_of_status(const std::string& status_kind, DetectionSource source);

struct ErrorEvent {
  double time_s = 0.0;
  DetectionSource source = DetectionSource::node_health;
  std::string status_kind;
  std::string subject;  // node or worker id
  Severity severity = Severity::sev3;
  bool escalated = false;  // set on events produced by the escalation path
};

struct PlanEntry {
  int workers = 0;  // x_i'; zero means not scheduled
  ParallelLayout layout;
  int micro_batches = 0;  // B for the task under this layout

  bool operator==(const PlanEntry&) const = default;
};

struct Plan {
  std::map<std::string, PlanEntry> tasks;
  double objective = 0.0;

  int total_workers() const;
  bool operator==(const Plan&) const = default;
};

struct CostParams {
  double lambda_worker = 1.6e-8;        // per-worker sev1 rate, 1/s
  double d_transition_s = 60.0;         // transition duration estimate
  double checkpoint_interval_s = 1800;  // persistent checkpoint cadence
  double d_iter_s = 60.0;               // nominal iteration duration
  double horizon_s = 2592000;           // evaluation horizon (30 days)
};

// empty iff CostParams invariants hold
std::vector<std::string> validate_cost_params(const CostParams& p);

}  // namespace unicron
