#include "unicron/domain.hpp"

#include <algorithm>

namespace unicron {

Calibration bind_min_workers(const Calibration& calibration,
                             const std::vector<TaskSpec>& tasks) {
  Calibration out;
  for (const auto& [task_id, table] : calibration) {
    int min_workers = table.min_workers();
    for (const auto& t : tasks)
      if (t.task_id == task_id) min_workers = t.min_workers;
    ThroughputTable rebound(min_workers);
    for (const auto& [x, e] : table.entries()) rebound.set(x, e.flops, e.layout);
    out.emplace(task_id, std::move(rebound));
  }
  return out;
}

int ClusterState::healthy_worker_count() const {
  int n = 0;
  for (const auto& w : workers)
    if (w.health == Health::healthy) ++n;
  return n;
}

const Node* ClusterState::find_node(const std::string& node_id) const {
  for (const auto& n : nodes)
    if (n.node_id == node_id) return &n;
  return nullptr;
}

const Worker* ClusterState::find_worker(const std::string& worker_id) const {
  for (const auto& w : workers)
    if (w.worker_id == worker_id) return &w;
  return nullptr;
}

std::vector<std::string> validate_cluster(const ClusterState& state) {
  std::vector<std::string> violations;

  int assigned = 0;
  for (const auto& [task, a] : state.assignment) {
    assigned += a.worker_count;
    if (a.worker_count != static_cast<int>(a.worker_ids.size()))
      violations.push_back("task " + task + ": worker_count disagrees with worker id set");
  }
  int healthy = state.healthy_worker_count();
  if (assigned > healthy)
    violations.push_back("capacity: " + std::to_string(assigned) + " workers assigned but only " +
                         std::to_string(healthy) + " healthy");

  std::map<std::string, std::string> owner;
  for (const auto& [task, a] : state.assignment) {
    for (const auto& w : a.worker_ids) {
      auto [it, inserted] = owner.emplace(w, task);
      if (!inserted)
        violations.push_back("worker " + w + " assigned to both " + it->second + " and " + task);
    }
  }

  for (const auto& [w, task] : owner) {
    if (state.find_worker(w) == nullptr)
      violations.push_back("worker " + w + " (task " + task + ") not present in cluster");
  }
  return violations;
}

const char* severity_name(Severity s) {
  switch (s) {
    case Severity::sev1: return "sev1";
    case Severity::sev2: return "sev2";
    case Severity::sev3: return "sev3";
  }
  return "sev?";
}

const char* detection_source_name(DetectionSource s) {
  switch (s) {
    case DetectionSource::node_health: return "node_health";
    case DetectionSource::process_supervision: return "process_supervision";
    case DetectionSource::exception_propagation: return "exception_propagation";
    case DetectionSource::statistical_monitoring: return "statistical_monitoring";
  }
  return "unknown";
}

Severity severity_of_status(const std::string& status_kind, DetectionSource source) {
  if (source == DetectionSource::node_health) return Severity::sev1;
  if (source == DetectionSource::process_supervision) return Severity::sev2;
  if (source == DetectionSource::statistical_monitoring) {
    if (status_kind == "NCCL timeout" || status_kind == "Link flapping") return Severity::sev3;
    // "Task hang" and other software errors
    return Severity::sev2;
  }
  // exception propagation
  if (status_kind == "Connection refused/reset" || status_kind == "Other network errors")
    return Severity::sev3;
  if (status_kind == "ECC errors" || status_kind == "Invalid DMA mapping" ||
      status_kind == "NVLink errors" || status_kind == "GPU driver errors")
    return Severity::sev1;
  // "Illegal memory access", "CUDA errors", "Other software errors" and any
  // unrecognized label default to sev2
  return Severity::sev2;
}

int Plan::total_workers() const {
  int n = 0;
  for (const auto& [_, e] : tasks) n += e.workers;
  return n;
}

std::vector<std::string> validate_cost_params(const CostParams& p) {
  std::vector<std::string> v;
  if (p.lambda_worker <= 0) v.push_back("lambda_worker must be > 0");
  if (p.d_transition_s <= 0) v.push_back("d_transition must be > 0");
  if (p.checkpoint_interval_s <= 0) v.push_back("checkpoint_interval must be > 0");
  if (p.d_iter_s <= 0) v.push_back("d_iter must be > 0");
  if (p.horizon_s <= 0) v.push_back("horizon must be > 0");
  if (p.checkpoint_interval_s < p.d_iter_s)
    v.push_back("checkpoint_interval must be >= d_iter");
  return v;
}

}  // namespace unicron
