#include "unicron/detection.hpp"

#include <stdexcept>

namespace unicron {

void HeartbeatRegistry::register_node(const std::string& node_id, double now_s) {
  last_[node_id] = now_s;
}

void HeartbeatRegistry::beat(const std::string& node_id, double now_s) {
  auto it = last_.find(node_id);
  if (it == last_.end()) throw std::out_of_range("heartbeat from unregistered node " + node_id);
  it->second = now_s;
}

std::optional<ErrorEvent> HeartbeatRegistry::check(const std::string& node_id,
                                                   double now_s) const {
  auto it = last_.find(node_id);
  if (it == last_.end()) throw std::out_of_range("heartbeat check for unknown node " + node_id);
  if (now_s - it->second > timeout_s_) {
    return ErrorEvent{now_s, DetectionSource::node_health, "Lost connection", node_id,
                      Severity::sev1};
  }
  return std::nullopt;
}

std::optional<ErrorEvent> check_heartbeat(const HeartbeatRegistry& reg,
                                          const std::string& node_id, double now_s) {
  return reg.check(node_id, now_s);
}

std::optional<ErrorEvent> supervise_process(const std::string& worker_id,
                                            ProcessObservation obs, double now_s) {
  if (obs != ProcessObservation::exited_abnormally) return std::nullopt;
  return ErrorEvent{now_s, DetectionSource::process_supervision, "Exited abnormally", worker_id,
                    Severity::sev2};
}

Severity classify_exception(const std::string& status_kind) {
  return severity_of_status(status_kind, DetectionSource::exception_propagation);
}

void IterationStats::observe(const std::string& task_id, double duration_s,
                             double completed_at_s) {
  if (duration_s <= 0) throw std::invalid_argument("iteration duration must be positive");
  auto& e = entries_[task_id];
  e.durations.push_back(duration_s);
  e.sum += duration_s;
  while (static_cast<int>(e.durations.size()) > window_) {
    e.sum -= e.durations.front();
    e.durations.pop_front();
  }
  e.last_completion_s = completed_at_s;
}

void IterationStats::reset(const std::string& task_id) { entries_.erase(task_id); }

int IterationStats::count(const std::string& task_id) const {
  auto it = entries_.find(task_id);
  return it == entries_.end() ? 0 : static_cast<int>(it->second.durations.size());
}

double IterationStats::mean(const std::string& task_id) const {
  auto it = entries_.find(task_id);
  if (it == entries_.end() || it->second.durations.empty())
    throw std::logic_error("no iterations recorded for " + task_id);
  return it->second.sum / static_cast<double>(it->second.durations.size());
}

double IterationStats::last_completion(const std::string& task_id) const {
  auto it = entries_.find(task_id);
  if (it == entries_.end() || it->second.durations.empty())
    throw std::logic_error("no iterations recorded for " + task_id);
  return it->second.last_completion_s;
}

IterationStats observe_iteration(IterationStats stats, const std::string& task_id,
                                 double duration_s, double completed_at_s) {
  stats.observe(task_id, duration_s, completed_at_s);
  return stats;
}

StatCheckResult statistical_check(const IterationStats& stats, const std::string& task_id,
                                  double now_s, const DetectionThresholds& thresholds,
                                  bool network_condition_pending) {
  const double m = stats.mean(task_id);  // throws if nothing recorded yet
  const double elapsed = now_s - stats.last_completion(task_id);

  if (elapsed > thresholds.failed_factor * m) {
    ErrorEvent ev;
    ev.time_s = now_s;
    ev.source = DetectionSource::statistical_monitoring;
    ev.subject = task_id;
    if (network_condition_pending) {
      ev.status_kind = "NCCL timeout";
      ev.severity = Severity::sev3;
    } else {
      ev.status_kind = "Task hang";
      ev.severity = Severity::sev2;
    }
    return StatCheckResult{StatStatus::failed, ev};
  }
  if (elapsed > thresholds.degraded_factor * m) return StatCheckResult{StatStatus::degraded, {}};
  return StatCheckResult{StatStatus::normal, {}};
}

}  // namespace unicron
