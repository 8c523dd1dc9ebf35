#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>

#include "unicron/domain.hpp"

// The four in-band detection methods: node heartbeats, process supervision,
// exception propagation and online statistical monitoring of iteration
// completion times.

namespace unicron {

struct DetectionThresholds {
  double heartbeat_period_s = 1.0;
  double heartbeat_timeout_s = 5.0;
  double degraded_factor = 1.1;  // elapsed > 1.1x mean -> degraded
  double failed_factor = 3.0;    // elapsed > 3x mean -> failed
  int window = 16;               // rolling iteration window
};

class HeartbeatRegistry {
 public:
  explicit HeartbeatRegistry(double timeout_s = 5.0) : timeout_s_(timeout_s) {}

  void register_node(const std::string& node_id, double now_s);
  void beat(const std::string& node_id, double now_s);
  bool known(const std::string& node_id) const { return last_.count(node_id) > 0; }
  double timeout_s() const { return timeout_s_; }

  // sev1 "Lost connection" iff now - last_heartbeat > timeout.
  // Throws std::out_of_range for an unregistered node (registry misuse).
  std::optional<ErrorEvent> check(const std::string& node_id, double now_s) const;

 private:
  double timeout_s_;
  std::map<std::string, double> last_;
};

std::optional<ErrorEvent> check_heartbeat(const HeartbeatRegistry& reg,
                                          const std::string& node_id, double now_s);

enum class ProcessObservation { running, exited_normally, exited_abnormally };

// sev2 "Exited abnormally" on unexpected termination, none otherwise
std::optional<ErrorEvent> supervise_process(const std::string& worker_id,
                                            ProcessObservation obs, double now_s);

// Table 1 severity for an exception label; unknown labels are recorded as
// "Other software errors" (sev2)
Severity classify_exception(const std::string& status_kind);

// per-task rolling iteration statistics
class IterationStats {
 public:
  explicit IterationStats(int window = 16) : window_(window) {}

  void observe(const std::string& task_id, double duration_s, double completed_at_s);
  // configuration changed; per-configuration statistics start fresh
  void reset(const std::string& task_id);

  int count(const std::string& task_id) const;
  double mean(const std::string& task_id) const;  // over the last `window` entries
  double last_completion(const std::string& task_id) const;
  int window() const { return window_; }

 private:
  struct Entry {
    std::deque<double> durations;
    double sum = 0.0;
    double last_completion_s = 0.0;
  };
  int window_;
  std::map<std::string, Entry> entries_;
};

IterationStats observe_iteration(IterationStats stats, const std::string& task_id,
                                 double duration_s, double completed_at_s);

enum class StatStatus { normal, degraded, failed };

struct StatCheckResult {
  StatStatus status = StatStatus::normal;
  std::optional<ErrorEvent> event;  // set when status == failed
};

// elapsed > failed_factor * mean -> failed ("Task hang" sev2, or
// "NCCL timeout" sev3 first when a network condition is pending);
// elapsed > degraded_factor * mean -> degraded (advisory only).
// Throws std::logic_error if no iteration has completed yet.
StatCheckResult statistical_check(const IterationStats& stats, const std::string& task_id,
                                  double now_s, const DetectionThresholds& thresholds,
                                  bool network_condition_pending = false);

}  // namespace unicron
