#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unicron/domain.hpp"

// The coordinator's error-handling state machine: classify by severity,
// act (reattempt in place / restart process / reconfigure cluster), and
// escalate one level on failure. Also the reconfiguration triggers for
// node join, task finish and task launch.

namespace unicron {

enum class ActionKind { reattempt_in_place, restart_process, reconfigure_cluster };
const char* action_kind_name(ActionKind k);

struct RecoveryAction {
  ActionKind kind = ActionKind::reattempt_in_place;
  std::string subject;                // node or worker id from the event
  std::optional<std::string> task_id; // task owning the subject, when known
};

struct EscalationRecord {
  ErrorEvent original;
  RecoveryAction attempted;
  bool succeeded = false;
  std::optional<Severity> escalated_to;
};

struct RecoveryPolicy {
  double reattempt_backoff_s = 1.0;  // single in-place retry after this pause
  int reattempt_limit = 1;
  int restart_limit = 1;
};

// severity -> action, a pure function (sev3 reattempt, sev2 restart,
// sev1 reconfigure)
RecoveryAction decide(const ErrorEvent& event);

struct ApplyResult {
  ClusterState state;
  std::optional<ErrorEvent> escalated;  // emitted when the attempt failed
  bool reconfiguration_requested = false;
  EscalationRecord record;
};

// Applies the action given the attempt outcome. Success leaves the
// assignment untouched (reattempt/restart keep the configuration);
// failure escalates one level. reconfigure_cluster drains the subject
// node and requests a new plan; a failed reconfigure is fatal.
ApplyResult apply(const RecoveryAction& action, const ClusterState& state, bool attempt_succeeded,
                  const ErrorEvent& event);

enum class TriggerKind { node_join, task_finished, task_launched };
const char* trigger_kind_name(TriggerKind k);

struct ReconfigurationRequest {
  TriggerKind trigger;
  std::string subject;
  bool accepted = false;
  std::string reject_reason;
};

// Every accepted trigger requests plan regeneration over all tasks; the
// subject must exist (joining node known, finishing task scheduled,
// launched task registered).
ReconfigurationRequest on_trigger(TriggerKind kind, const std::string& subject,
                                  const ClusterState& state,
                                  const std::vector<TaskSpec>& registered_tasks);

// one JSON line per handled event: {"t":,"event":,"action":,"outcome":}
std::string audit_line(double t, const ErrorEvent& event, const RecoveryAction& action,
                       const std::string& outcome);

}  // namespace unicron
