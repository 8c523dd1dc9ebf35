#include "unicron/recovery.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace unicron {

const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::reattempt_in_place: return "reattempt_in_place";
    case ActionKind::restart_process: return "restart_process";
    case ActionKind::reconfigure_cluster: return "reconfigure_cluster";
  }
  return "unknown";
}

const char* trigger_kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::node_join: return "node_join";
    case TriggerKind::task_finished: return "task_finished";
    case TriggerKind::task_launched: return "task_launched";
  }
  return "unknown";
}

RecoveryAction decide(const ErrorEvent& event) {
  RecoveryAction a;
  a.subject = event.subject;
  switch (event.severity) {
    case Severity::sev3: a.kind = ActionKind::reattempt_in_place; break;
    case Severity::sev2: a.kind = ActionKind::restart_process; break;
    case Severity::sev1: a.kind = ActionKind::reconfigure_cluster; break;
  }
  return a;
}

namespace {

ErrorEvent escalate(const ErrorEvent& original, Severity to) {
  ErrorEvent e = original;
  e.severity = to;
  e.escalated = true;
  return e;
}

}  // namespace

ApplyResult apply(const RecoveryAction& action, const ClusterState& state, bool attempt_succeeded,
                  const ErrorEvent& event) {
  ApplyResult res;
  res.state = state;
  res.record.original = event;
  res.record.attempted = action;
  res.record.succeeded = attempt_succeeded;

  switch (action.kind) {
    case ActionKind::reattempt_in_place:
      if (!attempt_succeeded) {
        res.escalated = escalate(event, Severity::sev2);
        res.record.escalated_to = Severity::sev2;
      }
      break;
    case ActionKind::restart_process:
      if (!attempt_succeeded) {
        res.escalated = escalate(event, Severity::sev1);
        res.record.escalated_to = Severity::sev1;
      }
      break;
    case ActionKind::reconfigure_cluster: {
      if (!attempt_succeeded)
        throw std::runtime_error("reconfiguration failed for " + action.subject +
                                 "; no further escalation exists");
      // isolate the failed node and all of its workers
      for (auto& node : res.state.nodes) {
        if (node.node_id != action.subject) continue;
        node.health = Health::drained;
        for (auto& w : res.state.workers) {
          if (std::find(node.worker_ids.begin(), node.worker_ids.end(), w.worker_id) !=
              node.worker_ids.end())
            w.health = Health::lost;
        }
      }
      res.reconfiguration_requested = true;
      break;
    }
  }
  return res;
}

ReconfigurationRequest on_trigger(TriggerKind kind, const std::string& subject,
                                  const ClusterState& state,
                                  const std::vector<TaskSpec>& registered_tasks) {
  ReconfigurationRequest req;
  req.trigger = kind;
  req.subject = subject;

  auto task_registered = [&](const std::string& id) {
    return std::any_of(registered_tasks.begin(), registered_tasks.end(),
                       [&](const TaskSpec& t) { return t.task_id == id; });
  };

  switch (kind) {
    case TriggerKind::node_join: {
      const Node* n = state.find_node(subject);
      if (n == nullptr) {
        req.reject_reason = "unknown node " + subject;
        return req;
      }
      if (n->health != Health::healthy) {
        req.reject_reason = "joining node " + subject + " is not healthy";
        return req;
      }
      break;
    }
    case TriggerKind::task_finished:
      if (state.assignment.count(subject) == 0) {
        req.reject_reason = "finishing task " + subject + " is not scheduled";
        return req;
      }
      break;
    case TriggerKind::task_launched:
      if (!task_registered(subject)) {
        req.reject_reason = "launched task " + subject + " is not registered";
        return req;
      }
      break;
  }
  req.accepted = true;
  return req;
}

std::string audit_line(double t, const ErrorEvent& event, const RecoveryAction& action,
                       const std::string& outcome) {
  nlohmann::json j;
  j["t"] = t;
  j["event"] = {{"source", detection_source_name(event.source)},
                {"status", event.status_kind},
                {"subject", event.subject},
                {"severity", severity_name(event.severity)}};
  j["action"] = action_kind_name(action.kind);
  j["outcome"] = outcome;
  return j.dump();
}

}  // namespace unicron
