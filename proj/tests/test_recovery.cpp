#include <stdexcept>

#include "doctest.h"
#include "json.hpp"
#include "unicron/recovery.hpp"

using namespace unicron;

namespace {

ErrorEvent make_event(Severity sev, const std::string& status, const std::string& subject,
                      DetectionSource src = DetectionSource::exception_propagation) {
  ErrorEvent e;
  e.time_s = 42.0;
  e.source = src;
  e.status_kind = status;
  e.subject = subject;
  e.severity = sev;
  return e;
}

ClusterState small_cluster() {
  ClusterState s;
  for (int n = 0; n < 2; ++n) {
    Node node;
    node.node_id = "n" + std::to_string(n);
    for (int w = 0; w < 4; ++w) {
      const std::string wid = node.node_id + ".w" + std::to_string(w);
      node.worker_ids.push_back(wid);
      s.workers.push_back(Worker{wid, Health::healthy, std::nullopt});
    }
    s.nodes.push_back(node);
  }
  TaskAssignment a;
  a.worker_ids = {"n0.w0", "n0.w1", "n1.w0", "n1.w1"};
  a.worker_count = 4;
  s.assignment["job"] = a;
  return s;
}

}  // namespace

TEST_CASE("decide maps severity to the three actions") {
  CHECK(decide(make_event(Severity::sev3, "Connection refused/reset", "w1")).kind ==
        ActionKind::reattempt_in_place);
  CHECK(decide(make_event(Severity::sev2, "CUDA errors", "w1")).kind ==
        ActionKind::restart_process);
  CHECK(decide(make_event(Severity::sev1, "ECC errors", "n1")).kind ==
        ActionKind::reconfigure_cluster);
}

// decide depends on severity alone: every Table-1 status maps through its
// severity to the same action
TEST_CASE("decide is a pure function of severity across all statuses") {
  struct Row {
    const char* status;
    DetectionSource src;
  };
  const Row rows[] = {
      {"Lost connection", DetectionSource::node_health},
      {"Exited abnormally", DetectionSource::process_supervision},
      {"Connection refused/reset", DetectionSource::exception_propagation},
      {"Illegal memory access", DetectionSource::exception_propagation},
      {"ECC errors", DetectionSource::exception_propagation},
      {"Invalid DMA mapping", DetectionSource::exception_propagation},
      {"CUDA errors", DetectionSource::exception_propagation},
      {"NVLink errors", DetectionSource::exception_propagation},
      {"GPU driver errors", DetectionSource::exception_propagation},
      {"Other network errors", DetectionSource::exception_propagation},
      {"Other software errors", DetectionSource::exception_propagation},
      {"NCCL timeout", DetectionSource::statistical_monitoring},
      {"Link flapping", DetectionSource::statistical_monitoring},
      {"Task hang", DetectionSource::statistical_monitoring},
  };
  for (const auto& row : rows) {
    const Severity sev = severity_of_status(row.status, row.src);
    const auto action = decide(make_event(sev, row.status, "subject", row.src));
    switch (sev) {
      case Severity::sev1: CHECK(action.kind == ActionKind::reconfigure_cluster); break;
      case Severity::sev2: CHECK(action.kind == ActionKind::restart_process); break;
      case Severity::sev3: CHECK(action.kind == ActionKind::reattempt_in_place); break;
    }
  }
}

TEST_CASE("successful reattempt leaves the assignment untouched") {
  const auto state = small_cluster();
  const auto ev = make_event(Severity::sev3, "Link flapping", "n0.w0",
                             DetectionSource::statistical_monitoring);
  const auto res = apply(decide(ev), state, true, ev);
  CHECK(!res.escalated.has_value());
  CHECK(!res.reconfiguration_requested);
  CHECK(res.state.assignment.at("job").worker_ids == state.assignment.at("job").worker_ids);
}

TEST_CASE("failed reattempt escalates to sev2") {
  const auto ev = make_event(Severity::sev3, "NCCL timeout", "n0.w0",
                             DetectionSource::statistical_monitoring);
  const auto res = apply(decide(ev), small_cluster(), false, ev);
  REQUIRE(res.escalated.has_value());
  CHECK(res.escalated->severity == Severity::sev2);
  CHECK(res.escalated->escalated);
}

TEST_CASE("failed restart escalates to sev1") {
  const auto ev = make_event(Severity::sev2, "CUDA errors", "n0.w0");
  const auto res = apply(decide(ev), small_cluster(), false, ev);
  REQUIRE(res.escalated.has_value());
  CHECK(res.escalated->severity == Severity::sev1);
}

TEST_CASE("successful restart preserves the configuration") {
  const auto state = small_cluster();
  const auto ev = make_event(Severity::sev2, "Illegal memory access", "n0.w1");
  const auto res = apply(decide(ev), state, true, ev);
  CHECK(!res.escalated.has_value());
  CHECK(res.state.assignment == state.assignment);
}

TEST_CASE("reconfigure drains the node and requests a plan") {
  const auto ev = make_event(Severity::sev1, "Lost connection", "n0",
                             DetectionSource::node_health);
  const auto res = apply(decide(ev), small_cluster(), true, ev);
  CHECK(res.reconfiguration_requested);
  CHECK(res.state.find_node("n0")->health == Health::drained);
  CHECK(res.state.find_worker("n0.w0")->health == Health::lost);
  CHECK(res.state.find_worker("n1.w0")->health == Health::healthy);
}

TEST_CASE("escalation terminates: reconfigure failure has nowhere to go") {
  const auto ev = make_event(Severity::sev1, "GPU driver errors", "n0");
  CHECK_THROWS_AS(apply(decide(ev), small_cluster(), false, ev), std::runtime_error);
}

// at most two escalations from any starting severity
TEST_CASE("escalation chain is bounded") {
  auto state = small_cluster();
  ErrorEvent ev = make_event(Severity::sev3, "NCCL timeout", "n0.w0",
                             DetectionSource::statistical_monitoring);
  int escalations = 0;
  while (true) {
    const auto res = apply(decide(ev), state, false, ev);
    if (ev.severity == Severity::sev1) break;  // apply would have thrown before this
    REQUIRE(res.escalated.has_value());
    ev = *res.escalated;
    ++escalations;
    if (ev.severity == Severity::sev1) break;
  }
  CHECK(escalations == 2);
}

TEST_CASE("triggers request regeneration over all tasks") {
  const auto state = small_cluster();
  const std::vector<TaskSpec> registered = {{"job", 1e9, 1.0, 1, 60.0},
                                            {"queued", 2e9, 1.0, 2, 60.0}};

  SUBCASE("healthy node join accepted") {
    const auto req = on_trigger(TriggerKind::node_join, "n1", state, registered);
    CHECK(req.accepted);
  }
  SUBCASE("unknown node rejected") {
    const auto req = on_trigger(TriggerKind::node_join, "n9", state, registered);
    CHECK(!req.accepted);
  }
  SUBCASE("finishing task must be scheduled") {
    CHECK(on_trigger(TriggerKind::task_finished, "job", state, registered).accepted);
    CHECK(!on_trigger(TriggerKind::task_finished, "queued", state, registered).accepted);
  }
  SUBCASE("launched task must be registered") {
    CHECK(on_trigger(TriggerKind::task_launched, "queued", state, registered).accepted);
    CHECK(!on_trigger(TriggerKind::task_launched, "mystery", state, registered).accepted);
  }
}

TEST_CASE("audit line is one JSON object with the expected schema") {
  const auto ev = make_event(Severity::sev2, "CUDA errors", "n0.w2");
  RecoveryAction action = decide(ev);
  const std::string line = audit_line(42.0, ev, action, "restarted");
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("t") == 42.0);
  CHECK(j.at("action") == "restart_process");
  CHECK(j.at("outcome") == "restarted");
  CHECK(j.at("event").at("status") == "CUDA errors");
  CHECK(j.at("event").at("severity") == "sev2");
}
