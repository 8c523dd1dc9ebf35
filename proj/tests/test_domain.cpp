#include "doctest.h"
#include "unicron/config.hpp"
#include "unicron/domain.hpp"

using namespace unicron;

namespace {

ClusterState two_task_cluster(int w_a, int w_b, int healthy) {
  ClusterState s;
  Node n;
  n.node_id = "n0";
  for (int i = 0; i < healthy; ++i) {
    const std::string id = "w" + std::to_string(i);
    n.worker_ids.push_back(id);
    s.workers.push_back(Worker{id, Health::healthy, std::nullopt});
  }
  s.nodes.push_back(n);
  TaskAssignment a, b;
  for (int i = 0; i < w_a; ++i) a.worker_ids.insert("w" + std::to_string(i));
  for (int i = 0; i < w_b; ++i) b.worker_ids.insert("w" + std::to_string(w_a + i));
  a.worker_count = w_a;
  b.worker_count = w_b;
  s.assignment["a"] = a;
  s.assignment["b"] = b;
  return s;
}

}  // namespace

TEST_CASE("validate_cluster accepts a feasible assignment") {
  CHECK(validate_cluster(two_task_cluster(3, 3, 8)).empty());
}

TEST_CASE("validate_cluster flags a capacity violation") {
  const auto v = validate_cluster(two_task_cluster(5, 5, 8));
  REQUIRE(!v.empty());
  bool capacity = false;
  for (const auto& msg : v) capacity = capacity || msg.find("capacity") != std::string::npos;
  CHECK(capacity);
}

TEST_CASE("validate_cluster flags double assignment") {
  auto s = two_task_cluster(3, 3, 8);
  s.assignment["b"].worker_ids.insert("w0");  // w0 already belongs to task a
  s.assignment["b"].worker_count = 4;
  const auto v = validate_cluster(s);
  bool dup = false;
  for (const auto& msg : v) dup = dup || msg.find("assigned to both") != std::string::npos;
  CHECK(dup);
}

TEST_CASE("table_lookup basics") {
  ThroughputTable t(4);
  t.set(4, 100.0, {1, 1, 4});
  t.set(48, 900.0, {12, 1, 4});
  t.set(56, 850.0, {14, 1, 4});  // measured dip past 48

  CHECK(t.lookup(0) == 0.0);
  CHECK(t.lookup(3) == 0.0);  // below minimum requirement
  CHECK(t.lookup(5) == 0.0);  // uncalibrated
  CHECK(t.lookup(4) == 100.0);
  CHECK(t.lookup(56) < t.lookup(48));  // dips are preserved, never smoothed
}

TEST_CASE("calibration round-trips through CSV exactly") {
  Calibration calib;
  ThroughputTable t(2);
  t.set(2, 123.456789012345e12, {2, 1, 1});
  t.set(8, 7.0e14, {2, 2, 2});
  calib.emplace("gpt-7b", std::move(t));

  const std::string csv = calibration_to_csv(calib);
  Calibration loaded = parse_calibration_csv(csv);
  REQUIRE(loaded.count("gpt-7b"));
  for (const auto& [x, e] : calib.at("gpt-7b").entries()) {
    CHECK(loaded.at("gpt-7b").entries().at(x).flops == e.flops);
    CHECK(loaded.at("gpt-7b").entries().at(x).layout == e.layout);
  }
}

TEST_CASE("calibration CSV rejects inconsistent rows") {
  CHECK_THROWS_AS(parse_calibration_csv("task_id,x,flops,dp,pp,tp\nt1,8,1e12,2,2,1\n"),
                  ConfigError);  // dp*pp*tp != x
  CHECK_THROWS_AS(parse_calibration_csv("task_id,x,flops,dp,pp,tp\nt1,8,-1,2,2,2\n"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_calibration_csv("task_id,x,flops,dp,pp,tp\nt1,8,1e12,2,2,2\nt1,8,2e12,2,2,2\n"),
      ConfigError);  // duplicate point
}

TEST_CASE("bind_min_workers zeroes lookups below the task minimum") {
  Calibration calib;
  ThroughputTable t(1);
  t.set(2, 5.0e13, {2, 1, 1});
  t.set(8, 9.0e13, {4, 2, 1});
  calib.emplace("big", std::move(t));

  TaskSpec spec;
  spec.task_id = "big";
  spec.min_workers = 4;
  Calibration bound = bind_min_workers(calib, {spec});
  CHECK(bound.at("big").lookup(2) == 0.0);
  CHECK(bound.at("big").lookup(8) == 9.0e13);
}

TEST_CASE("severity table is total over the known statuses") {
  using DS = DetectionSource;
  CHECK(severity_of_status("Lost connection", DS::node_health) == Severity::sev1);
  CHECK(severity_of_status("Exited abnormally", DS::process_supervision) == Severity::sev2);
  CHECK(severity_of_status("Connection refused/reset", DS::exception_propagation) ==
        Severity::sev3);
  CHECK(severity_of_status("Illegal memory access", DS::exception_propagation) ==
        Severity::sev2);
  CHECK(severity_of_status("ECC errors", DS::exception_propagation) == Severity::sev1);
  CHECK(severity_of_status("Invalid DMA mapping", DS::exception_propagation) == Severity::sev1);
  CHECK(severity_of_status("CUDA errors", DS::exception_propagation) == Severity::sev2);
  CHECK(severity_of_status("NVLink errors", DS::exception_propagation) == Severity::sev1);
  CHECK(severity_of_status("GPU driver errors", DS::exception_propagation) == Severity::sev1);
  CHECK(severity_of_status("Other network errors", DS::exception_propagation) ==
        Severity::sev3);
  CHECK(severity_of_status("Other software errors", DS::exception_propagation) ==
        Severity::sev2);
  CHECK(severity_of_status("NCCL timeout", DS::statistical_monitoring) == Severity::sev3);
  CHECK(severity_of_status("Link flapping", DS::statistical_monitoring) == Severity::sev3);
  CHECK(severity_of_status("Task hang", DS::statistical_monitoring) == Severity::sev2);
  CHECK(severity_of_status("Other software errors", DS::statistical_monitoring) ==
        Severity::sev2);
}

TEST_CASE("severity ordering") {
  CHECK(more_severe(Severity::sev1, Severity::sev2));
  CHECK(more_severe(Severity::sev2, Severity::sev3));
  CHECK(!more_severe(Severity::sev3, Severity::sev1));
}

TEST_CASE("cost params validation") {
  CostParams p;
  CHECK(validate_cost_params(p).empty());
  p.checkpoint_interval_s = p.d_iter_s / 2;
  CHECK(!validate_cost_params(p).empty());
}
