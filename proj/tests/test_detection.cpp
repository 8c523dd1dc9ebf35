#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "unicron/detection.hpp"
#include "unicron/rng.hpp"

using namespace unicron;

TEST_CASE("heartbeat stays quiet within the timeout") {
  HeartbeatRegistry reg(5.0);
  reg.register_node("n1", 100.0);
  CHECK(!check_heartbeat(reg, "n1", 104.0).has_value());
}

TEST_CASE("heartbeat loss is a sev1 lost connection") {
  HeartbeatRegistry reg(5.0);
  reg.register_node("n1", 100.0);
  auto ev = check_heartbeat(reg, "n1", 106.0);
  REQUIRE(ev.has_value());
  CHECK(ev->severity == Severity::sev1);
  CHECK(ev->status_kind == "Lost connection");
  CHECK(ev->source == DetectionSource::node_health);
  CHECK(ev->subject == "n1");
}

TEST_CASE("heartbeat check on an unknown node is a registry misuse") {
  HeartbeatRegistry reg(5.0);
  CHECK_THROWS_AS(check_heartbeat(reg, "ghost", 1.0), std::out_of_range);
}

// 1 s beats, 5 s timeout, 1 s check cadence: a failure at a random phase is
// detected ~5.6 s after it happens
TEST_CASE("end-to-end heartbeat detection latency is about 5.6 s") {
  CounterRng rng(2024, 17);
  double total = 0.0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    HeartbeatRegistry reg(5.0);
    reg.register_node("n", 0.0);
    const double fail_at = 100.0 + rng.next_unit();  // somewhere between two beats
    double last_beat = 0.0;
    for (double t = 1.0; t <= fail_at; t += 1.0) {
      reg.beat("n", t);
      last_beat = t;
    }
    double detect_at = last_beat;
    for (double t = std::ceil(fail_at);; t += 1.0) {
      if (check_heartbeat(reg, "n", t).has_value()) {
        detect_at = t;
        break;
      }
    }
    total += detect_at - fail_at;
  }
  CHECK(total / trials == doctest::Approx(5.5).epsilon(0.05));
}

TEST_CASE("process supervision") {
  CHECK(!supervise_process("w1", ProcessObservation::running, 10.0).has_value());
  CHECK(!supervise_process("w1", ProcessObservation::exited_normally, 10.0).has_value());
  auto ev = supervise_process("w1", ProcessObservation::exited_abnormally, 10.0);
  REQUIRE(ev.has_value());
  CHECK(ev->severity == Severity::sev2);
  CHECK(ev->status_kind == "Exited abnormally");
}

TEST_CASE("exception classification") {
  CHECK(classify_exception("ECC errors") == Severity::sev1);
  CHECK(classify_exception("CUDA errors") == Severity::sev2);
  CHECK(classify_exception("Connection refused/reset") == Severity::sev3);
  // unknown labels fall back to the conservative software-error default
  CHECK(classify_exception("SomethingNew") == Severity::sev2);
}

TEST_CASE("observe_iteration maintains the rolling mean") {
  IterationStats stats(16);
  stats = observe_iteration(stats, "t", 10.0, 10.0);
  CHECK(stats.mean("t") == 10.0);

  for (int i = 0; i < 3; ++i) stats = observe_iteration(stats, "t", 10.0, 20.0 + i);
  CHECK(stats.mean("t") == 10.0);

  SUBCASE("mixed values match a direct recomputation over the window") {
    IterationStats s(4);
    const double durations[] = {3.0, 9.0, 6.0, 12.0, 30.0, 0.5};
    double t = 0.0;
    for (double d : durations) {
      t += d;
      s.observe("t", d, t);
    }
    // window of 4 keeps the last four entries
    const double expect = (6.0 + 12.0 + 30.0 + 0.5) / 4.0;
    CHECK(s.mean("t") == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.count("t") == 4);
  }

  SUBCASE("nonpositive durations are rejected") {
    IterationStats s(4);
    CHECK_THROWS_AS(s.observe("t", 0.0, 1.0), std::invalid_argument);
  }

  SUBCASE("reset clears per-configuration statistics") {
    IterationStats s(4);
    s.observe("t", 10.0, 10.0);
    s.reset("t");
    CHECK(s.count("t") == 0);
    CHECK_THROWS_AS(s.mean("t"), std::logic_error);
  }
}

TEST_CASE("statistical_check classifies against the 1.1x and 3x thresholds") {
  DetectionThresholds th;
  IterationStats stats(16);
  stats.observe("t", 60.0, 1000.0);  // mean 60, last completion at t=1000

  CHECK(statistical_check(stats, "t", 1050.0, th).status == StatStatus::normal);
  // 1.1 * 60 = 66: elapsed 66 is still normal, strictly greater degrades
  CHECK(statistical_check(stats, "t", 1066.0, th).status == StatStatus::normal);
  CHECK(statistical_check(stats, "t", 1066.0001, th).status == StatStatus::degraded);
  CHECK(statistical_check(stats, "t", 1070.0, th).status == StatStatus::degraded);
  // 3 * 60 = 180: elapsed 180 is degraded, strictly greater fails
  CHECK(statistical_check(stats, "t", 1180.0, th).status == StatStatus::degraded);
  const auto failed = statistical_check(stats, "t", 1181.0, th);
  CHECK(failed.status == StatStatus::failed);
  REQUIRE(failed.event.has_value());
  CHECK(failed.event->status_kind == "Task hang");
  CHECK(failed.event->severity == Severity::sev2);
}

TEST_CASE("statistical_check reports NCCL timeout first under a network condition") {
  DetectionThresholds th;
  IterationStats stats(16);
  stats.observe("t", 60.0, 0.0);
  const auto failed = statistical_check(stats, "t", 181.0, th, /*network=*/true);
  REQUIRE(failed.event.has_value());
  CHECK(failed.event->status_kind == "NCCL timeout");
  CHECK(failed.event->severity == Severity::sev3);
}

TEST_CASE("statistical_check before any iteration is an error") {
  DetectionThresholds th;
  IterationStats stats(16);
  CHECK_THROWS_AS(statistical_check(stats, "t", 1.0, th), std::logic_error);
}

TEST_CASE("classification escalates monotonically with elapsed time") {
  DetectionThresholds th;
  IterationStats stats(16);
  CounterRng rng(5150, 3);
  for (int i = 0; i < 12; ++i) stats.observe("t", rng.uniform(20.0, 90.0), 100.0 * i);

  int level = 0;  // 0 normal, 1 degraded, 2 failed
  const double last = stats.last_completion("t");
  for (double dt = 0.0; dt < 400.0; dt += 0.5) {
    const auto s = statistical_check(stats, "t", last + dt, th);
    const int now = s.status == StatStatus::normal ? 0 : s.status == StatStatus::degraded ? 1 : 2;
    CHECK(now >= level);
    level = now;
  }
}

// bounded jitter never produces a false 'failed' when checks happen at
// completion times
TEST_CASE("no false positives under 10% jitter") {
  DetectionThresholds th;
  CounterRng rng(99, 123);
  for (int stream = 0; stream < 500; ++stream) {
    IterationStats stats(16);
    const double m = rng.uniform(10.0, 120.0);
    double t = 0.0;
    for (int i = 0; i < 40; ++i) {
      const double d = m * rng.uniform(0.9, 1.1);
      t += d;
      stats.observe("s", d, t);
      if (i >= 1) {
        const double next = m * rng.uniform(0.9, 1.1);
        CHECK(statistical_check(stats, "s", t + next, th).status != StatStatus::failed);
      }
    }
  }
}
