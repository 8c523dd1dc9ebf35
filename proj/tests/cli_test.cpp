// End-to-end checks of the command-line surface: subcommands, file formats
// and the exit-code contract (0 ok, 2 usage, 3 bad config, 4 mismatch).

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "unicron/config.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string run_capture(const std::string& cmd, const std::string& out_file) {
  const int rc = std::system((cmd + " >" + out_file + " 2>&1").c_str());
  (void)rc;
  return unicron::read_file(out_file);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_test <path-to-unicron>\n");
    return 1;
  }
  const std::string cli = argv[1];
  const fs::path dir = fs::temp_directory_path() / "unicron_cli_test";
  fs::create_directories(dir);
  const std::string capture = (dir / "capture.txt").string();

  const std::string config = (dir / "config.json").string();
  unicron::write_file_atomic(config, R"({
    "nodes": 3, "workers_per_node": 4,
    "tasks": [
      {"id": "small", "model_size": 1.3e9, "weight": 1.2, "min_workers": 1, "d_iter": 30.0},
      {"id": "large", "model_size": 7.0e9, "weight": 0.8, "min_workers": 4, "d_iter": 60.0}
    ],
    "cost_params": {"lambda_worker": 2e-8, "d_transition": 60.0,
                    "checkpoint_interval": 1800.0, "d_iter": 45.0, "horizon": 604800.0}
  })");

  expect(run(cli) == 2, "no subcommand is a usage error");
  expect(run(cli + " plan") == 2, "missing required flags is a usage error");
  expect(run(cli + " plan --config /nonexistent.json") == 3, "missing config exits 3");

  const std::string bad_config = (dir / "bad.json").string();
  unicron::write_file_atomic(bad_config, R"({"nodes": 3, "tasks": []})");
  expect(run(cli + " plan --config " + bad_config) == 3, "invalid config exits 3");

  expect(run(cli + " plan --config " + config) == 0, "plan succeeds");
  expect(run(cli + " plan --config " + config + " --oracle") == 0,
         "plan --oracle agrees on a small instance");
  expect(run(cli + " plan --config " + config + " --fault node:n1") == 0,
         "plan with a fault perturbation succeeds");
  expect(run(cli + " plan --config " + config + " --fault node:zzz") == 3,
         "unknown fault node exits 3");

  const std::string trace = (dir / "trace.jsonl").string();
  expect(run(cli + " trace-gen --preset trace-b --seed 3 --nodes 3 --workers-per-node 4 --out " +
             trace) == 0,
         "trace-gen trace-b succeeds");
  expect(run(cli + " trace-gen --preset nope --seed 3 --out " + trace + ".x") == 2,
         "unknown preset is a usage error");
  const std::string empty_trace = (dir / "empty.jsonl").string();
  expect(run(cli + " trace-gen --lambda 0 --horizon 1000 --nodes 3 --out " + empty_trace) == 0,
         "lambda 0 produces an empty trace");
  expect(unicron::read_file(empty_trace).find("horizon") != std::string::npos,
         "empty trace still has a header");

  const std::string csv = (dir / "metrics.csv").string();
  expect(run(cli + " simulate --config " + config + " --trace " + trace +
             " --policy unicron --seed 3 --out " + csv + " --summary " +
             (dir / "summary.json").string() + " --audit") == 0,
         "simulate unicron succeeds");
  expect(unicron::read_file(csv).rfind("# config_digest=", 0) == 0,
         "metrics CSV embeds provenance");
  expect(fs::exists(csv + ".audit.jsonl"), "audit log written next to the CSV");
  expect(run(cli + " simulate --config " + config + " --trace " + trace +
             " --policy bogus --seed 3 --out " + csv) == 2,
         "unknown policy is a usage error");

  expect(run(cli + " compare --config " + config + " --trace " + trace + " --seed 3 --out " +
             (dir / "cmp.json").string()) == 0,
         "compare across all policies succeeds");

  expect(run(cli + " verify-transition --dp 4 --pp 2 --microbatches 12 --fail-rank 2"
                   " --fail-after-mb 1 --seed 9") == 0,
         "scenario 1 verification is EQUAL");
  expect(run(cli + " verify-transition --dp 4 --pp 2 --microbatches 12 --fail-rank 2"
                   " --fail-after-reduced-segments 1 --seed 9") == 0,
         "scenario 2 verification is EQUAL");
  expect(run(cli + " verify-transition --dp 1 --pp 2 --fail-after-mb 1") == 0,
         "dp=1 prints the checkpoint fallback and exits 0");
  const std::string sweep_out =
      run_capture(cli + " verify-transition --sweep --seed 11", capture);
  expect(sweep_out.find("all EQUAL") != std::string::npos, "sweep reports all EQUAL");

  const std::string synth_csv = (dir / "synth.csv").string();
  expect(run(cli + " calibrate --config " + config + " --out " + synth_csv) == 0,
         "calibrate synthesizes a table");
  expect(run(cli + " calibrate --csv " + synth_csv) == 0, "calibrate validates its own output");
  expect(run(cli + " plan --config " + config + " --calibration " + synth_csv) == 0,
         "plan accepts the synthesized calibration");
  const std::string bad_csv = (dir / "bad.csv").string();
  unicron::write_file_atomic(bad_csv, "task_id,x,flops,dp,pp,tp\nsmall,8,1e12,2,2,1\n");
  expect(run(cli + " calibrate --csv " + bad_csv) == 3, "inconsistent calibration exits 3");

  // UNICRON_SEED fallback: same seed through the environment or the flag
  const std::string a = (dir / "ta.jsonl").string(), b = (dir / "tb.jsonl").string();
  run(cli + " trace-gen --preset trace-b --seed 123 --nodes 3 --workers-per-node 4 --out " + a);
  run("UNICRON_SEED=123 " + cli +
      " trace-gen --preset trace-b --nodes 3 --workers-per-node 4 --out " + b);
  expect(unicron::read_file(a) == unicron::read_file(b), "UNICRON_SEED matches --seed");

  if (g_failures > 0) {
    std::printf("%d cli check(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all cli checks passed\n");
  return 0;
}
