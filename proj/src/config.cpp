#include "unicron/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "unicron/rng.hpp"

namespace unicron {

std::string content_digest(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a(bytes));
  return buf;
}

namespace {

using nlohmann::json;

TaskSpec parse_task(const json& j) {
  TaskSpec t;
  if (!j.contains("id")) throw ConfigError("task entry missing 'id'");
  t.task_id = j.at("id").get<std::string>();
  t.model_size = j.value("model_size", 0.0);
  t.weight = j.value("weight", 1.0);
  t.min_workers = j.value("min_workers", 1);
  t.d_iter_s = j.value("d_iter", 60.0);
  if (t.weight <= 0) throw ConfigError("task " + t.task_id + ": weight must be > 0");
  if (t.min_workers < 1) throw ConfigError("task " + t.task_id + ": min_workers must be >= 1");
  if (t.model_size <= 0) throw ConfigError("task " + t.task_id + ": model_size must be > 0");
  if (t.d_iter_s <= 0) throw ConfigError("task " + t.task_id + ": d_iter must be > 0");
  return t;
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::string& source_path) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source_path + ": " + e.what());
  }

  RunConfig cfg;
  cfg.source_path = source_path;
  cfg.digest = content_digest(json_text);

  if (j.contains("nodes")) {
    if (j["nodes"].is_number_integer()) cfg.sim.nodes = j["nodes"].get<int>();
    else throw ConfigError(source_path + ": 'nodes' must be an integer count");
  }
  cfg.sim.workers_per_node = j.value("workers_per_node", 8);
  if (cfg.sim.nodes < 1 || cfg.sim.workers_per_node < 1)
    throw ConfigError(source_path + ": cluster must have at least one node and worker");

  if (!j.contains("tasks") || !j["tasks"].is_array() || j["tasks"].empty())
    throw ConfigError(source_path + ": 'tasks' must be a non-empty array");
  for (const auto& tj : j["tasks"]) cfg.sim.tasks.push_back(parse_task(tj));

  if (j.contains("cost_params")) {
    const auto& c = j["cost_params"];
    cfg.sim.cost.lambda_worker = c.value("lambda_worker", cfg.sim.cost.lambda_worker);
    cfg.sim.cost.d_transition_s = c.value("d_transition", cfg.sim.cost.d_transition_s);
    cfg.sim.cost.checkpoint_interval_s =
        c.value("checkpoint_interval", cfg.sim.cost.checkpoint_interval_s);
    cfg.sim.cost.d_iter_s = c.value("d_iter", cfg.sim.cost.d_iter_s);
    cfg.sim.cost.horizon_s = c.value("horizon", cfg.sim.cost.horizon_s);
  }
  for (const auto& v : validate_cost_params(cfg.sim.cost))
    throw ConfigError(source_path + ": cost_params: " + v);

  if (j.contains("detection")) {
    const auto& d = j["detection"];
    cfg.sim.detection.heartbeat_period_s =
        d.value("heartbeat_period_s", cfg.sim.detection.heartbeat_period_s);
    cfg.sim.detection.heartbeat_timeout_s =
        d.value("heartbeat_timeout_s", cfg.sim.detection.heartbeat_timeout_s);
    cfg.sim.detection.degraded_factor = d.value("degraded_factor", 1.1);
    cfg.sim.detection.failed_factor = d.value("failed_factor", 3.0);
    cfg.sim.detection.window = d.value("window", 16);
    if (cfg.sim.detection.heartbeat_timeout_s <= cfg.sim.detection.heartbeat_period_s)
      throw ConfigError(source_path + ": heartbeat timeout must exceed the heartbeat period");
  }

  if (j.contains("migration")) {
    const auto& m = j["migration"];
    cfg.sim.migration.replica_copy_s = m.value("replica_copy_s", 10.0);
    cfg.sim.migration.in_memory_load_s = m.value("in_memory_load_s", 30.0);
    cfg.sim.migration.remote_load_s = m.value("remote_load_s", 300.0);
  }

  if (j.contains("synth")) {
    const auto& s = j["synth"];
    cfg.sim.synth.peak_flops_per_worker =
        s.value("peak_flops_per_worker", cfg.sim.synth.peak_flops_per_worker);
    cfg.sim.synth.base_efficiency = s.value("base_efficiency", cfg.sim.synth.base_efficiency);
    cfg.sim.synth.dp_cost = s.value("dp_cost", cfg.sim.synth.dp_cost);
    cfg.sim.synth.pp_cost = s.value("pp_cost", cfg.sim.synth.pp_cost);
    cfg.sim.synth.tp_cost = s.value("tp_cost", cfg.sim.synth.tp_cost);
    cfg.sim.synth.capacity_params_per_worker =
        s.value("capacity_params_per_worker", cfg.sim.synth.capacity_params_per_worker);
    cfg.sim.synth.max_tp = s.value("max_tp", cfg.sim.synth.max_tp);
    cfg.sim.synth.max_pp = s.value("max_pp", cfg.sim.synth.max_pp);
  }

  if (j.contains("policy")) {
    const auto& p = j["policy"];
    cfg.policy.timeout_detect_s = p.value("timeout_detect_s", cfg.policy.timeout_detect_s);
    cfg.policy.node_loss_detect_s = p.value("node_loss_detect_s", cfg.policy.node_loss_detect_s);
    cfg.policy.restart_overhead_s = p.value("restart_overhead_s", cfg.policy.restart_overhead_s);
    cfg.policy.hot_spare = p.value("hot_spare", false);
  }

  if (j.contains("simulation")) {
    const auto& s = j["simulation"];
    cfg.sim.reattempt_backoff_s = s.value("reattempt_backoff_s", cfg.sim.reattempt_backoff_s);
    cfg.sim.escalation_fraction = s.value("escalation_fraction", cfg.sim.escalation_fraction);
    cfg.sim.tick_s = s.value("tick_s", cfg.sim.tick_s);
    cfg.sim.micro_batches_per_rank =
        s.value("micro_batches_per_rank", cfg.sim.micro_batches_per_rank);
    cfg.sim.detect_node_loss_s = s.value("detect_node_loss_s", cfg.sim.detect_node_loss_s);
    cfg.sim.detect_process_exit_s =
        s.value("detect_process_exit_s", cfg.sim.detect_process_exit_s);
    cfg.sim.detect_exception_s = s.value("detect_exception_s", cfg.sim.detect_exception_s);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config(read_file(path), path);
}

Calibration parse_calibration_csv(const std::string& text) {
  Calibration calib;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::map<std::string, int> min_seen;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("task_id,", 0) != 0)
        throw ConfigError("calibration line 1: expected header task_id,x,flops,dp,pp,tp");
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string task_id, field;
    int x = 0, dp = 0, pp = 0, tp = 0;
    double flops = 0.0;
    try {
      std::getline(row, task_id, ',');
      std::getline(row, field, ',');
      x = std::stoi(field);
      std::getline(row, field, ',');
      flops = std::stod(field);
      std::getline(row, field, ',');
      dp = std::stoi(field);
      std::getline(row, field, ',');
      pp = std::stoi(field);
      std::getline(row, field, ',');
      tp = std::stoi(field);
    } catch (const std::exception&) {
      throw ConfigError("calibration line " + std::to_string(lineno) + ": malformed row");
    }
    if (task_id.empty())
      throw ConfigError("calibration line " + std::to_string(lineno) + ": empty task_id");
    if (flops < 0)
      throw ConfigError("calibration line " + std::to_string(lineno) + ": negative flops");
    if (x < 1 || dp * pp * tp != x)
      throw ConfigError("calibration line " + std::to_string(lineno) +
                        ": dp*pp*tp must equal x");
    auto [it, fresh] = calib.try_emplace(task_id, ThroughputTable(1));
    if (it->second.entries().count(x))
      throw ConfigError("calibration line " + std::to_string(lineno) + ": duplicate point " +
                        task_id + "/x=" + std::to_string(x));
    it->second.set(x, flops, ParallelLayout{dp, pp, tp});
  }
  if (!header_seen) throw ConfigError("calibration file is empty");
  return calib;
}

std::string calibration_to_csv(const Calibration& calibration) {
  std::ostringstream out;
  out << "task_id,x,flops,dp,pp,tp\n";
  char buf[64];
  for (const auto& [task, table] : calibration) {
    for (const auto& [x, e] : table.entries()) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.flops);
      out << task << ',' << x << ',' << buf << ',' << e.layout.dp << ',' << e.layout.pp << ','
          << e.layout.tp << "\n";
    }
  }
  return out.str();
}

Calibration load_calibration_csv(const std::string& path) {
  return parse_calibration_csv(read_file(path));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out << contents;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace unicron
