#pragma once

#include <string>
#include <vector>

#include "unicron/simulator.hpp"

// Configuration loading: the cluster/task JSON document and the calibration
// CSV (`task_id,x,flops,dp,pp,tp`). Every loaded config carries a content
// digest that downstream outputs embed for reproducibility.

namespace unicron {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  sim::SimConfig sim;
  sim::PolicyParams policy;  // baseline/recovery knobs from the config file
  std::string source_path;
  std::string digest;  // hex FNV-1a of the raw file contents
};

// digest of raw bytes, as embedded in outputs
std::string content_digest(const std::string& bytes);

RunConfig parse_config(const std::string& json_text, const std::string& source_path = "<inline>");
RunConfig load_config(const std::string& path);

// calibration CSV; rows with dp*pp*tp != x or negative flops are rejected
Calibration parse_calibration_csv(const std::string& text);
std::string calibration_to_csv(const Calibration& calibration);
Calibration load_calibration_csv(const std::string& path);

std::string read_file(const std::string& path);
// write-temp-then-rename so partially written outputs are never observed
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace unicron
