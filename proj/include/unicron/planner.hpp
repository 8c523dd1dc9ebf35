#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "unicron/domain.hpp"

// Reconfiguration plan generation: the weighted-achieved-FLOP/s reward
// model, the O(m n^2) dynamic program over worker assignments, an
// exhaustive oracle for small instances, lookup-table precomputation for
// anticipated single events, and a synthetic calibration model used when
// no measured throughput tables are supplied.

namespace unicron {

struct RewardInputs {
  std::vector<TaskSpec> tasks;
  std::map<std::string, int> current_workers;  // x_i, zero when absent
  std::set<std::string> faulted_tasks;         // tasks with a faulted worker
  int healthy_workers = 0;                     // n'
  CostParams cost;
  const Calibration* calibration = nullptr;
  int micro_batches_per_rank = 8;  // plan metadata only
};

// w(t) * T(t,x) when the minimum requirement is met, else 0
double waf(const TaskSpec& task, const ThroughputTable& table, int x);

// Expected healthy run duration for a pool of n workers under independent
// exponential per-worker lifetimes, capped at the evaluation horizon.
double expected_run_duration(int workers, const CostParams& cost);

// G(t, x -> x') = F(t,x')*D_running(n') - F(t,x)*1(t,x->x')*D_transition
double reward(const TaskSpec& task, const ThroughputTable& table, int x_old, int x_new,
              int healthy_workers, bool faulted, const CostParams& cost);

struct InstanceTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// DP solver; ties prefer keeping the current assignment, then fewer workers
Plan solve(const RewardInputs& inputs);

// Exhaustive enumeration of all assignments with sum <= n', same
// tie-breaking as solve. Refuses instances beyond m=6, n'=24.
Plan brute_force_solve(const RewardInputs& inputs);

// Precomputed plans for anticipated single events.
class LookupTable {
 public:
  static std::string fault_key(const std::string& node_id) { return "fault:node:" + node_id; }
  static std::string join_key(int nodes) { return "join:" + std::to_string(nodes); }
  static std::string finish_key(const std::string& task_id) { return "finish:" + task_id; }

  void put(const std::string& key, Plan plan) { plans_[key] = std::move(plan); }
  // pure map retrieval; nullopt on a miss (caller falls back to solve)
  std::optional<Plan> retrieve(const std::string& key) const {
    auto it = plans_.find(key);
    if (it == plans_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return plans_.size(); }
  const std::map<std::string, Plan>& entries() const { return plans_; }

 private:
  std::map<std::string, Plan> plans_;
};

// Solves every single-node-fault perturbation, a single-node join, and
// every single-task finish ahead of time.
LookupTable precompute_lookup(const RewardInputs& inputs, const ClusterState& cluster,
                              int workers_per_node);

// Synthetic throughput model standing in for on-cluster calibration.
struct SynthModelParams {
  double peak_flops_per_worker = 312e12;
  double base_efficiency = 0.55;  // achievable fraction of peak at best layout
  double dp_cost = 0.025;         // gradient all-reduce drag per extra DP rank
  double pp_cost = 0.25;          // pipeline bubble drag per extra stage
  double tp_cost = 0.08;          // tensor-parallel comm drag per extra way
  double capacity_params_per_worker = 2.0e9;  // memory rule: size/(pp*tp) <= capacity
  int max_tp = 8;                 // tensor parallel confined to one node
  int max_pp = 64;
};

// Best (dp,pp,tp) for the task at worker count x under the memory rule,
// or nullopt when no factorization fits.
std::optional<ParallelLayout> best_layout(const TaskSpec& task, int x,
                                          const SynthModelParams& params);

// T(t,x) for x in 1..max_x; infeasible or below-minimum x stay at 0.
// Throws std::invalid_argument when even min_workers has no feasible layout.
ThroughputTable synthesize_table(const TaskSpec& task, int max_x, const SynthModelParams& params);

// tables for every task that has none supplied
Calibration ensure_calibration(const std::vector<TaskSpec>& tasks, Calibration calibration,
                               int max_x, const SynthModelParams& params);

}  // namespace unicron
