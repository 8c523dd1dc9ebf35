#include "unicron/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace unicron {

double waf(const TaskSpec& task, const ThroughputTable& table, int x) {
  if (x < task.min_workers) return 0.0;
  return task.weight * table.lookup(x);
}

double expected_run_duration(int workers, const CostParams& cost) {
  if (workers <= 0) return cost.horizon_s;
  return std::min(cost.horizon_s, 1.0 / (static_cast<double>(workers) * cost.lambda_worker));
}

double reward(const TaskSpec& task, const ThroughputTable& table, int x_old, int x_new,
              int healthy_workers, bool faulted, const CostParams& cost) {
  const bool transitions = (x_old != x_new) || faulted;
  const double gain = waf(task, table, x_new) * expected_run_duration(healthy_workers, cost);
  const double penalty =
      transitions ? waf(task, table, x_old) * cost.d_transition_s : 0.0;
  return gain - penalty;
}

namespace {

struct SolveContext {
  std::vector<TaskSpec> tasks;  // sorted by id for deterministic ordering
  std::vector<const ThroughputTable*> tables;
  std::vector<int> current;
  std::vector<bool> faulted;
  std::vector<std::vector<int>> allowed;  // {0} + calibrated points >= min, <= n'
  int budget = 0;
  const RewardInputs* inputs = nullptr;

  double gain(std::size_t i, int k) const {
    return reward(tasks[i], *tables[i], current[i], k, budget, faulted[i], inputs->cost);
  }
};

SolveContext make_context(const RewardInputs& inputs) {
  if (inputs.tasks.empty()) throw std::invalid_argument("solve requires at least one task");
  if (inputs.calibration == nullptr) throw std::invalid_argument("solve requires calibration");

  SolveContext ctx;
  ctx.inputs = &inputs;
  ctx.tasks = inputs.tasks;
  std::sort(ctx.tasks.begin(), ctx.tasks.end(),
            [](const TaskSpec& a, const TaskSpec& b) { return a.task_id < b.task_id; });
  ctx.budget = std::max(0, inputs.healthy_workers);

  for (const auto& t : ctx.tasks) {
    auto it = inputs.calibration->find(t.task_id);
    if (it == inputs.calibration->end())
      throw std::invalid_argument("no throughput table for task " + t.task_id);
    ctx.tables.push_back(&it->second);

    auto cur = inputs.current_workers.find(t.task_id);
    ctx.current.push_back(cur == inputs.current_workers.end() ? 0 : cur->second);
    ctx.faulted.push_back(inputs.faulted_tasks.count(t.task_id) > 0);

    std::vector<int> pts{0};
    for (const auto& [x, entry] : it->second.entries()) {
      if (x >= t.min_workers && x <= ctx.budget) pts.push_back(x);
    }
    ctx.allowed.push_back(std::move(pts));
  }
  return ctx;
}

// Shared tie-break: at equal reward prefer keeping the current worker count,
// then the smaller count.
bool prefer(int k_new, int k_old, int current) {
  const bool new_keeps = (k_new == current);
  const bool old_keeps = (k_old == current);
  if (new_keeps != old_keeps) return new_keeps;
  return k_new < k_old;
}

Plan plan_from(const SolveContext& ctx, const std::vector<int>& chosen, double objective) {
  Plan plan;
  plan.objective = objective;
  for (std::size_t i = 0; i < ctx.tasks.size(); ++i) {
    PlanEntry e;
    e.workers = chosen[i];
    if (chosen[i] > 0) {
      auto layout = ctx.tables[i]->layout_for(chosen[i]);
      e.layout = layout.value_or(ParallelLayout{chosen[i], 1, 1});
      e.micro_batches = e.layout.dp * ctx.inputs->micro_batches_per_rank;
    } else {
      e.layout = ParallelLayout{0, 0, 0};
      e.micro_batches = 0;
    }
    plan.tasks[ctx.tasks[i].task_id] = e;
  }
  return plan;
}

}  // namespace

Plan solve(const RewardInputs& inputs) {
  SolveContext ctx = make_context(inputs);
  const std::size_t m = ctx.tasks.size();
  const int n = ctx.budget;

  // S[i][j]: best reward of the first i tasks with j workers; S[0][j] = 0
  std::vector<std::vector<double>> S(m + 1, std::vector<double>(n + 1, 0.0));
  std::vector<std::vector<int>> choice(m + 1, std::vector<int>(n + 1, 0));

  for (std::size_t i = 1; i <= m; ++i) {
    for (int j = 0; j <= n; ++j) {
      bool have = false;
      double best = 0.0;
      int best_k = 0;
      for (int k : ctx.allowed[i - 1]) {
        if (k > j) break;  // allowed is ascending
        const double v = S[i - 1][j - k] + ctx.gain(i - 1, k);
        if (!have || v > best || (v == best && prefer(k, best_k, ctx.current[i - 1]))) {
          have = true;
          best = v;
          best_k = k;
        }
      }
      S[i][j] = best;
      choice[i][j] = best_k;
    }
  }

  std::vector<int> chosen(m, 0);
  int j = n;
  for (std::size_t i = m; i >= 1; --i) {
    chosen[i - 1] = choice[i][j];
    j -= chosen[i - 1];
  }
  return plan_from(ctx, chosen, S[m][n]);
}

Plan brute_force_solve(const RewardInputs& inputs) {
  if (inputs.tasks.size() > 6 || inputs.healthy_workers > 24)
    throw InstanceTooLarge("brute force limited to m <= 6 and n' <= 24");
  SolveContext ctx = make_context(inputs);
  const std::size_t m = ctx.tasks.size();

  std::vector<int> pick(m, 0), best_pick;
  bool have = false;
  double best = 0.0;

  // candidate better at equal objective if, scanning from the last task
  // down, its first differing count is preferred (mirrors DP traceback)
  auto better_at_tie = [&](const std::vector<int>& cand) {
    for (std::size_t i = m; i >= 1; --i) {
      if (cand[i - 1] != best_pick[i - 1])
        return prefer(cand[i - 1], best_pick[i - 1], ctx.current[i - 1]);
    }
    return false;
  };

  // exhaustive enumeration of every assignment over the eligible worker
  // counts ({0} plus calibrated points at or above the minimum), summing
  // rewards in task order exactly as the solver does
  auto recurse = [&](auto&& self, std::size_t i, int used, double sum) -> void {
    if (i == m) {
      if (!have || sum > best || (sum == best && better_at_tie(pick))) {
        have = true;
        best = sum;
        best_pick = pick;
      }
      return;
    }
    for (int k : ctx.allowed[i]) {
      if (used + k > ctx.budget) break;
      pick[i] = k;
      self(self, i + 1, used + k, sum + ctx.gain(i, k));
    }
  };
  recurse(recurse, 0, 0, 0.0);

  return plan_from(ctx, best_pick, best);
}

LookupTable precompute_lookup(const RewardInputs& inputs, const ClusterState& cluster,
                              int workers_per_node) {
  LookupTable table;

  for (const auto& node : cluster.nodes) {
    if (node.health != Health::healthy) continue;
    RewardInputs perturbed = inputs;
    int lost_healthy = 0;
    for (const auto& wid : node.worker_ids) {
      const Worker* w = cluster.find_worker(wid);
      if (w == nullptr || w->health != Health::healthy) continue;
      ++lost_healthy;
      if (w->assigned_task) perturbed.faulted_tasks.insert(*w->assigned_task);
    }
    perturbed.healthy_workers = inputs.healthy_workers - lost_healthy;
    table.put(LookupTable::fault_key(node.node_id), solve(perturbed));
  }

  {
    RewardInputs perturbed = inputs;
    perturbed.healthy_workers = inputs.healthy_workers + workers_per_node;
    table.put(LookupTable::join_key(1), solve(perturbed));
  }

  for (const auto& t : inputs.tasks) {
    if (inputs.tasks.size() < 2) break;  // solve requires a nonempty task list
    RewardInputs perturbed = inputs;
    std::erase_if(perturbed.tasks, [&](const TaskSpec& s) { return s.task_id == t.task_id; });
    perturbed.current_workers.erase(t.task_id);
    perturbed.faulted_tasks.erase(t.task_id);
    table.put(LookupTable::finish_key(t.task_id), solve(perturbed));
  }
  return table;
}

namespace {

double layout_efficiency(const SynthModelParams& params, const ParallelLayout& l) {
  return params.base_efficiency / (1.0 + params.dp_cost * (l.dp - 1)) /
         (1.0 + params.pp_cost * (l.pp - 1)) / (1.0 + params.tp_cost * (l.tp - 1));
}

}  // namespace

std::optional<ParallelLayout> best_layout(const TaskSpec& task, int x,
                                          const SynthModelParams& params) {
  std::optional<ParallelLayout> best;
  double best_eff = -1.0;
  for (int tp = 1; tp <= params.max_tp; tp *= 2) {
    if (x % tp != 0) continue;
    const int rest = x / tp;
    for (int pp = 1; pp <= std::min(rest, params.max_pp); ++pp) {
      if (rest % pp != 0) continue;
      if (task.model_size / (static_cast<double>(pp) * tp) >
          params.capacity_params_per_worker)
        continue;
      const ParallelLayout cand{rest / pp, pp, tp};
      const double eff = layout_efficiency(params, cand);
      if (eff > best_eff) {
        best_eff = eff;
        best = cand;
      }
    }
  }
  return best;
}

ThroughputTable synthesize_table(const TaskSpec& task, int max_x,
                                 const SynthModelParams& params) {
  if (max_x < task.min_workers)
    throw std::invalid_argument("max_x below min_workers for " + task.task_id);

  ThroughputTable table(task.min_workers);
  for (int x = 1; x <= max_x; ++x) {
    auto layout = best_layout(task, x, params);
    if (!layout) continue;
    const double eff = layout_efficiency(params, *layout);
    table.set(x, params.peak_flops_per_worker * x * eff, *layout);
  }
  if (table.lookup(task.min_workers) <= 0.0)
    throw std::invalid_argument("task " + task.task_id +
                                " has no feasible layout at min_workers under the memory rule");
  return table;
}

Calibration ensure_calibration(const std::vector<TaskSpec>& tasks, Calibration calibration,
                               int max_x, const SynthModelParams& params) {
  for (const auto& t : tasks) {
    if (calibration.count(t.task_id) == 0)
      calibration.emplace(t.task_id, synthesize_table(t, max_x, params));
  }
  return calibration;
}

}  // namespace unicron
