#include "unicron/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "unicron/recovery.hpp"
#include "unicron/rng.hpp"

namespace unicron::sim {

TraceGenParams trace_a_preset(std::uint64_t seed, int nodes, int workers_per_node) {
  TraceGenParams p;
  p.nodes = nodes;
  p.workers_per_node = workers_per_node;
  p.horizon_s = 8.0 * 7 * 86400;  // 8 weeks
  // ~43 failures expected over the horizon, ~10 of them node faults;
  // repairs take 1 to 7 days
  p.lambda_node = 43.0 / (static_cast<double>(nodes) * p.horizon_s);
  p.sev1_fraction = 10.0 / 43.0;
  p.sev2_fraction = (33.0 / 43.0) * (15.0 / 88.0);
  p.sev3_fraction = 1.0 - p.sev1_fraction - p.sev2_fraction;
  p.repair_min_s = 86400.0;
  p.repair_max_s = 7 * 86400.0;
  p.repair_mean_s = 0.0;
  p.seed = seed;
  return p;
}

TraceGenParams trace_b_preset(std::uint64_t seed, int nodes, int workers_per_node) {
  TraceGenParams p = trace_a_preset(seed, nodes, workers_per_node);
  p.lambda_node *= 20.0;
  p.horizon_s = 7.0 * 86400;
  // repaired nodes rejoin at roughly the rate sev1 faults occur, keeping
  // the resource pool stable
  const double cluster_sev1_rate = nodes * p.lambda_node * p.sev1_fraction;
  p.repair_min_s = 0.0;
  p.repair_max_s = 0.0;
  p.repair_mean_s = 1.0 / cluster_sev1_rate;
  p.seed = seed;
  return p;
}

namespace {

std::string node_name(int i) { return "n" + std::to_string(i); }
std::string worker_name(int node, int slot) {
  return node_name(node) + ".w" + std::to_string(slot);
}

}  // namespace

FailureTrace generate_trace(const TraceGenParams& params) {
  if (params.sev1_fraction < 0 || params.sev2_fraction < 0 || params.sev3_fraction < 0 ||
      std::abs(params.sev1_fraction + params.sev2_fraction + params.sev3_fraction - 1.0) > 1e-9)
    throw std::invalid_argument("severity mix must be nonnegative and sum to 1");
  if (params.repair_mean_s <= 0 && params.repair_min_s > params.repair_max_s)
    throw std::invalid_argument("repair_min_s must be <= repair_max_s");

  FailureTrace trace;
  trace.horizon_s = params.horizon_s;
  trace.seed = params.seed;

  struct Pending {
    double t;
    int node;
    int order;
    TraceEvent ev;
  };
  std::vector<Pending> all;
  const double mix[3] = {params.sev1_fraction, params.sev2_fraction, params.sev3_fraction};

  for (int n = 0; n < params.nodes && params.lambda_node > 0; ++n) {
    CounterRng rng(params.seed, fnv1a("trace." + node_name(n)));
    const double mean_gap = 1.0 / params.lambda_node;
    double t = 0.0;
    double down_until = -1.0;
    int order = 0;
    while (true) {
      t += rng.exponential(mean_gap);
      if (t >= params.horizon_s) break;
      const std::size_t sev = rng.pick_weighted(mix);
      if (t < down_until) continue;  // a downed node cannot fail again
      TraceEvent ev;
      ev.t = t;
      if (sev == 0) {
        ev.kind = kSev1NodeFault;
        ev.subject = node_name(n);
        const double delay = params.repair_mean_s > 0
                                 ? rng.exponential(params.repair_mean_s)
                                 : rng.uniform(params.repair_min_s, params.repair_max_s);
        down_until = t + delay;
        all.push_back({t, n, order++, ev});
        if (down_until < params.horizon_s) {
          TraceEvent rep;
          rep.t = down_until;
          rep.kind = kNodeRepair;
          rep.subject = node_name(n);
          all.push_back({rep.t, n, order++, rep});
        }
      } else {
        ev.kind = sev == 1 ? kSev2Error : kSev3Error;
        ev.subject = worker_name(n, static_cast<int>(rng.next_below(params.workers_per_node)));
        all.push_back({t, n, order++, ev});
      }
    }
  }

  std::sort(all.begin(), all.end(), [](const Pending& a, const Pending& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.node != b.node) return a.node < b.node;
    return a.order < b.order;
  });
  trace.events.reserve(all.size());
  for (auto& p : all) trace.events.push_back(std::move(p.ev));
  return trace;
}

TraceCounts count_trace(const FailureTrace& trace) {
  TraceCounts c;
  for (const auto& e : trace.events) {
    if (e.kind == kSev1NodeFault) ++c.sev1;
    else if (e.kind == kSev2Error) ++c.sev2;
    else if (e.kind == kSev3Error) ++c.sev3;
    else if (e.kind == kNodeRepair) ++c.repairs;
  }
  return c;
}

std::string trace_to_jsonl(const FailureTrace& trace) {
  std::ostringstream out;
  nlohmann::json header;
  header["horizon"] = trace.horizon_s;
  header["seed"] = trace.seed;
  out << header.dump() << "\n";
  for (const auto& e : trace.events) {
    nlohmann::json j;
    j["t"] = e.t;
    j["kind"] = e.kind;
    j["subject"] = e.subject;
    out << j.dump() << "\n";
  }
  return out.str();
}

FailureTrace trace_from_jsonl(const std::string& text) {
  FailureTrace trace;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (first && j.contains("horizon")) {
      trace.horizon_s = j["horizon"].get<double>();
      trace.seed = j.value("seed", std::uint64_t{0});
      first = false;
      continue;
    }
    first = false;
    TraceEvent e;
    e.t = j.at("t").get<double>();
    e.kind = j.at("kind").get<std::string>();
    e.subject = j.at("subject").get<std::string>();
    trace.events.push_back(std::move(e));
  }
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
  if (trace.horizon_s == 0 && !trace.events.empty()) trace.horizon_s = trace.events.back().t;
  return trace;
}

const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::unicron: return "unicron";
    case PolicyKind::restart_checkpoint: return "restart_checkpoint";
    case PolicyKind::affected_task_only: return "affected_task_only";
    case PolicyKind::static_equally: return "static_equally";
    case PolicyKind::static_weighted: return "static_weighted";
    case PolicyKind::static_sized: return "static_sized";
  }
  return "unknown";
}

std::optional<PolicyKind> policy_from_name(const std::string& name) {
  for (PolicyKind k : all_policies())
    if (name == policy_name(k)) return k;
  return std::nullopt;
}

std::vector<PolicyKind> all_policies() {
  return {PolicyKind::unicron,         PolicyKind::restart_checkpoint,
          PolicyKind::affected_task_only, PolicyKind::static_equally,
          PolicyKind::static_weighted, PolicyKind::static_sized};
}

namespace {

bool replans_globally(PolicyKind k) { return k == PolicyKind::unicron; }
bool replans_locally(PolicyKind k) { return k == PolicyKind::affected_task_only; }
bool restart_style(PolicyKind k) {
  return k == PolicyKind::restart_checkpoint || k == PolicyKind::static_equally ||
         k == PolicyKind::static_weighted || k == PolicyKind::static_sized;
}

struct LabelPresentation {
  std::string label;
  DetectionSource source = DetectionSource::exception_propagation;
  bool masquerades_transient = false;  // true severity is one level worse
};

// Deterministic label choice for a trace event; depends only on trace
// content so replays are stable.
LabelPresentation present_event(const TraceEvent& ev, std::uint64_t trace_seed,
                                double escalation_fraction) {
  LabelPresentation p;
  const std::uint64_t h =
      mix64(fnv1a(ev.kind) ^ mix64(fnv1a(ev.subject) + trace_seed) ^
            mix64(static_cast<std::uint64_t>(ev.t * 1000.0)));
  if (ev.kind == kSev1NodeFault) {
    p.label = "Lost connection";
    p.source = DetectionSource::node_health;
    return p;
  }
  if (ev.kind == kSev3Error) {
    switch (h % 4) {
      case 0:
        p.label = "Connection refused/reset";
        p.source = DetectionSource::exception_propagation;
        break;
      case 1:
        p.label = "NCCL timeout";
        p.source = DetectionSource::statistical_monitoring;
        break;
      case 2:
        p.label = "Link flapping";
        p.source = DetectionSource::statistical_monitoring;
        break;
      default:
        p.label = "Other network errors";
        p.source = DetectionSource::exception_propagation;
        break;
    }
    return p;
  }
  // sev2: occasionally first presents as a transient network symptom, so
  // the in-place reattempt fails and the coordinator escalates
  const double u = static_cast<double>(mix64(h + 1) >> 11) * 0x1.0p-53;
  if (u < escalation_fraction) {
    p.label = "NCCL timeout";
    p.source = DetectionSource::statistical_monitoring;
    p.masquerades_transient = true;
    return p;
  }
  switch (h % 4) {
    case 0:
      p.label = "Exited abnormally";
      p.source = DetectionSource::process_supervision;
      break;
    case 1:
      p.label = "CUDA errors";
      p.source = DetectionSource::exception_propagation;
      break;
    case 2:
      p.label = "Illegal memory access";
      p.source = DetectionSource::exception_propagation;
      break;
    default:
      p.label = "Task hang";
      p.source = DetectionSource::statistical_monitoring;
      break;
  }
  return p;
}

struct TaskRuntime {
  int alloc = 0;  // planned worker count
  ParallelLayout layout;
  bool running = false;
  long epoch = 0;  // bumped on every disruption; stale events are dropped
  double last_ckpt_s = 0.0;
  double waf = 0.0;                 // cached F(t, alloc)
  double fault_ckpt_elapsed = 0.0;  // checkpoint age captured at the last fault
  bool waiting_for_workers = false;
  double affected_at = std::numeric_limits<double>::infinity();
  int home_alloc = 0;
  double downtime_s = 0.0;
};

struct QueuedEvent {
  double t = 0.0;
  long seq = 0;
  enum Kind { trace, detected, resume } kind = trace;
  TraceEvent trace_ev;
  // detected payload
  std::string task_id;
  std::vector<std::string> victim_tasks;  // for node faults
  LabelPresentation presentation;
  Severity true_severity = Severity::sev3;
  bool already_escalated = false;
  long epoch = 0;  // task epoch at scheduling time (detected/resume)
};

struct EventOrder {
  bool operator()(const QueuedEvent& a, const QueuedEvent& b) const {
    if (a.t != b.t) return a.t > b.t;
    return a.seq > b.seq;
  }
};

class Engine {
 public:
  Engine(const SimConfig& config, const FailureTrace& trace, const PolicyParams& policy)
      : cfg_(config), trace_(trace), policy_(policy) {}

  SimResult run();

 private:
  const SimConfig& cfg_;
  const FailureTrace& trace_;
  const PolicyParams& policy_;

  ClusterState cluster_;
  Calibration calibration_;
  std::vector<TaskSpec> tasks_;  // sorted by id
  std::map<std::string, TaskRuntime> rt_;
  std::map<std::string, const TaskSpec*> spec_;
  std::map<std::string, std::set<std::string>> home_workers_;  // restart-family fixed sets
  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, EventOrder> queue_;
  long seq_ = 0;

  LookupTable lookup_;
  bool lookup_valid_ = false;
  std::set<std::string> spared_nodes_;

  double now_ = 0.0;
  double accumulated_ = 0.0;
  SimResult result_;

  const TaskSpec& spec(const std::string& id) const { return *spec_.at(id); }
  const ThroughputTable& table(const std::string& id) const { return calibration_.at(id); }

  double detect_latency(const LabelPresentation& p, const std::string& task_id) const;
  double checkpoint_age(const TaskRuntime& t, double at) const;
  void refresh_waf(const std::string& id);
  double cluster_waf() const;
  void accrue(double to);
  void emit_sample();

  void stop_task(const std::string& id);
  void schedule_resume(const std::string& id, double at);
  void schedule_detected(QueuedEvent ev, double at);

  void set_node_health(const std::string& node_id, Health node_health, Health worker_health);
  void strip_lost_workers();
  void assign_workers(const std::map<std::string, int>& target);
  RewardInputs current_inputs() const;
  void rebuild_lookup();

  void on_trace_event(const TraceEvent& ev, std::vector<std::string>& lookup_keys,
                      bool& want_replan);
  void on_detected(const QueuedEvent& ev, std::vector<std::string>& faulted,
                   std::vector<std::string>& lookup_keys, bool& want_replan);
  void on_resume(const QueuedEvent& ev);
  void apply_global_replan(const std::set<std::string>& faulted,
                           const std::vector<std::string>& lookup_keys);
  void local_replan(const std::string& task_id, bool was_faulted);
  void restore_deficits();
  void restart_family_resume(const std::string& task_id);
  double migration_cost(const std::string& task_id, bool faulted, int old_alloc) const;
  double lost_work(const std::string& task_id, transition::RecoveryPolicyKind kind) const;
  void audit(const ErrorEvent& ev, ActionKind action, const std::string& outcome);
};

double Engine::detect_latency(const LabelPresentation& p, const std::string& task_id) const {
  if (restart_style(policy_.kind)) {
    // without in-band monitoring, node loss surfaces quickly but everything
    // else waits for the communication timeout
    return p.source == DetectionSource::node_health ? policy_.node_loss_detect_s
                                                    : policy_.timeout_detect_s;
  }
  switch (p.source) {
    case DetectionSource::node_health: return cfg_.detect_node_loss_s;
    case DetectionSource::process_supervision: return cfg_.detect_process_exit_s;
    case DetectionSource::exception_propagation: return cfg_.detect_exception_s;
    case DetectionSource::statistical_monitoring: {
      const double d_iter = task_id.empty() ? cfg_.cost.d_iter_s : spec(task_id).d_iter_s;
      return cfg_.detection.failed_factor * d_iter + 1e-9;
    }
  }
  return cfg_.detect_exception_s;
}

double Engine::checkpoint_age(const TaskRuntime& t, double at) const {
  const double since = at - t.last_ckpt_s;
  const double interval = cfg_.cost.checkpoint_interval_s;
  return since - std::floor(since / interval) * interval;
}

void Engine::refresh_waf(const std::string& id) {
  auto& t = rt_.at(id);
  t.waf = t.alloc > 0 ? waf(spec(id), table(id), t.alloc) : 0.0;
}

double Engine::cluster_waf() const {
  double sum = 0.0;
  for (const auto& [id, t] : rt_)
    if (t.running) sum += t.waf;
  return sum;
}

void Engine::accrue(double to) {
  const double dt = to - now_;
  if (dt <= 0) {
    now_ = to;
    return;
  }
  accumulated_ += cluster_waf() * dt;
  for (auto& [id, t] : rt_) {
    if (!t.running && (t.alloc > 0 || t.waiting_for_workers)) t.downtime_s += dt;
  }
  now_ = to;
}

void Engine::emit_sample() {
  if (cfg_.check_invariants) {
    const auto violations = validate_cluster(cluster_);
    if (!violations.empty())
      throw std::logic_error("cluster invariant violated at t=" + std::to_string(now_) + ": " +
                             violations.front());
    int assigned = 0;
    for (const auto& [id, a] : cluster_.assignment) assigned += a.worker_count;
    if (assigned > cluster_.healthy_worker_count())
      throw std::logic_error("capacity exceeded at t=" + std::to_string(now_));
  }
  if (!cfg_.record_samples) return;
  MetricsSample s;
  s.t = now_;
  s.task_waf.reserve(result_.task_ids.size());
  double cluster = 0.0;
  for (const auto& id : result_.task_ids) {
    const auto& t = rt_.at(id);
    const double w = t.running ? t.waf : 0.0;
    s.task_waf.push_back(w);
    cluster += w;
  }
  s.cluster_waf = cluster;
  s.accumulated_waf = accumulated_;
  if (!result_.samples.empty() && result_.samples.back().t == s.t) {
    result_.samples.back() = std::move(s);
    return;
  }
  result_.samples.push_back(std::move(s));
}

void Engine::stop_task(const std::string& id) {
  auto& t = rt_.at(id);
  ++t.epoch;
  t.running = false;
}

void Engine::schedule_resume(const std::string& id, double at) {
  QueuedEvent ev;
  ev.t = at;
  ev.seq = ++seq_;
  ev.kind = QueuedEvent::resume;
  ev.task_id = id;
  ev.epoch = rt_.at(id).epoch;
  queue_.push(std::move(ev));
}

void Engine::schedule_detected(QueuedEvent ev, double at) {
  ev.t = at;
  ev.seq = ++seq_;
  ev.kind = QueuedEvent::detected;
  queue_.push(std::move(ev));
}

void Engine::set_node_health(const std::string& node_id, Health node_health,
                             Health worker_health) {
  for (auto& n : cluster_.nodes) {
    if (n.node_id != node_id) continue;
    n.health = node_health;
    for (const auto& wid : n.worker_ids) {
      for (auto& w : cluster_.workers)
        if (w.worker_id == wid) w.health = worker_health;
    }
  }
}

// drop non-healthy workers from live assignments so capacity accounting
// stays consistent; planned allocations (alloc) are untouched
void Engine::strip_lost_workers() {
  for (auto& [tid, a] : cluster_.assignment) {
    for (auto it = a.worker_ids.begin(); it != a.worker_ids.end();) {
      const Worker* w = cluster_.find_worker(*it);
      if (w == nullptr || w->health != Health::healthy) {
        for (auto& cw : cluster_.workers)
          if (cw.worker_id == *it) cw.assigned_task.reset();
        it = a.worker_ids.erase(it);
      } else {
        ++it;
      }
    }
    a.worker_count = static_cast<int>(a.worker_ids.size());
  }
  std::erase_if(cluster_.assignment, [](const auto& kv) { return kv.second.worker_count == 0; });
}

// Rebuild worker id sets toward `target` counts: tasks keep their lowest
// surviving ids, shortfalls are filled from the free pool in id order.
void Engine::assign_workers(const std::map<std::string, int>& target) {
  std::map<std::string, bool> healthy;
  for (const auto& w : cluster_.workers) healthy[w.worker_id] = w.health == Health::healthy;

  std::set<std::string> taken;
  std::map<std::string, TaskAssignment> next;
  for (const auto& [id, want] : target) {
    TaskAssignment a;
    const auto it = cluster_.assignment.find(id);
    if (it != cluster_.assignment.end()) {
      for (const auto& w : it->second.worker_ids) {
        if (static_cast<int>(a.worker_ids.size()) >= want) break;
        if (healthy.at(w)) a.worker_ids.insert(w);
      }
    }
    a.worker_count = static_cast<int>(a.worker_ids.size());
    for (const auto& w : a.worker_ids) taken.insert(w);
    next[id] = std::move(a);
  }
  for (const auto& w : cluster_.workers) {
    if (w.health != Health::healthy || taken.count(w.worker_id)) continue;
    for (auto& [id, a] : next) {
      if (a.worker_count < target.at(id)) {
        a.worker_ids.insert(w.worker_id);
        ++a.worker_count;
        taken.insert(w.worker_id);
        break;
      }
    }
  }

  cluster_.assignment.clear();
  for (auto& [id, a] : next) {
    if (a.worker_count > 0) cluster_.assignment[id] = std::move(a);
    rt_.at(id).alloc = target.at(id);
    refresh_waf(id);
  }
  for (auto& w : cluster_.workers) w.assigned_task.reset();
  for (const auto& [id, a] : cluster_.assignment) {
    for (const auto& wid : a.worker_ids) {
      for (auto& w : cluster_.workers)
        if (w.worker_id == wid) w.assigned_task = id;
    }
  }
}

RewardInputs Engine::current_inputs() const {
  RewardInputs in;
  in.tasks = tasks_;
  for (const auto& [id, t] : rt_) in.current_workers[id] = t.alloc;
  in.healthy_workers = cluster_.healthy_worker_count();
  in.cost = cfg_.cost;
  in.calibration = &calibration_;
  in.micro_batches_per_rank = cfg_.micro_batches_per_rank;
  return in;
}

void Engine::rebuild_lookup() {
  if (!replans_globally(policy_.kind)) return;
  lookup_ = precompute_lookup(current_inputs(), cluster_, cfg_.workers_per_node);
  lookup_valid_ = true;
}

void Engine::audit(const ErrorEvent& ev, ActionKind action, const std::string& outcome) {
  if (!cfg_.record_audit) return;
  RecoveryAction a;
  a.kind = action;
  a.subject = ev.subject;
  result_.audit_jsonl.push_back(audit_line(ev.time_s, ev, a, outcome));
}

double Engine::migration_cost(const std::string& task_id, bool faulted, int old_alloc) const {
  transition::MigrationQuery q;
  q.workers_needing_state.push_back(task_id);  // plan cost is a max; one entry suffices
  if (faulted) {
    q.healthy_dp_replica = rt_.at(task_id).layout.dp >= 2;
  } else if (old_alloc == 0) {
    // revived from idle: no live replica, hierarchical checkpoint only
    q.healthy_dp_replica = false;
  } else {
    // healthy scale in/out: state proactively replicated from live workers
    q.healthy_dp_replica = true;
  }
  return transition::plan_migration(q, cfg_.migration).cost_s;
}

double Engine::lost_work(const std::string& task_id, transition::RecoveryPolicyKind kind) const {
  const auto& t = rt_.at(task_id);
  return cfg_.recompute_scale *
         transition::recomputation_cost(t.fault_ckpt_elapsed, kind, spec(task_id).d_iter_s);
}

void Engine::restart_family_resume(const std::string& task_id) {
  auto& t = rt_.at(task_id);
  // the fixed worker set is whole again: reclaim it
  TaskAssignment a;
  a.worker_ids = home_workers_.at(task_id);
  a.worker_count = static_cast<int>(a.worker_ids.size());
  cluster_.assignment[task_id] = a;
  for (auto& w : cluster_.workers)
    if (a.worker_ids.count(w.worker_id)) w.assigned_task = task_id;

  t.waiting_for_workers = false;
  const double recompute = lost_work(task_id, transition::RecoveryPolicyKind::restart);
  schedule_resume(task_id,
                  now_ + policy_.restart_overhead_s + cfg_.migration.remote_load_s + recompute);
}

void Engine::on_trace_event(const TraceEvent& ev, std::vector<std::string>& lookup_keys,
                            bool& want_replan) {
  if (ev.kind == kNodeRepair) {
    if (spared_nodes_.erase(ev.subject) > 0) return;  // a spare already substituted
    set_node_health(ev.subject, Health::healthy, Health::healthy);
    if (replans_globally(policy_.kind)) {
      want_replan = true;
      lookup_keys.push_back(LookupTable::join_key(1));
    } else if (replans_locally(policy_.kind)) {
      restore_deficits();
    } else {
      for (const auto& id : result_.task_ids) {
        auto& t = rt_.at(id);
        if (!t.waiting_for_workers) continue;
        bool whole = true;
        for (const auto& wid : home_workers_.at(id)) {
          const Worker* w = cluster_.find_worker(wid);
          if (w == nullptr || w->health != Health::healthy) {
            whole = false;
            break;
          }
        }
        if (whole) restart_family_resume(id);
      }
    }
    return;
  }

  if (ev.kind == kSev1NodeFault) {
    const Node* node = cluster_.find_node(ev.subject);
    if (node == nullptr || node->health != Health::healthy) return;

    // training on the node halts at fault time; the coordinator reacts
    // after the detection latency
    QueuedEvent qe;
    qe.trace_ev = ev;
    qe.true_severity = Severity::sev1;
    qe.presentation = present_event(ev, trace_.seed, cfg_.escalation_fraction);
    for (const auto& [tid, a] : cluster_.assignment) {
      for (const auto& wid : a.worker_ids) {
        if (std::find(node->worker_ids.begin(), node->worker_ids.end(), wid) !=
            node->worker_ids.end()) {
          qe.victim_tasks.push_back(tid);
          auto& t = rt_.at(tid);
          if (t.running) {
            t.fault_ckpt_elapsed = checkpoint_age(t, ev.t);
            stop_task(tid);
          }
          break;
        }
      }
    }
    set_node_health(ev.subject, Health::lost, Health::lost);
    strip_lost_workers();
    const double latency = detect_latency(qe.presentation, "");
    schedule_detected(std::move(qe), ev.t + latency);
    return;
  }

  // worker-scoped sev2/sev3
  const Worker* w = cluster_.find_worker(ev.subject);
  if (w == nullptr || w->health != Health::healthy || !w->assigned_task) return;
  const std::string victim = *w->assigned_task;
  auto& t = rt_.at(victim);
  if (!t.running) return;  // already down; nothing new to recover

  t.fault_ckpt_elapsed = checkpoint_age(t, ev.t);
  stop_task(victim);

  QueuedEvent qe;
  qe.trace_ev = ev;
  qe.task_id = victim;
  qe.true_severity = ev.kind == kSev2Error ? Severity::sev2 : Severity::sev3;
  qe.presentation = present_event(ev, trace_.seed, cfg_.escalation_fraction);
  qe.epoch = t.epoch;
  const double latency = detect_latency(qe.presentation, victim);
  schedule_detected(std::move(qe), ev.t + latency);
}

void Engine::on_detected(const QueuedEvent& qe, std::vector<std::string>& faulted,
                         std::vector<std::string>& lookup_keys, bool& want_replan) {
  const LabelPresentation& p = qe.presentation;

  ErrorEvent ev;
  ev.time_s = now_;
  ev.source = p.source;
  ev.status_kind = p.label;
  ev.subject = qe.trace_ev.subject;
  ev.severity = severity_of_status(p.label, p.source);
  ev.escalated = qe.already_escalated;

  if (qe.true_severity == Severity::sev1) {
    // heartbeat loss: the coordinator isolates the node
    auto action = decide(ev);
    auto applied = apply(action, cluster_, true, ev);
    cluster_ = std::move(applied.state);
    strip_lost_workers();
    audit(ev, ActionKind::reconfigure_cluster, "reconfiguration requested");

    if (policy_.hot_spare && restart_style(policy_.kind)) {
      // a spare substitutes for the failed node; waiting time is excluded
      set_node_health(qe.trace_ev.subject, Health::healthy, Health::healthy);
      spared_nodes_.insert(qe.trace_ev.subject);
      for (const auto& tid : qe.victim_tasks) restart_family_resume(tid);
      return;
    }

    if (replans_globally(policy_.kind)) {
      want_replan = true;
      for (const auto& v : qe.victim_tasks) faulted.push_back(v);
      lookup_keys.push_back(LookupTable::fault_key(qe.trace_ev.subject));
    } else if (replans_locally(policy_.kind)) {
      for (const auto& v : qe.victim_tasks) local_replan(v, true);
    } else {
      for (const auto& v : qe.victim_tasks) rt_.at(v).waiting_for_workers = true;
    }
    return;
  }

  // worker-scoped failure: ignore if the task has been rebuilt meanwhile
  const std::string& tid = qe.task_id;
  auto& t = rt_.at(tid);
  if (t.epoch != qe.epoch || t.running) return;

  if (restart_style(policy_.kind)) {
    const double recompute = lost_work(tid, transition::RecoveryPolicyKind::restart);
    audit(ev, ActionKind::restart_process, "restarted from remote checkpoint");
    schedule_resume(tid, now_ + policy_.restart_overhead_s + cfg_.migration.remote_load_s +
                             recompute);
    return;
  }

  auto action = decide(ev);
  if (action.kind == ActionKind::reattempt_in_place) {
    if (qe.true_severity == Severity::sev3) {
      audit(ev, action.kind, "reattempt succeeded");
      schedule_resume(tid, now_ + cfg_.reattempt_backoff_s);
    } else {
      // the reattempt fails and the failure is upgraded one level
      audit(ev, action.kind, "reattempt failed; escalated");
      ++result_.escalations;
      QueuedEvent esc = qe;
      esc.presentation.label = "Task hang";
      esc.presentation.source = DetectionSource::statistical_monitoring;
      esc.presentation.masquerades_transient = false;
      esc.already_escalated = true;
      schedule_detected(std::move(esc), now_ + cfg_.reattempt_backoff_s);
    }
    return;
  }

  // restart in place: configuration unchanged, state from the nearest source
  audit(ev, action.kind, "process restarted");
  const double mig = migration_cost(tid, true, t.alloc);
  schedule_resume(tid, now_ + mig + lost_work(tid, transition::RecoveryPolicyKind::unicron));
}

void Engine::on_resume(const QueuedEvent& qe) {
  auto& t = rt_.at(qe.task_id);
  if (qe.epoch != t.epoch || t.running || t.alloc == 0) return;
  t.running = true;
  t.last_ckpt_s = now_;
}

void Engine::apply_global_replan(const std::set<std::string>& faulted,
                                 const std::vector<std::string>& lookup_keys) {
  Plan plan;
  bool from_lookup = false;
  if (lookup_valid_ && lookup_keys.size() == 1) {
    if (auto hit = lookup_.retrieve(lookup_keys.front())) {
      plan = std::move(*hit);
      from_lookup = true;
      ++result_.lookup_hits;
    }
  }
  if (!from_lookup) {
    RewardInputs in = current_inputs();
    in.faulted_tasks = faulted;
    plan = solve(in);
    ++result_.lookup_misses;
  }
  ++result_.reconfigurations;

  std::map<std::string, int> target, old_alloc;
  for (const auto& id : result_.task_ids) {
    target[id] = plan.tasks.at(id).workers;
    old_alloc[id] = rt_.at(id).alloc;
  }
  assign_workers(target);

  for (const auto& id : result_.task_ids) {
    auto& t = rt_.at(id);
    const bool was_faulted = faulted.count(id) > 0;
    const int before = old_alloc[id];
    const int after = target[id];
    if (after > 0) t.layout = plan.tasks.at(id).layout;

    if (after == before && !was_faulted) continue;  // untouched, keeps running

    stop_task(id);  // also invalidates any in-flight resume
    if (after == 0) {
      t.waiting_for_workers = false;
      continue;
    }
    const double mig = migration_cost(id, was_faulted, before);
    const double recompute =
        was_faulted ? lost_work(id, transition::RecoveryPolicyKind::unicron) : 0.0;
    t.waiting_for_workers = false;
    schedule_resume(id, now_ + mig + recompute);
  }
  rebuild_lookup();
}

void Engine::local_replan(const std::string& task_id, bool was_faulted) {
  auto& t = rt_.at(task_id);
  const TaskSpec& ts = spec(task_id);

  int survivors = 0;
  const auto it = cluster_.assignment.find(task_id);
  if (it != cluster_.assignment.end()) survivors = it->second.worker_count;
  int free_pool = 0;
  for (const auto& w : cluster_.workers)
    if (w.health == Health::healthy && !w.assigned_task) ++free_pool;

  const int budget = survivors + free_pool;
  const int n_healthy = cluster_.healthy_worker_count();

  // single-task reward maximization under the local budget
  int best_k = 0;
  double best_v = reward(ts, table(task_id), t.alloc, 0, n_healthy, was_faulted, cfg_.cost);
  for (const auto& [x, entry] : table(task_id).entries()) {
    if (x < ts.min_workers || x > budget) continue;
    const double v = reward(ts, table(task_id), t.alloc, x, n_healthy, was_faulted, cfg_.cost);
    if (v > best_v || (v == best_v && (x == t.alloc) && best_k != t.alloc)) {
      best_v = v;
      best_k = x;
    }
  }

  const int before = t.alloc;
  std::map<std::string, int> target;
  for (const auto& id : result_.task_ids) target[id] = rt_.at(id).alloc;
  target[task_id] = best_k;
  assign_workers(target);

  t.affected_at = std::min(t.affected_at, now_);
  stop_task(task_id);
  if (best_k == 0) {
    t.waiting_for_workers = true;  // wait for capacity to come back
    return;
  }
  t.waiting_for_workers = false;
  const double mig = migration_cost(task_id, was_faulted, before);
  const double recompute =
      was_faulted ? lost_work(task_id, transition::RecoveryPolicyKind::unicron) : 0.0;
  schedule_resume(task_id, now_ + mig + recompute);
}

// repaired capacity goes back to degraded tasks, earliest affected first
void Engine::restore_deficits() {
  std::vector<std::string> deficits;
  for (const auto& id : result_.task_ids) {
    const auto& t = rt_.at(id);
    if (t.alloc < t.home_alloc || t.waiting_for_workers) deficits.push_back(id);
  }
  std::sort(deficits.begin(), deficits.end(), [&](const std::string& a, const std::string& b) {
    const auto& ta = rt_.at(a);
    const auto& tb = rt_.at(b);
    if (ta.affected_at != tb.affected_at) return ta.affected_at < tb.affected_at;
    return a < b;
  });

  for (const auto& id : deficits) {
    auto& t = rt_.at(id);
    int free_pool = 0;
    for (const auto& w : cluster_.workers)
      if (w.health == Health::healthy && !w.assigned_task) ++free_pool;
    if (free_pool == 0) break;

    const int cap = std::min(t.home_alloc, t.alloc + free_pool);
    int best_k = t.alloc;
    double best_f = t.alloc > 0 ? waf(spec(id), table(id), t.alloc) : 0.0;
    for (const auto& [x, entry] : table(id).entries()) {
      if (x < spec(id).min_workers || x > cap) continue;
      const double f = waf(spec(id), table(id), x);
      if (f > best_f) {
        best_f = f;
        best_k = x;
      }
    }
    if (best_k == t.alloc) continue;

    std::map<std::string, int> target;
    for (const auto& tid : result_.task_ids) target[tid] = rt_.at(tid).alloc;
    target[id] = best_k;
    const int before = t.alloc;
    assign_workers(target);
    stop_task(id);
    t.waiting_for_workers = false;
    if (best_k == t.home_alloc) t.affected_at = std::numeric_limits<double>::infinity();
    schedule_resume(id, now_ + migration_cost(id, false, before));
  }
}

SimResult Engine::run() {
  for (int n = 0; n < cfg_.nodes; ++n) {
    Node node;
    node.node_id = node_name(n);
    for (int s = 0; s < cfg_.workers_per_node; ++s) {
      node.worker_ids.push_back(worker_name(n, s));
      cluster_.workers.push_back(Worker{worker_name(n, s), Health::healthy, std::nullopt});
    }
    cluster_.nodes.push_back(std::move(node));
  }

  tasks_ = cfg_.tasks;
  std::sort(tasks_.begin(), tasks_.end(),
            [](const TaskSpec& a, const TaskSpec& b) { return a.task_id < b.task_id; });
  calibration_ =
      ensure_calibration(tasks_, cfg_.calibration, cfg_.nodes * cfg_.workers_per_node, cfg_.synth);
  for (const auto& t : tasks_) {
    spec_[t.task_id] = &t;
    rt_[t.task_id] = TaskRuntime{};
    result_.task_ids.push_back(t.task_id);
  }
  result_.horizon_s = trace_.horizon_s;
  result_.counts = count_trace(trace_);

  // every policy starts from the same optimal initial plan except the
  // static baselines, which pin their own fixed allocation
  std::map<std::string, int> allocation;
  if (restart_style(policy_.kind) && policy_.kind != PolicyKind::restart_checkpoint) {
    allocation = static_allocation(cfg_, policy_.kind);
    Plan p;
    for (const auto& [id, x] : allocation) {
      PlanEntry e;
      e.workers = x;
      if (x > 0) {
        e.layout = table(id).layout_for(x).value_or(ParallelLayout{x, 1, 1});
        e.micro_batches = e.layout.dp * cfg_.micro_batches_per_rank;
      }
      p.tasks[id] = e;
    }
    result_.initial_plan = std::move(p);
  } else {
    result_.initial_plan = solve(current_inputs());
    for (const auto& id : result_.task_ids)
      allocation[id] = result_.initial_plan.tasks.at(id).workers;
  }

  assign_workers(allocation);
  for (const auto& id : result_.task_ids) {
    auto& t = rt_.at(id);
    t.home_alloc = t.alloc;
    t.layout = result_.initial_plan.tasks.at(id).workers > 0
                   ? result_.initial_plan.tasks.at(id).layout
                   : ParallelLayout{0, 0, 0};
    if (t.alloc > 0) {
      t.running = true;
      t.last_ckpt_s = 0.0;
    }
  }
  if (restart_style(policy_.kind)) {
    for (const auto& [id, a] : cluster_.assignment) home_workers_[id] = a.worker_ids;
    for (const auto& id : result_.task_ids)
      if (home_workers_.count(id) == 0) home_workers_[id] = {};
  }
  rebuild_lookup();

  // simultaneous trace events process in (severity desc, subject) order
  std::vector<TraceEvent> ordered = trace_.events;
  auto severity_rank = [](const TraceEvent& e) {
    if (e.kind == kSev1NodeFault) return 1;
    if (e.kind == kSev2Error) return 2;
    if (e.kind == kSev3Error) return 3;
    return 4;
  };
  std::stable_sort(ordered.begin(), ordered.end(), [&](const TraceEvent& a, const TraceEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (severity_rank(a) != severity_rank(b)) return severity_rank(a) < severity_rank(b);
    return a.subject < b.subject;
  });
  for (const auto& ev : ordered) {
    QueuedEvent qe;
    qe.t = ev.t;
    qe.seq = ++seq_;
    qe.kind = QueuedEvent::trace;
    qe.trace_ev = ev;
    queue_.push(std::move(qe));
  }

  emit_sample();
  double next_tick = cfg_.tick_s > 0 ? cfg_.tick_s : std::numeric_limits<double>::infinity();

  while (!queue_.empty() && queue_.top().t <= trace_.horizon_s) {
    const double tn = queue_.top().t;
    while (next_tick < tn) {
      accrue(next_tick);
      emit_sample();
      next_tick += cfg_.tick_s;
    }
    accrue(tn);

    // handle everything at this instant; simultaneous reconfiguration
    // triggers coalesce into a single planner invocation, and zero-cost
    // resumes landing at the same instant are drained before time advances
    bool want_replan = false;
    std::vector<std::string> faulted_v, lookup_keys;
    while (true) {
      while (!queue_.empty() && queue_.top().t == tn) {
        QueuedEvent qe = queue_.top();
        queue_.pop();
        switch (qe.kind) {
          case QueuedEvent::trace:
            on_trace_event(qe.trace_ev, lookup_keys, want_replan);
            break;
          case QueuedEvent::detected:
            on_detected(qe, faulted_v, lookup_keys, want_replan);
            break;
          case QueuedEvent::resume:
            on_resume(qe);
            break;
        }
      }
      if (!want_replan) break;
      apply_global_replan(std::set<std::string>(faulted_v.begin(), faulted_v.end()),
                          lookup_keys);
      want_replan = false;
      faulted_v.clear();
      lookup_keys.clear();
    }
    emit_sample();
  }

  while (next_tick < trace_.horizon_s) {
    accrue(next_tick);
    emit_sample();
    next_tick += cfg_.tick_s;
  }
  accrue(trace_.horizon_s);
  emit_sample();

  result_.accumulated_waf = accumulated_;
  for (const auto& id : result_.task_ids) result_.downtime_s[id] = rt_.at(id).downtime_s;
  return std::move(result_);
}

}  // namespace

std::map<std::string, int> static_allocation(const SimConfig& config, PolicyKind kind) {
  std::vector<TaskSpec> tasks = config.tasks;
  std::sort(tasks.begin(), tasks.end(),
            [](const TaskSpec& a, const TaskSpec& b) { return a.task_id < b.task_id; });
  Calibration calib = ensure_calibration(tasks, config.calibration,
                                         config.nodes * config.workers_per_node, config.synth);
  const int n = config.nodes * config.workers_per_node;

  double total_weight = 0.0, total_size = 0.0;
  for (const auto& t : tasks) {
    total_weight += t.weight;
    total_size += t.model_size;
  }

  std::map<std::string, int> alloc;
  for (const auto& t : tasks) {
    double share = 0.0;
    switch (kind) {
      case PolicyKind::static_equally: share = static_cast<double>(n) / tasks.size(); break;
      case PolicyKind::static_weighted: share = n * t.weight / total_weight; break;
      case PolicyKind::static_sized: share = n * t.model_size / total_size; break;
      default: throw std::invalid_argument("not a static policy");
    }
    const int cap = static_cast<int>(share);
    // snap down to the largest calibrated point within the share
    int best = 0;
    for (const auto& [x, entry] : calib.at(t.task_id).entries()) {
      if (x >= t.min_workers && x <= cap) best = x;
    }
    alloc[t.task_id] = best;
  }
  return alloc;
}

SimResult run_simulation(const SimConfig& config, const FailureTrace& trace,
                         const PolicyParams& policy) {
  Engine engine(config, trace, policy);
  return engine.run();
}

ComparisonReport compare_policies(const SimConfig& config, const FailureTrace& trace,
                                  const std::vector<PolicyParams>& policies) {
  if (policies.size() < 2)
    throw std::invalid_argument("comparison needs at least two policies");
  ComparisonReport report;
  std::optional<double> unicron_waf;
  for (const auto& p : policies) {
    SimConfig c = config;
    c.record_samples = false;
    SimResult r = run_simulation(c, trace, p);
    report.accumulated_waf[policy_name(p.kind)] = r.accumulated_waf;
    if (p.kind == PolicyKind::unicron) unicron_waf = r.accumulated_waf;
  }
  if (unicron_waf) {
    for (const auto& [name, w] : report.accumulated_waf)
      report.ratio_vs_unicron[name] = w > 0 ? *unicron_waf / w : 0.0;
  }
  return report;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const SimResult& result, const std::string& config_digest,
                        std::uint64_t seed) {
  std::ostringstream out;
  out << "# config_digest=" << config_digest << " seed=" << seed << "\n";
  out << "time_s,task_id,waf,cluster_waf,accumulated_waf\n";
  for (const auto& s : result.samples) {
    for (std::size_t i = 0; i < result.task_ids.size(); ++i) {
      out << fmt_double(s.t) << ',' << result.task_ids[i] << ',' << fmt_double(s.task_waf[i])
          << ',' << fmt_double(s.cluster_waf) << ',' << fmt_double(s.accumulated_waf) << "\n";
    }
  }
  return out.str();
}

std::string summary_json(const SimResult& result, const PolicyParams& policy,
                         const std::string& config_digest, std::uint64_t seed) {
  nlohmann::json j;
  j["policy"] = policy_name(policy.kind);
  j["accumulated_waf"] = result.accumulated_waf;
  j["horizon_s"] = result.horizon_s;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["failures"] = {{"sev1", result.counts.sev1},
                   {"sev2", result.counts.sev2},
                   {"sev3", result.counts.sev3},
                   {"repairs", result.counts.repairs}};
  j["reconfigurations"] = result.reconfigurations;
  j["escalations"] = result.escalations;
  j["lookup"] = {{"hits", result.lookup_hits}, {"misses", result.lookup_misses}};
  nlohmann::json down;
  for (const auto& [id, d] : result.downtime_s) down[id] = d;
  j["downtime_s"] = down;
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& [id, e] : result.initial_plan.tasks) {
    plan.push_back({{"id", id},
                    {"x", e.workers},
                    {"dp", e.layout.dp},
                    {"pp", e.layout.pp},
                    {"tp", e.layout.tp}});
  }
  j["initial_plan"] = plan;
  return j.dump(2);
}

std::string comparison_json(const ComparisonReport& report, const std::string& config_digest,
                            std::uint64_t seed) {
  nlohmann::json j;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  for (const auto& [name, w] : report.accumulated_waf) {
    j["policies"][name]["accumulated_waf"] = w;
    auto it = report.ratio_vs_unicron.find(name);
    if (it != report.ratio_vs_unicron.end()) j["policies"][name]["unicron_ratio"] = it->second;
  }
  return j.dump(2);
}

}  // namespace unicron::sim
