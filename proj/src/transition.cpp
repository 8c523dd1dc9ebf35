#include "unicron/transition.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "unicron/kernels.hpp"
#include "unicron/rng.hpp"

namespace unicron::transition {

IterationLayout IterationLayout::balanced(int dp, int pp, int micro_batches) {
  IterationLayout l;
  l.dp = dp;
  l.pp = pp;
  l.micro_batches = micro_batches;
  const int k = micro_batches / dp;
  l.ownership.resize(dp);
  for (int r = 0; r < dp; ++r) {
    for (int j = 0; j < k; ++j) l.ownership[r].push_back(r * k + j + 1);
  }
  return l;
}

std::vector<std::string> validate_layout(const IterationLayout& layout) {
  std::vector<std::string> v;
  if (layout.dp < 1) v.push_back("dp must be >= 1");
  if (layout.pp < 1) v.push_back("pp must be >= 1");
  if (layout.dp >= 1 && layout.micro_batches % layout.dp != 0)
    v.push_back("micro_batches must be divisible by dp at iteration start");
  if (static_cast<int>(layout.ownership.size()) != layout.dp)
    v.push_back("ownership must have one list per rank");

  std::set<int> seen;
  for (const auto& owned : layout.ownership) {
    for (int mb : owned) {
      if (mb < 1 || mb > layout.micro_batches) v.push_back("micro-batch id out of range");
      if (!seen.insert(mb).second) v.push_back("micro-batch owned twice");
    }
  }
  if (static_cast<int>(seen.size()) != layout.micro_batches)
    v.push_back("ownership does not cover 1..B");
  return v;
}

namespace {

std::uint64_t gradient_base(const GradConfig& cfg, int micro_batch) {
  std::uint64_t h = mix64(cfg.seed + kGolden);
  h = mix64(h + static_cast<std::uint64_t>(cfg.iteration) * kGolden);
  h = mix64(h + static_cast<std::uint64_t>(micro_batch) * kGolden);
  return h;
}

}  // namespace

GradVec micro_batch_gradient(const GradConfig& cfg, int micro_batch) {
  if (cfg.dims < 1) throw std::invalid_argument("dims must be >= 1");
  GradVec g(cfg.dims, 0);
  kernels::grad_accumulate(gradient_base(cfg, micro_batch), g.data(), g.size());
  return g;
}

GradVec reference_aggregate(const IterationLayout& layout, const GradConfig& cfg) {
  GradVec total(cfg.dims, 0);
  for (int mb = 1; mb <= layout.micro_batches; ++mb)
    kernels::grad_accumulate(gradient_base(cfg, mb), total.data(), total.size());
  return total;
}

std::size_t segment_begin(int dims, int pp, int stage) {
  return static_cast<std::size_t>(dims) * stage / pp;
}

std::size_t segment_end(int dims, int pp, int stage) {
  return static_cast<std::size_t>(dims) * (stage + 1) / pp;
}

int GradientState::reduced_count() const {
  int n = 0;
  for (bool r : segment_reduced)
    if (r) ++n;
  return n;
}

GradientState compute_until(const IterationLayout& layout, const GradConfig& cfg, int completed) {
  GradientState st;
  st.rank_accum.assign(layout.dp, GradVec(cfg.dims, 0));
  st.completed_per_rank.assign(layout.dp, 0);
  st.segment_reduced.assign(layout.pp, false);
  for (int r = 0; r < layout.dp; ++r) {
    const auto& owned = layout.ownership[r];
    const int upto = std::min<int>(completed, owned.size());
    for (int j = 0; j < upto; ++j)
      kernels::grad_accumulate(gradient_base(cfg, owned[j]), st.rank_accum[r].data(), cfg.dims);
    st.completed_per_rank[r] = upto;
  }
  return st;
}

void reduce_segments(GradientState& state, const IterationLayout& layout, const GradConfig& cfg,
                     int upto) {
  for (int s = 0; s < upto; ++s) {
    if (state.segment_reduced[s])
      throw std::logic_error("segment " + std::to_string(s) + " already reduced");
    const std::size_t lo = segment_begin(cfg.dims, layout.pp, s);
    const std::size_t hi = segment_end(cfg.dims, layout.pp, s);
    GradVec sum(hi - lo, 0);
    for (int r = 0; r < layout.dp; ++r)
      kernels::vec_add(sum.data(), state.rank_accum[r].data() + lo, hi - lo);
    for (int r = 0; r < layout.dp; ++r)
      std::copy(sum.begin(), sum.end(), state.rank_accum[r].begin() + lo);
    state.segment_reduced[s] = true;
  }
}

GradVec run_iteration(const IterationLayout& layout, const GradConfig& cfg) {
  GradientState st = compute_until(layout, cfg, layout.per_rank());
  reduce_segments(st, layout, cfg, layout.pp);
  return st.rank_accum[0];
}

std::vector<std::vector<int>> redistribute(const IterationLayout& layout, int failed_rank) {
  if (layout.dp < 2)
    throw std::logic_error("no surviving DP rank; fall back to checkpoint restart");
  if (failed_rank < 0 || failed_rank >= layout.dp)
    throw std::out_of_range("failed rank out of range");

  std::vector<int> survivors;
  for (int r = 0; r < layout.dp; ++r)
    if (r != failed_rank) survivors.push_back(r);

  std::vector<std::vector<int>> ownership = layout.ownership;
  std::vector<int> lost = ownership[failed_rank];
  std::sort(lost.begin(), lost.end());
  ownership[failed_rank].clear();

  std::size_t next = 0;
  for (int mb : lost) {
    ownership[survivors[next]].push_back(mb);
    next = (next + 1) % survivors.size();
  }
  return ownership;
}

ResumeResult resume_scenario1(const GradientState& state, const IterationLayout& layout,
                              const GradConfig& cfg, int failed_rank) {
  if (state.reduced_count() != 0)
    throw std::logic_error("scenario #1 applies before any all-reduce");
  auto ownership = redistribute(layout, failed_rank);  // throws when dp == 1

  ResumeResult res;
  GradientState st = state;
  st.rank_accum[failed_rank].assign(cfg.dims, 0);

  for (int r = 0; r < layout.dp; ++r) {
    if (r == failed_rank) continue;
    // remainder of the rank's own micro-batches, progress kept
    const auto& own = layout.ownership[r];
    for (std::size_t j = st.completed_per_rank[r]; j < own.size(); ++j) {
      kernels::grad_accumulate(gradient_base(cfg, own[j]), st.rank_accum[r].data(), cfg.dims);
      ++res.recomputed_micro_batches;
    }
    // the redistributed share, appended after the original ownership
    for (std::size_t j = own.size(); j < ownership[r].size(); ++j) {
      kernels::grad_accumulate(gradient_base(cfg, ownership[r][j]), st.rank_accum[r].data(),
                               cfg.dims);
      ++res.recomputed_micro_batches;
    }
  }

  GradVec sum(cfg.dims, 0);
  for (int r = 0; r < layout.dp; ++r) {
    if (r == failed_rank) continue;
    kernels::vec_add(sum.data(), st.rank_accum[r].data(), cfg.dims);
  }
  res.aggregate = std::move(sum);
  return res;
}

ResumeResult resume_scenario2(const GradientState& state, const IterationLayout& layout,
                              const GradConfig& cfg, int failed_rank, int failed_stage) {
  if (state.reduced_count() == 0)
    throw std::logic_error("scenario #2 applies once reduction has started");
  if (failed_stage < 0 || failed_stage >= layout.pp)
    throw std::out_of_range("failed stage out of range");

  ResumeResult res;
  GradientState st = state;
  const int reduced = st.reduced_count();

  if (st.segment_reduced[failed_stage]) {
    // the failed worker's gradients are already in the reduced segments, so
    // it is omitted and the remaining segments reduce normally
    for (int s = reduced; s < layout.pp; ++s) {
      const std::size_t lo = segment_begin(cfg.dims, layout.pp, s);
      const std::size_t hi = segment_end(cfg.dims, layout.pp, s);
      GradVec sum(hi - lo, 0);
      for (int r = 0; r < layout.dp; ++r)
        kernels::vec_add(sum.data(), st.rank_accum[r].data() + lo, hi - lo);
      std::copy(sum.begin(), sum.end(), st.rank_accum[0].begin() + lo);
    }
    res.aggregate = st.rank_accum[0];
    return res;
  }

  // Unreduced failed worker: the failed rank's contribution to every
  // unreduced segment is lost. Survivors recompute its micro-batches into
  // their unreduced segments only; reduced segments stay untouched.
  auto ownership = redistribute(layout, failed_rank);
  const std::size_t unreduced_lo = segment_begin(cfg.dims, layout.pp, reduced);

  for (int r = 0; r < layout.dp; ++r) {
    if (r == failed_rank) continue;
    const auto& own = layout.ownership[r];
    for (std::size_t j = own.size(); j < ownership[r].size(); ++j) {
      GradVec g = micro_batch_gradient(cfg, ownership[r][j]);
      kernels::vec_add(st.rank_accum[r].data() + unreduced_lo, g.data() + unreduced_lo,
                       cfg.dims - unreduced_lo);
      ++res.recomputed_micro_batches;
    }
  }

  GradVec aggregate = st.rank_accum[0];  // reduced prefix already global
  for (int s = reduced; s < layout.pp; ++s) {
    const std::size_t lo = segment_begin(cfg.dims, layout.pp, s);
    const std::size_t hi = segment_end(cfg.dims, layout.pp, s);
    GradVec sum(hi - lo, 0);
    for (int r = 0; r < layout.dp; ++r) {
      if (r == failed_rank) continue;
      kernels::vec_add(sum.data(), st.rank_accum[r].data() + lo, hi - lo);
    }
    std::copy(sum.begin(), sum.end(), aggregate.begin() + lo);
  }
  res.aggregate = std::move(aggregate);
  return res;
}

const char* state_source_name(StateSource s) {
  switch (s) {
    case StateSource::dp_replica: return "dp_replica";
    case StateSource::in_memory_checkpoint: return "in_memory_checkpoint";
    case StateSource::remote_checkpoint: return "remote_checkpoint";
  }
  return "unknown";
}

MigrationPlan plan_migration(const MigrationQuery& query, const MigrationCosts& costs) {
  StateSource source;
  double per_worker = 0.0;
  if (query.healthy_dp_replica) {
    source = StateSource::dp_replica;
    per_worker = costs.replica_copy_s;
  } else if (query.in_memory_available) {
    source = StateSource::in_memory_checkpoint;
    per_worker = costs.in_memory_load_s;
  } else if (query.remote_available) {
    source = StateSource::remote_checkpoint;
    per_worker = costs.remote_load_s;
  } else {
    throw std::runtime_error("no state source available; task must restart from scratch");
  }

  MigrationPlan plan;
  for (const auto& w : query.workers_needing_state) plan.sources[w] = source;
  // all workers issue replication requests simultaneously
  plan.cost_s = query.workers_needing_state.empty() ? 0.0 : per_worker;
  return plan;
}

double recomputation_cost(double elapsed_since_checkpoint_s, RecoveryPolicyKind policy,
                          double d_iter_s) {
  if (elapsed_since_checkpoint_s < 0)
    throw std::invalid_argument("elapsed time must be nonnegative");
  if (policy == RecoveryPolicyKind::restart) return elapsed_since_checkpoint_s;
  // resumption reuses partial results; at most one iteration's partial work
  return std::min(elapsed_since_checkpoint_s, 0.5 * d_iter_s);
}

}  // namespace unicron::transition
