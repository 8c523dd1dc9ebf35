#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unicron/domain.hpp"

// Transition strategy: micro-batch bookkeeping for a pipeline/data parallel
// iteration, failure-point-aware resumption (before and after the gradient
// all-reduce), nearest-principle state migration, and the recomputation
// cost model. The gradient engine works on deterministic integer vectors so
// resumption equivalence is exact, not tolerance-based.

namespace unicron::transition {

using GradVec = std::vector<std::int64_t>;

struct IterationLayout {
  int dp = 1;
  int pp = 1;
  int micro_batches = 0;                     // B, divisible by dp at iteration start
  std::vector<std::vector<int>> ownership;   // rank -> owned micro-batch ids (1..B)

  int per_rank() const { return micro_batches / dp; }  // k = B / DP

  // ranks own contiguous id ranges: rank i gets [i*k+1, (i+1)*k]
  static IterationLayout balanced(int dp, int pp, int micro_batches);
};

std::vector<std::string> validate_layout(const IterationLayout& layout);

struct GradConfig {
  std::uint64_t seed = 0;
  std::int64_t iteration = 1;
  int dims = 64;
};

// Deterministic stand-in for a backward pass: a pure function of
// (seed, iteration, micro-batch), identical regardless of which rank
// computes it.
GradVec micro_batch_gradient(const GradConfig& cfg, int micro_batch);

// independent oracle: plain sum of micro_batch_gradient over 1..B
GradVec reference_aggregate(const IterationLayout& layout, const GradConfig& cfg);

// segment s covers components [dims*s/pp, dims*(s+1)/pp)
std::size_t segment_begin(int dims, int pp, int stage);
std::size_t segment_end(int dims, int pp, int stage);

struct GradientState {
  std::vector<GradVec> rank_accum;        // per DP rank accumulated gradient
  std::vector<int> completed_per_rank;    // micro-batches finished per rank
  std::vector<bool> segment_reduced;      // per PP-stage segment; set at most once

  int reduced_count() const;
};

// run every rank through its first `completed` owned micro-batches
GradientState compute_until(const IterationLayout& layout, const GradConfig& cfg, int completed);

// all-reduce segments [0, upto) in ascending stage order across all ranks;
// after a segment reduces, every rank's copy of it holds the global sum
void reduce_segments(GradientState& state, const IterationLayout& layout, const GradConfig& cfg,
                     int upto);

// full failure-free iteration: accumulate everything, reduce every segment
GradVec run_iteration(const IterationLayout& layout, const GradConfig& cfg);

// Deal the failed rank's micro-batches round-robin (ascending micro-batch
// id, ascending surviving rank id) onto the DP-1 survivors. Throws
// std::logic_error when dp == 1 (no survivors; checkpoint restart instead).
std::vector<std::vector<int>> redistribute(const IterationLayout& layout, int failed_rank);

struct ResumeResult {
  GradVec aggregate;
  int recomputed_micro_batches = 0;  // work the survivors had to redo
};

// Failure before any all-reduce: survivors keep their progress, finish their
// own remainder plus the failed rank's redistributed micro-batches, then
// reduce. The aggregate equals the failure-free reference exactly.
ResumeResult resume_scenario1(const GradientState& state, const IterationLayout& layout,
                              const GradConfig& cfg, int failed_rank);

// Failure once reduction has started, for worker (failed_rank, failed_stage).
// Already-reduced segments are never recomputed or overwritten; if the failed
// worker's segment was reduced the worker is simply omitted, otherwise the
// failed rank's micro-batches are redistributed and only unreduced segments
// are recomputed.
ResumeResult resume_scenario2(const GradientState& state, const IterationLayout& layout,
                              const GradConfig& cfg, int failed_rank, int failed_stage);

enum class StateSource { dp_replica, in_memory_checkpoint, remote_checkpoint };
const char* state_source_name(StateSource s);

struct MigrationCosts {
  double replica_copy_s = 10.0;
  double in_memory_load_s = 30.0;
  double remote_load_s = 300.0;
};

struct MigrationQuery {
  std::vector<std::string> workers_needing_state;
  bool healthy_dp_replica = false;   // some healthy rank still holds the state
  bool in_memory_available = true;   // hierarchical in-memory checkpoint reachable
  bool remote_available = true;
};

struct MigrationPlan {
  std::map<std::string, StateSource> sources;
  double cost_s = 0.0;  // replication runs simultaneously, so max, not sum
};

// Nearest principle: dp_replica, else in-memory checkpoint, else remote
// checkpoint. Throws std::runtime_error when no source exists.
MigrationPlan plan_migration(const MigrationQuery& query, const MigrationCosts& costs);

enum class RecoveryPolicyKind { restart, unicron };

// Lost work after a failure: a full restart recomputes everything since the
// last checkpoint; the resumption path loses at most one iteration's
// partial work.
double recomputation_cost(double elapsed_since_checkpoint_s, RecoveryPolicyKind policy,
                          double d_iter_s);

}  // namespace unicron::transition
