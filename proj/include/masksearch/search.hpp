#pragma once

#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "masksearch/metrics.hpp"
#include "masksearch/rng.hpp"
#include "masksearch/saliency.hpp"

namespace masksearch {

/// Best mask found for one sparsity level plus the full objective trace.
/// The trace is one (step, best-so-far) pair per objective evaluation for
/// the evaluation-driven methods, so its length equals the number of
/// objective computations (the seen-set size); gradient search traces its
/// checkpoints instead. Best values are monotone in the metric direction.
struct LevelResult {
  double sparsity = 1.0;
  int keep_count = 0;  // unprotected keep count of the level's search space
  ExplanationMask mask;
  double value = 0.0;
  std::vector<std::pair<int64_t, double>> trace;
  int64_t evaluations = 0;
};

struct SearchResult {
  std::string method;
  Metric metric = Metric::kSufficiency;
  Scale scale = Scale::kProb;
  std::vector<LevelResult> levels;
  int64_t forward_passes = 0;
  int64_t backward_passes = 0;

  /// Sparsity-averaged objective: mean of the per-level best values.
  double objective() const;
};

/// Equal shares with the remainder assigned to the first (sparsest) level.
std::vector<int64_t> split_budget(int64_t total, int num_levels);

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

struct RandomSearchOptions {
  /// Spaces no larger than max(4 * level budget, this floor) are enumerated
  /// and shuffled, which is distribution-identical to uniform sampling
  /// without repetition and guarantees full coverage when the budget allows.
  int64_t enumerate_floor = 4096;
  int64_t enumerate_memory_cap = int64_t{1} << 18;
};

/// Uniform sampling of unseen exactly-k masks per level, budget split across
/// levels. Returns best per level; on budget exhaustion the best-so-far.
SearchResult random_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                           const RandomSearchOptions& options = {});

struct ExhaustiveOptions {
  int64_t per_level_cap = 50000;
};

/// Checks the entire per-level solution space. Ignores external budget
/// limits (it meters itself without one) but refuses spaces above the cap.
SearchResult exhaustive_search(const ModelHandle& model, const Instance& inst,
                               const ObjectiveSpec& spec, const ExhaustiveOptions& options = {},
                               const Imputer* imputer = nullptr, Rng* rng = nullptr);

struct GradientSearchOptions {
  double learning_rate = 0.1;
  double sparsity_weight = 1e-3;
  double temperature = 1.0;
  int samples_per_update = 1;
  int checkpoint_every = 20;
  /// The regularizer pulls the expected keep count toward
  /// ceiling(level * unprotected length); Comprehensiveness mirrors it so
  /// the removal side stays sparse.
  double target_sparsity_level = 0.05;
};

/// Continuous-state search: hard binary concrete samples of the mask drive a
/// straight-through gradient step on the state (decoupled-weight-decay
/// adaptive moments), with an L2 penalty between expected and target
/// sparsity; every checkpoint_every updates the state is binarized per level
/// and the metric checkpointed.
SearchResult gradient_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                             const GradientSearchOptions& options = {});

struct TaylorSearchOptions {
  int beam_width = 5;
  int steps = 50;
};

/// Beam search over pairwise keep/hide flips ranked by a first-order
/// forecast of the loss change, evaluated exactly before acceptance.
SearchResult taylor_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                           const TaylorSearchOptions& options = {});

struct OrderedSearchOptions {
  double stage1_fraction = 0.25;
  LimeOptions lime;
};

/// Two stages: LIME for linear scores (25% of the budget), then best-first
/// enumeration of exactly-k masks in score order for the remainder.
SearchResult ordered_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                            const OrderedSearchOptions& options = {});

struct PlsOptions {
  int runs = 10;
};

/// Parallel local search: r runs of strict-improvement hill climbing over
/// Hamming-distance-2 neighbors, proposals drawn by a random walk that stops
/// at the first mask absent from the shared seen-set, so no objective value
/// is ever computed twice within a level.
SearchResult parallel_local_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget,
                                   Rng& rng, const PlsOptions& options = {});

// ---------------------------------------------------------------------------
// Building blocks (exposed for tests and diagnostics)
// ---------------------------------------------------------------------------

/// Best-first enumeration of k-subsets of {0..n-1} ordered by total theta
/// score (descending by default), ties by ascending lexicographic order of
/// the sorted index tuple. The root is the top-k set; successors shift one
/// selected rank to the next rank position when vacant, deduplicated by
/// digest, which together with the heap order yields the exact global order.
class OrderedEnumerator {
 public:
  OrderedEnumerator(std::vector<double> theta, int k, bool descending = true);

  bool done() const { return heap_.empty(); }
  /// Next subset as sorted original indices, or nullopt when exhausted.
  std::optional<std::vector<int>> next();

 private:
  struct Node {
    double score;
    std::vector<int> ranks;  // ascending rank positions
    std::vector<int> items;  // ascending original indices (tie key)
  };
  struct NodeAfter {
    bool operator()(const Node& a, const Node& b) const {
      if (a.score != b.score) return a.score < b.score;
      return a.items > b.items;  // smaller tuple pops first
    }
  };

  void push_ranks(std::vector<int> ranks);

  std::vector<double> theta_;
  std::vector<int> rank_to_item_;
  int n_ = 0, k_ = 0;
  std::priority_queue<Node, std::vector<Node>, NodeAfter> heap_;
  std::unordered_set<MaskKey, MaskKeyHash> pushed_;
};

struct GumbelSample {
  uint8_t hard = 0;
  double soft = 0.0;
  double soft_grad = 0.0;  // d soft / d logit at the drawn noise
};

/// Binary concrete sample with a straight-through hard value;
/// P(hard=1) = sigmoid(logit) at any temperature.
GumbelSample sample_gumbel_binary(double logit, double temperature, Rng& rng);

/// Decoupled-weight-decay adaptive-moment optimizer over a flat state.
struct AdamW {
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  void step(std::vector<double>& state, std::span<const double> grad);

  std::vector<double> m, v;
  int64_t t = 0;
};

struct SwapCandidate {
  int drop = 0;      // unprotected index currently kept
  int add = 0;       // unprotected index currently hidden
  double forecast = 0.0;  // first-order loss change of the flip
};

/// All sparsity-preserving flips ranked by the first-order forecast
/// (g[add] - g[drop]): most loss-reducing first for Sufficiency, most
/// loss-increasing first for Comprehensiveness. Ties by (drop, add).
std::vector<SwapCandidate> taylor_swaps(std::span<const double> grad_unprotected,
                                        std::span<const uint8_t> keep_unprotected, Metric metric,
                                        int max_candidates);

}  // namespace masksearch
