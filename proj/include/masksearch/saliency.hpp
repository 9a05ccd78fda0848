#pragma once

#include <string>
#include <vector>

#include "masksearch/metrics.hpp"
#include "masksearch/rng.hpp"

namespace masksearch {

enum class SalienceMethod { kLime, kVanillaGradient, kIntegratedGradients };

const char* salience_method_name(SalienceMethod m);

/// Per-token salience scores. Protected positions are excluded from ranking
/// entirely: binarize_topk never selects them, whatever their entries hold
/// (gradient methods report raw full-length scores; LIME leaves protected
/// entries at 0 because they never vary in the regression).
struct SalienceVector {
  std::vector<double> scores;
  SalienceMethod method = SalienceMethod::kLime;
  int64_t passes_used = 0;
  std::vector<std::string> warnings;
};

struct LimeOptions {
  int num_samples = 996;
  /// Kernel: exp(-(scale * (1 - cos(x, x~)))^2 / width^2). The width default
  /// follows the reference package's exponential-kernel setting; it is a
  /// tunable, not a derived quantity.
  double kernel_width = 25.0;
  double kernel_scale = 100.0;
  double ridge_alpha = 1.0;
  /// Greedy forward-selection branch for very short inputs; ridge is the
  /// default path everywhere.
  bool forward_selection = false;
  int forward_selection_max_features = 6;
};

/// Sample count available to LIME inside a method budget: everything except
/// one final metric evaluation per sparsity level.
int lime_sample_count(int64_t budget, int num_levels);

/// LIME with attention-mask perturbations: draws num_samples local masks
/// (each hides a uniformly random count of uniformly placed unprotected
/// positions), regresses the predicted-class probability on the binary mask
/// with kernel weights, and returns the regression coefficients as scores.
SalienceVector lime(const ModelHandle& model, const Instance& inst, int predicted,
                    const LimeOptions& options, BudgetMeter& meter, Rng& rng);

/// Gradient of the predicted-class probability w.r.t. each token embedding,
/// summed over the embedding dimension. One forward plus one backward pass.
SalienceVector vanilla_gradient(const ModelHandle& model, const Instance& inst, int predicted,
                                BudgetMeter& meter);

/// Integrated gradients along the straight path from a repeated hide-token
/// embedding baseline (protected positions keep their own embeddings) to the
/// input, midpoint rule with `steps` forward/backward pairs. By the
/// completeness property the token scores sum to the difference in
/// predicted-class probability between input and baseline.
SalienceVector integrated_gradients(const ModelHandle& model, const Instance& inst, int predicted,
                                    int steps, BudgetMeter& meter);

/// Default IG step count inside a method budget: forward/backward pairs fill
/// whatever the final per-level metric evaluations leave.
int ig_step_count(int64_t budget, int num_levels);

/// Top-k binarization into one mask per sparsity level. For Sufficiency the
/// k highest-scoring unprotected tokens are kept, fewer when fewer than k
/// scores are non-negative; for Comprehensiveness the highest-scoring tokens
/// are removed under the same rule. Ties break toward the lower index.
std::vector<ExplanationMask> binarize_topk(const SalienceVector& scores, const Instance& inst,
                                           const ObjectiveSpec& spec);

}  // namespace masksearch
