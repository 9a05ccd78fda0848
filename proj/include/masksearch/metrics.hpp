#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "masksearch/core.hpp"
#include "masksearch/replace.hpp"

namespace masksearch {

enum class Metric { kSufficiency, kComprehensiveness };
enum class Scale { kProb, kWoe };

const char* metric_name(Metric m);
Metric parse_metric(const std::string& name);
const char* scale_name(Scale s);
Scale parse_scale(const std::string& name);

Direction direction_of(Metric m);

/// Strictly better under the metric's optimization direction (Sufficiency is
/// minimized, Comprehensiveness maximized).
bool is_improvement(Metric m, double candidate, double incumbent);

struct MetricValue {
  double value = 0.0;
  Scale scale = Scale::kProb;
  double sparsity = 1.0;
};

struct ObjectiveSpec {
  Metric metric = Metric::kSufficiency;
  Scale scale = Scale::kProb;
  SparsitySpec sparsity = SparsitySpec::sufficiency_default();
  ReplaceFn replace;
};

ObjectiveSpec default_objective(Metric m);
void validate_objective(const ObjectiveSpec& spec);

/// Log-odds of the predicted class against the summed mass of all other
/// classes, probabilities clamped into [1e-12, 1 - 1e-12] before the logs.
double log_odds(std::span<const double> probs, int predicted);

/// Per-instance evaluation session: pins the explained prediction, owns the
/// metric cache, and charges the budget meter.
///
/// The raw prediction (class and probabilities of the unmasked input) is the
/// artifact being explained, so computing it does not draw from the method
/// budget; every counterfactual evaluation does. Values are cached by mask
/// digest so that re-evaluating a mask never double-charges; together with
/// the searches' seen-sets this guarantees the objective is never recomputed
/// for the same explanation.
class EvalContext {
 public:
  EvalContext(const ModelHandle& model, const Instance& inst, const ReplaceFn& replace,
              BudgetMeter& meter, const Imputer* imputer = nullptr, Rng* rng = nullptr);

  const std::vector<double>& raw_probs() const { return raw_probs_; }
  int predicted() const { return predicted_; }

  /// Metric value for a mask: f(x)_y - f(Replace(x,e))_y on the predicted
  /// class, in the requested scale. Identical raw number for Sufficiency and
  /// Comprehensiveness; only the optimization direction differs.
  double metric_value(const ExplanationMask& mask, Scale scale);

  int64_t evaluations() const { return evaluations_; }
  BudgetMeter& meter() { return *meter_; }
  const ModelHandle& model() const { return *model_; }
  const Instance& instance() const { return *inst_; }
  const ReplaceFn& replace() const { return replace_; }
  const Imputer* imputer() const { return imputer_; }
  Rng* rng() { return rng_; }

 private:
  struct CachedValue {
    double prob;
    double woe;
  };

  const ModelHandle* model_;
  const Instance* inst_;
  ReplaceFn replace_;
  BudgetMeter* meter_;
  const Imputer* imputer_;
  Rng* rng_;
  std::vector<double> raw_probs_;
  int predicted_ = 0;
  double raw_log_odds_ = 0.0;
  int64_t evaluations_ = 0;
  std::unordered_map<MaskKey, CachedValue, MaskKeyHash> cache_;
};

// One-shot forms of the metric operations. Each computes the explained
// prediction once (outside the meter) and charges the meter for the
// counterfactual evaluation only; batch work should go through EvalContext.
MetricValue suff(const ModelHandle& model, const Instance& inst, const ExplanationMask& mask,
                 const ReplaceFn& replace, BudgetMeter& meter, const Imputer* imputer = nullptr,
                 Rng* rng = nullptr);
MetricValue comp(const ModelHandle& model, const Instance& inst, const ExplanationMask& mask,
                 const ReplaceFn& replace, BudgetMeter& meter, const Imputer* imputer = nullptr,
                 Rng* rng = nullptr);
MetricValue woe(Metric metric, const ModelHandle& model, const Instance& inst,
                const ExplanationMask& mask, const ReplaceFn& replace, BudgetMeter& meter,
                const Imputer* imputer = nullptr, Rng* rng = nullptr);

/// Mean per-level metric value over one mask per sparsity level.
double objective_score(const ObjectiveSpec& spec, const ModelHandle& model, const Instance& inst,
                       std::span<const ExplanationMask> masks, BudgetMeter& meter,
                       const Imputer* imputer = nullptr, Rng* rng = nullptr);

}  // namespace masksearch
