#include "masksearch/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace masksearch {

namespace {
constexpr double kLogClamp = 1e-12;
}

const char* metric_name(Metric m) {
  return m == Metric::kSufficiency ? "suff" : "comp";
}

Metric parse_metric(const std::string& name) {
  if (name == "suff") return Metric::kSufficiency;
  if (name == "comp") return Metric::kComprehensiveness;
  fail(Errc::kInvalidInput, "unknown metric '" + name + "' (expected suff|comp)");
}

const char* scale_name(Scale s) { return s == Scale::kProb ? "prob" : "woe"; }

Scale parse_scale(const std::string& name) {
  if (name == "prob") return Scale::kProb;
  if (name == "woe") return Scale::kWoe;
  fail(Errc::kInvalidInput, "unknown scale '" + name + "' (expected prob|woe)");
}

Direction direction_of(Metric m) {
  return m == Metric::kSufficiency ? Direction::kSufficiency : Direction::kComprehensiveness;
}

bool is_improvement(Metric m, double candidate, double incumbent) {
  return m == Metric::kSufficiency ? candidate < incumbent : candidate > incumbent;
}

ObjectiveSpec default_objective(Metric m) {
  ObjectiveSpec spec;
  spec.metric = m;
  spec.sparsity = m == Metric::kSufficiency ? SparsitySpec::sufficiency_default()
                                            : SparsitySpec::comprehensiveness_default();
  return spec;
}

void validate_objective(const ObjectiveSpec& spec) {
  if (spec.sparsity.levels.empty()) fail(Errc::kInvalidInput, "objective has no sparsity levels");
  for (double s : spec.sparsity.levels) {
    if (!(s > 0.0) || s > 1.0) fail(Errc::kInvalidSparsity, "sparsity level must lie in (0, 1]");
  }
  if (spec.sparsity.direction != direction_of(spec.metric)) {
    fail(Errc::kInvalidInput, "sparsity spec direction does not match the metric");
  }
}

double log_odds(std::span<const double> probs, int predicted) {
  const double p = std::clamp(probs[static_cast<size_t>(predicted)], kLogClamp, 1.0 - kLogClamp);
  const double rest = std::clamp(1.0 - probs[static_cast<size_t>(predicted)], kLogClamp, 1.0 - kLogClamp);
  return std::log(p) - std::log(rest);
}

EvalContext::EvalContext(const ModelHandle& model, const Instance& inst, const ReplaceFn& replace,
                         BudgetMeter& meter, const Imputer* imputer, Rng* rng)
    : model_(&model), inst_(&inst), replace_(replace), meter_(&meter), imputer_(imputer), rng_(rng) {
  validate_instance(inst);
  BudgetMeter setup = BudgetMeter::unlimited();
  raw_probs_ = model.predict(raw_query(inst), setup);
  predicted_ = argmax_lowest(raw_probs_);
  raw_log_odds_ = log_odds(raw_probs_, predicted_);
}

double EvalContext::metric_value(const ExplanationMask& mask, Scale scale) {
  const MaskKey key = pack_bits(mask.keep);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    const std::vector<double> probs =
        apply_replace(replace_, *model_, *inst_, mask, *meter_, imputer_, rng_);
    CachedValue v;
    v.prob = raw_probs_[static_cast<size_t>(predicted_)] - probs[static_cast<size_t>(predicted_)];
    v.woe = raw_log_odds_ - log_odds(probs, predicted_);
    it = cache_.emplace(key, v).first;
    ++evaluations_;
  }
  return scale == Scale::kProb ? it->second.prob : it->second.woe;
}

namespace {

MetricValue one_shot(Metric metric, Scale scale, const ModelHandle& model, const Instance& inst,
                     const ExplanationMask& mask, const ReplaceFn& replace, BudgetMeter& meter,
                     const Imputer* imputer, Rng* rng) {
  EvalContext ctx(model, inst, replace, meter, imputer, rng);
  (void)metric;
  MetricValue out;
  out.value = ctx.metric_value(mask, scale);
  out.scale = scale;
  out.sparsity = mask.sparsity_target;
  return out;
}

}  // namespace

MetricValue suff(const ModelHandle& model, const Instance& inst, const ExplanationMask& mask,
                 const ReplaceFn& replace, BudgetMeter& meter, const Imputer* imputer, Rng* rng) {
  return one_shot(Metric::kSufficiency, Scale::kProb, model, inst, mask, replace, meter, imputer, rng);
}

MetricValue comp(const ModelHandle& model, const Instance& inst, const ExplanationMask& mask,
                 const ReplaceFn& replace, BudgetMeter& meter, const Imputer* imputer, Rng* rng) {
  return one_shot(Metric::kComprehensiveness, Scale::kProb, model, inst, mask, replace, meter, imputer, rng);
}

MetricValue woe(Metric metric, const ModelHandle& model, const Instance& inst,
                const ExplanationMask& mask, const ReplaceFn& replace, BudgetMeter& meter,
                const Imputer* imputer, Rng* rng) {
  return one_shot(metric, Scale::kWoe, model, inst, mask, replace, meter, imputer, rng);
}

double objective_score(const ObjectiveSpec& spec, const ModelHandle& model, const Instance& inst,
                       std::span<const ExplanationMask> masks, BudgetMeter& meter,
                       const Imputer* imputer, Rng* rng) {
  validate_objective(spec);
  if (masks.size() != spec.sparsity.levels.size()) {
    fail(Errc::kInvalidInput, "need exactly one mask per sparsity level");
  }
  EvalContext ctx(model, inst, spec.replace, meter, imputer, rng);
  const int unprot = inst.unprotected_count();
  double total = 0.0;
  for (size_t i = 0; i < masks.size(); ++i) {
    const double s = spec.sparsity.levels[i];
    const int k = level_keep_count(unprot, s, spec.sparsity.direction);
    int kept_unprot = 0;
    for (int pos = 0; pos < inst.length(); ++pos) {
      if (!inst.is_protected[static_cast<size_t>(pos)] && masks[i].keep[static_cast<size_t>(pos)]) ++kept_unprot;
    }
    if (spec.metric == Metric::kSufficiency ? kept_unprot > k : kept_unprot < k) {
      fail(Errc::kInvalidInput, "mask violates the sparsity constraint of its level");
    }
    total += ctx.metric_value(masks[i], spec.scale);
  }
  return total / static_cast<double>(masks.size());
}

}  // namespace masksearch
