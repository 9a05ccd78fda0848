#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "masksearch/metrics.hpp"
#include "masksearch/toy_model.hpp"
#include "oracles.hpp"

using namespace masksearch;

namespace {

/// Fixed-output double: full-keep yields one distribution, everything else
/// another. Lets tests pin exact metric arithmetic.
class TwoValueModel final : public ModelHandle {
 public:
  TwoValueModel(std::vector<double> raw, std::vector<double> masked)
      : raw_(std::move(raw)), masked_(std::move(masked)) {}
  int num_classes() const override { return static_cast<int>(raw_.size()); }
  Capabilities capabilities() const override { return {}; }
  std::vector<double> predict(const MaskedQuery& q, BudgetMeter& meter) const override {
    meter.charge(1, 0);
    if (q.tokens.size() != full_len_) return masked_;
    for (double w : q.weights) {
      if (w != 1.0) return masked_;
    }
    return raw_;
  }
  void set_full_len(size_t n) { full_len_ = n; }

 private:
  std::vector<double> raw_, masked_;
  size_t full_len_ = 2;
};

}  // namespace

TEST_CASE("constant model scores zero for every mask") {
  ToyClassifier model({16, 4, 4, 3}, 1);
  std::fill(model.w2.data.begin(), model.w2.data.end(), 0.0);
  const Instance inst = oracles::make_unprotected_instance({3, 5, 7, 9});
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  for (const std::vector<int>& kept : {std::vector<int>{0}, {1, 2}, {0, 1, 2, 3}}) {
    const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, 1.0);
    CHECK(ctx.metric_value(mask, Scale::kProb) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("full-keep masks score exactly zero") {
  const ToyClassifier model({16, 4, 4, 3}, 2);
  const Instance inst = oracles::make_instance({3, 5, 7, 9}, {1, 0, 0, 0}, 0);
  BudgetMeter meter = BudgetMeter::unlimited();
  const MetricValue v = suff(model, inst, full_keep_mask(inst), {ReplaceKind::kAttentionMask, 10}, meter);
  CHECK(v.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("keep-one masks match a brute-force scalar enumeration oracle") {
  const ToyClassifier model({16, 5, 4, 3}, 3);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13});
  const std::vector<double> raw = oracles::scalar_forward(model, inst.tokens, {1, 1, 1});
  const int yhat = argmax_lowest(raw);
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  for (int keep = 0; keep < 3; ++keep) {
    std::vector<double> weights(3, 0.0);
    weights[static_cast<size_t>(keep)] = 1.0;
    const std::vector<double> replaced = oracles::scalar_forward(model, inst.tokens, weights);
    const double expected = raw[static_cast<size_t>(yhat)] - replaced[static_cast<size_t>(yhat)];
    const ExplanationMask mask = mask_from_unprotected_subset(inst, std::vector<int>{keep}, 0.34);
    CHECK(ctx.metric_value(mask, Scale::kProb) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("sufficiency and comprehensiveness are the same raw number") {
  const ToyClassifier model({16, 5, 4, 3}, 4);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2, 6});
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    const std::vector<int> kept = rng.sample_indices(5, k);
    const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, 0.9);
    BudgetMeter m1 = BudgetMeter::unlimited();
    BudgetMeter m2 = BudgetMeter::unlimited();
    const MetricValue s = suff(model, inst, mask, {ReplaceKind::kAttentionMask, 10}, m1);
    const MetricValue c = comp(model, inst, mask, {ReplaceKind::kAttentionMask, 10}, m2);
    CHECK(s.value == c.value);
  }
}

TEST_CASE("prob-scale values stay within [-1, 1]") {
  const ToyClassifier model({16, 5, 4, 3}, 6);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2, 6, 8});
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, {ReplaceKind::kMaskToken, 10}, meter);
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_int(5));
    const ExplanationMask mask = mask_from_unprotected_subset(inst, rng.sample_indices(6, k), 1.0);
    const double v = ctx.metric_value(mask, Scale::kProb);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("weight of evidence has the closed-form value on a 0.9 to 0.5 drop") {
  TwoValueModel model({0.1, 0.9}, {0.5, 0.5});
  model.set_full_len(2);
  const Instance inst = oracles::make_unprotected_instance({1, 2});
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  CHECK(ctx.predicted() == 1);
  const ExplanationMask mask = mask_from_unprotected_subset(inst, std::vector<int>{0}, 0.5);
  const double woe_value = ctx.metric_value(mask, Scale::kWoe);
  CHECK(woe_value == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  // Identical inputs give exactly zero.
  CHECK(ctx.metric_value(full_keep_mask(inst), Scale::kWoe) == doctest::Approx(0.0));
}

TEST_CASE("woe and prob scales rank masks identically on binary models") {
  const ToyClassifier model({16, 5, 4, 2}, 8);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2, 6, 8, 11, 3});
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  std::vector<double> prob_values, woe_values;
  for (const std::vector<int>& kept : oracles::all_ksubsets(8, 3)) {
    const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, 0.5);
    prob_values.push_back(ctx.metric_value(mask, Scale::kProb));
    woe_values.push_back(ctx.metric_value(mask, Scale::kWoe));
  }
  for (size_t i = 0; i < prob_values.size(); ++i) {
    for (size_t j = i + 1; j < prob_values.size(); ++j) {
      const double dp = prob_values[i] - prob_values[j];
      const double dw = woe_values[i] - woe_values[j];
      if (dp == 0.0) {
        CHECK(std::abs(dw) < 1e-12);
      } else {
        CHECK(dp * dw > 0.0);
      }
    }
  }
}

TEST_CASE("objective_score averages per-level values") {
  const ToyClassifier model({16, 5, 4, 3}, 9);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2, 6, 8, 11, 3, 5, 7});

  SUBCASE("full-keep masks under comprehensiveness give zero") {
    ObjectiveSpec spec = default_objective(Metric::kComprehensiveness);
    std::vector<ExplanationMask> masks;
    for (double level : spec.sparsity.levels) masks.push_back(full_keep_mask(inst, level));
    BudgetMeter meter = BudgetMeter::unlimited();
    CHECK(objective_score(spec, model, inst, masks, meter) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("a single level equals the per-level metric") {
    ObjectiveSpec spec = default_objective(Metric::kSufficiency);
    spec.sparsity.levels = {0.2};
    const ExplanationMask mask = mask_from_unprotected_subset(inst, std::vector<int>{1, 4}, 0.2);
    BudgetMeter m1 = BudgetMeter::unlimited();
    BudgetMeter m2 = BudgetMeter::unlimited();
    const double score = objective_score(spec, model, inst, std::vector<ExplanationMask>{mask}, m1);
    CHECK(score == suff(model, inst, mask, spec.replace, m2).value);
  }

  SUBCASE("four levels average the logged per-level values") {
    ObjectiveSpec spec = default_objective(Metric::kSufficiency);
    std::vector<ExplanationMask> masks;
    std::vector<double> values;
    BudgetMeter meter = BudgetMeter::unlimited();
    EvalContext ctx(model, inst, spec.replace, meter);
    for (double level : spec.sparsity.levels) {
      const int k = sparsity_count(10, level);
      std::vector<int> kept(static_cast<size_t>(k));
      for (int i = 0; i < k; ++i) kept[static_cast<size_t>(i)] = i;
      masks.push_back(mask_from_unprotected_subset(inst, kept, level));
      values.push_back(ctx.metric_value(masks.back(), Scale::kProb));
    }
    const double expected = (values[0] + values[1] + values[2] + values[3]) / 4.0;
    BudgetMeter fresh = BudgetMeter::unlimited();
    CHECK(objective_score(spec, model, inst, masks, fresh) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("mask/level mismatch is rejected") {
    ObjectiveSpec spec = default_objective(Metric::kSufficiency);
    std::vector<ExplanationMask> masks = {full_keep_mask(inst)};
    BudgetMeter meter = BudgetMeter::unlimited();
    CHECK_THROWS_AS(objective_score(spec, model, inst, masks, meter), Error);
  }

  SUBCASE("sufficiency rejects masks that keep too much") {
    ObjectiveSpec spec = default_objective(Metric::kSufficiency);
    std::vector<ExplanationMask> masks;
    for (double level : spec.sparsity.levels) masks.push_back(full_keep_mask(inst, level));
    BudgetMeter meter = BudgetMeter::unlimited();
    CHECK_THROWS_AS(objective_score(spec, model, inst, masks, meter), Error);
  }
}

TEST_CASE("the evaluation cache never double-charges") {
  const ToyClassifier model({16, 5, 4, 3}, 10);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2});
  BudgetMeter meter(3);
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  const ExplanationMask mask = mask_from_unprotected_subset(inst, std::vector<int>{0, 2}, 0.5);
  const double first = ctx.metric_value(mask, Scale::kProb);
  CHECK(meter.total() == 1);
  CHECK(ctx.evaluations() == 1);
  // Same mask again: no charge, same value, both scales served.
  CHECK(ctx.metric_value(mask, Scale::kProb) == first);
  (void)ctx.metric_value(mask, Scale::kWoe);
  CHECK(meter.total() == 1);
  CHECK(ctx.evaluations() == 1);
}

TEST_CASE("budget exhaustion during evaluation propagates") {
  const ToyClassifier model({16, 5, 4, 3}, 11);
  const Instance inst = oracles::make_unprotected_instance({4, 9, 13, 2});
  BudgetMeter meter(1);
  EvalContext ctx(model, inst, {ReplaceKind::kAttentionMask, 10}, meter);
  const ExplanationMask a = mask_from_unprotected_subset(inst, std::vector<int>{0}, 0.25);
  const ExplanationMask b = mask_from_unprotected_subset(inst, std::vector<int>{1}, 0.25);
  (void)ctx.metric_value(a, Scale::kProb);
  CHECK_THROWS_AS(ctx.metric_value(b, Scale::kProb), Error);
  CHECK(meter.total() == 1);
}

TEST_CASE("objective validation catches direction mismatches") {
  ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  spec.sparsity.direction = Direction::kComprehensiveness;
  CHECK_THROWS_AS(validate_objective(spec), Error);
  spec = default_objective(Metric::kSufficiency);
  spec.sparsity.levels.push_back(1.5);
  CHECK_THROWS_AS(validate_objective(spec), Error);
}
