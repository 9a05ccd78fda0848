#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "masksearch/pipeline.hpp"
#include "masksearch/search.hpp"
#include "masksearch/toy_model.hpp"
#include "oracles.hpp"

using namespace masksearch;

namespace {

Instance random_instance(Rng& rng, int vocab, int len, int protected_prefix = 0) {
  std::vector<int32_t> tokens(static_cast<size_t>(len));
  for (int32_t& t : tokens) t = 1 + static_cast<int32_t>(rng.uniform_int(vocab - 1));
  std::vector<uint8_t> prot(static_cast<size_t>(len), 0);
  for (int i = 0; i < protected_prefix; ++i) prot[static_cast<size_t>(i)] = 1;
  return oracles::make_instance(std::move(tokens), std::move(prot), 0);
}

void check_level_invariants(const Instance& inst, const ObjectiveSpec& spec,
                            const SearchResult& result) {
  REQUIRE(result.levels.size() == spec.sparsity.levels.size());
  const int u = inst.unprotected_count();
  for (size_t li = 0; li < result.levels.size(); ++li) {
    const LevelResult& level = result.levels[li];
    CHECK_NOTHROW(validate_mask(inst, level.mask));
    int kept_unprot = 0;
    for (int i = 0; i < inst.length(); ++i) {
      if (!inst.is_protected[static_cast<size_t>(i)] && level.mask.keep[static_cast<size_t>(i)]) ++kept_unprot;
    }
    CHECK(kept_unprot == level_keep_count(u, spec.sparsity.levels[li], spec.sparsity.direction));
    // Monotone best-so-far trace.
    for (size_t t = 1; t < level.trace.size(); ++t) {
      if (spec.metric == Metric::kSufficiency) {
        CHECK(level.trace[t].second <= level.trace[t - 1].second);
      } else {
        CHECK(level.trace[t].second >= level.trace[t - 1].second);
      }
    }
  }
}

}  // namespace

TEST_CASE("budget shares are equal with the remainder on the sparsest level") {
  CHECK(split_budget(1000, 4) == std::vector<int64_t>{250, 250, 250, 250});
  CHECK(split_budget(750, 4) == std::vector<int64_t>{189, 187, 187, 187});
  CHECK(split_budget(7, 3) == std::vector<int64_t>{3, 2, 2});
  CHECK(split_budget(5, 1) == std::vector<int64_t>{5});
}

TEST_CASE("random search returns the single mask of a singleton space immediately") {
  const ToyClassifier model({16, 5, 4, 3}, 1);
  const Instance inst = oracles::make_unprotected_instance({3, 5, 7});
  ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  spec.sparsity.levels = {1.0};  // k = 3 of 3
  BudgetMeter meter(50);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(2);
  const SearchResult result = random_search(ctx, spec, 50, rng);
  CHECK(result.levels[0].evaluations == 1);
  CHECK(result.levels[0].mask.kept_count() == 3);
}

TEST_CASE("random search with full coverage equals exhaustive search exactly") {
  Rng instance_rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const ToyClassifier model({16, 5, 4, 3}, 10 + static_cast<uint64_t>(trial));
    const Instance inst = random_instance(instance_rng, 16, 7 + static_cast<int>(instance_rng.uniform_int(4)));
    for (Metric metric : {Metric::kSufficiency, Metric::kComprehensiveness}) {
      const ObjectiveSpec spec = default_objective(metric);
      int64_t max_space = 0;
      for (double s : spec.sparsity.levels) {
        max_space = std::max(max_space,
                             binomial_capped(inst.unprotected_count(),
                                             level_keep_count(inst.unprotected_count(), s,
                                                              spec.sparsity.direction)));
      }
      const int64_t budget = 4 * (max_space + 8);
      BudgetMeter meter(budget);
      EvalContext ctx(model, inst, spec.replace, meter);
      Rng rng(trial);
      const SearchResult random_result = random_search(ctx, spec, budget, rng);
      const SearchResult exhaustive_result = exhaustive_search(model, inst, spec);
      for (size_t li = 0; li < random_result.levels.size(); ++li) {
        CHECK(random_result.levels[li].value == exhaustive_result.levels[li].value);
        CHECK(random_result.levels[li].mask.keep == exhaustive_result.levels[li].mask.keep);
      }
      check_level_invariants(inst, spec, random_result);
    }
  }
}

TEST_CASE("exhaustive search is optimal and refuses oversized spaces") {
  const ToyClassifier model({16, 5, 4, 3}, 4);
  Rng rng(5);
  const Instance inst = random_instance(rng, 16, 9);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  const SearchResult exhaustive_result = exhaustive_search(model, inst, spec);

  // Every mask the space contains scores no better than the reported best.
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, spec.replace, meter);
  for (size_t li = 0; li < spec.sparsity.levels.size(); ++li) {
    const int k = level_keep_count(9, spec.sparsity.levels[li], spec.sparsity.direction);
    for (const std::vector<int>& combo : oracles::all_ksubsets(9, k)) {
      const ExplanationMask mask = mask_from_unprotected_subset(inst, combo, spec.sparsity.levels[li]);
      CHECK(ctx.metric_value(mask, Scale::kProb) >= exhaustive_result.levels[li].value);
    }
  }

  ExhaustiveOptions tight;
  tight.per_level_cap = 10;
  CHECK_THROWS_AS(exhaustive_search(model, inst, spec, tight), Error);
}

TEST_CASE("hard binary concrete samples have sigmoid marginals") {
  Rng state_rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const double logit = 3.0 * state_rng.normal();
    Rng rng(100 + static_cast<uint64_t>(trial));
    int64_t ones = 0;
    const int64_t draws = 10000;
    for (int64_t d = 0; d < draws; ++d) {
      ones += sample_gumbel_binary(logit, 1.0, rng).hard;
    }
    const double p = 1.0 / (1.0 + std::exp(-logit));
    CHECK(oracles::within_3sigma(ones, draws, p));
  }
}

TEST_CASE("gumbel soft sample matches its straight-through slope") {
  Rng rng(7);
  const GumbelSample s = sample_gumbel_binary(0.3, 0.7, rng);
  CHECK(s.soft_grad == doctest::Approx(s.soft * (1.0 - s.soft) / 0.7));
  CHECK((s.hard == 1) == (s.soft > 0.5));
}

TEST_CASE("adamw minimizes a quadratic") {
  AdamW opt;
  opt.learning_rate = 0.05;
  opt.weight_decay = 0.0;
  std::vector<double> x = {3.0, -2.0};
  for (int step = 0; step < 2000; ++step) {
    const std::vector<double> g = {2.0 * x[0], 2.0 * x[1]};
    opt.step(x, g);
  }
  CHECK(std::abs(x[0]) < 1e-3);
  CHECK(std::abs(x[1]) < 1e-3);
}

TEST_CASE("gradient search drives expected sparsity toward the target on a constant model") {
  ToyClassifier model({16, 5, 4, 3}, 8);
  std::fill(model.w2.data.begin(), model.w2.data.end(), 0.0);  // zero mask gradients
  Rng inst_rng(9);
  const Instance inst = random_instance(inst_rng, 16, 14);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  BudgetMeter meter(2000);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(10);

  GradientSearchOptions options;
  options.sparsity_weight = 5e-2;  // visible movement within the budget
  const SearchResult result = gradient_search(ctx, spec, 2000, rng, options);
  check_level_invariants(inst, spec, result);
  CHECK(result.forward_passes + result.backward_passes <= 2000);

  // With zero model gradients the state moves only through the penalty, so
  // replaying the state update must converge toward the target count.
  std::vector<double> state(14);
  Rng replay = Rng::substream(11, "replay");
  for (double& s : state) s = replay.normal();
  AdamW opt;
  opt.learning_rate = options.learning_rate;
  const double target = sparsity_count(14, options.target_sparsity_level);
  const auto expected_keep = [&]() {
    double total = 0.0;
    for (double s : state) total += 1.0 / (1.0 + std::exp(-s));
    return total;
  };
  const double initial_gap = std::abs(expected_keep() - target);
  double previous_penalty = (expected_keep() - target) * (expected_keep() - target);
  bool monotone = true;
  for (int update = 0; update < 500; ++update) {
    std::vector<double> grad(14);
    const double gap = expected_keep() - target;
    for (size_t d = 0; d < state.size(); ++d) {
      const double sig = 1.0 / (1.0 + std::exp(-state[d]));
      grad[d] = 2.0 * options.sparsity_weight * gap * sig * (1.0 - sig);
    }
    opt.step(state, grad);
    const double penalty = (expected_keep() - target) * (expected_keep() - target);
    if (penalty > previous_penalty + 1e-12) monotone = false;
    previous_penalty = penalty;
  }
  CHECK(monotone);
  CHECK(std::abs(expected_keep() - target) < 0.2 * initial_gap);
}

TEST_CASE("gradient search needs gradient access and a workable budget") {
  ToyClassifier model({16, 5, 4, 3}, 12);
  model.set_expose_gradients(false);
  Rng inst_rng(13);
  const Instance inst = random_instance(inst_rng, 16, 8);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  BudgetMeter meter(2000);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(14);
  CHECK_THROWS_AS(gradient_search(ctx, spec, 2000, rng), Error);

  ToyClassifier good({16, 5, 4, 3}, 12);
  BudgetMeter meter2(30);
  EvalContext ctx2(good, inst, spec.replace, meter2);
  CHECK_THROWS_AS(gradient_search(ctx2, spec, 30, rng), Error);
}

TEST_CASE("taylor swap forecasts are exact on a linear loss") {
  // -ln p0 = 1.1 + sum w_i a_i exactly.
  const std::vector<double> w = {0.21, -0.13, 0.08, 0.31, -0.05, 0.17, 0.02, -0.26};
  oracles::LinearLossModel model(2.0, w);
  const Instance inst = oracles::make_unprotected_instance({1, 1, 1, 1, 1, 1, 1, 1});

  const std::vector<int> kept = {0, 2, 5};
  const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, 0.375);
  MaskedQuery query = raw_query(inst);
  for (int i = 0; i < inst.length(); ++i) query.weights[static_cast<size_t>(i)] = mask.keep[static_cast<size_t>(i)] ? 1.0 : 0.0;

  BudgetMeter meter = BudgetMeter::unlimited();
  const std::vector<double> grad = model.mask_loss_grad(query, 0, meter);
  std::vector<uint8_t> keep_bits(8, 0);
  for (int c : kept) keep_bits[static_cast<size_t>(c)] = 1;
  const std::vector<SwapCandidate> swaps = taylor_swaps(grad, keep_bits, Metric::kSufficiency, -1);
  CHECK(swaps.size() == 3 * 5);

  const double base_loss = model.loss(query.weights);
  for (const SwapCandidate& swap : swaps) {
    std::vector<double> flipped = query.weights;
    flipped[static_cast<size_t>(swap.drop)] = 0.0;
    flipped[static_cast<size_t>(swap.add)] = 1.0;
    const double exact = model.loss(flipped) - base_loss;
    CHECK(std::abs(swap.forecast - exact) <= 1e-9);
  }
  // Sufficiency ranks the most loss-reducing swap first.
  for (size_t i = 1; i < swaps.size(); ++i) CHECK(swaps[i - 1].forecast <= swaps[i].forecast);
}

TEST_CASE("taylor search with zero steps returns its initial beam evaluations") {
  const ToyClassifier model({16, 5, 4, 3}, 15);
  Rng inst_rng(16);
  const Instance inst = random_instance(inst_rng, 16, 8);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  BudgetMeter meter(100);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(17);
  TaylorSearchOptions options;
  options.beam_width = 1;
  options.steps = 0;
  const SearchResult result = taylor_search(ctx, spec, 100, rng, options);
  for (const LevelResult& level : result.levels) CHECK(level.evaluations == 1);
  check_level_invariants(inst, spec, result);
}

TEST_CASE("taylor search improves within budget and preserves sparsity") {
  const ToyClassifier model({32, 8, 6, 3}, 18);
  Rng inst_rng(19);
  const Instance inst = random_instance(inst_rng, 32, 16, 2);
  for (Metric metric : {Metric::kSufficiency, Metric::kComprehensiveness}) {
    const ObjectiveSpec spec = default_objective(metric);
    BudgetMeter meter(1000);
    EvalContext ctx(model, inst, spec.replace, meter);
    Rng rng(20);
    const SearchResult result = taylor_search(ctx, spec, 1000, rng);
    check_level_invariants(inst, spec, result);
    CHECK(result.forward_passes + result.backward_passes <= 1000);
  }
}

TEST_CASE("ordered enumeration matches the brute-force sort for random scores") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8 + static_cast<int>(rng.uniform_int(5));  // up to 12
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<double> theta(static_cast<size_t>(n));
    for (double& t : theta) t = rng.normal();
    for (bool descending : {true, false}) {
      const std::vector<std::vector<int>> expected =
          oracles::sorted_ksubsets_by_theta(theta, k, descending);
      OrderedEnumerator enumerator(theta, k, descending);
      const size_t pops = std::min<size_t>(200, expected.size());
      for (size_t i = 0; i < pops; ++i) {
        const auto combo = enumerator.next();
        REQUIRE(combo.has_value());
        CHECK(*combo == expected[i]);
      }
    }
  }
}

TEST_CASE("ordered enumeration breaks ties lexicographically") {
  const std::vector<double> theta = {1.0, 1.0, 1.0, 0.5};
  OrderedEnumerator enumerator(theta, 2, true);
  const std::vector<std::vector<int>> expected =
      oracles::sorted_ksubsets_by_theta(theta, 2, true);
  for (const std::vector<int>& want : expected) {
    const auto combo = enumerator.next();
    REQUIRE(combo.has_value());
    CHECK(*combo == want);
  }
  CHECK_FALSE(enumerator.next().has_value());
}

TEST_CASE("ordered search spends 25 percent on scores and 75 percent on evaluations") {
  const ToyClassifier model({64, 8, 6, 3}, 22);
  Rng inst_rng(23);
  const Instance inst = random_instance(inst_rng, 64, 24);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  BudgetMeter meter(1000);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(24);
  const SearchResult result = ordered_search(ctx, spec, 1000, rng);
  CHECK(result.forward_passes == 1000);
  CHECK(result.backward_passes == 0);
  int64_t evaluations = 0;
  for (const LevelResult& level : result.levels) {
    evaluations += level.evaluations;
    CHECK(level.evaluations == static_cast<int64_t>(level.trace.size()));
  }
  CHECK(evaluations == 750);
  check_level_invariants(inst, spec, result);
}

TEST_CASE("parallel local search handles singleton spaces with one evaluation") {
  const ToyClassifier model({16, 5, 4, 3}, 25);
  const Instance inst = oracles::make_unprotected_instance({3, 5, 7});
  ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  spec.sparsity.levels = {1.0};
  BudgetMeter meter(100);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(26);
  const SearchResult result = parallel_local_search(ctx, spec, 100, rng);
  CHECK(result.levels[0].evaluations == 1);
}

TEST_CASE("parallel local search with full coverage equals exhaustive search") {
  Rng inst_rng(27);
  for (int trial = 0; trial < 6; ++trial) {
    const ToyClassifier model({16, 5, 4, 3}, 30 + static_cast<uint64_t>(trial));
    const Instance inst = random_instance(inst_rng, 16, 7 + static_cast<int>(inst_rng.uniform_int(4)));
    for (Metric metric : {Metric::kSufficiency, Metric::kComprehensiveness}) {
      const ObjectiveSpec spec = default_objective(metric);
      int64_t max_space = 0;
      for (double s : spec.sparsity.levels) {
        max_space = std::max(max_space,
                             binomial_capped(inst.unprotected_count(),
                                             level_keep_count(inst.unprotected_count(), s,
                                                              spec.sparsity.direction)));
      }
      const int64_t budget = 4 * (max_space + 16);
      BudgetMeter meter(budget);
      EvalContext ctx(model, inst, spec.replace, meter);
      Rng rng(trial);
      const SearchResult pls = parallel_local_search(ctx, spec, budget, rng);
      const SearchResult exhaustive_result = exhaustive_search(model, inst, spec);
      for (size_t li = 0; li < pls.levels.size(); ++li) {
        CHECK(pls.levels[li].value == exhaustive_result.levels[li].value);
        CHECK(pls.levels[li].mask.keep == exhaustive_result.levels[li].mask.keep);
      }
      check_level_invariants(inst, spec, pls);
    }
  }
}

TEST_CASE("search methods respect the pass budget exactly on large spaces") {
  const ToyClassifier model({64, 8, 6, 3}, 33);
  Rng inst_rng(34);
  const Instance inst = random_instance(inst_rng, 64, 24);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);

  SUBCASE("random search consumes every pass as one evaluation") {
    BudgetMeter meter(1000);
    EvalContext ctx(model, inst, spec.replace, meter);
    Rng rng(35);
    const SearchResult result = random_search(ctx, spec, 1000, rng);
    CHECK(result.forward_passes == 1000);
    int64_t evaluations = 0;
    for (const LevelResult& level : result.levels) {
      evaluations += level.evaluations;
      CHECK(level.evaluations == static_cast<int64_t>(level.trace.size()));
    }
    CHECK(evaluations == 1000);
  }

  SUBCASE("parallel local search consumes every pass as one evaluation") {
    BudgetMeter meter(1000);
    EvalContext ctx(model, inst, spec.replace, meter);
    Rng rng(36);
    const SearchResult result = parallel_local_search(ctx, spec, 1000, rng);
    CHECK(result.forward_passes == 1000);
    int64_t evaluations = 0;
    for (const LevelResult& level : result.levels) evaluations += level.evaluations;
    CHECK(evaluations == 1000);
  }
}

TEST_CASE("searches return best-so-far when the budget dies mid-run") {
  const ToyClassifier model({16, 5, 4, 3}, 37);
  Rng inst_rng(38);
  const Instance inst = random_instance(inst_rng, 16, 10);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  BudgetMeter meter(4);
  EvalContext ctx(model, inst, spec.replace, meter);
  Rng rng(39);
  const SearchResult result = random_search(ctx, spec, 4, rng);
  CHECK(result.forward_passes <= 4);
  for (const LevelResult& level : result.levels) CHECK(level.evaluations == 1);
}

TEST_CASE("every method keeps protected positions in every returned mask") {
  const ToyClassifier model({64, 8, 6, 3}, 40);
  const SyntheticCorpus corpus = [] {
    CorpusParams params;
    params.num_docs = 4;
    params.min_doc_len = 10;
    params.max_doc_len = 14;
    return generate_corpus(params, 41);
  }();
  const Imputer imputer = fit_imputer(corpus, 1);
  MethodOptions options;
  options.budget = 200;
  options.exhaustive.per_level_cap = 50000;
  for (const Instance& inst : corpus.instances) {
    for (Method method : {Method::kLime, Method::kVanillaGradient, Method::kIntegratedGradients,
                          Method::kRandom, Method::kGradient, Method::kTaylor, Method::kOrdered,
                          Method::kParallelLocal}) {
      for (Metric metric : {Metric::kSufficiency, Metric::kComprehensiveness}) {
        ObjectiveSpec spec = default_objective(metric);
        const SearchResult result = run_method(method, model, inst, spec, options, 7, &imputer);
        for (const LevelResult& level : result.levels) {
          CHECK_NOTHROW(validate_mask(inst, level.mask));
          for (int i = 0; i < inst.length(); ++i) {
            if (inst.is_protected[static_cast<size_t>(i)]) CHECK(level.mask.keep[static_cast<size_t>(i)]);
          }
        }
      }
    }
  }
}

TEST_CASE("run_method produces deterministic results under a fixed seed") {
  const ToyClassifier model({64, 8, 6, 3}, 42);
  Rng inst_rng(43);
  const Instance inst = random_instance(inst_rng, 64, 18, 2);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  MethodOptions options;
  options.budget = 400;
  for (Method method : {Method::kRandom, Method::kParallelLocal, Method::kOrdered, Method::kTaylor}) {
    const SearchResult a = run_method(method, model, inst, spec, options, 99);
    const SearchResult b = run_method(method, model, inst, spec, options, 99);
    REQUIRE(a.levels.size() == b.levels.size());
    for (size_t li = 0; li < a.levels.size(); ++li) {
      CHECK(a.levels[li].value == b.levels[li].value);
      CHECK(a.levels[li].mask.keep == b.levels[li].mask.keep);
      CHECK(a.levels[li].trace == b.levels[li].trace);
    }
  }
}

TEST_CASE("ledger: lime spends its samples plus one final evaluation per distinct mask") {
  const ToyClassifier model({64, 8, 6, 3}, 44);
  Rng inst_rng(45);
  const Instance inst = random_instance(inst_rng, 64, 24);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  MethodOptions options;
  options.budget = 1000;
  const SearchResult result = run_method(Method::kLime, model, inst, spec, options, 7);
  std::unordered_set<MaskKey, MaskKeyHash> distinct;
  for (const LevelResult& level : result.levels) distinct.insert(pack_bits(level.mask.keep));
  CHECK(result.forward_passes == 996 + static_cast<int64_t>(distinct.size()));
  CHECK(result.backward_passes == 0);
}

TEST_CASE("ledger: integrated gradients spends 498 pairs plus final evaluations") {
  const ToyClassifier model({64, 8, 6, 3}, 46);
  Rng inst_rng(47);
  const Instance inst = random_instance(inst_rng, 64, 24);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  MethodOptions options;
  options.budget = 1000;
  const SearchResult result = run_method(Method::kIntegratedGradients, model, inst, spec, options, 7);
  std::unordered_set<MaskKey, MaskKeyHash> distinct;
  for (const LevelResult& level : result.levels) distinct.insert(pack_bits(level.mask.keep));
  CHECK(result.forward_passes == 498 + static_cast<int64_t>(distinct.size()));
  CHECK(result.backward_passes == 498);
}

TEST_CASE("run_method rejects gradient methods on black-box models") {
  ToyClassifier model({16, 5, 4, 3}, 48);
  model.set_expose_gradients(false);
  Rng inst_rng(49);
  const Instance inst = random_instance(inst_rng, 16, 8);
  const ObjectiveSpec spec = default_objective(Metric::kSufficiency);
  MethodOptions options;
  options.budget = 200;
  for (Method method : {Method::kVanillaGradient, Method::kIntegratedGradients, Method::kGradient,
                        Method::kTaylor}) {
    CHECK_THROWS_AS(run_method(method, model, inst, spec, options, 7), Error);
  }
  CHECK_NOTHROW(run_method(Method::kRandom, model, inst, spec, options, 7));
  CHECK_NOTHROW(run_method(Method::kParallelLocal, model, inst, spec, options, 7));
}
