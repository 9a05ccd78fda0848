#include "masksearch/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace masksearch {

double SearchResult::objective() const {
  if (levels.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const LevelResult& level : levels) total += level.value;
  return total / static_cast<double>(levels.size());
}

std::vector<int64_t> split_budget(int64_t total, int num_levels) {
  if (num_levels < 1) fail(Errc::kInvalidInput, "budget split needs at least one level");
  if (total < 0) fail(Errc::kInvalidInput, "negative budget");
  std::vector<int64_t> shares(static_cast<size_t>(num_levels), total / num_levels);
  shares[0] += total - (total / num_levels) * num_levels;
  return shares;
}

namespace {

struct LevelPlan {
  double sparsity = 1.0;
  int keep_count = 0;
  int64_t space = 0;
};

std::vector<LevelPlan> plan_levels(const ObjectiveSpec& spec, int unprotected) {
  std::vector<LevelPlan> plans;
  plans.reserve(spec.sparsity.levels.size());
  for (double s : spec.sparsity.levels) {
    LevelPlan p;
    p.sparsity = s;
    p.keep_count = level_keep_count(unprotected, s, spec.sparsity.direction);
    p.space = binomial_capped(unprotected, p.keep_count);
    plans.push_back(p);
  }
  return plans;
}

MaskKey combo_key(std::span<const int> combo, int universe) {
  std::vector<uint8_t> bits(static_cast<size_t>(universe), 0);
  for (int c : combo) bits[static_cast<size_t>(c)] = 1;
  return pack_bits(bits);
}

bool next_combination(std::vector<int>& combo, int n) {
  const int k = static_cast<int>(combo.size());
  for (int i = k - 1; i >= 0; --i) {
    if (combo[static_cast<size_t>(i)] < n - k + i) {
      ++combo[static_cast<size_t>(i)];
      for (int j = i + 1; j < k; ++j) combo[static_cast<size_t>(j)] = combo[static_cast<size_t>(j - 1)] + 1;
      return true;
    }
  }
  return false;
}

std::vector<int> first_combination(int k) {
  std::vector<int> combo(static_cast<size_t>(k));
  std::iota(combo.begin(), combo.end(), 0);
  return combo;
}

/// Best-so-far with the global tie rule: equal objective values resolve to
/// the lexicographically smallest combination.
struct BestTracker {
  Metric metric;
  bool has = false;
  std::vector<int> combo;
  double value = 0.0;

  void offer(const std::vector<int>& candidate, double candidate_value) {
    if (!has || is_improvement(metric, candidate_value, value) ||
        (candidate_value == value && candidate < combo)) {
      has = true;
      combo = candidate;
      value = candidate_value;
    }
  }
};

/// Shared per-level driver state for the evaluation-based methods.
struct LevelRun {
  EvalContext* ctx;
  const Instance* inst;
  const ObjectiveSpec* spec;
  LevelPlan plan;
  BestTracker best;
  std::vector<std::pair<int64_t, double>> trace;
  int64_t evaluations = 0;
  int64_t start_passes = 0;

  LevelRun(EvalContext& c, const ObjectiveSpec& s, const LevelPlan& p)
      : ctx(&c), inst(&c.instance()), spec(&s), plan(p), best{s.metric, false, {}, 0.0} {
    start_passes = c.meter().total();
  }

  int64_t spent() const { return ctx->meter().total() - start_passes; }

  double evaluate(const std::vector<int>& combo) {
    const ExplanationMask mask = mask_from_unprotected_subset(*inst, combo, plan.sparsity);
    const double value = ctx->metric_value(mask, spec->scale);
    ++evaluations;
    best.offer(combo, value);
    trace.emplace_back(evaluations, best.value);
    return value;
  }

  LevelResult finish() const {
    LevelResult out;
    out.sparsity = plan.sparsity;
    out.keep_count = plan.keep_count;
    out.trace = trace;
    out.evaluations = evaluations;
    if (best.has) {
      out.mask = mask_from_unprotected_subset(*inst, best.combo, plan.sparsity);
      out.value = best.value;
    } else {
      // Budget died before this level could evaluate anything; return the
      // deterministic first combination, honestly unvalued.
      out.mask = mask_from_unprotected_subset(*inst, first_combination(plan.keep_count), plan.sparsity);
      out.value = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
  }
};

bool is_budget_exhausted(const Error& e) { return e.code() == Errc::kBudgetExhausted; }

SearchResult make_result(const std::string& method, const ObjectiveSpec& spec,
                         std::vector<LevelResult> levels, const BudgetMeter& meter) {
  SearchResult out;
  out.method = method;
  out.metric = spec.metric;
  out.scale = spec.scale;
  out.levels = std::move(levels);
  out.forward_passes = meter.forwards();
  out.backward_passes = meter.backwards();
  return out;
}

MaskedQuery attention_query(const Instance& inst, const ExplanationMask& mask) {
  return counterfactual_query(ReplaceFn{ReplaceKind::kAttentionMask, 10}, inst, mask);
}

}  // namespace

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

SearchResult random_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                           const RandomSearchOptions& options) {
  validate_objective(spec);
  const Instance& inst = ctx.instance();
  const int u = inst.unprotected_count();
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  const int num_levels = static_cast<int>(plans.size());
  if (budget < num_levels) fail(Errc::kInvalidInput, "budget below one evaluation per level");
  const std::vector<int64_t> shares = split_budget(budget, num_levels);

  std::vector<LevelResult> levels;
  bool out_of_budget = false;
  for (int li = 0; li < num_levels; ++li) {
    LevelRun run(ctx, spec, plans[static_cast<size_t>(li)]);
    Rng level_rng = rng.fork("random-level-" + std::to_string(li));
    if (!out_of_budget) {
      const int64_t share = shares[static_cast<size_t>(li)];
      const int k = run.plan.keep_count;
      const int64_t enumerate_cap =
          std::min(std::max(4 * share, options.enumerate_floor), options.enumerate_memory_cap);
      try {
        if (run.plan.space <= enumerate_cap) {
          // Enumerate-and-shuffle: a random permutation prefix is
          // distribution-identical to uniform sampling without repetition
          // and covers the space exactly once.
          std::vector<std::vector<int>> combos;
          combos.reserve(static_cast<size_t>(run.plan.space));
          std::vector<int> combo = first_combination(k);
          do {
            combos.push_back(combo);
          } while (next_combination(combo, u));
          level_rng.shuffle(combos);
          for (const std::vector<int>& c : combos) {
            if (run.spent() >= share) break;
            run.evaluate(c);
          }
        } else {
          std::unordered_set<MaskKey, MaskKeyHash> seen;
          int misses = 0;
          while (run.spent() < share && run.evaluations < run.plan.space) {
            const std::vector<int> c = level_rng.sample_indices(u, k);
            if (!seen.insert(combo_key(c, u)).second) {
              if (++misses > 4096) break;  // space effectively saturated
              continue;
            }
            misses = 0;
            run.evaluate(c);
          }
        }
      } catch (const Error& e) {
        if (!is_budget_exhausted(e)) throw;
        out_of_budget = true;
      }
    }
    levels.push_back(run.finish());
  }
  return make_result("random", spec, std::move(levels), ctx.meter());
}

// ---------------------------------------------------------------------------
// Exhaustive search
// ---------------------------------------------------------------------------

SearchResult exhaustive_search(const ModelHandle& model, const Instance& inst,
                               const ObjectiveSpec& spec, const ExhaustiveOptions& options,
                               const Imputer* imputer, Rng* rng) {
  validate_objective(spec);
  BudgetMeter meter = BudgetMeter::unlimited();
  EvalContext ctx(model, inst, spec.replace, meter, imputer, rng);
  const int u = inst.unprotected_count();
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  for (const LevelPlan& plan : plans) {
    if (plan.space > options.per_level_cap) {
      fail(Errc::kSpaceTooLarge, "level space " + std::to_string(plan.space) +
                                     " exceeds the exhaustive cap " +
                                     std::to_string(options.per_level_cap));
    }
  }

  std::vector<LevelResult> levels;
  for (const LevelPlan& plan : plans) {
    LevelRun run(ctx, spec, plan);
    std::vector<int> combo = first_combination(plan.keep_count);
    do {
      run.evaluate(combo);
    } while (next_combination(combo, u));
    levels.push_back(run.finish());
  }
  return make_result("exhaustive", spec, std::move(levels), meter);
}

// ---------------------------------------------------------------------------
// Gradient search
// ---------------------------------------------------------------------------

GumbelSample sample_gumbel_binary(double logit, double temperature, Rng& rng) {
  if (temperature <= 0.0) fail(Errc::kInvalidInput, "temperature must be positive");
  const double noise = rng.logistic();  // difference of two standard Gumbels
  const double z = (logit + noise) / temperature;
  GumbelSample out;
  out.soft = 1.0 / (1.0 + std::exp(-z));
  out.hard = (logit + noise) > 0.0 ? 1 : 0;
  out.soft_grad = out.soft * (1.0 - out.soft) / temperature;
  return out;
}

void AdamW::step(std::vector<double>& state, std::span<const double> grad) {
  if (m.empty()) {
    m.assign(state.size(), 0.0);
    v.assign(state.size(), 0.0);
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < state.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    state[i] -= learning_rate * (mhat / (std::sqrt(vhat) + epsilon) + weight_decay * state[i]);
  }
}

SearchResult gradient_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                             const GradientSearchOptions& options) {
  validate_objective(spec);
  if (!ctx.model().capabilities().mask_gradients) {
    fail(Errc::kUnsupportedModel, "gradient search needs mask gradients");
  }
  const Instance& inst = ctx.instance();
  const std::vector<int> unprot = unprotected_positions(inst);
  const int u = static_cast<int>(unprot.size());
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  const int num_levels = static_cast<int>(plans.size());
  const int64_t cycle_cost =
      2 * static_cast<int64_t>(options.samples_per_update) * options.checkpoint_every + num_levels;
  if (budget < cycle_cost) {
    fail(Errc::kInvalidInput, "budget below one update/checkpoint cycle (" +
                                  std::to_string(cycle_cost) + " passes)");
  }

  // Continuous state over unprotected coordinates only; protected positions
  // are always retained and never searched.
  std::vector<double> state(static_cast<size_t>(u));
  for (double& x : state) x = rng.normal();

  const int target_keep_suff = sparsity_count(u, options.target_sparsity_level);
  const double target = spec.metric == Metric::kSufficiency
                            ? static_cast<double>(target_keep_suff)
                            : static_cast<double>(u - target_keep_suff);
  const double ce_sign = spec.metric == Metric::kSufficiency ? 1.0 : -1.0;

  AdamW optimizer;
  optimizer.learning_rate = options.learning_rate;

  std::vector<BestTracker> best(static_cast<size_t>(num_levels));
  for (int li = 0; li < num_levels; ++li) best[static_cast<size_t>(li)].metric = spec.metric;
  std::vector<std::vector<std::pair<int64_t, double>>> traces(static_cast<size_t>(num_levels));
  std::vector<int64_t> eval_counts(static_cast<size_t>(num_levels), 0);

  const auto top_k_combo = [&](int k) {
    std::vector<int> order(static_cast<size_t>(u));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (state[static_cast<size_t>(a)] != state[static_cast<size_t>(b)]) {
        return state[static_cast<size_t>(a)] > state[static_cast<size_t>(b)];
      }
      return a < b;
    });
    std::vector<int> combo(order.begin(), order.begin() + k);
    std::sort(combo.begin(), combo.end());
    return combo;
  };

  const bool has_protected = u < inst.length();
  MaskedQuery query = raw_query(inst);
  std::vector<double> grad_state(static_cast<size_t>(u));
  int64_t updates = 0;
  try {
    for (;;) {
      std::fill(grad_state.begin(), grad_state.end(), 0.0);
      for (int sample = 0; sample < options.samples_per_update; ++sample) {
        std::vector<GumbelSample> draws(static_cast<size_t>(u));
        int ones = 0;
        for (int d = 0; d < u; ++d) {
          draws[static_cast<size_t>(d)] =
              sample_gumbel_binary(state[static_cast<size_t>(d)], options.temperature, rng);
          ones += draws[static_cast<size_t>(d)].hard;
        }
        if (ones == 0 && !has_protected) {
          // An all-hidden sample has no defined counterfactual; keep the
          // most-likely coordinate instead.
          const int d = static_cast<int>(std::max_element(state.begin(), state.end()) - state.begin());
          draws[static_cast<size_t>(d)].hard = 1;
        }
        std::fill(query.weights.begin(), query.weights.end(), 1.0);
        for (int d = 0; d < u; ++d) {
          query.weights[static_cast<size_t>(unprot[static_cast<size_t>(d)])] =
              draws[static_cast<size_t>(d)].hard ? 1.0 : 0.0;
        }
        (void)ctx.model().predict(query, ctx.meter());
        const std::vector<double> g =
            ctx.model().mask_loss_grad(query, ctx.predicted(), ctx.meter());
        for (int d = 0; d < u; ++d) {
          // Straight-through: route the loss gradient at the hard sample
          // through the soft sample's slope.
          grad_state[static_cast<size_t>(d)] += ce_sign * g[static_cast<size_t>(unprot[static_cast<size_t>(d)])] *
                                                draws[static_cast<size_t>(d)].soft_grad /
                                                options.samples_per_update;
        }
      }
      double expected = 0.0;
      std::vector<double> sig(static_cast<size_t>(u));
      for (int d = 0; d < u; ++d) {
        sig[static_cast<size_t>(d)] = 1.0 / (1.0 + std::exp(-state[static_cast<size_t>(d)]));
        expected += sig[static_cast<size_t>(d)];
      }
      const double pen = 2.0 * options.sparsity_weight * (expected - target);
      for (int d = 0; d < u; ++d) {
        grad_state[static_cast<size_t>(d)] += pen * sig[static_cast<size_t>(d)] * (1.0 - sig[static_cast<size_t>(d)]);
      }
      optimizer.step(state, grad_state);
      ++updates;

      if (updates % options.checkpoint_every == 0) {
        for (int li = 0; li < num_levels; ++li) {
          const std::vector<int> combo = top_k_combo(plans[static_cast<size_t>(li)].keep_count);
          const ExplanationMask mask =
              mask_from_unprotected_subset(inst, combo, plans[static_cast<size_t>(li)].sparsity);
          const double value = ctx.metric_value(mask, spec.scale);
          ++eval_counts[static_cast<size_t>(li)];
          best[static_cast<size_t>(li)].offer(combo, value);
          traces[static_cast<size_t>(li)].emplace_back(updates, best[static_cast<size_t>(li)].value);
        }
      }
    }
  } catch (const Error& e) {
    if (!is_budget_exhausted(e)) throw;
  }

  std::vector<LevelResult> levels;
  for (int li = 0; li < num_levels; ++li) {
    LevelResult lr;
    lr.sparsity = plans[static_cast<size_t>(li)].sparsity;
    lr.keep_count = plans[static_cast<size_t>(li)].keep_count;
    lr.trace = traces[static_cast<size_t>(li)];
    lr.evaluations = eval_counts[static_cast<size_t>(li)];
    const BestTracker& tracker = best[static_cast<size_t>(li)];
    if (tracker.has) {
      lr.mask = mask_from_unprotected_subset(inst, tracker.combo, lr.sparsity);
      lr.value = tracker.value;
    } else {
      lr.mask = mask_from_unprotected_subset(inst, first_combination(lr.keep_count), lr.sparsity);
      lr.value = std::numeric_limits<double>::quiet_NaN();
    }
    levels.push_back(std::move(lr));
  }
  return make_result("gradient", spec, std::move(levels), ctx.meter());
}

// ---------------------------------------------------------------------------
// Taylor search
// ---------------------------------------------------------------------------

std::vector<SwapCandidate> taylor_swaps(std::span<const double> grad_unprotected,
                                        std::span<const uint8_t> keep_unprotected, Metric metric,
                                        int max_candidates) {
  std::vector<int> kept, hidden;
  for (int d = 0; d < static_cast<int>(keep_unprotected.size()); ++d) {
    (keep_unprotected[static_cast<size_t>(d)] ? kept : hidden).push_back(d);
  }
  std::vector<SwapCandidate> swaps;
  swaps.reserve(kept.size() * hidden.size());
  for (int i : kept) {
    for (int j : hidden) {
      SwapCandidate s;
      s.drop = i;
      s.add = j;
      s.forecast = grad_unprotected[static_cast<size_t>(j)] - grad_unprotected[static_cast<size_t>(i)];
      swaps.push_back(s);
    }
  }
  std::stable_sort(swaps.begin(), swaps.end(), [&](const SwapCandidate& a, const SwapCandidate& b) {
    if (a.forecast != b.forecast) {
      return metric == Metric::kSufficiency ? a.forecast < b.forecast : a.forecast > b.forecast;
    }
    if (a.drop != b.drop) return a.drop < b.drop;
    return a.add < b.add;
  });
  if (max_candidates >= 0 && static_cast<int>(swaps.size()) > max_candidates) {
    swaps.resize(static_cast<size_t>(max_candidates));
  }
  return swaps;
}

SearchResult taylor_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                           const TaylorSearchOptions& options) {
  validate_objective(spec);
  if (!ctx.model().capabilities().mask_gradients) {
    fail(Errc::kUnsupportedModel, "taylor search needs mask gradients");
  }
  if (options.beam_width < 1 || options.steps < 0) {
    fail(Errc::kInvalidInput, "bad taylor search configuration");
  }
  const Instance& inst = ctx.instance();
  const int u = inst.unprotected_count();
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  const int num_levels = static_cast<int>(plans.size());
  if (budget < num_levels) fail(Errc::kInvalidInput, "budget below one evaluation per level");
  const std::vector<int64_t> shares = split_budget(budget, num_levels);

  struct Beam {
    std::vector<int> combo;
    double value;
  };

  std::vector<LevelResult> levels;
  bool out_of_budget = false;
  for (int li = 0; li < num_levels; ++li) {
    LevelRun run(ctx, spec, plans[static_cast<size_t>(li)]);
    Rng level_rng = rng.fork("taylor-level-" + std::to_string(li));
    if (!out_of_budget) {
      const int64_t share = shares[static_cast<size_t>(li)];
      const int k = run.plan.keep_count;
      std::unordered_set<MaskKey, MaskKeyHash> evaluated;
      std::vector<Beam> beams;
      try {
        const int beam_target = static_cast<int>(
            std::min<int64_t>(options.beam_width, run.plan.space));
        int stale = 0;
        while (static_cast<int>(beams.size()) < beam_target && stale < 4096) {
          const std::vector<int> combo = level_rng.sample_indices(u, k);
          if (!evaluated.insert(combo_key(combo, u)).second) {
            ++stale;
            continue;
          }
          beams.push_back({combo, run.evaluate(combo)});
          if (run.spent() >= share) break;
        }
        for (int step = 0; step < options.steps && run.spent() < share; ++step) {
          std::vector<Beam> pool = beams;
          bool expanded = false;
          for (const Beam& beam : beams) {
            if (run.spent() >= share) break;
            std::vector<uint8_t> keep_bits(static_cast<size_t>(u), 0);
            for (int c : beam.combo) keep_bits[static_cast<size_t>(c)] = 1;
            const ExplanationMask mask =
                mask_from_unprotected_subset(inst, beam.combo, run.plan.sparsity);
            const MaskedQuery query = attention_query(inst, mask);
            (void)ctx.model().predict(query, ctx.meter());
            const std::vector<double> g_full =
                ctx.model().mask_loss_grad(query, ctx.predicted(), ctx.meter());
            std::vector<double> g(static_cast<size_t>(u));
            const std::vector<int> unprot = unprotected_positions(inst);
            for (int d = 0; d < u; ++d) g[static_cast<size_t>(d)] = g_full[static_cast<size_t>(unprot[static_cast<size_t>(d)])];

            const std::vector<SwapCandidate> swaps =
                taylor_swaps(g, keep_bits, spec.metric, options.beam_width);
            for (const SwapCandidate& swap : swaps) {
              if (run.spent() >= share) break;
              std::vector<int> combo;
              combo.reserve(static_cast<size_t>(k));
              for (int c : beam.combo) {
                if (c != swap.drop) combo.push_back(c);
              }
              combo.push_back(swap.add);
              std::sort(combo.begin(), combo.end());
              if (!evaluated.insert(combo_key(combo, u)).second) continue;
              pool.push_back({combo, run.evaluate(combo)});
              expanded = true;
            }
          }
          std::stable_sort(pool.begin(), pool.end(), [&](const Beam& a, const Beam& b) {
            if (a.value != b.value) return is_improvement(spec.metric, a.value, b.value);
            return a.combo < b.combo;
          });
          if (static_cast<int>(pool.size()) > options.beam_width) pool.resize(static_cast<size_t>(options.beam_width));
          beams = std::move(pool);
          if (!expanded) break;  // neighborhood exhausted
        }
      } catch (const Error& e) {
        if (!is_budget_exhausted(e)) throw;
        out_of_budget = true;
      }
    }
    levels.push_back(run.finish());
  }
  return make_result("taylor", spec, std::move(levels), ctx.meter());
}

// ---------------------------------------------------------------------------
// Ordered search
// ---------------------------------------------------------------------------

OrderedEnumerator::OrderedEnumerator(std::vector<double> theta, int k, bool descending)
    : theta_(std::move(theta)), n_(static_cast<int>(theta_.size())), k_(k) {
  if (k_ < 0 || k_ > n_) fail(Errc::kInvalidInput, "subset size out of range");
  if (!descending) {
    for (double& t : theta_) t = -t;
  }
  rank_to_item_.resize(static_cast<size_t>(n_));
  std::iota(rank_to_item_.begin(), rank_to_item_.end(), 0);
  std::stable_sort(rank_to_item_.begin(), rank_to_item_.end(), [&](int a, int b) {
    if (theta_[static_cast<size_t>(a)] != theta_[static_cast<size_t>(b)]) {
      return theta_[static_cast<size_t>(a)] > theta_[static_cast<size_t>(b)];
    }
    return a < b;
  });
  if (k_ >= 0) {
    std::vector<int> root(static_cast<size_t>(k_));
    std::iota(root.begin(), root.end(), 0);
    push_ranks(std::move(root));
  }
}

void OrderedEnumerator::push_ranks(std::vector<int> ranks) {
  std::vector<uint8_t> bits(static_cast<size_t>(n_), 0);
  for (int r : ranks) bits[static_cast<size_t>(r)] = 1;
  if (!pushed_.insert(pack_bits(bits)).second) return;
  Node node;
  node.items.reserve(ranks.size());
  for (int r : ranks) node.items.push_back(rank_to_item_[static_cast<size_t>(r)]);
  std::sort(node.items.begin(), node.items.end());
  // Summation in ascending item order keeps tied totals bit-identical with
  // an enumeration oracle summing the same way.
  node.score = 0.0;
  for (int item : node.items) node.score += theta_[static_cast<size_t>(item)];
  node.ranks = std::move(ranks);
  heap_.push(std::move(node));
}

std::optional<std::vector<int>> OrderedEnumerator::next() {
  if (heap_.empty()) return std::nullopt;
  const Node top = heap_.top();
  heap_.pop();
  for (size_t p = 0; p < top.ranks.size(); ++p) {
    const int r = top.ranks[p];
    const bool next_free =
        r + 1 < n_ && (p + 1 >= top.ranks.size() || top.ranks[p + 1] != r + 1);
    if (!next_free) continue;
    std::vector<int> succ = top.ranks;
    succ[p] = r + 1;
    push_ranks(std::move(succ));
  }
  return top.items;
}

SearchResult ordered_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget, Rng& rng,
                            const OrderedSearchOptions& options) {
  validate_objective(spec);
  if (budget < 8) fail(Errc::kInvalidInput, "ordered search needs a budget of at least 8");
  const Instance& inst = ctx.instance();
  const std::vector<int> unprot = unprotected_positions(inst);
  const int u = static_cast<int>(unprot.size());
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  const int num_levels = static_cast<int>(plans.size());

  const int64_t stage1 = static_cast<int64_t>(options.stage1_fraction * static_cast<double>(budget));
  if (stage1 < 1 || stage1 >= budget) fail(Errc::kInvalidInput, "bad stage split for ordered search");

  LimeOptions lime_options = options.lime;
  lime_options.num_samples = static_cast<int>(stage1);
  Rng lime_rng = rng.fork("ordered-lime");
  std::vector<LevelResult> levels;
  bool out_of_budget = false;
  SalienceVector scores;
  try {
    scores = lime(ctx.model(), inst, ctx.predicted(), lime_options, ctx.meter(), lime_rng);
  } catch (const Error& e) {
    if (!is_budget_exhausted(e)) throw;
    out_of_budget = true;
  }

  std::vector<double> theta(static_cast<size_t>(u), 0.0);
  if (!out_of_budget) {
    for (int d = 0; d < u; ++d) theta[static_cast<size_t>(d)] = scores.scores[static_cast<size_t>(unprot[static_cast<size_t>(d)])];
  }

  const std::vector<int64_t> shares = split_budget(budget - stage1, num_levels);
  for (int li = 0; li < num_levels; ++li) {
    LevelRun run(ctx, spec, plans[static_cast<size_t>(li)]);
    if (!out_of_budget) {
      const int64_t share = shares[static_cast<size_t>(li)];
      // For Sufficiency promising means highest total score (keep the most
      // salient tokens); for Comprehensiveness lowest (remove them).
      OrderedEnumerator enumerator(theta, run.plan.keep_count,
                                   spec.metric == Metric::kSufficiency);
      try {
        while (run.spent() < share) {
          const std::optional<std::vector<int>> combo = enumerator.next();
          if (!combo.has_value()) break;  // space exhausted before the budget
          run.evaluate(*combo);
        }
      } catch (const Error& e) {
        if (!is_budget_exhausted(e)) throw;
        out_of_budget = true;
      }
    }
    levels.push_back(run.finish());
  }
  return make_result("ordered", spec, std::move(levels), ctx.meter());
}

// ---------------------------------------------------------------------------
// Parallel local search
// ---------------------------------------------------------------------------

SearchResult parallel_local_search(EvalContext& ctx, const ObjectiveSpec& spec, int64_t budget,
                                   Rng& rng, const PlsOptions& options) {
  validate_objective(spec);
  if (options.runs < 1) fail(Errc::kInvalidInput, "parallel local search needs at least one run");
  const Instance& inst = ctx.instance();
  const int u = inst.unprotected_count();
  const std::vector<LevelPlan> plans = plan_levels(spec, u);
  const int num_levels = static_cast<int>(plans.size());
  if (budget < num_levels) fail(Errc::kInvalidInput, "budget below one evaluation per level");
  const std::vector<int64_t> shares = split_budget(budget, num_levels);

  struct RunState {
    std::vector<int> combo;
    double value = 0.0;
    int64_t evals = 0;
    bool active = true;
  };

  std::vector<LevelResult> levels;
  bool out_of_budget = false;
  for (int li = 0; li < num_levels; ++li) {
    LevelRun run(ctx, spec, plans[static_cast<size_t>(li)]);
    Rng level_rng = rng.fork("pls-level-" + std::to_string(li));
    if (!out_of_budget) {
      const int64_t share = shares[static_cast<size_t>(li)];
      const int k = run.plan.keep_count;
      const int64_t space = run.plan.space;
      const int64_t runs_eff = std::min<int64_t>({options.runs, share, space});
      const int64_t per_run = std::max<int64_t>(1, share / std::max<int64_t>(1, runs_eff));

      std::unordered_set<MaskKey, MaskKeyHash> seen;
      std::vector<RunState> states;

      // Random-walk proposal: step to uniformly random Hamming-distance-2
      // neighbors, through already-seen states, until an unseen one appears.
      const auto propose = [&](const std::vector<int>& from) {
        std::vector<uint8_t> bits(static_cast<size_t>(u), 0);
        std::vector<int> kept = from, hidden;
        hidden.reserve(static_cast<size_t>(u - k));
        for (int c : from) bits[static_cast<size_t>(c)] = 1;
        for (int d = 0; d < u; ++d) {
          if (!bits[static_cast<size_t>(d)]) hidden.push_back(d);
        }
        for (;;) {
          if (!hidden.empty() && !kept.empty()) {
            const size_t i = static_cast<size_t>(level_rng.uniform_int(static_cast<int64_t>(kept.size())));
            const size_t j = static_cast<size_t>(level_rng.uniform_int(static_cast<int64_t>(hidden.size())));
            std::swap(kept[i], hidden[j]);
          }
          std::vector<int> combo = kept;
          std::sort(combo.begin(), combo.end());
          if (!seen.contains(combo_key(combo, u))) return combo;
        }
      };

      try {
        for (int64_t r = 0; r < runs_eff; ++r) {
          if (static_cast<int64_t>(seen.size()) >= space || run.spent() >= share) break;
          // Distinct uniform start per run.
          std::vector<int> combo;
          do {
            combo = level_rng.sample_indices(u, k);
          } while (seen.contains(combo_key(combo, u)));
          seen.insert(combo_key(combo, u));
          RunState st;
          st.combo = combo;
          st.value = run.evaluate(combo);
          st.evals = 1;
          states.push_back(std::move(st));
        }
        bool moved = true;
        while (moved) {
          moved = false;
          for (RunState& st : states) {
            if (!st.active || st.evals >= per_run) continue;
            if (static_cast<int64_t>(seen.size()) >= space) {
              st.active = false;  // fully enumerated
              continue;
            }
            if (run.spent() >= share) {
              st.active = false;
              continue;
            }
            const std::vector<int> proposal = propose(st.combo);
            seen.insert(combo_key(proposal, u));
            const double value = run.evaluate(proposal);
            ++st.evals;
            if (is_improvement(spec.metric, value, st.value)) {
              st.combo = proposal;
              st.value = value;
            }
            moved = true;
          }
        }
      } catch (const Error& e) {
        if (!is_budget_exhausted(e)) throw;
        out_of_budget = true;
      }
    }
    levels.push_back(run.finish());
  }
  return make_result("pls", spec, std::move(levels), ctx.meter());
}

}  // namespace masksearch
