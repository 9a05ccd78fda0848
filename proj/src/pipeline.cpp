#include "masksearch/pipeline.hpp"

#include "json.hpp"

namespace masksearch {

const char* method_name(Method m) {
  switch (m) {
    case Method::kLime: return "lime";
    case Method::kVanillaGradient: return "vanilla";
    case Method::kIntegratedGradients: return "intgrad";
    case Method::kRandom: return "random";
    case Method::kExhaustive: return "exhaustive";
    case Method::kGradient: return "gradient";
    case Method::kTaylor: return "taylor";
    case Method::kOrdered: return "ordered";
    case Method::kParallelLocal: return "pls";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "lime") return Method::kLime;
  if (name == "vanilla") return Method::kVanillaGradient;
  if (name == "intgrad") return Method::kIntegratedGradients;
  if (name == "random") return Method::kRandom;
  if (name == "exhaustive") return Method::kExhaustive;
  if (name == "gradient") return Method::kGradient;
  if (name == "taylor") return Method::kTaylor;
  if (name == "ordered") return Method::kOrdered;
  if (name == "pls") return Method::kParallelLocal;
  fail(Errc::kInvalidInput,
       "unknown method '" + name +
           "' (expected lime|vanilla|intgrad|random|exhaustive|gradient|taylor|ordered|pls)");
}

bool method_needs_gradients(Method m) {
  return m == Method::kVanillaGradient || m == Method::kIntegratedGradients ||
         m == Method::kGradient || m == Method::kTaylor;
}

bool method_is_salience(Method m) {
  return m == Method::kLime || m == Method::kVanillaGradient || m == Method::kIntegratedGradients;
}

namespace {

/// Binarized salience scores become one mask per level; each mask costs one
/// final metric evaluation (repeats across levels hit the cache).
SearchResult score_and_evaluate(const std::string& name, const SalienceVector& scores,
                                EvalContext& ctx, const ObjectiveSpec& spec) {
  const Instance& inst = ctx.instance();
  const std::vector<ExplanationMask> masks = binarize_topk(scores, inst, spec);
  SearchResult out;
  out.method = name;
  out.metric = spec.metric;
  out.scale = spec.scale;
  const int u = inst.unprotected_count();
  for (size_t i = 0; i < masks.size(); ++i) {
    LevelResult level;
    level.sparsity = spec.sparsity.levels[i];
    level.keep_count = level_keep_count(u, level.sparsity, spec.sparsity.direction);
    level.mask = masks[i];
    level.value = ctx.metric_value(masks[i], spec.scale);
    level.evaluations = 1;
    level.trace = {{1, level.value}};
    out.levels.push_back(std::move(level));
  }
  out.forward_passes = ctx.meter().forwards();
  out.backward_passes = ctx.meter().backwards();
  return out;
}

}  // namespace

SearchResult run_method(Method method, const ModelHandle& model, const Instance& inst,
                        const ObjectiveSpec& spec, const MethodOptions& options, uint64_t seed,
                        const Imputer* imputer) {
  validate_objective(spec);
  validate_instance(inst);
  if (method_needs_gradients(method) && !model.capabilities().mask_gradients &&
      !model.capabilities().embedding_gradients) {
    fail(Errc::kUnsupportedModel,
         std::string(method_name(method)) + " requires gradient access to the model");
  }
  const int num_levels = static_cast<int>(spec.sparsity.levels.size());
  const int64_t budget =
      options.budget_per_level ? options.budget * num_levels : options.budget;

  Rng method_rng = Rng::substream(seed, std::string("method/") + method_name(method) + "/" + inst.id);
  Rng eval_rng = method_rng.fork("eval");

  if (method == Method::kExhaustive) {
    return exhaustive_search(model, inst, spec, options.exhaustive, imputer, &eval_rng);
  }

  BudgetMeter meter(budget);
  EvalContext ctx(model, inst, spec.replace, meter, imputer, &eval_rng);
  switch (method) {
    case Method::kLime: {
      LimeOptions lime_options = options.lime;
      lime_options.num_samples = lime_sample_count(budget, num_levels);
      Rng rng = method_rng.fork("lime");
      const SalienceVector scores =
          lime(model, inst, ctx.predicted(), lime_options, meter, rng);
      return score_and_evaluate("lime", scores, ctx, spec);
    }
    case Method::kVanillaGradient: {
      const SalienceVector scores = vanilla_gradient(model, inst, ctx.predicted(), meter);
      return score_and_evaluate("vanilla", scores, ctx, spec);
    }
    case Method::kIntegratedGradients: {
      const int steps = options.ig_steps > 0 ? options.ig_steps : ig_step_count(budget, num_levels);
      const SalienceVector scores =
          integrated_gradients(model, inst, ctx.predicted(), steps, meter);
      return score_and_evaluate("intgrad", scores, ctx, spec);
    }
    case Method::kRandom:
      return random_search(ctx, spec, budget, method_rng, options.random);
    case Method::kGradient:
      return gradient_search(ctx, spec, budget, method_rng, options.gradient);
    case Method::kTaylor:
      return taylor_search(ctx, spec, budget, method_rng, options.taylor);
    case Method::kOrdered:
      return ordered_search(ctx, spec, budget, method_rng, options.ordered);
    case Method::kParallelLocal:
      return parallel_local_search(ctx, spec, budget, method_rng, options.pls);
    case Method::kExhaustive:
      break;  // handled above
  }
  fail(Errc::kInvalidInput, "unhandled method");
}

std::string search_result_to_json(const SearchResult& result, const Instance& inst,
                                  const std::string& config_digest) {
  nlohmann::json j;
  j["format"] = "masksearch-search-result";
  j["version"] = 1;
  j["config_digest"] = config_digest;
  j["instance"] = inst.id;
  j["method"] = result.method;
  j["metric"] = metric_name(result.metric);
  j["scale"] = scale_name(result.scale);
  j["objective"] = result.objective();
  j["forward_passes"] = result.forward_passes;
  j["backward_passes"] = result.backward_passes;
  nlohmann::json levels = nlohmann::json::array();
  for (const LevelResult& level : result.levels) {
    nlohmann::json lj;
    lj["sparsity"] = level.sparsity;
    lj["keep_count"] = level.keep_count;
    nlohmann::json keep = nlohmann::json::array();
    for (int i = 0; i < static_cast<int>(level.mask.keep.size()); ++i) {
      if (level.mask.keep[static_cast<size_t>(i)]) keep.push_back(i);
    }
    lj["kept_positions"] = std::move(keep);
    lj["value"] = level.value;
    lj["evaluations"] = level.evaluations;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [step, best] : level.trace) trace.push_back({step, best});
    lj["trace"] = std::move(trace);
    levels.push_back(std::move(lj));
  }
  j["levels"] = std::move(levels);
  return j.dump(2);
}

}  // namespace masksearch
