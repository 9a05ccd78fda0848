#pragma once

#include <string>

#include "masksearch/search.hpp"

namespace masksearch {

enum class Method {
  kLime,
  kVanillaGradient,
  kIntegratedGradients,
  kRandom,
  kExhaustive,
  kGradient,
  kTaylor,
  kOrdered,
  kParallelLocal,
};

const char* method_name(Method m);
Method parse_method(const std::string& name);
bool method_needs_gradients(Method m);
bool method_is_salience(Method m);

struct MethodOptions {
  int64_t budget = 1000;
  /// When set, `budget` applies to every sparsity level instead of being
  /// split across them (the split is the default accounting).
  bool budget_per_level = false;
  LimeOptions lime;
  int ig_steps = 0;  // 0 derives steps from the budget
  RandomSearchOptions random;
  ExhaustiveOptions exhaustive;
  GradientSearchOptions gradient;
  TaylorSearchOptions taylor;
  OrderedSearchOptions ordered;
  PlsOptions pls;
};

/// Runs one explanation method against one instance and returns the best
/// mask, value and trace per sparsity level.
///
/// Salience methods produce scores, binarize them per level, and spend one
/// final metric evaluation per level; search methods spend the budget on
/// objective evaluations directly. The instance's own prediction is
/// computed up front and is not drawn from the method budget.
SearchResult run_method(Method method, const ModelHandle& model, const Instance& inst,
                        const ObjectiveSpec& spec, const MethodOptions& options, uint64_t seed,
                        const Imputer* imputer = nullptr);

std::string search_result_to_json(const SearchResult& result, const Instance& inst,
                                  const std::string& config_digest);

}  // namespace masksearch
