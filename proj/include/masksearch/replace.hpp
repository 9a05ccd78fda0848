#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "masksearch/core.hpp"
#include "masksearch/corpus.hpp"
#include "masksearch/rng.hpp"

namespace masksearch {

enum class ReplaceKind { kAttentionMask, kMaskToken, kSliceOut, kZeroVector, kMarginalize };

struct ReplaceFn {
  ReplaceKind kind = ReplaceKind::kAttentionMask;
  int marginalize_samples = 10;
};

const char* replace_kind_name(ReplaceKind kind);
ReplaceKind parse_replace_kind(const std::string& name);

/// Corpus-fitted n-gram sampler used by the Marginalize replace function as
/// its generative model of plausible token fill-ins. Counts carry add-one
/// smoothing over the usable vocabulary (ids 1..V-1; id 0 is the reserved
/// hide sentinel and is never produced). Order 2 conditions on the left
/// neighbor and backs off to the unigram table when the context was never
/// seen in the fitting corpus.
class Imputer {
 public:
  Imputer() = default;

  static Imputer fit(std::span<const Instance> instances, int vocab, int order);

  /// Draws a replacement token given the materialized left neighbor (pass a
  /// negative value or the hide sentinel when there is none).
  int32_t sample(int32_t prev_token, Rng& rng) const;

  /// Smoothed probability of `token` under the given context.
  double prob(int32_t prev_token, int32_t token) const;

  int order() const { return order_; }
  int vocab() const { return vocab_; }

  void save_json(const std::filesystem::path& path) const;
  static Imputer load_json(const std::filesystem::path& path);

 private:
  const std::vector<int64_t>* context_counts(int32_t prev_token) const;

  int order_ = 1;
  int vocab_ = 0;
  std::vector<int64_t> unigram_;  // index by token id; id 0 unused
  int64_t unigram_total_ = 0;
  std::unordered_map<int32_t, std::vector<int64_t>> bigram_;
  std::unordered_map<int32_t, int64_t> bigram_totals_;
};

Imputer fit_imputer(const SyntheticCorpus& corpus, int order);

/// Builds the model-facing counterfactual input for (instance, mask) under
/// one replace function. For Marginalize this materializes a single imputed
/// sample (hidden positions set to the sentinel, then imputed one at a time
/// in a fresh random order).
MaskedQuery counterfactual_query(const ReplaceFn& fn, const Instance& inst,
                                 const ExplanationMask& mask, Rng* rng = nullptr,
                                 const Imputer* imputer = nullptr);

/// Evaluates the model on the counterfactual input. Charges one forward pass
/// for AttentionMask / MaskToken / SliceOut / ZeroVector and
/// marginalize_samples forwards for Marginalize, whose result is the
/// renormalized sample mean of the per-imputation probability vectors (the
/// Monte Carlo estimate of the marginal; its argmax equals the argmax of the
/// log of the summed probabilities).
std::vector<double> apply_replace(const ReplaceFn& fn, const ModelHandle& model,
                                  const Instance& inst, const ExplanationMask& mask,
                                  BudgetMeter& meter, const Imputer* imputer = nullptr,
                                  Rng* rng = nullptr);

/// Marginalize with a caller-fixed imputation order (diagnostics and order
/// sensitivity checks); order entries are positions into the hidden set.
std::vector<double> marginalize_with_order(const ModelHandle& model, const Instance& inst,
                                           const ExplanationMask& mask, const Imputer& imputer,
                                           int samples, Rng& rng,
                                           std::span<const int> hidden_order, BudgetMeter& meter);

}  // namespace masksearch
