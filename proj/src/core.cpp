#include "masksearch/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace masksearch {

int Instance::unprotected_count() const {
  int n = 0;
  for (uint8_t p : is_protected) n += p ? 0 : 1;
  return n;
}

void validate_instance(const Instance& inst) {
  if (inst.tokens.empty()) fail(Errc::kInvalidInput, "instance has no tokens");
  if (inst.tokens.size() != inst.is_protected.size()) {
    fail(Errc::kInvalidInput, "protected vector length mismatch for instance " + inst.id);
  }
  if (inst.unprotected_count() == 0) {
    fail(Errc::kInvalidInput, "instance " + inst.id + " has no unprotected positions");
  }
  if (inst.label < 0) fail(Errc::kInvalidInput, "negative label for instance " + inst.id);
}

std::vector<int> unprotected_positions(const Instance& inst) {
  std::vector<int> out;
  out.reserve(inst.tokens.size());
  for (int i = 0; i < inst.length(); ++i) {
    if (!inst.is_protected[static_cast<size_t>(i)]) out.push_back(i);
  }
  return out;
}

int ExplanationMask::kept_count() const {
  int n = 0;
  for (uint8_t k : keep) n += k ? 1 : 0;
  return n;
}

ExplanationMask full_keep_mask(const Instance& inst, double sparsity_target) {
  ExplanationMask m;
  m.keep.assign(inst.tokens.size(), 1);
  m.sparsity_target = sparsity_target;
  return m;
}

ExplanationMask mask_from_unprotected_subset(const Instance& inst,
                                             std::span<const int> kept_unprotected,
                                             double sparsity_target) {
  const std::vector<int> unprot = unprotected_positions(inst);
  ExplanationMask m;
  m.keep.assign(inst.tokens.size(), 0);
  m.sparsity_target = sparsity_target;
  for (int i = 0; i < inst.length(); ++i) {
    if (inst.is_protected[static_cast<size_t>(i)]) m.keep[static_cast<size_t>(i)] = 1;
  }
  for (int idx : kept_unprotected) {
    if (idx < 0 || idx >= static_cast<int>(unprot.size())) {
      fail(Errc::kInvalidInput, "unprotected subset index out of range");
    }
    m.keep[static_cast<size_t>(unprot[static_cast<size_t>(idx)])] = 1;
  }
  return m;
}

void validate_mask(const Instance& inst, const ExplanationMask& mask) {
  if (mask.keep.size() != inst.tokens.size()) {
    fail(Errc::kInvalidInput, "mask length mismatch for instance " + inst.id);
  }
  for (int i = 0; i < inst.length(); ++i) {
    if (inst.is_protected[static_cast<size_t>(i)] && !mask.keep[static_cast<size_t>(i)]) {
      fail(Errc::kInvalidInput, "mask hides protected position in instance " + inst.id);
    }
  }
}

int sparsity_count(int unprotected_len, double s) {
  if (unprotected_len <= 0) fail(Errc::kInvalidInput, "sparsity_count requires a positive length");
  if (!(s > 0.0) || s > 1.0) fail(Errc::kInvalidSparsity, "sparsity level must lie in (0, 1]");
  const int k = static_cast<int>(std::ceil(s * unprotected_len - 1e-12));
  return std::max(1, std::min(k, unprotected_len));
}

int level_keep_count(int unprotected_len, double s, Direction direction) {
  const int k = sparsity_count(unprotected_len, s);
  (void)direction;
  return k;
}

BudgetMeter BudgetMeter::unlimited() {
  return BudgetMeter(std::numeric_limits<int64_t>::max());
}

void BudgetMeter::require(int64_t passes) const {
  if (total() + passes > limit_) {
    fail(Errc::kBudgetExhausted, "need " + std::to_string(passes) + " passes but only " +
                                     std::to_string(remaining()) + " of " + std::to_string(limit_) +
                                     " remain");
  }
}

void BudgetMeter::charge(int64_t forwards, int64_t backwards) {
  if (forwards < 0 || backwards < 0) fail(Errc::kInvalidInput, "negative charge");
  if (total() + forwards + backwards > limit_) {
    fail(Errc::kBudgetExhausted,
         "charge of " + std::to_string(forwards + backwards) + " passes exceeds limit " +
             std::to_string(limit_) + " (used " + std::to_string(total()) + ")");
  }
  forwards_ += forwards;
  backwards_ += backwards;
}

MaskedQuery raw_query(const Instance& inst) {
  MaskedQuery q;
  q.tokens = inst.tokens;
  q.weights.assign(inst.tokens.size(), 1.0);
  return q;
}

std::vector<double> ModelHandle::mask_loss_grad(const MaskedQuery&, int, BudgetMeter&) const {
  fail(Errc::kUnsupportedModel, "model does not expose mask gradients");
}

Mat ModelHandle::embed(std::span<const int32_t>) const {
  fail(Errc::kUnsupportedModel, "model does not expose embeddings");
}

std::vector<double> ModelHandle::predict_embedded(const Mat&, std::span<const double>,
                                                  BudgetMeter&) const {
  fail(Errc::kUnsupportedModel, "model does not expose embedding-level inputs");
}

Mat ModelHandle::embedding_grad(const Mat&, std::span<const double>, int, GradTarget,
                                BudgetMeter&) const {
  fail(Errc::kUnsupportedModel, "model does not expose embedding gradients");
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) fail(Errc::kInvalidInput, "argmax of empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<size_t>(i)] > values[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

int predicted_class(const ModelHandle& model, const Instance& inst, BudgetMeter& meter) {
  const std::vector<double> probs = model.predict(raw_query(inst), meter);
  return argmax_lowest(probs);
}

MaskKey pack_bits(std::span<const uint8_t> bits) {
  MaskKey key;
  key.words.assign((bits.size() + 63) / 64, 0);
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) key.words[i / 64] |= (uint64_t{1} << (i % 64));
  }
  // Length participates in equality so a short mask never aliases a longer one.
  key.words.push_back(static_cast<uint64_t>(bits.size()));
  return key;
}

int64_t binomial_capped(int n, int k, int64_t cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned>(i);
    if (result > static_cast<unsigned __int128>(cap)) return cap;
  }
  return static_cast<int64_t>(result);
}

}  // namespace masksearch
