#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masksearch/errors.hpp"

namespace masksearch {

/// Vocabulary id reserved for the hide-sentinel token. The corpus generator
/// never emits it inside documents, so replace functions can rely on it.
inline constexpr int32_t kMaskTokenId = 0;

// ---------------------------------------------------------------------------
// Instances and masks
// ---------------------------------------------------------------------------

/// A tokenized input. Protected positions (query or special tokens) are never
/// replaced by any counterfactual construction; at least one position must be
/// unprotected or no explanation exists.
struct Instance {
  std::string id;
  std::vector<int32_t> tokens;
  std::vector<uint8_t> is_protected;  // same length as tokens
  int label = 0;

  int length() const { return static_cast<int>(tokens.size()); }
  int unprotected_count() const;
};

void validate_instance(const Instance& inst);
std::vector<int> unprotected_positions(const Instance& inst);

/// Binary keep/hide vector over positions. keep[i] is always true wherever
/// the instance protects position i.
struct ExplanationMask {
  std::vector<uint8_t> keep;
  double sparsity_target = 1.0;

  int kept_count() const;
};

ExplanationMask full_keep_mask(const Instance& inst, double sparsity_target = 1.0);

/// Builds a mask keeping all protected positions plus the unprotected
/// positions listed in `kept_unprotected` (indices into
/// unprotected_positions(inst), not raw token positions).
ExplanationMask mask_from_unprotected_subset(const Instance& inst,
                                             std::span<const int> kept_unprotected,
                                             double sparsity_target);

void validate_mask(const Instance& inst, const ExplanationMask& mask);

// ---------------------------------------------------------------------------
// Sparsity
// ---------------------------------------------------------------------------

enum class Direction { kSufficiency, kComprehensiveness };

struct SparsitySpec {
  std::vector<double> levels;
  Direction direction = Direction::kSufficiency;

  static SparsitySpec sufficiency_default() {
    return {{0.05, 0.10, 0.20, 0.50}, Direction::kSufficiency};
  }
  static SparsitySpec comprehensiveness_default() {
    return {{0.95, 0.90, 0.80, 0.50}, Direction::kComprehensiveness};
  }
};

/// Number of unprotected tokens retained at sparsity s: ceiling(s * length).
/// Always >= 1 for a positive length. Sparsity counts are taken over
/// unprotected positions only; protected tokens are retained on top.
int sparsity_count(int unprotected_len, double s);

/// Unprotected keep count a mask must have at level s: for Sufficiency the
/// mask keeps exactly sparsity_count tokens; for Comprehensiveness it keeps
/// at least that many, i.e. removes the complement.
int level_keep_count(int unprotected_len, double s, Direction direction);

// ---------------------------------------------------------------------------
// Budget accounting
// ---------------------------------------------------------------------------

/// Exact ledger of model passes. Forward and backward passes count toward a
/// single limit; an attempted charge that would exceed the limit throws
/// budget-exhausted without mutating the counters, so totals never exceed
/// the limit and callers can return their best-so-far result.
class BudgetMeter {
 public:
  explicit BudgetMeter(int64_t limit) : limit_(limit) {
    if (limit < 0) fail(Errc::kInvalidInput, "budget limit must be >= 0");
  }
  static BudgetMeter unlimited();

  void charge(int64_t forwards, int64_t backwards);

  /// Throws budget-exhausted (without charging) when fewer than `passes`
  /// remain. Models call this before doing work so a failed computation
  /// never consumes budget.
  void require(int64_t passes) const;

  int64_t forwards() const { return forwards_; }
  int64_t backwards() const { return backwards_; }
  int64_t total() const { return forwards_ + backwards_; }
  int64_t limit() const { return limit_; }
  int64_t remaining() const { return limit_ - total(); }

 private:
  int64_t limit_ = 0;
  int64_t forwards_ = 0;
  int64_t backwards_ = 0;
};

// ---------------------------------------------------------------------------
// Small dense matrix
// ---------------------------------------------------------------------------

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
};

// ---------------------------------------------------------------------------
// Model contract
// ---------------------------------------------------------------------------

struct Capabilities {
  bool mask_gradients = false;
  bool embedding_gradients = false;
};

/// A counterfactual input as the model consumes it: token ids (possibly
/// substituted or shortened), one pooling weight per position, and optional
/// flags forcing a position's embedding to the zero vector.
struct MaskedQuery {
  std::vector<int32_t> tokens;
  std::vector<double> weights;
  std::vector<uint8_t> zeroed;  // empty means none
};

MaskedQuery raw_query(const Instance& inst);

enum class GradTarget { kPredictedProbability, kCrossEntropyLoss };

/// The classifier contract. predict() returns a probability vector of length
/// num_classes() summing to 1 and charges one forward pass. Gradient entry
/// points charge one backward pass each and assume the caller has already
/// performed (and charged) the corresponding forward pass.
class ModelHandle {
 public:
  virtual ~ModelHandle() = default;

  virtual int num_classes() const = 0;
  virtual Capabilities capabilities() const = 0;
  virtual std::vector<double> predict(const MaskedQuery& q, BudgetMeter& meter) const = 0;

  /// d(cross-entropy(target_class)) / d(weights), full length.
  virtual std::vector<double> mask_loss_grad(const MaskedQuery& q, int target_class,
                                             BudgetMeter& meter) const;

  /// Embedding rows for a token sequence. Not a model pass; no charge.
  virtual Mat embed(std::span<const int32_t> tokens) const;

  virtual std::vector<double> predict_embedded(const Mat& embeddings,
                                               std::span<const double> weights,
                                               BudgetMeter& meter) const;

  /// Gradient of the target (predicted-class probability or cross-entropy
  /// loss) with respect to every embedding entry, as an L x D matrix.
  virtual Mat embedding_grad(const Mat& embeddings, std::span<const double> weights,
                             int target_class, GradTarget target, BudgetMeter& meter) const;
};

/// Argmax with ties broken toward the lowest class index.
int argmax_lowest(std::span<const double> values);

/// Predicted class of the unmasked input; charges one forward pass.
int predicted_class(const ModelHandle& model, const Instance& inst, BudgetMeter& meter);

// ---------------------------------------------------------------------------
// Mask digests
// ---------------------------------------------------------------------------

/// Exact packed-bit key for caches and seen-sets (no hash truncation: keys
/// compare equal iff the bit patterns are identical).
struct MaskKey {
  std::vector<uint64_t> words;
  bool operator==(const MaskKey&) const = default;
};

MaskKey pack_bits(std::span<const uint8_t> bits);

struct MaskKeyHash {
  size_t operator()(const MaskKey& k) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint64_t w : k.words) {
      h ^= w;
      h *= 0x100000001b3ull;
    }
    return static_cast<size_t>(h);
  }
};

/// C(n, k), saturating at `cap` so astronomically large spaces are
/// representable without overflow.
int64_t binomial_capped(int n, int k, int64_t cap = int64_t{4000000000000000000});

}  // namespace masksearch
