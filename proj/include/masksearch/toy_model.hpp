#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "masksearch/core.hpp"

namespace masksearch {

struct ToyConfig {
  int vocab = 64;
  int dim = 16;
  int hidden = 16;
  int classes = 3;
};

/// Bag-of-embeddings classifier with one tanh hidden layer, used as the
/// desk-scale stand-in for a large text classifier.
///
/// Pooling is a renormalized weighted mean: h = sum_i a_i E[x_i] / sum_i a_i
/// with per-position weights a_i in [0, 1], so setting a weight to 0 removes
/// the token while the remaining probabilities renormalize, the same
/// contract an attention-mask edit provides on a Transformer. Forward with
/// all-ones weights equals forward on the raw instance, and scaling every
/// weight by c > 0 leaves the output unchanged.
class ToyClassifier final : public ModelHandle {
 public:
  ToyClassifier() = default;
  ToyClassifier(const ToyConfig& config, uint64_t init_seed);

  // ModelHandle
  int num_classes() const override { return config_.classes; }
  Capabilities capabilities() const override;
  std::vector<double> predict(const MaskedQuery& q, BudgetMeter& meter) const override;
  std::vector<double> mask_loss_grad(const MaskedQuery& q, int target_class,
                                     BudgetMeter& meter) const override;
  Mat embed(std::span<const int32_t> tokens) const override;
  std::vector<double> predict_embedded(const Mat& embeddings, std::span<const double> weights,
                                       BudgetMeter& meter) const override;
  Mat embedding_grad(const Mat& embeddings, std::span<const double> weights, int target_class,
                     GradTarget target, BudgetMeter& meter) const override;

  /// Gradient of the target with respect to the per-position embedding rows
  /// of a token query (not the shared table rows; duplicated tokens get
  /// separate gradient rows).
  Mat token_embedding_grad(const MaskedQuery& q, int target_class, GradTarget target,
                           BudgetMeter& meter) const;

  const ToyConfig& config() const { return config_; }

  /// When false the model reports no gradient capabilities and all gradient
  /// entry points refuse, which evaluates the model as a black box.
  void set_expose_gradients(bool expose) { expose_gradients_ = expose; }
  bool expose_gradients() const { return expose_gradients_; }

  void save_json(const std::filesystem::path& path) const;
  static ToyClassifier load_json(const std::filesystem::path& path);

  // Intermediate activations of one forward pass; kept public for the
  // training loop's parameter backprop.
  struct Activations {
    std::vector<double> pooled;  // D
    std::vector<double> pre;     // H, pre-tanh
    std::vector<double> hidden;  // H
    std::vector<double> logits;  // C
    std::vector<double> probs;   // C
    double weight_sum = 0.0;
  };

  /// Core forward pass. `embedding_override`, when non-null, supplies the
  /// per-position embedding rows instead of table lookups. `zeroed` may be
  /// empty. Throws degenerate-mask when the effective weight mass is zero.
  void forward_raw(std::span<const int32_t> tokens, std::span<const double> weights,
                   std::span<const uint8_t> zeroed, const Mat* embedding_override,
                   Activations& act) const;

  // Parameters, exposed for the trainer.
  Mat embedding;            // V x D
  Mat w1;                   // D x H
  std::vector<double> b1;   // H
  Mat w2;                   // H x C
  std::vector<double> b2;   // C

 private:
  // d(target)/d(pooled); shared tail of both gradient entry points.
  std::vector<double> pooled_grad(const Activations& act, int target_class,
                                  GradTarget target) const;

  ToyConfig config_;
  bool expose_gradients_ = true;
};

}  // namespace masksearch
