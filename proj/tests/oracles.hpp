// Test-only oracles: independent scalar reimplementations, finite
// differences, planted linear models, and brute-force enumerators. Nothing
// here may call into the library code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "masksearch/core.hpp"
#include "masksearch/toy_model.hpp"

namespace oracles {

using masksearch::Instance;
using masksearch::Mat;
using masksearch::ToyClassifier;

// ---------------------------------------------------------------------------
// Independent scalar forward pass (naive loops, unstabilized softmax)
// ---------------------------------------------------------------------------

inline std::vector<double> scalar_forward(const ToyClassifier& m, const std::vector<int32_t>& tokens,
                                          const std::vector<double>& weights,
                                          const std::vector<uint8_t>& zeroed = {},
                                          const Mat* embedding_override = nullptr) {
  const int d = m.config().dim;
  const int h = m.config().hidden;
  const int c = m.config().classes;
  const int len = static_cast<int>(tokens.size());

  double weight_sum = 0.0;
  std::vector<double> pooled(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < len; ++i) {
    weight_sum += weights[static_cast<size_t>(i)];
    const bool zero = !zeroed.empty() && zeroed[static_cast<size_t>(i)];
    for (int j = 0; j < d; ++j) {
      const double x = zero ? 0.0
                            : (embedding_override != nullptr
                                   ? (*embedding_override)(i, j)
                                   : m.embedding(tokens[static_cast<size_t>(i)], j));
      pooled[static_cast<size_t>(j)] += weights[static_cast<size_t>(i)] * x;
    }
  }
  for (int j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] /= weight_sum;

  std::vector<double> hidden(static_cast<size_t>(h), 0.0);
  for (int k = 0; k < h; ++k) {
    double pre = m.b1[static_cast<size_t>(k)];
    for (int j = 0; j < d; ++j) pre += pooled[static_cast<size_t>(j)] * m.w1(j, k);
    hidden[static_cast<size_t>(k)] = std::tanh(pre);
  }
  std::vector<double> logits(static_cast<size_t>(c), 0.0);
  for (int y = 0; y < c; ++y) {
    double v = m.b2[static_cast<size_t>(y)];
    for (int k = 0; k < h; ++k) v += hidden[static_cast<size_t>(k)] * m.w2(k, y);
    logits[static_cast<size_t>(y)] = v;
  }
  double z = 0.0;
  std::vector<double> probs(static_cast<size_t>(c));
  for (int y = 0; y < c; ++y) {
    probs[static_cast<size_t>(y)] = std::exp(logits[static_cast<size_t>(y)]);
    z += probs[static_cast<size_t>(y)];
  }
  for (double& p : probs) p /= z;
  return probs;
}

inline double scalar_ce_loss(const ToyClassifier& m, const std::vector<int32_t>& tokens,
                             const std::vector<double>& weights, int target,
                             const std::vector<uint8_t>& zeroed = {},
                             const Mat* embedding_override = nullptr) {
  return -std::log(scalar_forward(m, tokens, weights, zeroed, embedding_override)[static_cast<size_t>(target)]);
}

// ---------------------------------------------------------------------------
// Central finite differences
// ---------------------------------------------------------------------------

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::vector<double> fd_mask_loss_grad(const ToyClassifier& m, const std::vector<int32_t>& tokens,
                                             std::vector<double> weights, int target,
                                             const std::vector<uint8_t>& zeroed = {},
                                             double h = 1e-5) {
  std::vector<double> grad(weights.size());
  for (size_t i = 0; i < weights.size(); ++i) {
    const double saved = weights[i];
    weights[i] = saved + h;
    const double up = scalar_ce_loss(m, tokens, weights, target, zeroed);
    weights[i] = saved - h;
    const double down = scalar_ce_loss(m, tokens, weights, target, zeroed);
    weights[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// d(target quantity)/d(embedding entry), by central differences on the
/// embedding override matrix. loss=true differentiates the cross-entropy,
/// otherwise the probability of `target`.
inline Mat fd_embedding_grad(const ToyClassifier& m, const std::vector<int32_t>& tokens,
                             const std::vector<double>& weights, int target, bool loss,
                             double h = 1e-5) {
  Mat base = m.embed(std::span<const int32_t>(tokens.data(), tokens.size()));
  Mat grad(base.rows, base.cols);
  for (int i = 0; i < base.rows; ++i) {
    for (int j = 0; j < base.cols; ++j) {
      const double saved = base(i, j);
      base(i, j) = saved + h;
      const std::vector<double> up = scalar_forward(m, tokens, weights, {}, &base);
      base(i, j) = saved - h;
      const std::vector<double> down = scalar_forward(m, tokens, weights, {}, &base);
      base(i, j) = saved;
      const double fu = loss ? -std::log(up[static_cast<size_t>(target)]) : up[static_cast<size_t>(target)];
      const double fd = loss ? -std::log(down[static_cast<size_t>(target)]) : down[static_cast<size_t>(target)];
      grad(i, j) = (fu - fd) / (2.0 * h);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Planted models
// ---------------------------------------------------------------------------

/// Two-class model whose class-1 probability is exactly affine in the mask
/// weights: p1 = c0 + sum_i w_i a_i. Coefficients must keep p1 in (0, 1).
class LinearMaskModel final : public masksearch::ModelHandle {
 public:
  LinearMaskModel(double c0, std::vector<double> w) : c0_(c0), w_(std::move(w)) {}

  int num_classes() const override { return 2; }
  masksearch::Capabilities capabilities() const override { return {}; }
  std::vector<double> predict(const masksearch::MaskedQuery& q,
                              masksearch::BudgetMeter& meter) const override {
    meter.charge(1, 0);
    double p1 = c0_;
    for (size_t i = 0; i < q.weights.size() && i < w_.size(); ++i) p1 += w_[i] * q.weights[i];
    return {1.0 - p1, p1};
  }

 private:
  double c0_;
  std::vector<double> w_;
};

/// Two-class model whose cross-entropy loss against class 0 is exactly
/// linear in the mask weights: -ln p0 = c + sum_i w_i a_i.
class LinearLossModel final : public masksearch::ModelHandle {
 public:
  LinearLossModel(double c, std::vector<double> w) : c_(c), w_(std::move(w)) {}

  int num_classes() const override { return 2; }
  masksearch::Capabilities capabilities() const override { return {.mask_gradients = true}; }
  std::vector<double> predict(const masksearch::MaskedQuery& q,
                              masksearch::BudgetMeter& meter) const override {
    meter.charge(1, 0);
    const double p0 = std::exp(-loss(q.weights));
    return {p0, 1.0 - p0};
  }
  std::vector<double> mask_loss_grad(const masksearch::MaskedQuery& q, int target,
                                     masksearch::BudgetMeter& meter) const override {
    meter.charge(0, 1);
    if (target != 0) throw masksearch::Error(masksearch::Errc::kInvalidInput, "class 0 only");
    std::vector<double> g(q.weights.size(), 0.0);
    for (size_t i = 0; i < g.size() && i < w_.size(); ++i) g[i] = w_[i];
    return g;
  }
  double loss(const std::vector<double>& weights) const {
    double v = c_;
    for (size_t i = 0; i < weights.size() && i < w_.size(); ++i) v += w_[i] * weights[i];
    return v;
  }

 private:
  double c_;
  std::vector<double> w_;
};

/// Two-class model affine in the embedding entries: p0 = b + <A, E>.
class LinearEmbeddingModel final : public masksearch::ModelHandle {
 public:
  LinearEmbeddingModel(double b, Mat a, Mat table) : b_(b), a_(std::move(a)), table_(std::move(table)) {}

  int num_classes() const override { return 2; }
  masksearch::Capabilities capabilities() const override { return {.embedding_gradients = true}; }
  std::vector<double> predict(const masksearch::MaskedQuery& q,
                              masksearch::BudgetMeter& meter) const override {
    return predict_embedded(embed(q.tokens), q.weights, meter);
  }
  Mat embed(std::span<const int32_t> tokens) const override {
    Mat out(static_cast<int>(tokens.size()), table_.cols);
    for (int i = 0; i < out.rows; ++i) {
      const auto src = table_.row(tokens[static_cast<size_t>(i)]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }
  std::vector<double> predict_embedded(const Mat& embeddings, std::span<const double>,
                                       masksearch::BudgetMeter& meter) const override {
    meter.charge(1, 0);
    double p0 = b_;
    for (int i = 0; i < embeddings.rows && i < a_.rows; ++i) {
      for (int j = 0; j < embeddings.cols; ++j) p0 += a_(i, j) * embeddings(i, j);
    }
    return {p0, 1.0 - p0};
  }
  Mat embedding_grad(const Mat& embeddings, std::span<const double>, int target,
                     masksearch::GradTarget grad_target, masksearch::BudgetMeter& meter) const override {
    meter.charge(0, 1);
    if (grad_target != masksearch::GradTarget::kPredictedProbability) {
      throw masksearch::Error(masksearch::Errc::kInvalidInput, "probability target only");
    }
    Mat g(embeddings.rows, embeddings.cols);
    const double sign = target == 0 ? 1.0 : -1.0;
    for (int i = 0; i < g.rows && i < a_.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) g(i, j) = sign * a_(i, j);
    }
    return g;
  }

 private:
  double b_;
  Mat a_;      // L x D coefficients
  Mat table_;  // V x D embeddings
};

// ---------------------------------------------------------------------------
// Brute-force subset enumeration
// ---------------------------------------------------------------------------

inline std::vector<std::vector<int>> all_ksubsets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> combo(static_cast<size_t>(k));
  std::iota(combo.begin(), combo.end(), 0);
  if (k > n) return out;
  for (;;) {
    out.push_back(combo);
    int i = k - 1;
    while (i >= 0 && combo[static_cast<size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++combo[static_cast<size_t>(i)];
    for (int j = i + 1; j < k; ++j) combo[static_cast<size_t>(j)] = combo[static_cast<size_t>(j - 1)] + 1;
  }
  return out;
}

/// Subsets sorted by total theta (descending when asked), ties broken by
/// ascending lexicographic order of the index tuple. Sums accumulate in
/// ascending index order.
inline std::vector<std::vector<int>> sorted_ksubsets_by_theta(const std::vector<double>& theta, int k,
                                                              bool descending) {
  std::vector<double> working = theta;
  if (!descending) {
    for (double& t : working) t = -t;
  }
  std::vector<std::vector<int>> subsets = all_ksubsets(static_cast<int>(theta.size()), k);
  std::vector<double> totals(subsets.size(), 0.0);
  for (size_t s = 0; s < subsets.size(); ++s) {
    for (int i : subsets[s]) totals[s] += working[static_cast<size_t>(i)];
  }
  std::vector<size_t> order(subsets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (totals[a] != totals[b]) return totals[a] > totals[b];
    return subsets[a] < subsets[b];
  });
  std::vector<std::vector<int>> out;
  out.reserve(subsets.size());
  for (size_t idx : order) out.push_back(subsets[idx]);
  return out;
}

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

inline Instance make_instance(std::vector<int32_t> tokens, std::vector<uint8_t> is_protected,
                              int label = 0, std::string id = "test") {
  Instance inst;
  inst.id = std::move(id);
  inst.tokens = std::move(tokens);
  inst.is_protected = std::move(is_protected);
  inst.label = label;
  return inst;
}

inline Instance make_unprotected_instance(std::vector<int32_t> tokens, int label = 0,
                                          std::string id = "test") {
  std::vector<uint8_t> prot(tokens.size(), 0);
  return make_instance(std::move(tokens), std::move(prot), label, std::move(id));
}

/// |observed - n p| within 3 binomial standard deviations.
inline bool within_3sigma(int64_t observed, int64_t n, double p) {
  const double mean = static_cast<double>(n) * p;
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  return std::abs(static_cast<double>(observed) - mean) <= 3.0 * sd;
}

inline double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  const auto ranks = [&](const std::vector<double>& v) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (size_t i = 0; i < n; ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace oracles
