#include "masksearch/toy_model.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "masksearch/rng.hpp"

namespace masksearch {

namespace {

constexpr double kMinWeightMass = 1e-12;

void softmax_inplace(std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
  Mat m(static_cast<int>(j.size()), j.empty() ? 0 : static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

ToyClassifier::ToyClassifier(const ToyConfig& config, uint64_t init_seed) : config_(config) {
  if (config.vocab < 2 || config.dim < 1 || config.hidden < 1 || config.classes < 2) {
    fail(Errc::kInvalidInput, "toy classifier configuration out of range");
  }
  Rng rng = Rng::substream(init_seed, "toy-init");
  embedding = Mat(config.vocab, config.dim);
  for (double& x : embedding.data) x = 0.5 * rng.normal();
  w1 = Mat(config.dim, config.hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(config.dim));
  for (double& x : w1.data) x = s1 * rng.normal();
  b1.assign(static_cast<size_t>(config.hidden), 0.0);
  w2 = Mat(config.hidden, config.classes);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (double& x : w2.data) x = s2 * rng.normal();
  b2.assign(static_cast<size_t>(config.classes), 0.0);
}

Capabilities ToyClassifier::capabilities() const {
  if (!expose_gradients_) return {};
  return {.mask_gradients = true, .embedding_gradients = true};
}

void ToyClassifier::forward_raw(std::span<const int32_t> tokens, std::span<const double> weights,
                                std::span<const uint8_t> zeroed, const Mat* embedding_override,
                                Activations& act) const {
  const int len = static_cast<int>(tokens.size());
  if (len == 0) fail(Errc::kDegenerateMask, "empty input sequence");
  if (static_cast<int>(weights.size()) != len) {
    fail(Errc::kInvalidInput, "weights length mismatch");
  }
  if (!zeroed.empty() && static_cast<int>(zeroed.size()) != len) {
    fail(Errc::kInvalidInput, "zeroed length mismatch");
  }
  if (embedding_override != nullptr &&
      (embedding_override->rows != len || embedding_override->cols != config_.dim)) {
    fail(Errc::kInvalidInput, "embedding override shape mismatch");
  }

  const int d = config_.dim;
  act.pooled.assign(static_cast<size_t>(d), 0.0);
  double weight_sum = 0.0;
  for (int i = 0; i < len; ++i) {
    const double a = weights[static_cast<size_t>(i)];
    if (a < 0.0) fail(Errc::kInvalidInput, "negative mask weight");
    weight_sum += a;
    if (a == 0.0) continue;
    if (!zeroed.empty() && zeroed[static_cast<size_t>(i)]) continue;  // zero row adds nothing
    std::span<const double> row;
    if (embedding_override != nullptr) {
      row = embedding_override->row(i);
    } else {
      const int32_t t = tokens[static_cast<size_t>(i)];
      if (t < 0 || t >= config_.vocab) fail(Errc::kInvalidInput, "token id out of vocabulary");
      row = embedding.row(t);
    }
    for (int j = 0; j < d; ++j) act.pooled[static_cast<size_t>(j)] += a * row[static_cast<size_t>(j)];
  }
  if (weight_sum <= kMinWeightMass) {
    fail(Errc::kDegenerateMask, "all-zero mask weights leave nothing to pool");
  }
  for (double& x : act.pooled) x /= weight_sum;
  act.weight_sum = weight_sum;

  const int h = config_.hidden;
  act.pre.assign(static_cast<size_t>(h), 0.0);
  for (int j = 0; j < d; ++j) {
    const double pj = act.pooled[static_cast<size_t>(j)];
    if (pj == 0.0) continue;
    const auto row = w1.row(j);
    for (int m = 0; m < h; ++m) act.pre[static_cast<size_t>(m)] += pj * row[static_cast<size_t>(m)];
  }
  act.hidden.resize(static_cast<size_t>(h));
  for (int m = 0; m < h; ++m) {
    act.pre[static_cast<size_t>(m)] += b1[static_cast<size_t>(m)];
    act.hidden[static_cast<size_t>(m)] = std::tanh(act.pre[static_cast<size_t>(m)]);
  }

  const int c = config_.classes;
  act.logits.assign(b2.begin(), b2.end());
  for (int m = 0; m < h; ++m) {
    const double hm = act.hidden[static_cast<size_t>(m)];
    const auto row = w2.row(m);
    for (int y = 0; y < c; ++y) act.logits[static_cast<size_t>(y)] += hm * row[static_cast<size_t>(y)];
  }
  act.probs = act.logits;
  softmax_inplace(act.probs);
}

std::vector<double> ToyClassifier::predict(const MaskedQuery& q, BudgetMeter& meter) const {
  meter.require(1);
  Activations act;
  forward_raw(q.tokens, q.weights, q.zeroed, nullptr, act);
  meter.charge(1, 0);
  return act.probs;
}

std::vector<double> ToyClassifier::pooled_grad(const Activations& act, int target_class,
                                               GradTarget target) const {
  const int c = config_.classes;
  const int h = config_.hidden;
  const int d = config_.dim;
  if (target_class < 0 || target_class >= c) fail(Errc::kInvalidInput, "target class out of range");

  // d(target)/d(logits)
  std::vector<double> g_logits(static_cast<size_t>(c));
  if (target == GradTarget::kCrossEntropyLoss) {
    for (int y = 0; y < c; ++y) g_logits[static_cast<size_t>(y)] = act.probs[static_cast<size_t>(y)];
    g_logits[static_cast<size_t>(target_class)] -= 1.0;
  } else {
    const double py = act.probs[static_cast<size_t>(target_class)];
    for (int y = 0; y < c; ++y) {
      g_logits[static_cast<size_t>(y)] = py * ((y == target_class ? 1.0 : 0.0) - act.probs[static_cast<size_t>(y)]);
    }
  }

  std::vector<double> g_hidden(static_cast<size_t>(h), 0.0);
  for (int m = 0; m < h; ++m) {
    const auto row = w2.row(m);
    double acc = 0.0;
    for (int y = 0; y < c; ++y) acc += row[static_cast<size_t>(y)] * g_logits[static_cast<size_t>(y)];
    const double hm = act.hidden[static_cast<size_t>(m)];
    g_hidden[static_cast<size_t>(m)] = acc * (1.0 - hm * hm);  // through tanh
  }

  std::vector<double> g_pooled(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    const auto row = w1.row(j);
    double acc = 0.0;
    for (int m = 0; m < h; ++m) acc += row[static_cast<size_t>(m)] * g_hidden[static_cast<size_t>(m)];
    g_pooled[static_cast<size_t>(j)] = acc;
  }
  return g_pooled;
}

std::vector<double> ToyClassifier::mask_loss_grad(const MaskedQuery& q, int target_class,
                                                  BudgetMeter& meter) const {
  if (!expose_gradients_) fail(Errc::kUnsupportedModel, "model evaluated as a black box");
  meter.require(1);
  Activations act;
  forward_raw(q.tokens, q.weights, q.zeroed, nullptr, act);
  const std::vector<double> g_pooled = pooled_grad(act, target_class, GradTarget::kCrossEntropyLoss);
  meter.charge(0, 1);

  // pooled = sum_i a_i x_i / S  =>  d pooled / d a_i = (x_i - pooled) / S.
  const int len = static_cast<int>(q.tokens.size());
  const int d = config_.dim;
  std::vector<double> grad(static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i) {
    double acc = 0.0;
    const bool zero_row = !q.zeroed.empty() && q.zeroed[static_cast<size_t>(i)];
    std::span<const double> row;
    if (!zero_row) row = embedding.row(q.tokens[static_cast<size_t>(i)]);
    for (int j = 0; j < d; ++j) {
      const double xj = zero_row ? 0.0 : row[static_cast<size_t>(j)];
      acc += g_pooled[static_cast<size_t>(j)] * (xj - act.pooled[static_cast<size_t>(j)]);
    }
    grad[static_cast<size_t>(i)] = acc / act.weight_sum;
  }
  return grad;
}

Mat ToyClassifier::embed(std::span<const int32_t> tokens) const {
  Mat out(static_cast<int>(tokens.size()), config_.dim);
  for (int i = 0; i < out.rows; ++i) {
    const int32_t t = tokens[static_cast<size_t>(i)];
    if (t < 0 || t >= config_.vocab) fail(Errc::kInvalidInput, "token id out of vocabulary");
    const auto src = embedding.row(t);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

std::vector<double> ToyClassifier::predict_embedded(const Mat& embeddings,
                                                    std::span<const double> weights,
                                                    BudgetMeter& meter) const {
  meter.require(1);
  std::vector<int32_t> dummy_tokens(static_cast<size_t>(embeddings.rows), 0);
  Activations act;
  forward_raw(dummy_tokens, weights, {}, &embeddings, act);
  meter.charge(1, 0);
  return act.probs;
}

Mat ToyClassifier::embedding_grad(const Mat& embeddings, std::span<const double> weights,
                                  int target_class, GradTarget target, BudgetMeter& meter) const {
  if (!expose_gradients_) fail(Errc::kUnsupportedModel, "model evaluated as a black box");
  meter.require(1);
  std::vector<int32_t> dummy_tokens(static_cast<size_t>(embeddings.rows), 0);
  Activations act;
  forward_raw(dummy_tokens, weights, {}, &embeddings, act);
  const std::vector<double> g_pooled = pooled_grad(act, target_class, target);
  meter.charge(0, 1);

  // d pooled / d x_i = (a_i / S) I.
  Mat grad(embeddings.rows, config_.dim);
  for (int i = 0; i < embeddings.rows; ++i) {
    const double scale = weights[static_cast<size_t>(i)] / act.weight_sum;
    auto row = grad.row(i);
    for (int j = 0; j < config_.dim; ++j) row[static_cast<size_t>(j)] = scale * g_pooled[static_cast<size_t>(j)];
  }
  return grad;
}

Mat ToyClassifier::token_embedding_grad(const MaskedQuery& q, int target_class, GradTarget target,
                                        BudgetMeter& meter) const {
  Mat emb = embed(q.tokens);
  if (!q.zeroed.empty()) {
    for (int i = 0; i < emb.rows; ++i) {
      if (q.zeroed[static_cast<size_t>(i)]) {
        auto row = emb.row(i);
        std::fill(row.begin(), row.end(), 0.0);
      }
    }
  }
  return embedding_grad(emb, q.weights, target_class, target, meter);
}

void ToyClassifier::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "masksearch-toy-classifier";
  j["version"] = 1;
  j["vocab"] = config_.vocab;
  j["dim"] = config_.dim;
  j["hidden"] = config_.hidden;
  j["classes"] = config_.classes;
  j["expose_gradients"] = expose_gradients_;
  j["embedding"] = mat_to_json(embedding);
  j["w1"] = mat_to_json(w1);
  j["b1"] = b1;
  j["w2"] = mat_to_json(w2);
  j["b2"] = b2;
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write checkpoint " + path.string());
  out << j.dump(2) << "\n";
}

ToyClassifier ToyClassifier::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoError, "cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIoError, "malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "masksearch-toy-classifier") {
    fail(Errc::kInvalidInput, "not a toy-classifier checkpoint: " + path.string());
  }
  ToyClassifier model;
  model.config_.vocab = j.at("vocab").get<int>();
  model.config_.dim = j.at("dim").get<int>();
  model.config_.hidden = j.at("hidden").get<int>();
  model.config_.classes = j.at("classes").get<int>();
  model.expose_gradients_ = j.value("expose_gradients", true);
  model.embedding = mat_from_json(j.at("embedding"));
  model.w1 = mat_from_json(j.at("w1"));
  model.b1 = j.at("b1").get<std::vector<double>>();
  model.w2 = mat_from_json(j.at("w2"));
  model.b2 = j.at("b2").get<std::vector<double>>();
  return model;
}

}  // namespace masksearch
