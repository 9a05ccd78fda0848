#include "masksearch/train.hpp"

#include <algorithm>
#include <cmath>

namespace masksearch {

const char* train_mode_name(TrainMode mode) {
  return mode == TrainMode::kStandard ? "standard" : "ct";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "standard") return TrainMode::kStandard;
  if (name == "ct") return TrainMode::kCounterfactualTrained;
  fail(Errc::kInvalidInput, "unknown training mode '" + name + "' (expected standard|ct)");
}

namespace {

struct ParamGrads {
  Mat embedding, w1, w2;
  std::vector<double> b1, b2;

  explicit ParamGrads(const ToyClassifier& m)
      : embedding(m.embedding.rows, m.embedding.cols),
        w1(m.w1.rows, m.w1.cols),
        w2(m.w2.rows, m.w2.cols),
        b1(m.b1.size(), 0.0),
        b2(m.b2.size(), 0.0) {}

  void reset() {
    std::fill(embedding.data.begin(), embedding.data.end(), 0.0);
    std::fill(w1.data.begin(), w1.data.end(), 0.0);
    std::fill(w2.data.begin(), w2.data.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
  }
};

void accumulate_item_grads(const ToyClassifier& model, const MaskedQuery& q, int label,
                           ToyClassifier::Activations& act, ParamGrads& grads) {
  model.forward_raw(q.tokens, q.weights, q.zeroed, nullptr, act);
  const int c = model.config().classes;
  const int h = model.config().hidden;
  const int d = model.config().dim;

  std::vector<double> g_logits(act.probs.begin(), act.probs.end());
  g_logits[static_cast<size_t>(label)] -= 1.0;

  std::vector<double> g_pre(static_cast<size_t>(h));
  for (int m = 0; m < h; ++m) {
    const auto w2_row = model.w2.row(m);
    auto gw2_row = grads.w2.row(m);
    double acc = 0.0;
    const double hm = act.hidden[static_cast<size_t>(m)];
    for (int y = 0; y < c; ++y) {
      gw2_row[static_cast<size_t>(y)] += hm * g_logits[static_cast<size_t>(y)];
      acc += w2_row[static_cast<size_t>(y)] * g_logits[static_cast<size_t>(y)];
    }
    g_pre[static_cast<size_t>(m)] = acc * (1.0 - hm * hm);
  }
  for (int y = 0; y < c; ++y) grads.b2[static_cast<size_t>(y)] += g_logits[static_cast<size_t>(y)];

  std::vector<double> g_pooled(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    const auto w1_row = model.w1.row(j);
    auto gw1_row = grads.w1.row(j);
    const double pj = act.pooled[static_cast<size_t>(j)];
    double acc = 0.0;
    for (int m = 0; m < h; ++m) {
      gw1_row[static_cast<size_t>(m)] += pj * g_pre[static_cast<size_t>(m)];
      acc += w1_row[static_cast<size_t>(m)] * g_pre[static_cast<size_t>(m)];
    }
    g_pooled[static_cast<size_t>(j)] = acc;
  }
  for (int m = 0; m < h; ++m) grads.b1[static_cast<size_t>(m)] += g_pre[static_cast<size_t>(m)];

  // Pooled mean: each contributing row gets (a_i / S) of the pooled gradient.
  // Zeroed positions are constant zero inputs and carry nothing back.
  for (size_t i = 0; i < q.tokens.size(); ++i) {
    const double a = q.weights[i];
    if (a == 0.0) continue;
    if (!q.zeroed.empty() && q.zeroed[i]) continue;
    const double scale = a / act.weight_sum;
    auto row = grads.embedding.row(q.tokens[i]);
    for (int j = 0; j < d; ++j) row[static_cast<size_t>(j)] += scale * g_pooled[static_cast<size_t>(j)];
  }
}

void sgd_step(ToyClassifier& model, const ParamGrads& grads, double lr, int items) {
  const double step = lr / items;
  for (size_t i = 0; i < model.embedding.data.size(); ++i) model.embedding.data[i] -= step * grads.embedding.data[i];
  for (size_t i = 0; i < model.w1.data.size(); ++i) model.w1.data[i] -= step * grads.w1.data[i];
  for (size_t i = 0; i < model.w2.data.size(); ++i) model.w2.data[i] -= step * grads.w2.data[i];
  for (size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= step * grads.b1[i];
  for (size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= step * grads.b2[i];
}

MaskedQuery ablated_copy(const Instance& inst, const TrainConfig& config, Rng& rng,
                         const Imputer* imputer) {
  const int unprot = inst.unprotected_count();
  const size_t pick = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(config.ct_sparsity_pool.size())));
  const double s = config.ct_sparsity_pool[pick];
  const int k = sparsity_count(unprot, s);
  const std::vector<int> kept = rng.sample_indices(unprot, k);
  const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, s);
  return counterfactual_query(config.ct_replace, inst, mask, &rng, imputer);
}

}  // namespace

double accuracy(const ToyClassifier& model, std::span<const Instance> instances) {
  if (instances.empty()) fail(Errc::kInvalidInput, "accuracy over an empty set");
  int correct = 0;
  ToyClassifier::Activations act;
  std::vector<double> ones;
  for (const Instance& inst : instances) {
    ones.assign(inst.tokens.size(), 1.0);
    model.forward_raw(inst.tokens, ones, {}, nullptr, act);
    if (argmax_lowest(act.probs) == inst.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

ToyClassifier train(const SyntheticCorpus& corpus, const TrainConfig& config, TrainLog* log,
                    const Imputer* imputer) {
  if (corpus.instances.empty()) fail(Errc::kInvalidInput, "cannot train on an empty corpus");
  if (config.epochs < 1 || config.batch_size < 1 || config.learning_rate <= 0.0) {
    fail(Errc::kInvalidInput, "bad training configuration");
  }
  const bool ct = config.mode == TrainMode::kCounterfactualTrained;
  if (ct && config.ct_sparsity_pool.empty()) {
    fail(Errc::kInvalidInput, "counterfactual training needs a sparsity pool");
  }
  if (ct && config.ct_replace.kind == ReplaceKind::kMarginalize && imputer == nullptr) {
    fail(Errc::kInvalidInput, "counterfactual training with marginalize needs an imputer");
  }

  ToyConfig model_config = config.model;
  if (model_config.vocab < corpus.params.vocab) model_config.vocab = corpus.params.vocab;
  ToyClassifier model(model_config, config.seed);
  Rng rng = Rng::substream(config.seed, "train");

  const int n = static_cast<int>(corpus.instances.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  ParamGrads grads(model);
  ToyClassifier::Activations act;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      grads.reset();
      int items = 0;
      for (int b = start; b < end; ++b) {
        const Instance& inst = corpus.instances[static_cast<size_t>(order[static_cast<size_t>(b)])];
        accumulate_item_grads(model, raw_query(inst), inst.label, act, grads);
        ++items;
        if (ct) {
          accumulate_item_grads(model, ablated_copy(inst, config, rng, imputer), inst.label, act, grads);
          ++items;
        }
      }
      sgd_step(model, grads, config.learning_rate, items);
      if (log != nullptr && epoch == 0) log->first_epoch_batch_sizes.push_back(items);
    }
    if (log != nullptr) log->epoch_accuracy.push_back(accuracy(model, corpus.instances));
  }
  return model;
}

}  // namespace masksearch
