#pragma once

#include <vector>

#include "masksearch/corpus.hpp"
#include "masksearch/replace.hpp"
#include "masksearch/toy_model.hpp"

namespace masksearch {

enum class TrainMode { kStandard, kCounterfactualTrained };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  int epochs = 60;
  double learning_rate = 0.5;
  int batch_size = 32;
  TrainMode mode = TrainMode::kStandard;
  /// Keep-sparsity pool for counterfactual copies; one value is drawn
  /// uniformly per copy.
  std::vector<double> ct_sparsity_pool = {0.05, 0.1, 0.2, 0.5};
  /// Replace function used to build the ablated training copies.
  ReplaceFn ct_replace = {ReplaceKind::kAttentionMask, 10};
  uint64_t seed = 0;
  ToyConfig model;
};

struct TrainLog {
  std::vector<double> epoch_accuracy;        // training-set accuracy after each epoch
  std::vector<int> first_epoch_batch_sizes;  // actual per-batch item counts, epoch 0
};

/// Mini-batch gradient-descent training. In counterfactual mode every batch
/// holds each original input plus one ablated copy of it (same label), built
/// with a random mask at a keep-sparsity drawn from the pool, so batches are
/// exactly twice the configured size. Labels of ablated copies are left
/// unchanged; whether heavy ablation ought to flip them is an open modeling
/// question, documented in the README.
///
/// Marginalize-mode counterfactual copies need `imputer`; a single imputed
/// materialization per copy is used.
ToyClassifier train(const SyntheticCorpus& corpus, const TrainConfig& config, TrainLog* log = nullptr,
                    const Imputer* imputer = nullptr);

/// Plain-forward accuracy of a model over instances.
double accuracy(const ToyClassifier& model, std::span<const Instance> instances);

}  // namespace masksearch
