#include "masksearch/replace.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace masksearch {

const char* replace_kind_name(ReplaceKind kind) {
  switch (kind) {
    case ReplaceKind::kAttentionMask: return "attention";
    case ReplaceKind::kMaskToken: return "mask";
    case ReplaceKind::kSliceOut: return "slice";
    case ReplaceKind::kZeroVector: return "zero";
    case ReplaceKind::kMarginalize: return "marginalize";
  }
  return "unknown";
}

ReplaceKind parse_replace_kind(const std::string& name) {
  if (name == "attention") return ReplaceKind::kAttentionMask;
  if (name == "mask") return ReplaceKind::kMaskToken;
  if (name == "slice") return ReplaceKind::kSliceOut;
  if (name == "zero") return ReplaceKind::kZeroVector;
  if (name == "marginalize") return ReplaceKind::kMarginalize;
  fail(Errc::kInvalidInput, "unknown replace function '" + name +
                                "' (expected attention|mask|slice|zero|marginalize)");
}

// ---------------------------------------------------------------------------
// Imputer
// ---------------------------------------------------------------------------

Imputer Imputer::fit(std::span<const Instance> instances, int vocab, int order) {
  if (instances.empty()) fail(Errc::kInvalidInput, "cannot fit an imputer on an empty corpus");
  if (order != 1 && order != 2) fail(Errc::kInvalidInput, "imputer order must be 1 or 2");
  if (vocab < 2) fail(Errc::kInvalidInput, "imputer vocabulary too small");

  Imputer imp;
  imp.order_ = order;
  imp.vocab_ = vocab;
  imp.unigram_.assign(static_cast<size_t>(vocab), 0);
  for (const Instance& inst : instances) {
    for (size_t i = 0; i < inst.tokens.size(); ++i) {
      const int32_t t = inst.tokens[i];
      if (t <= 0 || t >= vocab) continue;
      ++imp.unigram_[static_cast<size_t>(t)];
      ++imp.unigram_total_;
      if (order == 2 && i > 0) {
        const int32_t prev = inst.tokens[i - 1];
        if (prev <= 0 || prev >= vocab) continue;
        auto& counts = imp.bigram_[prev];
        if (counts.empty()) counts.assign(static_cast<size_t>(vocab), 0);
        ++counts[static_cast<size_t>(t)];
        ++imp.bigram_totals_[prev];
      }
    }
  }
  if (imp.unigram_total_ == 0) fail(Errc::kInvalidInput, "fitting corpus has no usable tokens");
  return imp;
}

Imputer fit_imputer(const SyntheticCorpus& corpus, int order) {
  return Imputer::fit(corpus.instances, corpus.params.vocab, order);
}

const std::vector<int64_t>* Imputer::context_counts(int32_t prev_token) const {
  if (order_ < 2 || prev_token <= 0 || prev_token >= vocab_) return nullptr;
  auto it = bigram_.find(prev_token);
  if (it == bigram_.end()) return nullptr;  // unseen context: back off to unigram
  return &it->second;
}

double Imputer::prob(int32_t prev_token, int32_t token) const {
  if (token <= 0 || token >= vocab_) return 0.0;
  const int types = vocab_ - 1;
  if (const std::vector<int64_t>* counts = context_counts(prev_token)) {
    const int64_t total = bigram_totals_.at(prev_token);
    return static_cast<double>((*counts)[static_cast<size_t>(token)] + 1) /
           static_cast<double>(total + types);
  }
  return static_cast<double>(unigram_[static_cast<size_t>(token)] + 1) /
         static_cast<double>(unigram_total_ + types);
}

int32_t Imputer::sample(int32_t prev_token, Rng& rng) const {
  const int types = vocab_ - 1;
  const std::vector<int64_t>* counts = context_counts(prev_token);
  const int64_t total = counts ? bigram_totals_.at(prev_token) : unigram_total_;
  // Smoothed CDF walk over ids 1..V-1; target is in [0, total + types).
  int64_t target = rng.uniform_int(total + types);
  for (int32_t t = 1; t < vocab_; ++t) {
    const int64_t mass = (counts ? (*counts)[static_cast<size_t>(t)] : unigram_[static_cast<size_t>(t)]) + 1;
    if (target < mass) return t;
    target -= mass;
  }
  return static_cast<int32_t>(vocab_ - 1);  // unreachable; guards fp-free exactness
}

void Imputer::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "masksearch-imputer";
  j["version"] = 1;
  j["order"] = order_;
  j["vocab"] = vocab_;
  j["unigram"] = unigram_;
  nlohmann::json big = nlohmann::json::object();
  for (const auto& [ctx, counts] : bigram_) big[std::to_string(ctx)] = counts;
  j["bigram"] = std::move(big);
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write imputer " + path.string());
  out << j.dump(2) << "\n";
}

Imputer Imputer::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoError, "cannot read imputer " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIoError, "malformed imputer " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "masksearch-imputer") {
    fail(Errc::kInvalidInput, "not an imputer file: " + path.string());
  }
  Imputer imp;
  imp.order_ = j.at("order").get<int>();
  imp.vocab_ = j.at("vocab").get<int>();
  imp.unigram_ = j.at("unigram").get<std::vector<int64_t>>();
  imp.unigram_total_ = 0;
  for (int64_t c : imp.unigram_) imp.unigram_total_ += c;
  for (const auto& [key, counts] : j.at("bigram").items()) {
    const int32_t ctx = static_cast<int32_t>(std::stol(key));
    imp.bigram_[ctx] = counts.get<std::vector<int64_t>>();
    int64_t total = 0;
    for (int64_t c : imp.bigram_[ctx]) total += c;
    imp.bigram_totals_[ctx] = total;
  }
  return imp;
}

// ---------------------------------------------------------------------------
// Replace functions
// ---------------------------------------------------------------------------

namespace {

std::vector<int> hidden_positions(const Instance& inst, const ExplanationMask& mask) {
  std::vector<int> out;
  for (int i = 0; i < inst.length(); ++i) {
    if (!mask.keep[static_cast<size_t>(i)]) out.push_back(i);
  }
  return out;
}

MaskedQuery imputed_query(const Instance& inst, const ExplanationMask& mask,
                          const Imputer& imputer, Rng& rng, std::span<const int> order) {
  MaskedQuery q = raw_query(inst);
  const std::vector<int> hidden = hidden_positions(inst, mask);
  for (int pos : hidden) q.tokens[static_cast<size_t>(pos)] = kMaskTokenId;
  for (int ord : order) {
    const int pos = hidden[static_cast<size_t>(ord)];
    const int32_t prev = pos > 0 ? q.tokens[static_cast<size_t>(pos - 1)] : -1;
    q.tokens[static_cast<size_t>(pos)] = imputer.sample(prev, rng);
  }
  return q;
}

std::vector<int> random_order(size_t n, Rng& rng) {
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  return order;
}

std::vector<double> marginal_mean(const ModelHandle& model, const Instance& inst,
                                  const ExplanationMask& mask, const Imputer& imputer,
                                  int samples, Rng& rng, BudgetMeter& meter,
                                  std::span<const int> fixed_order) {
  if (samples < 1) fail(Errc::kInvalidInput, "marginalize_samples must be >= 1");
  const size_t hidden_count = hidden_positions(inst, mask).size();
  std::vector<double> mean(static_cast<size_t>(model.num_classes()), 0.0);
  for (int s = 0; s < samples; ++s) {
    std::vector<int> order;
    if (fixed_order.empty()) {
      order = random_order(hidden_count, rng);
    } else {
      order.assign(fixed_order.begin(), fixed_order.end());
    }
    const MaskedQuery q = imputed_query(inst, mask, imputer, rng, order);
    const std::vector<double> probs = model.predict(q, meter);
    for (size_t y = 0; y < mean.size(); ++y) mean[y] += probs[y];
  }
  double total = 0.0;
  for (double& m : mean) {
    m /= samples;
    total += m;
  }
  for (double& m : mean) m /= total;
  return mean;
}

}  // namespace

MaskedQuery counterfactual_query(const ReplaceFn& fn, const Instance& inst,
                                 const ExplanationMask& mask, Rng* rng, const Imputer* imputer) {
  validate_mask(inst, mask);
  switch (fn.kind) {
    case ReplaceKind::kAttentionMask: {
      MaskedQuery q = raw_query(inst);
      for (int i = 0; i < inst.length(); ++i) {
        q.weights[static_cast<size_t>(i)] = mask.keep[static_cast<size_t>(i)] ? 1.0 : 0.0;
      }
      return q;
    }
    case ReplaceKind::kMaskToken: {
      MaskedQuery q = raw_query(inst);
      for (int i = 0; i < inst.length(); ++i) {
        if (!mask.keep[static_cast<size_t>(i)]) q.tokens[static_cast<size_t>(i)] = kMaskTokenId;
      }
      return q;
    }
    case ReplaceKind::kSliceOut: {
      MaskedQuery q;
      for (int i = 0; i < inst.length(); ++i) {
        if (mask.keep[static_cast<size_t>(i)]) q.tokens.push_back(inst.tokens[static_cast<size_t>(i)]);
      }
      if (q.tokens.empty()) fail(Errc::kDegenerateMask, "slice-out removed every token");
      q.weights.assign(q.tokens.size(), 1.0);
      return q;
    }
    case ReplaceKind::kZeroVector: {
      MaskedQuery q = raw_query(inst);
      q.zeroed.assign(inst.tokens.size(), 0);
      for (int i = 0; i < inst.length(); ++i) {
        if (!mask.keep[static_cast<size_t>(i)]) q.zeroed[static_cast<size_t>(i)] = 1;
      }
      return q;
    }
    case ReplaceKind::kMarginalize: {
      if (imputer == nullptr || rng == nullptr) {
        fail(Errc::kInvalidInput, "marginalize requires an imputer and a random stream");
      }
      const size_t hidden_count = hidden_positions(inst, mask).size();
      return imputed_query(inst, mask, *imputer, *rng, random_order(hidden_count, *rng));
    }
  }
  fail(Errc::kInvalidInput, "unknown replace kind");
}

std::vector<double> apply_replace(const ReplaceFn& fn, const ModelHandle& model,
                                  const Instance& inst, const ExplanationMask& mask,
                                  BudgetMeter& meter, const Imputer* imputer, Rng* rng) {
  if (fn.kind == ReplaceKind::kMarginalize) {
    if (imputer == nullptr || rng == nullptr) {
      fail(Errc::kInvalidInput, "marginalize requires an imputer and a random stream");
    }
    validate_mask(inst, mask);
    return marginal_mean(model, inst, mask, *imputer, fn.marginalize_samples, *rng, meter, {});
  }
  return model.predict(counterfactual_query(fn, inst, mask, rng, imputer), meter);
}

std::vector<double> marginalize_with_order(const ModelHandle& model, const Instance& inst,
                                           const ExplanationMask& mask, const Imputer& imputer,
                                           int samples, Rng& rng,
                                           std::span<const int> hidden_order, BudgetMeter& meter) {
  validate_mask(inst, mask);
  return marginal_mean(model, inst, mask, imputer, samples, rng, meter, hidden_order);
}

}  // namespace masksearch
