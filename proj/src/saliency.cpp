#include "masksearch/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace masksearch {

const char* salience_method_name(SalienceMethod m) {
  switch (m) {
    case SalienceMethod::kLime: return "lime";
    case SalienceMethod::kVanillaGradient: return "vanilla";
    case SalienceMethod::kIntegratedGradients: return "intgrad";
  }
  return "unknown";
}

int lime_sample_count(int64_t budget, int num_levels) {
  const int64_t n = budget - num_levels;
  if (n < 1) fail(Errc::kInvalidInput, "budget leaves no room for LIME samples");
  return static_cast<int>(n);
}

int ig_step_count(int64_t budget, int num_levels) {
  const int64_t steps = (budget - num_levels) / 2;
  if (steps < 1) fail(Errc::kInvalidInput, "budget leaves no room for integration steps");
  return static_cast<int>(steps);
}

namespace {

/// Cholesky solve of A x = b for symmetric positive definite A (ridge normal
/// equations are SPD for any positive regularizer).
std::vector<double> solve_spd(Mat a, std::vector<double> b) {
  const int n = a.rows;
  for (int j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (int k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
    if (diag <= 0.0) fail(Errc::kInvalidInput, "ridge system is not positive definite");
    const double root = std::sqrt(diag);
    a(j, j) = root;
    for (int i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (int k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
      a(i, j) = v / root;
    }
  }
  for (int i = 0; i < n; ++i) {
    double v = b[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) v -= a(i, k) * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = v / a(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double v = b[static_cast<size_t>(i)];
    for (int k = i + 1; k < n; ++k) v -= a(k, i) * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = v / a(i, i);
  }
  return b;
}

/// Weighted ridge with an unpenalized intercept, via weighted centering.
/// Returns one coefficient per column of x; `columns` selects a subset.
std::vector<double> weighted_ridge(const Mat& x, const std::vector<double>& y,
                                   const std::vector<double>& w, double alpha,
                                   const std::vector<int>& columns) {
  const int n = x.rows;
  const int p = static_cast<int>(columns.size());
  double wsum = 0.0;
  for (double wi : w) wsum += wi;
  if (wsum <= 0.0) fail(Errc::kInvalidInput, "kernel weights sum to zero");

  std::vector<double> xbar(static_cast<size_t>(p), 0.0);
  double ybar = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) xbar[static_cast<size_t>(j)] += w[static_cast<size_t>(i)] * x(i, columns[static_cast<size_t>(j)]);
    ybar += w[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
  }
  for (double& v : xbar) v /= wsum;
  ybar /= wsum;

  Mat a(p, p);
  std::vector<double> rhs(static_cast<size_t>(p), 0.0);
  for (int i = 0; i < n; ++i) {
    const double wi = w[static_cast<size_t>(i)];
    const double yc = y[static_cast<size_t>(i)] - ybar;
    for (int j = 0; j < p; ++j) {
      const double xj = x(i, columns[static_cast<size_t>(j)]) - xbar[static_cast<size_t>(j)];
      rhs[static_cast<size_t>(j)] += wi * xj * yc;
      for (int k = j; k < p; ++k) {
        const double xk = x(i, columns[static_cast<size_t>(k)]) - xbar[static_cast<size_t>(k)];
        a(j, k) += wi * xj * xk;
      }
    }
  }
  for (int j = 0; j < p; ++j) {
    a(j, j) += alpha;
    for (int k = j + 1; k < p; ++k) a(k, j) = a(j, k);
  }
  return solve_spd(std::move(a), std::move(rhs));
}

double weighted_sse(const Mat& x, const std::vector<double>& y, const std::vector<double>& w,
                    const std::vector<int>& columns, const std::vector<double>& beta) {
  // Intercept refit on the residual mean, matching weighted_ridge's centering.
  const int n = x.rows;
  double wsum = 0.0, rbar = 0.0;
  std::vector<double> fitted(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double f = 0.0;
    for (size_t j = 0; j < columns.size(); ++j) f += beta[j] * x(i, columns[j]);
    fitted[static_cast<size_t>(i)] = f;
    wsum += w[static_cast<size_t>(i)];
    rbar += w[static_cast<size_t>(i)] * (y[static_cast<size_t>(i)] - f);
  }
  rbar /= wsum;
  double sse = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = y[static_cast<size_t>(i)] - fitted[static_cast<size_t>(i)] - rbar;
    sse += w[static_cast<size_t>(i)] * r * r;
  }
  return sse;
}

}  // namespace

SalienceVector lime(const ModelHandle& model, const Instance& inst, int predicted,
                    const LimeOptions& options, BudgetMeter& meter, Rng& rng) {
  validate_instance(inst);
  if (options.num_samples < 1) fail(Errc::kInvalidInput, "LIME needs at least one sample");
  const int len = inst.length();
  const std::vector<int> unprot = unprotected_positions(inst);
  const int u = static_cast<int>(unprot.size());

  SalienceVector out;
  out.method = SalienceMethod::kLime;
  out.scores.assign(static_cast<size_t>(len), 0.0);
  if (options.num_samples < u + 1) {
    out.warnings.push_back("sample count below feature count + 1; ridge fit is underdetermined");
  }

  Mat features(options.num_samples, u);
  std::vector<double> targets(static_cast<size_t>(options.num_samples));
  std::vector<double> weights(static_cast<size_t>(options.num_samples));

  MaskedQuery q = raw_query(inst);
  for (int n = 0; n < options.num_samples; ++n) {
    // Each sample hides a uniformly random count of uniformly placed
    // unprotected positions.
    const int hide = 1 + static_cast<int>(rng.uniform_int(u));
    const std::vector<int> hidden = rng.sample_indices(u, hide);
    std::fill(q.weights.begin(), q.weights.end(), 1.0);
    for (int j = 0; j < u; ++j) features(n, j) = 1.0;
    for (int h : hidden) {
      q.weights[static_cast<size_t>(unprot[static_cast<size_t>(h)])] = 0.0;
      features(n, h) = 0.0;
    }
    targets[static_cast<size_t>(n)] = model.predict(q, meter)[static_cast<size_t>(predicted)];
    // Cosine distance between the all-ones mask and the sample mask over the
    // full input (protected coordinates stay 1 in both).
    const double cosine = std::sqrt(static_cast<double>(len - hide) / static_cast<double>(len));
    const double scaled = options.kernel_scale * (1.0 - cosine);
    weights[static_cast<size_t>(n)] =
        std::exp(-(scaled * scaled) / (options.kernel_width * options.kernel_width));
  }
  out.passes_used = options.num_samples;

  std::vector<int> columns;
  if (options.forward_selection && u <= options.forward_selection_max_features) {
    // Greedy forward selection: add the feature whose ridge fit most reduces
    // the weighted residual, one at a time.
    std::vector<int> remaining(static_cast<size_t>(u));
    std::iota(remaining.begin(), remaining.end(), 0);
    while (!remaining.empty() &&
           static_cast<int>(columns.size()) < options.forward_selection_max_features) {
      int best = -1;
      double best_sse = 0.0;
      for (size_t cand = 0; cand < remaining.size(); ++cand) {
        std::vector<int> trial = columns;
        trial.push_back(remaining[cand]);
        const std::vector<double> beta = weighted_ridge(features, targets, weights,
                                                        options.ridge_alpha, trial);
        const double sse = weighted_sse(features, targets, weights, trial, beta);
        if (best < 0 || sse < best_sse) {
          best = static_cast<int>(cand);
          best_sse = sse;
        }
      }
      columns.push_back(remaining[static_cast<size_t>(best)]);
      remaining.erase(remaining.begin() + best);
    }
    std::sort(columns.begin(), columns.end());
  } else {
    columns.resize(static_cast<size_t>(u));
    std::iota(columns.begin(), columns.end(), 0);
  }

  const std::vector<double> beta =
      weighted_ridge(features, targets, weights, options.ridge_alpha, columns);
  for (size_t j = 0; j < columns.size(); ++j) {
    out.scores[static_cast<size_t>(unprot[static_cast<size_t>(columns[j])])] = beta[j];
  }
  return out;
}

SalienceVector vanilla_gradient(const ModelHandle& model, const Instance& inst, int predicted,
                                BudgetMeter& meter) {
  validate_instance(inst);
  if (!model.capabilities().embedding_gradients) {
    fail(Errc::kUnsupportedModel, "vanilla gradients need embedding gradients");
  }
  const Mat emb = model.embed(inst.tokens);
  const std::vector<double> ones(inst.tokens.size(), 1.0);
  (void)model.predict_embedded(emb, ones, meter);
  const Mat grad =
      model.embedding_grad(emb, ones, predicted, GradTarget::kPredictedProbability, meter);

  SalienceVector out;
  out.method = SalienceMethod::kVanillaGradient;
  out.passes_used = 2;
  out.scores.assign(static_cast<size_t>(inst.length()), 0.0);
  for (int i = 0; i < inst.length(); ++i) {
    const auto row = grad.row(i);
    double sum = 0.0;
    for (double g : row) sum += g;
    out.scores[static_cast<size_t>(i)] = sum;
  }
  return out;
}

SalienceVector integrated_gradients(const ModelHandle& model, const Instance& inst, int predicted,
                                    int steps, BudgetMeter& meter) {
  validate_instance(inst);
  if (steps < 1) fail(Errc::kInvalidInput, "integrated gradients need at least one step");
  if (!model.capabilities().embedding_gradients) {
    fail(Errc::kUnsupportedModel, "integrated gradients need embedding gradients");
  }
  const int len = inst.length();
  const Mat input = model.embed(inst.tokens);
  Mat baseline = input;
  const int32_t sentinel = kMaskTokenId;
  const Mat mask_row = model.embed(std::span<const int32_t>(&sentinel, 1));
  for (int i = 0; i < len; ++i) {
    if (inst.is_protected[static_cast<size_t>(i)]) continue;
    auto dst = baseline.row(i);
    const auto src = mask_row.row(0);
    std::copy(src.begin(), src.end(), dst.begin());
  }

  const std::vector<double> ones(static_cast<size_t>(len), 1.0);
  Mat accum(len, input.cols);
  Mat point(len, input.cols);
  for (int t = 0; t < steps; ++t) {
    const double alpha = (t + 0.5) / steps;
    for (size_t i = 0; i < point.data.size(); ++i) {
      point.data[i] = baseline.data[i] + alpha * (input.data[i] - baseline.data[i]);
    }
    (void)model.predict_embedded(point, ones, meter);
    const Mat grad =
        model.embedding_grad(point, ones, predicted, GradTarget::kPredictedProbability, meter);
    for (size_t i = 0; i < accum.data.size(); ++i) accum.data[i] += grad.data[i];
  }

  SalienceVector out;
  out.method = SalienceMethod::kIntegratedGradients;
  out.passes_used = 2 * static_cast<int64_t>(steps);
  out.scores.assign(static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i) {
    double sum = 0.0;
    for (int d = 0; d < input.cols; ++d) {
      sum += (input(i, d) - baseline(i, d)) * accum(i, d) / steps;
    }
    out.scores[static_cast<size_t>(i)] = sum;
  }
  return out;
}

std::vector<ExplanationMask> binarize_topk(const SalienceVector& scores, const Instance& inst,
                                           const ObjectiveSpec& spec) {
  validate_objective(spec);
  if (scores.scores.size() != inst.tokens.size()) {
    fail(Errc::kInvalidInput, "salience length mismatch");
  }
  const std::vector<int> unprot = unprotected_positions(inst);
  const int u = static_cast<int>(unprot.size());

  // Rank unprotected positions by score, ties toward the lower position.
  std::vector<int> ranked(static_cast<size_t>(u));
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double sa = scores.scores[static_cast<size_t>(unprot[static_cast<size_t>(a)])];
    const double sb = scores.scores[static_cast<size_t>(unprot[static_cast<size_t>(b)])];
    if (sa != sb) return sa > sb;
    return a < b;
  });

  std::vector<ExplanationMask> out;
  out.reserve(spec.sparsity.levels.size());
  for (double level : spec.sparsity.levels) {
    const int keep_k = level_keep_count(u, level, spec.sparsity.direction);
    std::vector<int> selected;  // up to the top-k, negative scores excluded
    const int budget = spec.metric == Metric::kSufficiency ? keep_k : u - keep_k;
    for (int r : ranked) {
      if (static_cast<int>(selected.size()) >= budget) break;
      if (scores.scores[static_cast<size_t>(unprot[static_cast<size_t>(r)])] < 0.0) break;
      selected.push_back(r);
    }
    std::vector<int> kept;
    if (spec.metric == Metric::kSufficiency) {
      kept = selected;
    } else {
      std::vector<uint8_t> removed(static_cast<size_t>(u), 0);
      for (int r : selected) removed[static_cast<size_t>(r)] = 1;
      for (int i = 0; i < u; ++i) {
        if (!removed[static_cast<size_t>(i)]) kept.push_back(i);
      }
    }
    std::sort(kept.begin(), kept.end());
    out.push_back(mask_from_unprotected_subset(inst, kept, level));
  }
  return out;
}

}  // namespace masksearch
