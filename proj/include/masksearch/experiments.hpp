#pragma once

#include <map>
#include <string>
#include <vector>

#include "masksearch/pipeline.hpp"
#include "masksearch/train.hpp"

namespace masksearch {

// ---------------------------------------------------------------------------
// Block bootstrap
// ---------------------------------------------------------------------------

struct BootstrapConfig {
  int64_t resamples = 10000;
  uint64_t seed = 0;
  double confidence = 0.95;
};

struct BootstrapResult {
  double mean_diff = 0.0;
  double p_value = 1.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Two-sided difference-in-means test over paired (data point x seed)
/// matrices: point and seed indices are resampled independently with
/// replacement, the mean difference recomputed per resample, the two-sided
/// p-value taken as the doubled fraction of resampled differences whose sign
/// flips against the observed one (capped at 1; an observed difference of
/// exactly zero reports p = 1), and the CI read off the resample percentiles.
BootstrapResult block_bootstrap_test(const Mat& a, const Mat& b, const BootstrapConfig& config);

// ---------------------------------------------------------------------------
// Replace-function robustness
// ---------------------------------------------------------------------------

struct RobustnessOptions {
  std::vector<ReplaceKind> replace_fns = {ReplaceKind::kAttentionMask, ReplaceKind::kMaskToken,
                                          ReplaceKind::kSliceOut, ReplaceKind::kZeroVector,
                                          ReplaceKind::kMarginalize};
  std::vector<double> proportions = {0.2, 0.5, 0.8};
  int masks_per_point = 10;
  /// Marginalize evaluates one mask per point; its Monte Carlo imputation is
  /// an order of magnitude more expensive than the other functions.
  int marginalize_masks_per_point = 1;
  int marginalize_samples = 10;
  uint64_t seed = 0;
};

struct RobustnessCell {
  ReplaceKind replace = ReplaceKind::kAttentionMask;
  double proportion = 0.0;
  std::string mode;  // "standard" | "ct"
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  double mean_drop = 0.0;
};

struct RobustnessReport {
  std::vector<RobustnessCell> cells;
  /// Per-(point, seed) correctness drops backing each cell, for bootstrap
  /// tests; keyed by (replace name, proportion, mode).
  std::map<std::string, Mat> drops;

  static std::string key(ReplaceKind replace, double proportion, const std::string& mode);
  const Mat& drop_matrix(ReplaceKind replace, double proportion, const std::string& mode) const;
};

/// One model per seed and mode; counterfactual-trained models are supplied
/// per replace function (each CT model is trained with the function it is
/// evaluated under). For every (function, proportion, mode, seed) the
/// instances are ablated at the given hide proportion with masks_per_point
/// random masks, the majority prediction taken (ties to the lowest class),
/// and the accuracy drop against the unablated accuracy recorded.
RobustnessReport robustness_experiment(std::span<const ToyClassifier> standard_models,
                                       const std::map<ReplaceKind, std::vector<ToyClassifier>>& ct_models,
                                       std::span<const Instance> instances, const Imputer& imputer,
                                       const RobustnessOptions& options);

void save_robustness_csv(const RobustnessReport& report, const std::filesystem::path& path,
                         const std::string& config_digest);

/// Majority-vote prediction over `masks_per_point` random masks hiding the
/// given proportion of unprotected tokens.
int majority_vote_prediction(const ToyClassifier& model, const Instance& inst,
                             const ReplaceFn& replace, double hide_proportion, int masks_per_point,
                             Rng& rng, const Imputer* imputer);

// ---------------------------------------------------------------------------
// Explanation benchmark
// ---------------------------------------------------------------------------

struct BenchmarkOptions {
  std::vector<Method> methods = {Method::kLime, Method::kIntegratedGradients, Method::kRandom,
                                 Method::kGradient, Method::kTaylor, Method::kOrdered,
                                 Method::kParallelLocal};
  std::vector<Metric> metrics = {Metric::kSufficiency, Metric::kComprehensiveness};
  Scale scale = Scale::kProb;
  ReplaceFn replace;
  MethodOptions method_options;
  int num_instances = 200;
  BootstrapConfig bootstrap;
  uint64_t seed = 0;
};

struct BenchmarkRow {
  Method method = Method::kRandom;
  Metric metric = Metric::kSufficiency;
  std::string mode;
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean_passes = 0.0;
  bool best_in_group = false;
  double p_vs_runner_up = 1.0;
  int failures = 0;
};

struct TrajectoryPoint {
  int64_t step = 0;
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  /// Per-(method, metric, mode): objective matrix (instances x seeds).
  std::map<std::string, Mat> scores;
  /// Level-averaged best-so-far against evaluation step, CI over seeds.
  std::map<std::string, std::vector<TrajectoryPoint>> trajectories;
  std::vector<std::string> failures;

  static std::string key(Method method, Metric metric, const std::string& mode);
};

BenchmarkReport run_benchmark(const std::map<std::string, std::vector<ToyClassifier>>& models_by_mode,
                              std::span<const Instance> instances, const BenchmarkOptions& options,
                              const Imputer* imputer);

void save_benchmark_csv(const BenchmarkReport& report, const std::filesystem::path& path,
                        const std::string& config_digest);
void save_benchmark_json(const BenchmarkReport& report, const std::filesystem::path& path,
                         const std::string& config_digest);
void save_trajectory_csvs(const BenchmarkReport& report, const std::filesystem::path& directory,
                          const std::string& config_digest);

}  // namespace masksearch
