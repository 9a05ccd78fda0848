#include "masksearch/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace masksearch {

// ---------------------------------------------------------------------------
// Block bootstrap
// ---------------------------------------------------------------------------

BootstrapResult block_bootstrap_test(const Mat& a, const Mat& b, const BootstrapConfig& config) {
  if (a.rows != b.rows || a.cols != b.cols) fail(Errc::kInvalidInput, "paired matrices differ in shape");
  if (a.rows < 2 || a.cols < 2) {
    fail(Errc::kInsufficientData, "bootstrap needs at least 2 data points and 2 seeds");
  }
  if (config.resamples < 1000) fail(Errc::kInvalidInput, "bootstrap needs at least 1000 resamples");
  if (!(config.confidence > 0.0) || config.confidence >= 1.0) {
    fail(Errc::kInvalidInput, "confidence must lie in (0, 1)");
  }

  const int points = a.rows;
  const int seeds = a.cols;
  Mat diff(points, seeds);
  double observed = 0.0;
  for (size_t i = 0; i < diff.data.size(); ++i) {
    diff.data[i] = a.data[i] - b.data[i];
    observed += diff.data[i];
  }
  observed /= static_cast<double>(points * seeds);

  Rng rng = Rng::substream(config.seed, "bootstrap");
  std::vector<double> resampled(static_cast<size_t>(config.resamples));
  std::vector<int> row_pick(static_cast<size_t>(points));
  std::vector<int> col_pick(static_cast<size_t>(seeds));
  for (int64_t r = 0; r < config.resamples; ++r) {
    for (int& idx : row_pick) idx = static_cast<int>(rng.uniform_int(points));
    for (int& idx : col_pick) idx = static_cast<int>(rng.uniform_int(seeds));
    double total = 0.0;
    for (int i : row_pick) {
      const auto row = diff.row(i);
      for (int j : col_pick) total += row[static_cast<size_t>(j)];
    }
    resampled[static_cast<size_t>(r)] = total / static_cast<double>(points * seeds);
  }

  BootstrapResult out;
  out.mean_diff = observed;
  if (observed == 0.0) {
    out.p_value = 1.0;
  } else {
    const double sign = observed > 0.0 ? 1.0 : -1.0;
    int64_t flips = 0;
    for (double d : resampled) {
      if (d * sign <= 0.0) ++flips;
    }
    out.p_value = std::min(1.0, 2.0 * static_cast<double>(flips) / static_cast<double>(config.resamples));
  }
  std::sort(resampled.begin(), resampled.end());
  const double tail = (1.0 - config.confidence) / 2.0;
  const auto percentile = [&](double q) {
    const int64_t idx = std::clamp<int64_t>(
        static_cast<int64_t>(q * static_cast<double>(config.resamples - 1)), 0, config.resamples - 1);
    return resampled[static_cast<size_t>(idx)];
  };
  out.ci_lo = percentile(tail);
  out.ci_hi = percentile(1.0 - tail);
  return out;
}

// ---------------------------------------------------------------------------
// Robustness experiment
// ---------------------------------------------------------------------------

int majority_vote_prediction(const ToyClassifier& model, const Instance& inst,
                             const ReplaceFn& replace, double hide_proportion, int masks_per_point,
                             Rng& rng, const Imputer* imputer) {
  if (masks_per_point < 1) fail(Errc::kInvalidInput, "masks_per_point must be >= 1");
  if (hide_proportion < 0.0 || hide_proportion >= 1.0) {
    fail(Errc::kInvalidInput, "hide proportion must lie in [0, 1)");
  }
  BudgetMeter meter = BudgetMeter::unlimited();
  const int u = inst.unprotected_count();
  // Hiding proportion p means keeping sparsity 1 - p of the unprotected
  // tokens (ceiling rule), so at least one token always survives.
  const int keep = sparsity_count(u, 1.0 - hide_proportion);
  std::vector<int> votes(static_cast<size_t>(model.num_classes()), 0);
  for (int m = 0; m < masks_per_point; ++m) {
    const std::vector<int> kept = rng.sample_indices(u, keep);
    const ExplanationMask mask = mask_from_unprotected_subset(inst, kept, 1.0 - hide_proportion);
    const std::vector<double> probs =
        apply_replace(replace, model, inst, mask, meter, imputer, &rng);
    ++votes[static_cast<size_t>(argmax_lowest(probs))];
  }
  int best = 0;
  for (int y = 1; y < model.num_classes(); ++y) {
    if (votes[static_cast<size_t>(y)] > votes[static_cast<size_t>(best)]) best = y;  // ties to the lowest class
  }
  return best;
}

std::string RobustnessReport::key(ReplaceKind replace, double proportion, const std::string& mode) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%.2f/%s", replace_kind_name(replace), proportion, mode.c_str());
  return buf;
}

const Mat& RobustnessReport::drop_matrix(ReplaceKind replace, double proportion,
                                         const std::string& mode) const {
  auto it = drops.find(key(replace, proportion, mode));
  if (it == drops.end()) fail(Errc::kInvalidInput, "no such robustness cell");
  return it->second;
}

RobustnessReport robustness_experiment(std::span<const ToyClassifier> standard_models,
                                       const std::map<ReplaceKind, std::vector<ToyClassifier>>& ct_models,
                                       std::span<const Instance> instances, const Imputer& imputer,
                                       const RobustnessOptions& options) {
  if (standard_models.empty()) fail(Errc::kInvalidInput, "no standard models supplied");
  if (instances.empty()) fail(Errc::kInvalidInput, "no evaluation instances");

  RobustnessReport report;
  const int points = static_cast<int>(instances.size());

  const auto run_mode = [&](const std::string& mode, ReplaceKind kind,
                            std::span<const ToyClassifier> models) {
    const int seeds = static_cast<int>(models.size());
    // Unablated correctness per (point, seed).
    Mat before(points, seeds);
    for (int s = 0; s < seeds; ++s) {
      ToyClassifier::Activations act;
      std::vector<double> ones;
      for (int i = 0; i < points; ++i) {
        const Instance& inst = instances[static_cast<size_t>(i)];
        ones.assign(inst.tokens.size(), 1.0);
        models[static_cast<size_t>(s)].forward_raw(inst.tokens, ones, {}, nullptr, act);
        before(i, s) = argmax_lowest(act.probs) == inst.label ? 1.0 : 0.0;
      }
    }

    ReplaceFn replace;
    replace.kind = kind;
    replace.marginalize_samples = options.marginalize_samples;
    const int masks = kind == ReplaceKind::kMarginalize ? options.marginalize_masks_per_point
                                                        : options.masks_per_point;
    for (double proportion : options.proportions) {
      Mat drop(points, seeds);
      double acc_before = 0.0, acc_after = 0.0;
      for (int s = 0; s < seeds; ++s) {
        Rng rng = Rng::substream(options.seed,
                                 "robustness/" + RobustnessReport::key(kind, proportion, mode) +
                                     "/seed" + std::to_string(s));
        for (int i = 0; i < points; ++i) {
          const Instance& inst = instances[static_cast<size_t>(i)];
          const int pred = majority_vote_prediction(models[static_cast<size_t>(s)], inst, replace,
                                                    proportion, masks, rng, &imputer);
          const double after = pred == inst.label ? 1.0 : 0.0;
          drop(i, s) = before(i, s) - after;
          acc_before += before(i, s);
          acc_after += after;
        }
      }
      RobustnessCell cell;
      cell.replace = kind;
      cell.proportion = proportion;
      cell.mode = mode;
      cell.accuracy_before = acc_before / static_cast<double>(points * seeds);
      cell.accuracy_after = acc_after / static_cast<double>(points * seeds);
      cell.mean_drop = cell.accuracy_before - cell.accuracy_after;
      report.cells.push_back(cell);
      report.drops[RobustnessReport::key(kind, proportion, mode)] = std::move(drop);
    }
  };

  for (ReplaceKind kind : options.replace_fns) {
    run_mode("standard", kind, standard_models);
    auto it = ct_models.find(kind);
    if (it != ct_models.end() && !it->second.empty()) {
      run_mode("ct", kind, it->second);
    }
  }
  return report;
}

void save_robustness_csv(const RobustnessReport& report, const std::filesystem::path& path,
                         const std::string& config_digest) {
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  out << "# config_digest=" << config_digest << "\n";
  out << "replace,proportion,mode,accuracy_before,accuracy_after,mean_drop\n";
  for (const RobustnessCell& cell : report.cells) {
    out << replace_kind_name(cell.replace) << "," << cell.proportion << "," << cell.mode << ","
        << cell.accuracy_before << "," << cell.accuracy_after << "," << cell.mean_drop << "\n";
  }
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

std::string BenchmarkReport::key(Method method, Metric metric, const std::string& mode) {
  return std::string(method_name(method)) + "/" + metric_name(metric) + "/" + mode;
}

BenchmarkReport run_benchmark(const std::map<std::string, std::vector<ToyClassifier>>& models_by_mode,
                              std::span<const Instance> instances, const BenchmarkOptions& options,
                              const Imputer* imputer) {
  if (models_by_mode.empty()) fail(Errc::kInvalidInput, "no models supplied");
  const int points = std::min<int>(options.num_instances, static_cast<int>(instances.size()));
  if (points < 1) fail(Errc::kInvalidInput, "no benchmark instances");

  BenchmarkReport report;
  for (const auto& [mode, models] : models_by_mode) {
    const int seeds = static_cast<int>(models.size());
    if (seeds < 1) fail(Errc::kInvalidInput, "mode '" + mode + "' has no models");
    for (Metric metric : options.metrics) {
      ObjectiveSpec spec = default_objective(metric);
      spec.scale = options.scale;
      spec.replace = options.replace;

      std::vector<BenchmarkRow> group_rows;
      std::vector<std::string> group_keys;
      for (Method method : options.methods) {
        Mat scores(points, seeds);
        Mat passes(points, seeds);
        int failures = 0;
        // Per-seed running means of the level-averaged best-so-far trace.
        std::vector<std::vector<double>> seed_traces(static_cast<size_t>(seeds));
        std::vector<std::vector<int64_t>> seed_trace_counts(static_cast<size_t>(seeds));
        for (int s = 0; s < seeds; ++s) {
          for (int i = 0; i < points; ++i) {
            const Instance& inst = instances[static_cast<size_t>(i)];
            try {
              const SearchResult result =
                  run_method(method, models[static_cast<size_t>(s)], inst, spec,
                             options.method_options, options.seed + static_cast<uint64_t>(s), imputer);
              scores(i, s) = result.objective();
              passes(i, s) = static_cast<double>(result.forward_passes + result.backward_passes);
              // Align level traces on the evaluation ordinal and average.
              size_t max_len = 0;
              for (const LevelResult& level : result.levels) max_len = std::max(max_len, level.trace.size());
              auto& acc = seed_traces[static_cast<size_t>(s)];
              auto& cnt = seed_trace_counts[static_cast<size_t>(s)];
              if (acc.size() < max_len) {
                acc.resize(max_len, 0.0);
                cnt.resize(max_len, 0);
              }
              for (size_t t = 0; t < max_len; ++t) {
                double level_mean = 0.0;
                for (const LevelResult& level : result.levels) {
                  const size_t idx = std::min(t, level.trace.empty() ? 0 : level.trace.size() - 1);
                  level_mean += level.trace.empty() ? level.value : level.trace[idx].second;
                }
                level_mean /= static_cast<double>(result.levels.size());
                acc[t] += level_mean;
                cnt[t] += 1;
              }
            } catch (const Error& e) {
              ++failures;
              scores(i, s) = std::numeric_limits<double>::quiet_NaN();
              passes(i, s) = 0.0;
              report.failures.push_back(BenchmarkReport::key(method, metric, mode) + "/" + inst.id +
                                        ": " + e.what());
            }
          }
        }

        BenchmarkRow row;
        row.method = method;
        row.metric = metric;
        row.mode = mode;
        row.failures = failures;
        double total = 0.0, total_passes = 0.0;
        int count = 0;
        for (size_t i = 0; i < scores.data.size(); ++i) {
          if (std::isnan(scores.data[i])) continue;
          total += scores.data[i];
          total_passes += passes.data[i];
          ++count;
        }
        row.mean = count > 0 ? total / count : std::numeric_limits<double>::quiet_NaN();
        row.mean_passes = count > 0 ? total_passes / count : 0.0;
        if (points >= 2 && seeds >= 2 && failures == 0) {
          Mat zeros(points, seeds);
          BootstrapConfig ci_config = options.bootstrap;
          ci_config.seed = splitmix64(options.bootstrap.seed ^ fnv1a64(BenchmarkReport::key(method, metric, mode)));
          const BootstrapResult ci = block_bootstrap_test(scores, zeros, ci_config);
          row.ci_lo = ci.ci_lo;
          row.ci_hi = ci.ci_hi;
        } else {
          row.ci_lo = row.ci_hi = row.mean;
        }

        const std::string key = BenchmarkReport::key(method, metric, mode);
        report.scores[key] = std::move(scores);

        // Seed-variance CI band for the trajectory.
        size_t max_len = 0;
        for (int s = 0; s < seeds; ++s) max_len = std::max(max_len, seed_traces[static_cast<size_t>(s)].size());
        std::vector<TrajectoryPoint> trajectory;
        trajectory.reserve(max_len);
        for (size_t t = 0; t < max_len; ++t) {
          std::vector<double> per_seed;
          for (int s = 0; s < seeds; ++s) {
            const auto& acc = seed_traces[static_cast<size_t>(s)];
            const auto& cnt = seed_trace_counts[static_cast<size_t>(s)];
            if (t < acc.size() && cnt[t] > 0) per_seed.push_back(acc[t] / static_cast<double>(cnt[t]));
          }
          if (per_seed.empty()) continue;
          double mean = 0.0;
          for (double v : per_seed) mean += v;
          mean /= static_cast<double>(per_seed.size());
          double var = 0.0;
          for (double v : per_seed) var += (v - mean) * (v - mean);
          const double se = per_seed.size() > 1
                                ? std::sqrt(var / static_cast<double>(per_seed.size() - 1) /
                                            static_cast<double>(per_seed.size()))
                                : 0.0;
          TrajectoryPoint point;
          point.step = static_cast<int64_t>(t + 1);
          point.mean = mean;
          point.ci_lo = mean - 1.96 * se;
          point.ci_hi = mean + 1.96 * se;
          trajectory.push_back(point);
        }
        report.trajectories[key] = std::move(trajectory);

        group_rows.push_back(row);
        group_keys.push_back(key);
      }

      // Best in group, flagged when the improvement over the runner-up is
      // significant under the block bootstrap.
      int best = -1;
      for (int i = 0; i < static_cast<int>(group_rows.size()); ++i) {
        if (std::isnan(group_rows[static_cast<size_t>(i)].mean)) continue;
        if (best < 0 ||
            is_improvement(metric, group_rows[static_cast<size_t>(i)].mean, group_rows[static_cast<size_t>(best)].mean)) {
          best = i;
        }
      }
      if (best >= 0) {
        int runner = -1;
        for (int i = 0; i < static_cast<int>(group_rows.size()); ++i) {
          if (i == best || std::isnan(group_rows[static_cast<size_t>(i)].mean)) continue;
          if (runner < 0 ||
              is_improvement(metric, group_rows[static_cast<size_t>(i)].mean, group_rows[static_cast<size_t>(runner)].mean)) {
            runner = i;
          }
        }
        group_rows[static_cast<size_t>(best)].best_in_group = true;
        if (runner >= 0 && group_rows[static_cast<size_t>(best)].failures == 0 &&
            group_rows[static_cast<size_t>(runner)].failures == 0 && points >= 2) {
          const Mat& a = report.scores[group_keys[static_cast<size_t>(best)]];
          const Mat& c = report.scores[group_keys[static_cast<size_t>(runner)]];
          if (a.cols >= 2) {
            BootstrapConfig test_config = options.bootstrap;
            test_config.seed = splitmix64(options.bootstrap.seed ^ fnv1a64("best" + group_keys[static_cast<size_t>(best)]));
            group_rows[static_cast<size_t>(best)].p_vs_runner_up = block_bootstrap_test(a, c, test_config).p_value;
            group_rows[static_cast<size_t>(best)].best_in_group =
                group_rows[static_cast<size_t>(best)].p_vs_runner_up < 0.05;
          }
        }
      }
      for (BenchmarkRow& row : group_rows) report.rows.push_back(row);
    }
  }
  return report;
}

void save_benchmark_csv(const BenchmarkReport& report, const std::filesystem::path& path,
                        const std::string& config_digest) {
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  out << "# config_digest=" << config_digest << "\n";
  out << "method,metric,mode,mean,ci_lo,ci_hi,mean_passes,best_in_group,p_vs_runner_up,failures\n";
  for (const BenchmarkRow& row : report.rows) {
    out << method_name(row.method) << "," << metric_name(row.metric) << "," << row.mode << ","
        << row.mean << "," << row.ci_lo << "," << row.ci_hi << "," << row.mean_passes << ","
        << (row.best_in_group ? 1 : 0) << "," << row.p_vs_runner_up << "," << row.failures << "\n";
  }
}

void save_benchmark_json(const BenchmarkReport& report, const std::filesystem::path& path,
                         const std::string& config_digest) {
  nlohmann::json j;
  j["format"] = "masksearch-benchmark";
  j["version"] = 1;
  j["config_digest"] = config_digest;
  nlohmann::json rows = nlohmann::json::array();
  for (const BenchmarkRow& row : report.rows) {
    nlohmann::json rj;
    rj["method"] = method_name(row.method);
    rj["metric"] = metric_name(row.metric);
    rj["mode"] = row.mode;
    rj["mean"] = row.mean;
    rj["ci_lo"] = row.ci_lo;
    rj["ci_hi"] = row.ci_hi;
    rj["mean_passes"] = row.mean_passes;
    rj["best_in_group"] = row.best_in_group;
    rj["p_vs_runner_up"] = row.p_vs_runner_up;
    rj["failures"] = row.failures;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  j["failures"] = report.failures;
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void save_trajectory_csvs(const BenchmarkReport& report, const std::filesystem::path& directory,
                          const std::string& config_digest) {
  for (const auto& [key, trajectory] : report.trajectories) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '/', '_');
    std::ofstream out(directory / ("trajectory_" + name + ".csv"));
    if (!out) fail(Errc::kIoError, "cannot write trajectory csv for " + key);
    out << "# config_digest=" << config_digest << "\n";
    out << "step,mean_best,ci_lo,ci_hi\n";
    for (const TrajectoryPoint& point : trajectory) {
      out << point.step << "," << point.mean << "," << point.ci_lo << "," << point.ci_hi << "\n";
    }
  }
}

}  // namespace masksearch
