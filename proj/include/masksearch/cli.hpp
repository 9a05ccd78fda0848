#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "masksearch/corpus.hpp"
#include "masksearch/experiments.hpp"

namespace masksearch::cli {

/// Resolved run configuration; every field maps to a CLI flag and to a key
/// in the JSON config file. A resolved snapshot (with digest) is written
/// next to every run's outputs.
struct RunConfig {
  std::string command;
  uint64_t seed = 0;
  std::string corpus_path;
  std::string output_dir;

  // gen-corpus
  CorpusParams corpus;

  // train
  std::string train_mode = "standard";
  int epochs = 60;
  double learning_rate = 0.5;
  int batch_size = 32;
  std::string ct_replace = "attention";
  std::string model_out;  // default: <mode>_seed<seed>.json

  // shared model/artifact inputs
  std::vector<std::string> model_paths;      // standard-mode checkpoints
  std::vector<std::string> ct_model_specs;   // benchmark: path; robustness: <replace>:<path>
  std::string imputer_path;
  int imputer_order = 2;
  bool black_box = false;

  // explain / benchmark
  std::vector<std::string> methods = {"pls"};
  std::string metric = "suff";
  std::string scale = "prob";
  std::string replace = "attention";
  std::vector<double> sparsity_levels;  // empty: metric defaults
  int64_t budget = 1000;
  bool budget_per_level = false;
  int num_instances = 200;
  int marginalize_samples = 10;

  // robustness
  std::vector<double> proportions = {0.2, 0.5, 0.8};
  int masks_per_point = 10;

  // statistics
  int64_t bootstrap_resamples = 10000;

  // report
  std::string input_dir;
};

struct Diagnostic {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::string code;
  std::string message;
};

/// Static checks of a configuration; returns diagnostics instead of
/// throwing so callers can render all problems at once.
std::vector<Diagnostic> validate(const RunConfig& config);

/// Executes the configured command; artifacts land in config.output_dir.
/// Returns a process exit status (0 success, 2 invalid configuration).
int run(const RunConfig& config);

RunConfig config_from_json_file(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);
std::string config_digest(const RunConfig& config);

/// One polyline (optionally with a confidence band) for the SVG renderer.
struct ChartSeries {
  std::string label;
  std::vector<double> x, y, y_lo, y_hi;
};

void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series);

}  // namespace masksearch::cli
