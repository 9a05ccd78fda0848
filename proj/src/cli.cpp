#include "masksearch/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "masksearch/pipeline.hpp"

namespace masksearch::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

std::string config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["corpus_path"] = c.corpus_path;
  j["output_dir"] = c.output_dir;
  j["corpus"] = {{"vocab", c.corpus.vocab},
                 {"classes", c.corpus.classes},
                 {"evidence_per_class", c.corpus.evidence_per_class},
                 {"min_doc_len", c.corpus.min_doc_len},
                 {"max_doc_len", c.corpus.max_doc_len},
                 {"evidence_density", c.corpus.evidence_density},
                 {"query_len", c.corpus.query_len},
                 {"num_docs", c.corpus.num_docs}};
  j["train_mode"] = c.train_mode;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["ct_replace"] = c.ct_replace;
  j["model_out"] = c.model_out;
  j["model_paths"] = c.model_paths;
  j["ct_model_specs"] = c.ct_model_specs;
  j["imputer_path"] = c.imputer_path;
  j["imputer_order"] = c.imputer_order;
  j["black_box"] = c.black_box;
  j["methods"] = c.methods;
  j["metric"] = c.metric;
  j["scale"] = c.scale;
  j["replace"] = c.replace;
  j["sparsity_levels"] = c.sparsity_levels;
  j["budget"] = c.budget;
  j["budget_per_level"] = c.budget_per_level;
  j["num_instances"] = c.num_instances;
  j["marginalize_samples"] = c.marginalize_samples;
  j["proportions"] = c.proportions;
  j["masks_per_point"] = c.masks_per_point;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["input_dir"] = c.input_dir;
  return j.dump(2);
}

RunConfig config_from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoError, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIoError, "malformed config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  c.command = j.value("command", c.command);
  c.seed = j.value("seed", c.seed);
  c.corpus_path = j.value("corpus_path", c.corpus_path);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("corpus")) {
    const auto& cj = j["corpus"];
    c.corpus.vocab = cj.value("vocab", c.corpus.vocab);
    c.corpus.classes = cj.value("classes", c.corpus.classes);
    c.corpus.evidence_per_class = cj.value("evidence_per_class", c.corpus.evidence_per_class);
    c.corpus.min_doc_len = cj.value("min_doc_len", c.corpus.min_doc_len);
    c.corpus.max_doc_len = cj.value("max_doc_len", c.corpus.max_doc_len);
    c.corpus.evidence_density = cj.value("evidence_density", c.corpus.evidence_density);
    c.corpus.query_len = cj.value("query_len", c.corpus.query_len);
    c.corpus.num_docs = cj.value("num_docs", c.corpus.num_docs);
  }
  c.train_mode = j.value("train_mode", c.train_mode);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.ct_replace = j.value("ct_replace", c.ct_replace);
  c.model_out = j.value("model_out", c.model_out);
  c.model_paths = j.value("model_paths", c.model_paths);
  c.ct_model_specs = j.value("ct_model_specs", c.ct_model_specs);
  c.imputer_path = j.value("imputer_path", c.imputer_path);
  c.imputer_order = j.value("imputer_order", c.imputer_order);
  c.black_box = j.value("black_box", c.black_box);
  c.methods = j.value("methods", c.methods);
  c.metric = j.value("metric", c.metric);
  c.scale = j.value("scale", c.scale);
  c.replace = j.value("replace", c.replace);
  c.sparsity_levels = j.value("sparsity_levels", c.sparsity_levels);
  c.budget = j.value("budget", c.budget);
  c.budget_per_level = j.value("budget_per_level", c.budget_per_level);
  c.num_instances = j.value("num_instances", c.num_instances);
  c.marginalize_samples = j.value("marginalize_samples", c.marginalize_samples);
  c.proportions = j.value("proportions", c.proportions);
  c.masks_per_point = j.value("masks_per_point", c.masks_per_point);
  c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
  c.input_dir = j.value("input_dir", c.input_dir);
  return c;
}

std::string config_digest(const RunConfig& config) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(config))));
  return buf;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kCommands = {"gen-corpus", "train",     "robustness",
                                            "explain",    "benchmark", "report"};

bool is_search_method(const std::string& m) {
  return m == "random" || m == "exhaustive" || m == "gradient" || m == "taylor" || m == "ordered" ||
         m == "pls";
}

std::vector<ReplaceKind> parse_replace_list(const std::string& text) {
  if (text == "all") {
    return {ReplaceKind::kAttentionMask, ReplaceKind::kMaskToken, ReplaceKind::kSliceOut,
            ReplaceKind::kZeroVector, ReplaceKind::kMarginalize};
  }
  std::vector<ReplaceKind> kinds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_replace_kind(item));
  }
  if (kinds.empty()) fail(Errc::kInvalidInput, "empty replace list");
  return kinds;
}

void push_error(std::vector<Diagnostic>& out, const std::string& code, const std::string& message) {
  out.push_back({Diagnostic::Severity::kError, code, message});
}

void push_warning(std::vector<Diagnostic>& out, const std::string& code, const std::string& message) {
  out.push_back({Diagnostic::Severity::kWarning, code, message});
}

}  // namespace

std::vector<Diagnostic> validate(const RunConfig& c) {
  std::vector<Diagnostic> out;
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end()) {
    push_error(out, "unknown-command", "unknown command '" + c.command + "'");
    return out;
  }

  for (double s : c.sparsity_levels) {
    if (!(s > 0.0) || s > 1.0) {
      push_error(out, "invalid-sparsity",
                 "sparsity level " + std::to_string(s) + " outside (0, 1]");
    }
  }
  for (double p : c.proportions) {
    if (p < 0.0 || p >= 1.0) {
      push_error(out, "invalid-input", "hide proportion " + std::to_string(p) + " outside [0, 1)");
    }
  }

  const bool wants_marginalize =
      c.replace == "marginalize" || (c.command == "robustness" && (c.replace == "all" || c.replace.find("marginalize") != std::string::npos)) ||
      (c.command == "train" && c.train_mode == "ct" && c.ct_replace == "marginalize");
  if (wants_marginalize && c.imputer_path.empty() && c.command != "train") {
    push_error(out, "missing-artifact",
               "marginalize needs a fitted imputer: supply --imputer <imputer.json>");
  }

  if (c.command == "train") {
    if (c.corpus_path.empty()) push_error(out, "missing-input", "train needs --corpus");
    if (c.epochs < 1 || c.batch_size < 1 || c.learning_rate <= 0.0) {
      push_error(out, "invalid-input", "epochs, batch size and learning rate must be positive");
    }
    if (c.train_mode != "standard" && c.train_mode != "ct") {
      push_error(out, "invalid-input", "train mode must be standard|ct");
    }
  }

  if (c.command == "explain" || c.command == "benchmark") {
    if (c.corpus_path.empty()) push_error(out, "missing-input", c.command + " needs --corpus");
    if (c.model_paths.empty()) push_error(out, "missing-input", c.command + " needs --models");
    if (c.methods.empty()) push_error(out, "missing-input", c.command + " needs --methods");
    const int num_levels = c.sparsity_levels.empty() ? 4 : static_cast<int>(c.sparsity_levels.size());
    for (const std::string& m : c.methods) {
      if (!is_search_method(m) && m != "lime" && m != "vanilla" && m != "intgrad") {
        push_error(out, "invalid-input", "unknown method '" + m + "'");
        continue;
      }
      if (c.black_box && (m == "gradient" || m == "taylor" || m == "vanilla" || m == "intgrad")) {
        push_error(out, "unsupported-model",
                   "method '" + m + "' needs model gradients, but the model is probabilities-only");
      }
      if (is_search_method(m) && m != "exhaustive" && c.budget < num_levels) {
        push_error(out, "invalid-input",
                   "budget " + std::to_string(c.budget) + " below one evaluation per level");
      }
      if (m == "gradient") {
        const GradientSearchOptions defaults;
        const int64_t cycle =
            2 * static_cast<int64_t>(defaults.samples_per_update) * defaults.checkpoint_every + num_levels;
        const int64_t effective = c.budget_per_level ? c.budget * num_levels : c.budget;
        if (effective < cycle) {
          push_error(out, "invalid-input",
                     "gradient search needs a budget of at least " + std::to_string(cycle));
        }
      }
      if (m == "ordered" && c.budget < 8) {
        push_error(out, "invalid-input", "ordered search needs a budget of at least 8");
      }
    }
    if (c.metric != "suff" && c.metric != "comp") {
      push_error(out, "invalid-input", "metric must be suff|comp");
    }
    if (c.scale != "prob" && c.scale != "woe") push_error(out, "invalid-input", "scale must be prob|woe");
    if (c.command == "explain" && c.model_paths.size() > 1) {
      push_warning(out, "ignored-input", "explain uses the first model only");
    }
  }

  if (c.command == "robustness") {
    if (c.corpus_path.empty()) push_error(out, "missing-input", "robustness needs --corpus");
    if (c.model_paths.empty()) push_error(out, "missing-input", "robustness needs --models");
    if (c.masks_per_point < 1) push_error(out, "invalid-input", "masks-per-point must be >= 1");
    for (const std::string& spec : c.ct_model_specs) {
      const size_t colon = spec.find(':');
      if (colon == std::string::npos) {
        push_error(out, "invalid-input",
                   "ct model spec '" + spec + "' must look like <replace>:<path>");
      } else {
        try {
          (void)parse_replace_kind(spec.substr(0, colon));
        } catch (const Error& e) {
          push_error(out, "invalid-input", e.what());
        }
      }
    }
  }

  if (c.command == "benchmark" && c.bootstrap_resamples < 1000) {
    push_error(out, "invalid-input", "bootstrap needs at least 1000 resamples");
  }
  if (c.command == "report" && c.input_dir.empty()) {
    push_error(out, "missing-input", "report needs --in <dir>");
  }
  if (c.command == "gen-corpus") {
    if (c.corpus.num_docs < 1) push_error(out, "invalid-input", "num_docs must be >= 1");
    if (c.corpus.evidence_density <= 0.0 || c.corpus.evidence_density >= 1.0) {
      push_error(out, "invalid-input", "evidence density must lie in (0, 1)");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run helpers
// ---------------------------------------------------------------------------

namespace {

fs::path resolve_output_dir(const RunConfig& c) {
  fs::path dir = c.output_dir.empty() ? fs::path(".") : fs::path(c.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("MASKSEARCH_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      dir = fs::path(root) / dir;
    }
  }
  return dir;
}

/// One run per output directory: an exclusive lock file rejects concurrent
/// writers and is removed when the run finishes.
class LockFile {
 public:
  explicit LockFile(const fs::path& dir) : path_(dir / ".masksearch.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      fail(Errc::kLocked, "output directory is locked by " + path_.string() +
                              " (remove it if no other run is active)");
    }
    ::close(fd);
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
};

void write_snapshot(const RunConfig& c, const fs::path& dir) {
  nlohmann::json j;
  j["digest"] = config_digest(c);
  j["config"] = nlohmann::json::parse(config_to_json(c));
  std::ofstream out(dir / "config.json");
  if (!out) fail(Errc::kIoError, "cannot write config snapshot");
  out << j.dump(2) << "\n";
}

ObjectiveSpec objective_from_config(const RunConfig& c) {
  ObjectiveSpec spec = default_objective(parse_metric(c.metric));
  spec.scale = parse_scale(c.scale);
  spec.replace.kind = parse_replace_kind(c.replace);
  spec.replace.marginalize_samples = c.marginalize_samples;
  if (!c.sparsity_levels.empty()) {
    spec.sparsity.levels = c.sparsity_levels;
    spec.sparsity.direction = direction_of(spec.metric);
  }
  return spec;
}

MethodOptions method_options_from_config(const RunConfig& c) {
  MethodOptions options;
  options.budget = c.budget;
  options.budget_per_level = c.budget_per_level;
  return options;
}

ToyClassifier load_model(const std::string& path, bool black_box) {
  ToyClassifier model = ToyClassifier::load_json(path);
  if (black_box) model.set_expose_gradients(false);
  return model;
}

int run_gen_corpus(const RunConfig& c, const fs::path& dir) {
  const SyntheticCorpus corpus = generate_corpus(c.corpus, c.seed);
  save_corpus_jsonl(corpus, dir / "corpus.jsonl");
  std::cout << "wrote " << (dir / "corpus.jsonl").string() << " (" << corpus.instances.size()
            << " instances)\n";
  return 0;
}

int run_train(const RunConfig& c, const fs::path& dir) {
  const SyntheticCorpus corpus = load_corpus_jsonl(c.corpus_path);
  TrainConfig config;
  config.mode = parse_train_mode(c.train_mode);
  config.epochs = c.epochs;
  config.learning_rate = c.learning_rate;
  config.batch_size = c.batch_size;
  config.seed = c.seed;
  config.ct_replace.kind = parse_replace_kind(c.ct_replace);
  config.ct_replace.marginalize_samples = c.marginalize_samples;

  Imputer imputer;
  const Imputer* imputer_ptr = nullptr;
  if (config.mode == TrainMode::kCounterfactualTrained &&
      config.ct_replace.kind == ReplaceKind::kMarginalize) {
    imputer = c.imputer_path.empty() ? fit_imputer(corpus, c.imputer_order)
                                     : Imputer::load_json(c.imputer_path);
    imputer_ptr = &imputer;
  }

  TrainLog log;
  const ToyClassifier model = train(corpus, config, &log, imputer_ptr);
  const std::string name = c.model_out.empty()
                               ? c.train_mode + "_seed" + std::to_string(c.seed) + ".json"
                               : c.model_out;
  model.save_json(dir / name);

  std::ofstream log_out(dir / ("train_log_" + c.train_mode + "_seed" + std::to_string(c.seed) + ".csv"));
  log_out << "# config_digest=" << config_digest(c) << "\n";
  log_out << "epoch,train_accuracy\n";
  for (size_t e = 0; e < log.epoch_accuracy.size(); ++e) {
    log_out << e << "," << log.epoch_accuracy[e] << "\n";
  }
  std::cout << "wrote " << (dir / name).string() << " (final train accuracy "
            << (log.epoch_accuracy.empty() ? 0.0 : log.epoch_accuracy.back()) << ")\n";
  return 0;
}

int run_robustness(const RunConfig& c, const fs::path& dir) {
  const SyntheticCorpus corpus = load_corpus_jsonl(c.corpus_path);
  std::vector<ToyClassifier> standard;
  for (const std::string& path : c.model_paths) standard.push_back(load_model(path, c.black_box));
  std::map<ReplaceKind, std::vector<ToyClassifier>> ct;
  for (const std::string& spec : c.ct_model_specs) {
    const size_t colon = spec.find(':');
    const ReplaceKind kind = parse_replace_kind(spec.substr(0, colon));
    ct[kind].push_back(load_model(spec.substr(colon + 1), c.black_box));
  }

  RobustnessOptions options;
  options.replace_fns = parse_replace_list(c.replace == "attention" ? "all" : c.replace);
  options.proportions = c.proportions;
  options.masks_per_point = c.masks_per_point;
  options.marginalize_samples = c.marginalize_samples;
  options.seed = c.seed;

  Imputer imputer;
  bool needs_imputer = false;
  for (ReplaceKind kind : options.replace_fns) {
    if (kind == ReplaceKind::kMarginalize) needs_imputer = true;
  }
  if (needs_imputer) {
    imputer = Imputer::load_json(c.imputer_path);
  } else {
    imputer = fit_imputer(corpus, c.imputer_order);  // harmless default
  }

  const int points = std::min<int>(c.num_instances, static_cast<int>(corpus.instances.size()));
  const std::span<const Instance> eval(corpus.instances.data(), static_cast<size_t>(points));
  const RobustnessReport report = robustness_experiment(standard, ct, eval, imputer, options);
  const std::string digest = config_digest(c);
  save_robustness_csv(report, dir / "robustness.csv", digest);

  // Per-seed drops back the box summaries and the significance tests.
  std::ofstream seeds_out(dir / "robustness_seeds.csv");
  seeds_out << "# config_digest=" << digest << "\n";
  seeds_out << "replace,proportion,mode,seed,drop\n";
  for (const RobustnessCell& cell : report.cells) {
    const Mat& drops = report.drop_matrix(cell.replace, cell.proportion, cell.mode);
    for (int s = 0; s < drops.cols; ++s) {
      double mean = 0.0;
      for (int i = 0; i < drops.rows; ++i) mean += drops(i, s);
      mean /= static_cast<double>(drops.rows);
      seeds_out << replace_kind_name(cell.replace) << "," << cell.proportion << "," << cell.mode
                << "," << s << "," << mean << "\n";
    }
  }
  std::cout << "wrote " << (dir / "robustness.csv").string() << " (" << report.cells.size()
            << " cells)\n";
  return 0;
}

int run_explain(const RunConfig& c, const fs::path& dir) {
  const SyntheticCorpus corpus = load_corpus_jsonl(c.corpus_path);
  const ToyClassifier model = load_model(c.model_paths.front(), c.black_box);
  const ObjectiveSpec spec = objective_from_config(c);
  const MethodOptions options = method_options_from_config(c);

  Imputer imputer;
  const Imputer* imputer_ptr = nullptr;
  if (spec.replace.kind == ReplaceKind::kMarginalize) {
    imputer = Imputer::load_json(c.imputer_path);
    imputer_ptr = &imputer;
  }

  const std::string digest = config_digest(c);
  std::ofstream csv(dir / "metrics.csv");
  csv << "# config_digest=" << digest << "\n";
  csv << "instance_id,method,metric,scale,sparsity,value,passes_used\n";

  const int points = std::min<int>(c.num_instances, static_cast<int>(corpus.instances.size()));
  for (int i = 0; i < points; ++i) {
    const Instance& inst = corpus.instances[static_cast<size_t>(i)];
    for (const std::string& method_name_str : c.methods) {
      const Method method = parse_method(method_name_str);
      const SearchResult result = run_method(method, model, inst, spec, options, c.seed, imputer_ptr);
      std::ofstream json_out(dir / ("explain_" + inst.id + "_" + method_name_str + ".json"));
      json_out << search_result_to_json(result, inst, digest) << "\n";
      const int64_t passes = result.forward_passes + result.backward_passes;
      for (const LevelResult& level : result.levels) {
        csv << inst.id << "," << method_name_str << "," << c.metric << "," << c.scale << ","
            << level.sparsity << "," << level.value << "," << passes << "\n";
      }
    }
  }
  std::cout << "wrote explanations for " << points << " instances to " << dir.string() << "\n";
  return 0;
}

int run_benchmark_cmd(const RunConfig& c, const fs::path& dir) {
  const SyntheticCorpus corpus = load_corpus_jsonl(c.corpus_path);
  std::map<std::string, std::vector<ToyClassifier>> models;
  for (const std::string& path : c.model_paths) {
    models["standard"].push_back(load_model(path, c.black_box));
  }
  for (const std::string& spec : c.ct_model_specs) {
    // benchmark accepts plain checkpoint paths for the CT group
    const size_t colon = spec.find(':');
    models["ct"].push_back(load_model(colon == std::string::npos ? spec : spec.substr(colon + 1),
                                      c.black_box));
  }

  BenchmarkOptions options;
  options.methods.clear();
  for (const std::string& m : c.methods) options.methods.push_back(parse_method(m));
  options.metrics = {parse_metric(c.metric)};
  options.scale = parse_scale(c.scale);
  options.replace.kind = parse_replace_kind(c.replace);
  options.replace.marginalize_samples = c.marginalize_samples;
  options.method_options = method_options_from_config(c);
  options.num_instances = c.num_instances;
  options.bootstrap.resamples = c.bootstrap_resamples;
  options.bootstrap.seed = c.seed;
  options.seed = c.seed;

  Imputer imputer;
  const Imputer* imputer_ptr = nullptr;
  if (options.replace.kind == ReplaceKind::kMarginalize) {
    imputer = Imputer::load_json(c.imputer_path);
    imputer_ptr = &imputer;
  }

  const BenchmarkReport report = run_benchmark(models, corpus.instances, options, imputer_ptr);
  const std::string digest = config_digest(c);
  save_benchmark_csv(report, dir / "benchmark.csv", digest);
  save_benchmark_json(report, dir / "benchmark.json", digest);
  save_trajectory_csvs(report, dir, digest);
  std::cout << "wrote " << (dir / "benchmark.csv").string() << " (" << report.rows.size()
            << " rows, " << report.failures.size() << " failures)\n";
  return 0;
}

std::vector<double> percentiles(std::vector<double> values, std::span<const double> qs) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double q : qs) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(values[lo] * (1.0 - frac) + values[hi] * frac);
  }
  return out;
}

int run_report(const RunConfig& c, const fs::path& dir) {
  const fs::path input(c.input_dir);
  if (!fs::exists(input)) fail(Errc::kIoError, "input directory " + input.string() + " not found");
  int artifacts = 0;

  for (const fs::directory_entry& entry : fs::directory_iterator(input)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("trajectory_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::string line;
    ChartSeries mean_series, band;
    mean_series.label = "mean best";
    band.label = "95% CI";
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line[0] == 's') continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<double> row;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      if (row.size() != 4) continue;
      mean_series.x.push_back(row[0]);
      mean_series.y.push_back(row[1]);
      band.x.push_back(row[0]);
      band.y.push_back(row[1]);
      band.y_lo.push_back(row[2]);
      band.y_hi.push_back(row[3]);
    }
    if (mean_series.x.empty()) continue;
    const std::string stem = entry.path().stem().string();
    write_line_chart_svg(dir / (stem + ".svg"), stem, "evaluation step", "best objective",
                         {band, mean_series});
    ++artifacts;
  }

  const fs::path seeds_csv = input / "robustness_seeds.csv";
  if (fs::exists(seeds_csv)) {
    std::ifstream in(seeds_csv);
    std::map<std::string, std::vector<double>> cells;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("replace,", 0) == 0) continue;
      std::stringstream ss(line);
      std::string replace, proportion, mode, seed, drop;
      std::getline(ss, replace, ',');
      std::getline(ss, proportion, ',');
      std::getline(ss, mode, ',');
      std::getline(ss, seed, ',');
      std::getline(ss, drop, ',');
      cells[replace + "," + proportion + "," + mode].push_back(std::stod(drop));
    }
    std::ofstream out(dir / "robustness_box_summary.csv");
    out << "# config_digest=" << config_digest(c) << "\n";
    out << "replace,proportion,mode,min,q1,median,q3,max\n";
    const double qs[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (const auto& [key, drops] : cells) {
      const std::vector<double> p = percentiles(drops, qs);
      out << key << "," << p[0] << "," << p[1] << "," << p[2] << "," << p[3] << "," << p[4] << "\n";
    }
    ++artifacts;
  }

  if (artifacts == 0) {
    fail(Errc::kInvalidInput, "nothing to render in " + input.string() +
                                  " (expected trajectory_*.csv or robustness_seeds.csv)");
  }
  std::cout << "wrote " << artifacts << " report artifacts to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run(const RunConfig& config) {
  const std::vector<Diagnostic> diagnostics = validate(config);
  bool has_error = false;
  for (const Diagnostic& d : diagnostics) {
    nlohmann::json j;
    j["severity"] = d.severity == Diagnostic::Severity::kError ? "error" : "warning";
    j["code"] = d.code;
    j["message"] = d.message;
    std::cerr << j.dump() << "\n";
    has_error = has_error || d.severity == Diagnostic::Severity::kError;
  }
  if (has_error) return 2;

  try {
    const fs::path dir = resolve_output_dir(config);
    fs::create_directories(dir);
    LockFile lock(dir);
    write_snapshot(config, dir);
    if (config.command == "gen-corpus") return run_gen_corpus(config, dir);
    if (config.command == "train") return run_train(config, dir);
    if (config.command == "robustness") return run_robustness(config, dir);
    if (config.command == "explain") return run_explain(config, dir);
    if (config.command == "benchmark") return run_benchmark_cmd(config, dir);
    if (config.command == "report") return run_report(config, dir);
    fail(Errc::kInvalidInput, "unknown command " + config.command);
  } catch (const Error& e) {
    nlohmann::json j;
    j["error"] = {{"code", errc_name(e.code())}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = {{"code", "internal"}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// SVG line charts
// ---------------------------------------------------------------------------

void write_line_chart_svg(const fs::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series) {
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const ChartSeries& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double ylo = i < s.y_lo.size() ? s.y_lo[i] : s.y[i];
      const double yhi = i < s.y_hi.size() ? s.y_hi[i] : s.y[i];
      if (first) {
        x_min = x_max = s.x[i];
        y_min = ylo;
        y_max = yhi;
        first = false;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, ylo);
      y_max = std::max(y_max, yhi);
    }
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;

  const double width = 860, height = 520, ml = 70, mr = 30, mt = 50, mb = 60;
  const auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr); };
  const auto py = [&](double y) {
    return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);
  };
  static const char* kColors[] = {"#9ecae1", "#3182bd", "#e6550d", "#31a354", "#756bb1", "#636363"};

  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write chart " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<!-- data per series: x,y[,y_lo,y_hi] -->\n";
  for (const ChartSeries& s : series) {
    out << "<!-- series " << s.label << ": ";
    for (size_t i = 0; i < s.x.size(); ++i) {
      out << s.x[i] << "," << s.y[i];
      if (i < s.y_lo.size()) out << "," << s.y_lo[i] << "," << s.y_hi[i];
      out << " ";
    }
    out << "-->\n";
  }
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = x_min + (x_max - x_min) * t / 5.0;
    const double yv = y_min + (y_max - y_min) * t / 5.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xv << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << yv << "</text>\n";
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << height - mb << "\" x2=\"" << px(xv) << "\" y2=\""
        << height - mb + 4 << "\" stroke=\"black\"/>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  out << "<text x=\"20\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 20 " << height / 2 << ")\">" << y_label << "</text>\n";

  int color = 0;
  double legend_y = mt + 4;
  for (const ChartSeries& s : series) {
    const char* stroke = kColors[color % 6];
    if (!s.y_lo.empty() && s.y_lo.size() == s.x.size()) {
      out << "<polygon fill=\"" << stroke << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << "," << py(s.y_lo[i]) << " ";
      for (size_t i = s.x.size(); i-- > 0;) out << px(s.x[i]) << "," << py(s.y_hi[i]) << " ";
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    out << "\"/>\n";
    out << "<rect x=\"" << width - mr - 150 << "\" y=\"" << legend_y - 9
        << "\" width=\"12\" height=\"12\" fill=\"" << stroke << "\"/>\n";
    out << "<text x=\"" << width - mr - 132 << "\" y=\"" << legend_y + 2 << "\" font-size=\"12\">"
        << s.label << "</text>\n";
    legend_y += 18;
    ++color;
  }
  out << "</svg>\n";
}

}  // namespace masksearch::cli
