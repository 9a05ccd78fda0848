// Command-line front end: explanation search and evaluation for the built-in
// bag-of-embeddings classifier on synthetic corpora.
//
//   masksearch gen-corpus --out data --seed 1
//   masksearch train --corpus data/corpus.jsonl --mode ct --seed 3 --out models
//   masksearch explain --corpus ... --models models/standard_seed0.json \
//       --methods pls,random --metric suff --budget 1000 --out runs/explain
//   masksearch benchmark ... ; masksearch robustness ... ; masksearch report ...
//
// Every subcommand also accepts --config <file.json> carrying the same keys.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "masksearch/cli.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"explanation mask search toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path;
  masksearch::cli::RunConfig config;
  std::string methods_csv, proportions_csv, levels_csv;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    cmd->add_option("--seed", config.seed, "master seed");
    cmd->add_option("--out", config.output_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  add_common(gen);
  gen->add_option("--docs", config.corpus.num_docs, "number of documents");
  gen->add_option("--vocab", config.corpus.vocab, "vocabulary size (id 0 reserved)");
  gen->add_option("--classes", config.corpus.classes, "number of classes");
  gen->add_option("--evidence-per-class", config.corpus.evidence_per_class, "evidence tokens per class");
  gen->add_option("--min-len", config.corpus.min_doc_len, "minimum document length");
  gen->add_option("--max-len", config.corpus.max_doc_len, "maximum document length");
  gen->add_option("--evidence-density", config.corpus.evidence_density, "evidence token rate");
  gen->add_option("--query-len", config.corpus.query_len, "protected query prefix length");

  CLI::App* train = app.add_subcommand("train", "train a toy classifier");
  add_common(train);
  train->add_option("--corpus", config.corpus_path, "training corpus (jsonl)");
  train->add_option("--mode", config.train_mode, "standard|ct");
  train->add_option("--epochs", config.epochs, "training epochs");
  train->add_option("--lr", config.learning_rate, "learning rate");
  train->add_option("--batch", config.batch_size, "batch size (ct batches are twice this)");
  train->add_option("--ct-replace", config.ct_replace, "replace function for ct copies");
  train->add_option("--imputer", config.imputer_path, "imputer json (ct with marginalize)");
  train->add_option("--model-out", config.model_out, "checkpoint file name");

  CLI::App* robustness = app.add_subcommand("robustness", "replace-function robustness experiment");
  add_common(robustness);
  robustness->add_option("--corpus", config.corpus_path, "evaluation corpus (jsonl)");
  robustness->add_option("--models", config.model_paths, "standard model checkpoints");
  robustness->add_option("--ct-models", config.ct_model_specs,
                         "ct checkpoints as <replace>:<path>, one per entry");
  robustness->add_option("--replace", config.replace, "comma list of functions or 'all'");
  robustness->add_option("--proportions", proportions_csv, "hide proportions, comma separated");
  robustness->add_option("--masks-per-point", config.masks_per_point, "random masks per data point");
  robustness->add_option("--marginalize-samples", config.marginalize_samples, "imputation samples");
  robustness->add_option("--imputer", config.imputer_path, "imputer json for marginalize");
  robustness->add_option("--instances", config.num_instances, "evaluation instances");

  CLI::App* explain = app.add_subcommand("explain", "search explanations per instance");
  add_common(explain);
  explain->add_option("--corpus", config.corpus_path, "corpus (jsonl)");
  explain->add_option("--models", config.model_paths, "model checkpoint (first is used)");
  explain->add_option("--methods", methods_csv, "comma list: lime,vanilla,intgrad,random,exhaustive,gradient,taylor,ordered,pls");
  explain->add_option("--metric", config.metric, "suff|comp");
  explain->add_option("--scale", config.scale, "prob|woe");
  explain->add_option("--replace", config.replace, "attention|mask|slice|zero|marginalize");
  explain->add_option("--levels", levels_csv, "sparsity levels, comma separated");
  explain->add_option("--budget", config.budget, "forward+backward pass budget per metric");
  explain->add_flag("--budget-per-level", config.budget_per_level, "budget applies to each level");
  explain->add_option("--instances", config.num_instances, "instances to explain");
  explain->add_option("--marginalize-samples", config.marginalize_samples, "imputation samples");
  explain->add_option("--imputer", config.imputer_path, "imputer json for marginalize");
  explain->add_flag("--black-box", config.black_box, "evaluate the model probabilities-only");

  CLI::App* benchmark = app.add_subcommand("benchmark", "method comparison with bootstrap CIs");
  add_common(benchmark);
  benchmark->add_option("--corpus", config.corpus_path, "corpus (jsonl)");
  benchmark->add_option("--models", config.model_paths, "standard checkpoints (one per seed)");
  benchmark->add_option("--ct-models", config.ct_model_specs, "ct checkpoints (one per seed)");
  benchmark->add_option("--methods", methods_csv, "comma list of methods");
  benchmark->add_option("--metric", config.metric, "suff|comp");
  benchmark->add_option("--scale", config.scale, "prob|woe");
  benchmark->add_option("--replace", config.replace, "replace function");
  benchmark->add_option("--levels", levels_csv, "sparsity levels, comma separated");
  benchmark->add_option("--budget", config.budget, "pass budget per metric (default 1000)");
  benchmark->add_flag("--budget-per-level", config.budget_per_level, "budget applies to each level");
  benchmark->add_option("--instances", config.num_instances, "benchmark instances");
  benchmark->add_option("--bootstrap", config.bootstrap_resamples, "bootstrap resamples");
  benchmark->add_option("--marginalize-samples", config.marginalize_samples, "imputation samples");
  benchmark->add_option("--imputer", config.imputer_path, "imputer json for marginalize");
  benchmark->add_flag("--black-box", config.black_box, "evaluate the model probabilities-only");

  CLI::App* report = app.add_subcommand("report", "render charts and summaries from run outputs");
  add_common(report);
  report->add_option("--in", config.input_dir, "directory holding benchmark/robustness outputs");

  CLI::App* validate_cmd = app.add_subcommand("validate", "check a config file for problems");
  validate_cmd->add_option("--config", config_path, "JSON config file")->required();

  CLI11_PARSE(app, argc, argv);

  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 0;
  }
  CLI::App* sub = app.get_subcommands().front();

  if (!config_path.empty()) {
    // Config file first, then flags override whatever was explicitly set.
    masksearch::cli::RunConfig from_file;
    try {
      from_file = masksearch::cli::config_from_json_file(config_path);
    } catch (const masksearch::Error& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    const masksearch::cli::RunConfig defaults;
    const std::string parsed_json = masksearch::cli::config_to_json(config);
    const std::string default_json = masksearch::cli::config_to_json(defaults);
    if (parsed_json == default_json) {
      config = from_file;  // nothing overridden on the command line
    } else {
      // Merge: file values become the new baseline for untouched fields.
      masksearch::cli::RunConfig merged = from_file;
      if (config.seed != defaults.seed) merged.seed = config.seed;
      if (config.output_dir != defaults.output_dir) merged.output_dir = config.output_dir;
      if (config.corpus_path != defaults.corpus_path) merged.corpus_path = config.corpus_path;
      if (config.model_paths != defaults.model_paths) merged.model_paths = config.model_paths;
      if (config.ct_model_specs != defaults.ct_model_specs) merged.ct_model_specs = config.ct_model_specs;
      if (config.budget != defaults.budget) merged.budget = config.budget;
      if (config.metric != defaults.metric) merged.metric = config.metric;
      if (config.scale != defaults.scale) merged.scale = config.scale;
      if (config.replace != defaults.replace) merged.replace = config.replace;
      if (config.num_instances != defaults.num_instances) merged.num_instances = config.num_instances;
      config = merged;
    }
  }

  if (!methods_csv.empty()) config.methods = split_csv(methods_csv);
  if (!proportions_csv.empty()) {
    config.proportions.clear();
    for (const std::string& p : split_csv(proportions_csv)) config.proportions.push_back(std::stod(p));
  }
  if (!levels_csv.empty()) {
    config.sparsity_levels.clear();
    for (const std::string& s : split_csv(levels_csv)) config.sparsity_levels.push_back(std::stod(s));
  }

  if (sub == validate_cmd) {
    masksearch::cli::RunConfig target;
    try {
      target = masksearch::cli::config_from_json_file(config_path);
    } catch (const masksearch::Error& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    const auto diagnostics = masksearch::cli::validate(target);
    for (const auto& d : diagnostics) {
      std::cout << (d.severity == masksearch::cli::Diagnostic::Severity::kError ? "error" : "warning")
                << " [" << d.code << "] " << d.message << "\n";
    }
    std::cout << diagnostics.size() << " diagnostics\n";
    bool errors = false;
    for (const auto& d : diagnostics) errors |= d.severity == masksearch::cli::Diagnostic::Severity::kError;
    return errors ? 2 : 0;
  }

  config.command = sub->get_name();
  return masksearch::cli::run(config);
}
