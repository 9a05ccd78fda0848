#include "masksearch/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "masksearch/rng.hpp"

namespace masksearch {

namespace {

void validate_params(const CorpusParams& p) {
  if (p.classes < 2) fail(Errc::kInvalidInput, "corpus needs at least two classes");
  if (p.evidence_per_class < 1) fail(Errc::kInvalidInput, "evidence_per_class must be >= 1");
  const int evidence_tokens = p.classes * p.evidence_per_class;
  if (p.vocab < evidence_tokens + 2) {
    fail(Errc::kInvalidInput, "vocabulary too small for evidence sets plus neutral tokens");
  }
  if (p.min_doc_len < 1 || p.max_doc_len < p.min_doc_len) {
    fail(Errc::kInvalidInput, "bad document length range");
  }
  if (p.evidence_density <= 0.0 || p.evidence_density >= 1.0) {
    fail(Errc::kInvalidInput, "evidence_density must lie in (0, 1)");
  }
  if (p.query_len < 0) fail(Errc::kInvalidInput, "query_len must be >= 0");
  if (p.num_docs < 1) fail(Errc::kInvalidInput, "num_docs must be >= 1");
}

}  // namespace

int SyntheticCorpus::evidence_class(int32_t token) const {
  const int first = 1;  // id 0 is the reserved hide sentinel
  const int idx = token - first;
  if (idx < 0 || idx >= params.classes * params.evidence_per_class) return -1;
  return idx / params.evidence_per_class;
}

SyntheticCorpus generate_corpus(const CorpusParams& params, uint64_t seed) {
  validate_params(params);
  SyntheticCorpus corpus;
  corpus.params = params;
  corpus.instances.reserve(static_cast<size_t>(params.num_docs));

  Rng rng = Rng::substream(seed, "corpus");
  const int evidence_tokens = params.classes * params.evidence_per_class;
  const int32_t neutral_first = static_cast<int32_t>(1 + evidence_tokens);
  const int neutral_count = params.vocab - 1 - evidence_tokens;

  for (int doc = 0; doc < params.num_docs; ++doc) {
    Instance inst;
    std::vector<int> counts(static_cast<size_t>(params.classes));
    for (;;) {  // resample until the evidence majority is unique
      inst.tokens.clear();
      std::fill(counts.begin(), counts.end(), 0);
      const int len = params.min_doc_len +
                      static_cast<int>(rng.uniform_int(params.max_doc_len - params.min_doc_len + 1));
      for (int i = 0; i < len; ++i) {
        if (rng.uniform01() < params.evidence_density) {
          const int cls = static_cast<int>(rng.uniform_int(params.classes));
          const int32_t tok = static_cast<int32_t>(
              1 + cls * params.evidence_per_class + rng.uniform_int(params.evidence_per_class));
          inst.tokens.push_back(tok);
          ++counts[static_cast<size_t>(cls)];
        } else {
          inst.tokens.push_back(neutral_first + static_cast<int32_t>(rng.uniform_int(neutral_count)));
        }
      }
      const int best = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[static_cast<size_t>(best)] == 0) continue;
      bool tie = false;
      for (int c = 0; c < params.classes; ++c) {
        if (c != best && counts[static_cast<size_t>(c)] == counts[static_cast<size_t>(best)]) tie = true;
      }
      if (tie) continue;
      inst.label = best;
      break;
    }

    // Neutral-token query prefix, protected from every replace function.
    std::vector<int32_t> query(static_cast<size_t>(params.query_len));
    for (int32_t& q : query) {
      q = neutral_first + static_cast<int32_t>(rng.uniform_int(neutral_count));
    }
    inst.tokens.insert(inst.tokens.begin(), query.begin(), query.end());
    inst.is_protected.assign(inst.tokens.size(), 0);
    for (int i = 0; i < params.query_len; ++i) inst.is_protected[static_cast<size_t>(i)] = 1;

    char buf[32];
    std::snprintf(buf, sizeof(buf), "doc-%05d", doc);
    inst.id = buf;
    validate_instance(inst);
    corpus.instances.push_back(std::move(inst));
  }
  return corpus;
}

void save_corpus_jsonl(const SyntheticCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::kIoError, "cannot write corpus " + path.string());
  nlohmann::json header;
  header["format"] = "masksearch-corpus";
  header["version"] = 1;
  header["vocab"] = corpus.params.vocab;
  header["classes"] = corpus.params.classes;
  header["evidence_per_class"] = corpus.params.evidence_per_class;
  header["min_doc_len"] = corpus.params.min_doc_len;
  header["max_doc_len"] = corpus.params.max_doc_len;
  header["evidence_density"] = corpus.params.evidence_density;
  header["query_len"] = corpus.params.query_len;
  header["num_docs"] = corpus.params.num_docs;
  out << header.dump() << "\n";
  for (const Instance& inst : corpus.instances) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["tokens"] = inst.tokens;
    j["protected"] = nlohmann::json::array();
    for (uint8_t p : inst.is_protected) j["protected"].push_back(static_cast<bool>(p));
    j["label"] = inst.label;
    out << j.dump() << "\n";
  }
}

SyntheticCorpus load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoError, "cannot read corpus " + path.string());
  SyntheticCorpus corpus;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kIoError, "malformed corpus line in " + path.string() + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("format", "") != "masksearch-corpus") {
        fail(Errc::kInvalidInput, "not a corpus file: " + path.string());
      }
      corpus.params.vocab = j.at("vocab").get<int>();
      corpus.params.classes = j.at("classes").get<int>();
      corpus.params.evidence_per_class = j.at("evidence_per_class").get<int>();
      corpus.params.min_doc_len = j.at("min_doc_len").get<int>();
      corpus.params.max_doc_len = j.at("max_doc_len").get<int>();
      corpus.params.evidence_density = j.at("evidence_density").get<double>();
      corpus.params.query_len = j.at("query_len").get<int>();
      corpus.params.num_docs = j.at("num_docs").get<int>();
      have_header = true;
      continue;
    }
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.tokens = j.at("tokens").get<std::vector<int32_t>>();
    for (bool p : j.at("protected").get<std::vector<bool>>()) {
      inst.is_protected.push_back(p ? 1 : 0);
    }
    inst.label = j.at("label").get<int>();
    validate_instance(inst);
    corpus.instances.push_back(std::move(inst));
  }
  if (!have_header) fail(Errc::kInvalidInput, "empty corpus file: " + path.string());
  return corpus;
}

}  // namespace masksearch
