#pragma once

#include <filesystem>
#include <vector>

#include "masksearch/core.hpp"

namespace masksearch {

/// Generation parameters for the synthetic counting task: each class owns a
/// disjoint set of evidence tokens, documents mix evidence and neutral
/// tokens, and the label is the class whose evidence tokens are most
/// numerous (ties are resampled away). Token id 0 stays reserved for the
/// hide sentinel; queries are neutral-token prefixes marked protected.
struct CorpusParams {
  int vocab = 64;
  int classes = 3;
  int evidence_per_class = 8;
  int min_doc_len = 12;
  int max_doc_len = 32;
  double evidence_density = 0.2;
  int query_len = 2;
  int num_docs = 512;
};

struct SyntheticCorpus {
  CorpusParams params;
  std::vector<Instance> instances;

  /// Class owning `token` as evidence, or -1 for neutral/reserved tokens.
  int evidence_class(int32_t token) const;
};

SyntheticCorpus generate_corpus(const CorpusParams& params, uint64_t seed);

void save_corpus_jsonl(const SyntheticCorpus& corpus, const std::filesystem::path& path);
SyntheticCorpus load_corpus_jsonl(const std::filesystem::path& path);

}  // namespace masksearch
