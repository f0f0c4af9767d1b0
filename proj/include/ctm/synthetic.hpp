#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "ctm/corpus.hpp"
#include "ctm/embeddings.hpp"
#include "ctm/metrics.hpp"

namespace ctm {

enum class EmbeddingKind { Informative, Noise, None };

EmbeddingKind parse_embedding_kind(std::string_view s);

struct SyntheticSpec {
  int num_topics = 5;
  int vocab_size = 200;
  int num_docs = 2000;
  int doc_length = 100;
  /// Topic-word weights are Dirichlet(1/sharpness) over the topic's word block.
  double topic_sharpness = 8.0;
  /// Fraction of a document's tokens drawn from its dominant topic.
  double dominant_weight = 0.9;
  EmbeddingKind embeddings = EmbeddingKind::Informative;
  int embedding_dim = 0;  // 0: num_topics
  double embedding_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  BowCorpus bow;
  std::optional<EmbeddingMatrix> emb;
  std::vector<WordList> planted_topics;  // top-10 words of each planted topic
  std::vector<int> dominant_topic;       // per document
};

/// Planted topics live on disjoint vocabulary blocks. Informative embeddings are
/// a one-hot dominant-topic indicator plus Gaussian noise; noise embeddings are
/// Gaussian with the same expected squared norm. Words that never occur are
/// left out of the vocabulary.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Writes bow.json, corpus.txt, planted_topics.txt, labels.txt and (if any) embeddings.txt.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace ctm
