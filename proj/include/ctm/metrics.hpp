#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctm/corpus.hpp"
#include "ctm/embeddings.hpp"

namespace ctm {

using WordList = std::vector<std::string>;

/// Document-level presence counts for a chosen set of vocabulary words.
class CooccurrenceStats {
 public:
  /// Throws InputError if a requested word is not in the corpus vocabulary.
  CooccurrenceStats(const BowCorpus& corpus, std::span<const std::string> words);

  std::size_t num_docs() const { return num_docs_; }
  std::size_t doc_freq(const std::string& w) const;
  /// Number of documents containing both words; 0 for pairs never seen together.
  std::size_t pair_freq(const std::string& a, const std::string& b) const;

 private:
  int slot(const std::string& w) const;

  std::size_t num_docs_ = 0;
  std::map<std::string, int, std::less<>> slots_;
  std::vector<std::size_t> doc_freq_;
  std::map<std::pair<int, int>, std::size_t> pair_freq_;
};

inline constexpr double kNpmiEpsilon = 1e-12;
inline constexpr double kRboP = 0.9;

/// log((P12+ε)/(P1·P2)) / −log(P12+ε), with document-level probabilities.
/// A pair present in every document scores 1; results are capped at 1.
double npmi_pair(const CooccurrenceStats& stats, const std::string& w1, const std::string& w2,
                 double epsilon = kNpmiEpsilon);

struct TopicScores {
  double mean = 0.0;
  std::vector<double> per_topic;
};

/// Mean pairwise NPMI of each topic's first top_n words, then the mean over topics.
TopicScores npmi_coherence(std::span<const WordList> topics, const BowCorpus& corpus, std::size_t top_n = 10,
                           double epsilon = kNpmiEpsilon);
TopicScores npmi_coherence(std::span<const WordList> topics, const CooccurrenceStats& stats, std::size_t top_n = 10,
                           double epsilon = kNpmiEpsilon);

struct EmbeddingCoherence {
  double alpha = 0.0;
  std::vector<double> per_topic;
  std::vector<std::size_t> uncovered_topics;  // fewer than two words with vectors; scored 0
  double coverage = 0.0;                      // fraction of top words that have a vector
};

EmbeddingCoherence embedding_coherence(std::span<const WordList> topics, const WordVectors& wv,
                                       std::size_t top_n = 10);

/// Rank-biased overlap truncated at `depth` and normalized so identical prefixes score 1.
double rbo(std::span<const std::string> a, std::span<const std::string> b, double p, std::size_t depth);

/// Mean over all topic pairs of 1 − RBO: 0 for identical topics, 1 for disjoint ones.
double inverted_rbo(std::span<const WordList> topics, double p = kRboP, std::size_t top_n = 10);

/// Mean of `values`, summed in sorted order so it does not depend on input order.
double order_free_mean(std::vector<double> values);

struct EvalOptions {
  std::size_t top_n = 10;
  double rbo_p = kRboP;
  double npmi_epsilon = kNpmiEpsilon;
};

struct CoherenceReport {
  double tau = 0.0;
  std::optional<double> alpha;  // absent without word vectors
  double rho = 0.0;
  std::vector<double> per_topic_tau;
  std::vector<double> per_topic_alpha;
  std::vector<std::size_t> alpha_uncovered_topics;
  double word_vector_coverage = 0.0;
  std::size_t top_n = 10;
  double rbo_p = kRboP;
  double npmi_epsilon = kNpmiEpsilon;
  std::vector<WordList> topics;

  std::string to_json() const;
};

CoherenceReport evaluate(std::span<const WordList> topics, const BowCorpus& corpus, const WordVectors* wv,
                         const EvalOptions& opts = {});

}  // namespace ctm
