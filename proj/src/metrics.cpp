#include "ctm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ctm/error.hpp"
#include "json.hpp"

namespace ctm {
namespace {

std::span<const std::string> head(const WordList& topic, std::size_t top_n) {
  return std::span<const std::string>(topic.data(), std::min(top_n, topic.size()));
}

void require_distinct(std::span<const std::string> list, const char* which) {
  std::unordered_set<std::string_view> seen;
  for (const auto& w : list)
    if (!seen.insert(w).second) throw InputError(std::string("duplicate item '") + w + "' in " + which + " list");
}

}  // namespace

double order_free_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

CooccurrenceStats::CooccurrenceStats(const BowCorpus& corpus, std::span<const std::string> words)
    : num_docs_(corpus.num_docs()) {
  std::unordered_map<int, int> slot_of_index;
  for (const auto& w : words) {
    if (slots_.contains(w)) continue;
    const int idx = corpus.vocab.index_of(w);
    if (idx < 0) throw InputError("word '" + w + "' is not in the corpus vocabulary");
    const int s = static_cast<int>(slots_.size());
    slots_.emplace(w, s);
    slot_of_index.emplace(idx, s);
  }
  doc_freq_.assign(slots_.size(), 0);
  std::vector<int> present;
  for (const auto& row : corpus.rows) {
    present.clear();
    for (const auto& [idx, cnt] : row) {
      auto it = slot_of_index.find(idx);
      if (it != slot_of_index.end()) present.push_back(it->second);
    }
    std::sort(present.begin(), present.end());
    for (std::size_t i = 0; i < present.size(); ++i) {
      ++doc_freq_[static_cast<std::size_t>(present[i])];
      for (std::size_t j = i + 1; j < present.size(); ++j) ++pair_freq_[{present[i], present[j]}];
    }
  }
}

int CooccurrenceStats::slot(const std::string& w) const {
  auto it = slots_.find(w);
  if (it == slots_.end()) throw InputError("word '" + w + "' was not tabulated");
  return it->second;
}

std::size_t CooccurrenceStats::doc_freq(const std::string& w) const {
  return doc_freq_[static_cast<std::size_t>(slot(w))];
}

std::size_t CooccurrenceStats::pair_freq(const std::string& a, const std::string& b) const {
  int sa = slot(a), sb = slot(b);
  if (sa == sb) return doc_freq_[static_cast<std::size_t>(sa)];
  if (sa > sb) std::swap(sa, sb);
  auto it = pair_freq_.find({sa, sb});
  return it == pair_freq_.end() ? 0 : it->second;
}

double npmi_pair(const CooccurrenceStats& stats, const std::string& w1, const std::string& w2, double epsilon) {
  const std::size_t f1 = stats.doc_freq(w1), f2 = stats.doc_freq(w2);
  if (f1 == 0) throw InputError("word '" + w1 + "' occurs in no document");
  if (f2 == 0) throw InputError("word '" + w2 + "' occurs in no document");
  const std::size_t f12 = stats.pair_freq(w1, w2);
  // Both words in every document: the smoothed ratio degenerates to 0/0.
  if (f12 == stats.num_docs()) return 1.0;
  const double n = static_cast<double>(stats.num_docs());
  const double p1 = static_cast<double>(f1) / n;
  const double p2 = static_cast<double>(f2) / n;
  const double p12 = static_cast<double>(f12) / n;
  // ε in the joint term alone can lift a perfectly correlated pair a hair above 1.
  return std::min(1.0, std::log((p12 + epsilon) / (p1 * p2)) / -std::log(p12 + epsilon));
}

TopicScores npmi_coherence(std::span<const WordList> topics, const CooccurrenceStats& stats, std::size_t top_n,
                           double epsilon) {
  TopicScores out;
  for (const auto& topic : topics) {
    const auto words = head(topic, top_n);
    std::vector<double> pairs;
    for (std::size_t i = 0; i < words.size(); ++i)
      for (std::size_t j = i + 1; j < words.size(); ++j) pairs.push_back(npmi_pair(stats, words[i], words[j], epsilon));
    out.per_topic.push_back(pairs.empty() ? 0.0 : std::accumulate(pairs.begin(), pairs.end(), 0.0) / static_cast<double>(pairs.size()));
  }
  out.mean = order_free_mean(out.per_topic);
  return out;
}

TopicScores npmi_coherence(std::span<const WordList> topics, const BowCorpus& corpus, std::size_t top_n,
                           double epsilon) {
  std::vector<std::string> words;
  for (const auto& t : topics)
    for (const auto& w : head(t, top_n)) words.push_back(w);
  const CooccurrenceStats stats(corpus, words);
  return npmi_coherence(topics, stats, top_n, epsilon);
}

EmbeddingCoherence embedding_coherence(std::span<const WordList> topics, const WordVectors& wv, std::size_t top_n) {
  if (wv.table.empty()) throw InputError("word vectors are empty");
  EmbeddingCoherence out;
  std::size_t total = 0, covered = 0;
  for (std::size_t k = 0; k < topics.size(); ++k) {
    std::vector<Eigen::VectorXd> unit;
    for (const auto& w : head(topics[k], top_n)) {
      ++total;
      const auto* v = wv.find(w);
      if (!v) continue;
      ++covered;
      const double norm = v->norm();
      unit.push_back(norm > 0.0 ? Eigen::VectorXd(*v / norm) : Eigen::VectorXd::Zero(v->size()));
    }
    if (unit.size() < 2) {
      out.per_topic.push_back(0.0);
      out.uncovered_topics.push_back(k);
      continue;
    }
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < unit.size(); ++i)
      for (std::size_t j = i + 1; j < unit.size(); ++j, ++pairs) s += unit[i].dot(unit[j]);
    out.per_topic.push_back(s / static_cast<double>(pairs));
  }
  out.alpha = order_free_mean(out.per_topic);
  out.coverage = total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
  return out;
}

double rbo(std::span<const std::string> a, std::span<const std::string> b, double p, std::size_t depth) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("rbo: p must lie in (0, 1)");
  if (depth == 0) throw InputError("rbo: depth must be positive");
  if (depth > a.size() || depth > b.size()) throw InputError("rbo: depth exceeds a list length");
  require_distinct(a.first(depth), "first");
  require_distinct(b.first(depth), "second");

  std::unordered_set<std::string_view> seen_a, seen_b;
  std::size_t overlap = 0;
  double weighted = 0.0, total_weight = 0.0, w = 1.0;
  for (std::size_t d = 1; d <= depth; ++d) {
    const std::string& x = a[d - 1];
    const std::string& y = b[d - 1];
    seen_a.insert(x);
    seen_b.insert(y);
    if (seen_b.contains(x)) ++overlap;
    if (y != x && seen_a.contains(y)) ++overlap;
    weighted += w * (static_cast<double>(overlap) / static_cast<double>(d));
    total_weight += w;
    w *= p;
  }
  // total_weight = (1 − p^depth)/(1 − p); dividing by the same running sum makes identical lists exactly 1.
  return weighted / total_weight;
}

double inverted_rbo(std::span<const WordList> topics, double p, std::size_t top_n) {
  if (topics.size() < 2) throw InputError("inverted RBO needs at least two topics");
  std::vector<double> complements;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    for (std::size_t j = i + 1; j < topics.size(); ++j) {
      const std::size_t depth = std::min({top_n, topics[i].size(), topics[j].size()});
      complements.push_back(1.0 - rbo(topics[i], topics[j], p, depth));
    }
  }
  return order_free_mean(std::move(complements));
}

CoherenceReport evaluate(std::span<const WordList> topics, const BowCorpus& corpus, const WordVectors* wv,
                         const EvalOptions& opts) {
  CoherenceReport r;
  r.top_n = opts.top_n;
  r.rbo_p = opts.rbo_p;
  r.npmi_epsilon = opts.npmi_epsilon;
  r.topics.assign(topics.begin(), topics.end());

  const auto tau = npmi_coherence(topics, corpus, opts.top_n, opts.npmi_epsilon);
  r.tau = tau.mean;
  r.per_topic_tau = tau.per_topic;
  if (wv) {
    auto a = embedding_coherence(topics, *wv, opts.top_n);
    r.alpha = a.alpha;
    r.per_topic_alpha = std::move(a.per_topic);
    r.alpha_uncovered_topics = std::move(a.uncovered_topics);
    r.word_vector_coverage = a.coverage;
  }
  r.rho = inverted_rbo(topics, opts.rbo_p, opts.top_n);
  return r;
}

std::string CoherenceReport::to_json() const {
  nlohmann::ordered_json j;
  j["tau"] = tau;
  j["alpha"] = alpha ? nlohmann::ordered_json(*alpha) : nlohmann::ordered_json(nullptr);
  j["rho"] = rho;
  j["per_topic_tau"] = per_topic_tau;
  j["per_topic_alpha"] = per_topic_alpha;
  j["alpha_uncovered_topics"] = alpha_uncovered_topics;
  j["word_vector_coverage"] = alpha ? nlohmann::ordered_json(word_vector_coverage) : nlohmann::ordered_json(nullptr);
  j["top_n"] = top_n;
  j["rbo_p"] = rbo_p;
  j["npmi_epsilon"] = npmi_epsilon;
  j["topics"] = topics;
  return j.dump(2);
}

}  // namespace ctm
