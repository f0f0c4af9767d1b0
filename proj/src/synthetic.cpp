#include "ctm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "ctm/error.hpp"
#include "ctm/model.hpp"

namespace ctm {
namespace {

std::string word_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%04d", i);
  return buf;
}

}  // namespace

EmbeddingKind parse_embedding_kind(std::string_view s) {
  if (s == "informative") return EmbeddingKind::Informative;
  if (s == "noise") return EmbeddingKind::Noise;
  if (s == "none") return EmbeddingKind::None;
  throw InputError("unknown embedding kind '" + std::string(s) + "' (expected informative, noise or none)");
}

void SyntheticSpec::validate() const {
  if (num_topics < 2) throw InputError("synthetic: need at least 2 topics");
  if (vocab_size < num_topics * 10) throw InputError("synthetic: vocab_size must be at least 10 * num_topics");
  if (num_docs < 2) throw InputError("synthetic: need at least 2 documents");
  if (doc_length < 1) throw InputError("synthetic: doc_length must be positive");
  if (!(topic_sharpness > 0.0)) throw InputError("synthetic: topic_sharpness must be positive");
  if (!(dominant_weight > 0.0 && dominant_weight <= 1.0)) throw InputError("synthetic: dominant_weight must lie in (0, 1]");
  if (embedding_dim != 0 && embedding_dim < num_topics)
    throw InputError("synthetic: embedding_dim must be at least num_topics");
  if (!(embedding_noise >= 0.0)) throw InputError("synthetic: embedding_noise must be non-negative");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int K = spec.num_topics, V = spec.vocab_size;
  Rng rng(spec.seed);

  // Partition the vocabulary into K contiguous blocks.
  std::vector<int> block_start(static_cast<std::size_t>(K) + 1, 0);
  for (int k = 0; k < K; ++k) block_start[k + 1] = block_start[k] + V / K + (k < V % K ? 1 : 0);

  std::gamma_distribution<double> gamma(1.0 / spec.topic_sharpness, 1.0);
  std::vector<std::discrete_distribution<int>> topic_words;
  std::vector<WordList> planted;
  for (int k = 0; k < K; ++k) {
    const int lo = block_start[k], hi = block_start[k + 1];
    std::vector<double> w(static_cast<std::size_t>(hi - lo));
    for (auto& x : w) x = gamma(rng);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= s;
    std::vector<int> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });
    WordList top;
    for (int i = 0; i < 10; ++i) top.push_back(word_name(lo + order[static_cast<std::size_t>(i)]));
    planted.push_back(std::move(top));
    topic_words.emplace_back(w.begin(), w.end());
  }

  std::uniform_int_distribution<int> pick_topic(0, K - 1);
  std::uniform_int_distribution<int> pick_other(0, K - 2);
  std::bernoulli_distribution from_dominant(spec.dominant_weight);
  std::vector<SparseRow> raw_rows(static_cast<std::size_t>(spec.num_docs));
  std::vector<int> counts(static_cast<std::size_t>(V), 0);
  std::vector<int> dominant(static_cast<std::size_t>(spec.num_docs));
  std::vector<long> total(static_cast<std::size_t>(V), 0);
  for (int d = 0; d < spec.num_docs; ++d) {
    const int t = pick_topic(rng);
    dominant[static_cast<std::size_t>(d)] = t;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < spec.doc_length; ++i) {
      int k = t;
      if (!from_dominant(rng)) {
        k = pick_other(rng);
        if (k >= t) ++k;
      }
      const int w = block_start[k] + topic_words[static_cast<std::size_t>(k)](rng);
      ++counts[static_cast<std::size_t>(w)];
      ++total[static_cast<std::size_t>(w)];
    }
    for (int w = 0; w < V; ++w)
      if (counts[static_cast<std::size_t>(w)] > 0) raw_rows[static_cast<std::size_t>(d)].emplace_back(w, counts[static_cast<std::size_t>(w)]);
  }

  std::vector<int> remap(static_cast<std::size_t>(V), -1);
  std::vector<std::string> words;
  for (int w = 0; w < V; ++w) {
    if (total[static_cast<std::size_t>(w)] == 0) continue;
    remap[static_cast<std::size_t>(w)] = static_cast<int>(words.size());
    words.push_back(word_name(w));
  }

  SyntheticData out;
  out.bow.vocab = Vocabulary(std::move(words));
  for (int d = 0; d < spec.num_docs; ++d) {
    SparseRow row = std::move(raw_rows[static_cast<std::size_t>(d)]);
    for (auto& entry : row) entry.first = remap[static_cast<std::size_t>(entry.first)];
    out.bow.rows.push_back(std::move(row));
    out.bow.doc_ids.push_back("d" + std::to_string(d));
  }
  out.planted_topics = std::move(planted);
  out.dominant_topic = std::move(dominant);

  if (spec.embeddings != EmbeddingKind::None) {
    const int E = spec.embedding_dim == 0 ? K : spec.embedding_dim;
    const double sigma = spec.embeddings == EmbeddingKind::Informative
                             ? spec.embedding_noise
                             : std::sqrt(1.0 / E + spec.embedding_noise * spec.embedding_noise);
    std::normal_distribution<double> noise(0.0, sigma);
    EmbeddingMatrix emb;
    emb.doc_ids = out.bow.doc_ids;
    emb.rows.resize(spec.num_docs, E);
    for (int d = 0; d < spec.num_docs; ++d) {
      for (int j = 0; j < E; ++j) emb.rows(d, j) = noise(rng);
      if (spec.embeddings == EmbeddingKind::Informative) emb.rows(d, out.dominant_topic[static_cast<std::size_t>(d)]) += 1.0;
    }
    out.emb = std::move(emb);
  }
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_bow(data.bow, dir / "bow.json");
  if (data.emb) save_document_embeddings(*data.emb, dir / "embeddings.txt");

  std::ofstream corpus(dir / "corpus.txt");
  for (std::size_t d = 0; d < data.bow.num_docs(); ++d) {
    corpus << data.bow.doc_ids[d] << '\t';
    bool first = true;
    for (const auto& [idx, cnt] : data.bow.rows[d])
      for (int c = 0; c < cnt; ++c) {
        corpus << (first ? "" : " ") << data.bow.vocab.word(static_cast<std::size_t>(idx));
        first = false;
      }
    corpus << '\n';
  }
  std::ofstream planted(dir / "planted_topics.txt");
  for (const auto& t : data.planted_topics) {
    for (std::size_t i = 0; i < t.size(); ++i) planted << (i ? " " : "") << t[i];
    planted << '\n';
  }
  std::ofstream labels(dir / "labels.txt");
  for (std::size_t d = 0; d < data.dominant_topic.size(); ++d)
    labels << data.bow.doc_ids[d] << '\t' << data.dominant_topic[d] << '\n';
  if (!corpus || !planted || !labels) throw InputError("cannot write synthetic data to " + dir.string());
}

}  // namespace ctm
