#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctm/types.hpp"

namespace ctm {

struct RawDocument {
  std::string id;
  std::string text;
};

struct Document {
  std::string id;
  std::string raw_text;
  std::vector<std::string> tokens;
};

using StopwordSet = std::unordered_set<std::string>;

/// Lowercases, strips punctuation, and drops digit-bearing tokens and stopwords.
/// With `passthrough` the text is only split on whitespace (for corpora that
/// arrive already cleaned). Throws InputError on a duplicate id.
std::vector<Document> preprocess(std::span<const RawDocument> raw_docs, const StopwordSet& stopwords,
                                 bool passthrough = false);

/// Tokenizer used by preprocess, exposed for testing.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }

  /// Index of `w`, or -1 when absent.
  int index_of(std::string_view w) const;
  bool contains(std::string_view w) const { return index_of(w) >= 0; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// The `max_vocab` most frequent tokens, ties broken by ascending byte order.
/// Throws InputError("empty corpus") when no document has a token.
Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t max_vocab);

/// One sparse document: (word index, count) pairs sorted by index, counts > 0.
using SparseRow = std::vector<std::pair<int, int>>;

struct BowCorpus {
  Vocabulary vocab;
  std::vector<SparseRow> rows;
  std::vector<std::string> doc_ids;

  std::size_t num_docs() const { return rows.size(); }
  std::size_t vocab_size() const { return vocab.size(); }

  /// Dense B×|V| count matrix for the given row indices.
  Matrix dense_rows(std::span<const std::size_t> indices) const;
  Matrix dense() const;
};

struct VectorizeResult {
  BowCorpus corpus;
  std::vector<std::string> dropped_ids;
};

VectorizeResult vectorize(std::span<const Document> docs, const Vocabulary& vocab);

/// Checks every BowCorpus invariant; throws InputError describing the first violation.
void validate(const BowCorpus& corpus);

// File formats.

/// One document per line, optional leading `id<TAB>`; otherwise the zero-based line number is the id.
std::vector<RawDocument> read_corpus_file(const std::filesystem::path& path);
StopwordSet read_stopwords(const std::filesystem::path& path);

std::string to_json(const BowCorpus& corpus);
BowCorpus bow_from_json(std::string_view text);
void save_bow(const BowCorpus& corpus, const std::filesystem::path& path);
BowCorpus load_bow(const std::filesystem::path& path);

}  // namespace ctm
