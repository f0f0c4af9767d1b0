#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctm/corpus.hpp"
#include "ctm/types.hpp"

namespace ctm {

/// Dense per-document vectors; row i belongs to doc_ids[i].
struct EmbeddingMatrix {
  std::vector<std::string> doc_ids;
  Matrix rows;  // N×dim

  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
  std::size_t size() const { return doc_ids.size(); }
};

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, Eigen::VectorXd> table;

  const Eigen::VectorXd* find(const std::string& w) const {
    auto it = table.find(w);
    return it == table.end() ? nullptr : &it->second;
  }
};

struct AlignedDataset {
  BowCorpus bow;
  std::optional<EmbeddingMatrix> emb;  // present for combined-mode data
};

/// Reads `<rows> <dim>` then `id<TAB>v1 ... vdim` lines. `limit` keeps only the first N rows.
EmbeddingMatrix load_document_embeddings(const std::filesystem::path& path,
                                         std::optional<std::size_t> limit = std::nullopt);
void save_document_embeddings(const EmbeddingMatrix& emb, const std::filesystem::path& path);

/// word2vec text format: `<count> <dim>` then `word v1 ... vdim`.
WordVectors load_word_vectors(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);

/// Reorders `emb` to follow bow.doc_ids, discarding extra rows.
AlignedDataset align(const BowCorpus& bow, const EmbeddingMatrix& emb);

}  // namespace ctm
