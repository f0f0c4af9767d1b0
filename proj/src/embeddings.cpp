#include "ctm/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <unordered_set>

#include "ctm/error.hpp"

namespace ctm {
namespace {

struct Header {
  std::size_t rows = 0;
  std::size_t dim = 0;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

Header parse_header(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) break;
    line.clear();
  }
  const auto t = trim(line);
  if (t.empty()) throw InputError(path.string() + ": missing header");
  Header h;
  const char* p = t.data();
  const char* end = t.data() + t.size();
  auto r1 = std::from_chars(p, end, h.rows);
  if (r1.ec != std::errc{}) throw InputError(path.string() + ": malformed header '" + std::string(t) + "'");
  p = r1.ptr;
  while (p != end && *p == ' ') ++p;
  auto r2 = std::from_chars(p, end, h.dim);
  if (r2.ec != std::errc{} || h.dim == 0) throw InputError(path.string() + ": malformed header '" + std::string(t) + "'");
  return h;
}

// Parses whitespace-separated decimals into `out`; row is 0-based for messages.
void parse_values(std::string_view text, std::size_t dim, std::size_t row, double* out) {
  std::size_t col = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (true) {
    while (p != end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) break;
    if (col >= dim) throw InputError("dimension mismatch at row " + std::to_string(row));
    double v = 0.0;
    auto r = std::from_chars(p, end, v);
    if (r.ec != std::errc{}) {
      const char* q = p;
      while (q != end && *q != ' ' && *q != '\t') ++q;
      throw InputError("malformed value '" + std::string(p, q) + "' at (" + std::to_string(row) + ", " +
                       std::to_string(col) + ")");
    }
    if (!std::isfinite(v))
      throw InputError("non-finite at (" + std::to_string(row) + ", " + std::to_string(col) + ")");
    out[col++] = v;
    p = r.ptr;
  }
  if (col != dim) throw InputError("dimension mismatch at row " + std::to_string(row));
}

}  // namespace

EmbeddingMatrix load_document_embeddings(const std::filesystem::path& path, std::optional<std::size_t> limit) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const Header h = parse_header(in, path);
  const std::size_t n = limit ? std::min(*limit, h.rows) : h.rows;

  EmbeddingMatrix emb;
  emb.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h.dim));
  emb.doc_ids.reserve(n);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t row = 0;
  while (row < n && std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto tab = t.find('\t');
    if (tab == std::string_view::npos) throw InputError("row " + std::to_string(row) + ": missing id<TAB> prefix");
    std::string id(t.substr(0, tab));
    if (!seen.insert(id).second) throw InputError("duplicate document id in embeddings: " + id);
    parse_values(t.substr(tab + 1), h.dim, row, emb.rows.row(static_cast<Eigen::Index>(row)).data());
    emb.doc_ids.push_back(std::move(id));
    ++row;
  }
  if (row != n)
    throw InputError(path.string() + ": header declares " + std::to_string(h.rows) + " rows but file has " +
                     std::to_string(row));
  return emb;
}

void save_document_embeddings(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << emb.size() << ' ' << emb.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < emb.size(); ++i) {
    out << emb.doc_ids[i] << '\t';
    for (Eigen::Index j = 0; j < emb.rows.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", emb.rows(static_cast<Eigen::Index>(i), j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

WordVectors load_word_vectors(const std::filesystem::path& path, std::optional<std::size_t> limit) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const Header h = parse_header(in, path);
  const std::size_t n = limit ? std::min(*limit, h.rows) : h.rows;

  WordVectors wv;
  wv.dim = h.dim;
  std::string line;
  std::size_t row = 0;
  while (row < n && std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto sp = t.find(' ');
    if (sp == std::string_view::npos) throw InputError("dimension mismatch at row " + std::to_string(row));
    std::string word(t.substr(0, sp));
    Eigen::VectorXd v(static_cast<Eigen::Index>(h.dim));
    parse_values(t.substr(sp + 1), h.dim, row, v.data());
    if (!wv.table.emplace(word, std::move(v)).second) throw InputError("duplicate word in word vectors: " + word);
    ++row;
  }
  if (row != n)
    throw InputError(path.string() + ": header declares " + std::to_string(h.rows) + " rows but file has " +
                     std::to_string(row));
  return wv;
}

AlignedDataset align(const BowCorpus& bow, const EmbeddingMatrix& emb) {
  std::unordered_map<std::string, Eigen::Index> where;
  where.reserve(emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) where.emplace(emb.doc_ids[i], static_cast<Eigen::Index>(i));

  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (const auto& id : bow.doc_ids) {
    if (!where.contains(id)) {
      if (missing.size() < 10) missing.push_back(id);
      ++missing_count;
    }
  }
  if (missing_count > 0) {
    std::string msg = std::to_string(missing_count) + " document(s) missing from embeddings:";
    for (const auto& id : missing) msg += " " + id;
    if (missing_count > missing.size()) msg += " ...";
    throw InputError(msg);
  }

  EmbeddingMatrix out;
  out.doc_ids = bow.doc_ids;
  out.rows.resize(static_cast<Eigen::Index>(bow.num_docs()), emb.rows.cols());
  for (std::size_t i = 0; i < bow.num_docs(); ++i)
    out.rows.row(static_cast<Eigen::Index>(i)) = emb.rows.row(where.at(bow.doc_ids[i]));
  return AlignedDataset{bow, std::move(out)};
}

}  // namespace ctm
