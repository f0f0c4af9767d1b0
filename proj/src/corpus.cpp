#include "ctm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <wctype.h>

#include <locale.h>

#include "ctm/error.hpp"
#include "json.hpp"

namespace ctm {
namespace {

// glibc's C.UTF-8 carries the full Unicode character classes.
locale_t utf8_locale() {
  static const locale_t loc = [] {
    locale_t l = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
    if (l == static_cast<locale_t>(0)) l = newlocale(LC_CTYPE_MASK, "C.utf8", static_cast<locale_t>(0));
    return l;
  }();
  return loc;
}

bool is_alnum(char32_t c) {
  if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
  const locale_t loc = utf8_locale();
  return loc != static_cast<locale_t>(0) && iswalnum_l(static_cast<wint_t>(c), loc);
}

bool is_alpha(char32_t c) {
  if (c < 0x80) return std::isalpha(static_cast<int>(c)) != 0;
  const locale_t loc = utf8_locale();
  return loc != static_cast<locale_t>(0) && iswalpha_l(static_cast<wint_t>(c), loc);
}

bool is_space(char32_t c) {
  if (c < 0x80) return std::isspace(static_cast<int>(c)) != 0;
  const locale_t loc = utf8_locale();
  return loc != static_cast<locale_t>(0) && iswspace_l(static_cast<wint_t>(c), loc);
}

char32_t to_lower(char32_t c) {
  if (c < 0x80) return static_cast<char32_t>(std::tolower(static_cast<int>(c)));
  const locale_t loc = utf8_locale();
  if (loc == static_cast<locale_t>(0)) return c;
  return static_cast<char32_t>(towlower_l(static_cast<wint_t>(c), loc));
}

// Invalid sequences decode to U+FFFD, which is neither alphanumeric nor space.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char32_t c : decode_utf8(text)) {
    if (is_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      append_utf8(cur, c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  bool has_digit = false;
  auto flush = [&] {
    if (!cur.empty() && !has_digit) tokens.push_back(cur);
    cur.clear();
    has_digit = false;
  };
  for (char32_t c : decode_utf8(text)) {
    if (!is_alnum(c)) {
      flush();
      continue;
    }
    if (!is_alpha(c)) has_digit = true;
    append_utf8(cur, to_lower(c));
  }
  flush();
  return tokens;
}

std::vector<Document> preprocess(std::span<const RawDocument> raw_docs, const StopwordSet& stopwords,
                                 bool passthrough) {
  std::unordered_set<std::string> seen;
  std::vector<Document> docs;
  docs.reserve(raw_docs.size());
  for (const auto& raw : raw_docs) {
    if (!seen.insert(raw.id).second) throw InputError("duplicate document id: " + raw.id);
    Document doc{raw.id, raw.text, {}};
    if (passthrough) {
      doc.tokens = split_whitespace(raw.text);
    } else {
      for (auto& tok : tokenize(raw.text)) {
        if (!stopwords.contains(tok)) doc.tokens.push_back(std::move(tok));
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second)
      throw InputError("duplicate vocabulary word: " + words_[i]);
  }
}

int Vocabulary::index_of(std::string_view w) const {
  auto it = index_.find(std::string(w));
  return it == index_.end() ? -1 : it->second;
}

Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t max_vocab) {
  if (max_vocab == 0) throw InputError("max_vocab must be positive");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) ++counts[t];
  if (counts.empty()) throw InputError("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);

  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, _] : ranked) words.push_back(std::move(w));
  return Vocabulary(std::move(words));
}

VectorizeResult vectorize(std::span<const Document> docs, const Vocabulary& vocab) {
  if (vocab.empty()) throw InputError("vocabulary is empty");
  VectorizeResult out;
  out.corpus.vocab = vocab;
  for (const auto& d : docs) {
    std::map<int, int> counts;
    for (const auto& t : d.tokens) {
      const int idx = vocab.index_of(t);
      if (idx >= 0) ++counts[idx];
    }
    if (counts.empty()) {
      out.dropped_ids.push_back(d.id);
      continue;
    }
    out.corpus.rows.emplace_back(counts.begin(), counts.end());
    out.corpus.doc_ids.push_back(d.id);
  }
  return out;
}

Matrix BowCorpus::dense_rows(std::span<const std::size_t> indices) const {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(vocab_size()));
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (const auto& [idx, cnt] : rows.at(indices[r])) m(static_cast<Eigen::Index>(r), idx) = cnt;
  return m;
}

Matrix BowCorpus::dense() const {
  std::vector<std::size_t> all(num_docs());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return dense_rows(all);
}

void validate(const BowCorpus& corpus) {
  if (corpus.rows.size() != corpus.doc_ids.size()) throw InputError("rows and doc_ids differ in length");
  std::unordered_set<std::string> ids;
  for (std::size_t r = 0; r < corpus.rows.size(); ++r) {
    const auto& id = corpus.doc_ids[r];
    if (!ids.insert(id).second) throw InputError("duplicate document id: " + id);
    const auto& row = corpus.rows[r];
    if (row.empty()) throw InputError("document " + id + " has no in-vocabulary tokens");
    int prev = -1;
    for (const auto& [idx, cnt] : row) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= corpus.vocab_size())
        throw InputError("document " + id + " has out-of-range index " + std::to_string(idx));
      if (idx <= prev) throw InputError("document " + id + " has unsorted or repeated indices");
      if (cnt <= 0) throw InputError("document " + id + " has non-positive count");
      prev = idx;
    }
  }
}

std::vector<RawDocument> read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      docs.push_back({std::to_string(lineno), line});
    } else {
      docs.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    ++lineno;
  }
  return docs;
}

StopwordSet read_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : split_whitespace(line)) words.insert(std::move(t));
  }
  return words;
}

std::string to_json(const BowCorpus& corpus) {
  nlohmann::ordered_json j;
  j["vocab"] = corpus.vocab.words();
  j["doc_ids"] = corpus.doc_ids;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : corpus.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& [idx, cnt] : row) obj[std::to_string(idx)] = cnt;
    rows.push_back(std::move(obj));
  }
  j["rows"] = std::move(rows);
  return j.dump();
}

BowCorpus bow_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bag-of-words JSON: ") + e.what());
  }
  BowCorpus c;
  try {
    c.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    c.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    for (const auto& obj : j.at("rows")) {
      SparseRow row;
      for (const auto& [key, value] : obj.items()) row.emplace_back(std::stoi(key), value.get<int>());
      std::sort(row.begin(), row.end());
      c.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bag-of-words JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw InputError(std::string("bag-of-words JSON: bad row index: ") + e.what());
  }
  validate(c);
  return c;
}

void save_bow(const BowCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_json(corpus) << '\n';
}

BowCorpus load_bow(const std::filesystem::path& path) { return bow_from_json(read_file(path)); }

}  // namespace ctm
