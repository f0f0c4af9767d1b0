#include <cmath>
#include <random>

#include "ctm/checkpoint.hpp"
#include "ctm/embeddings.hpp"
#include "ctm/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctm;

#ifndef CTM_FIXTURE_DIR
#error "CTM_FIXTURE_DIR must be defined"
#endif

namespace {

BowCorpus bow_with_ids(std::vector<std::string> ids) {
  BowCorpus c;
  c.vocab = Vocabulary({"w"});
  c.doc_ids = std::move(ids);
  c.rows.assign(c.doc_ids.size(), SparseRow{{0, 1}});
  return c;
}

EmbeddingMatrix emb_with_ids(std::vector<std::string> ids) {
  EmbeddingMatrix e;
  e.doc_ids = std::move(ids);
  e.rows.resize(static_cast<Eigen::Index>(e.doc_ids.size()), 2);
  for (Eigen::Index i = 0; i < e.rows.rows(); ++i) e.rows.row(i) << static_cast<double>(i), -static_cast<double>(i);
  return e;
}

}  // namespace

TEST_CASE("golden 3x4 embedding file") {
  const auto e = load_document_embeddings(std::filesystem::path(CTM_FIXTURE_DIR) / "golden_3x4.emb");
  CHECK(e.dim() == 4);
  CHECK(e.doc_ids == std::vector<std::string>{"doc-a", "doc-b", "doc-c"});
  Matrix expected(3, 4);
  expected << 0.5, -1.25, 3, 0.125, 1e-3, 2.5, -0.75, 0, -7, 0.0625, 1.5, 9.75;
  CHECK(e.rows == expected);
}

TEST_CASE("embedding file errors") {
  test::TempDir dir;
  test::write_file(dir / "ok.txt", "2 3\na\t1 2 3\nb\t4 5 6\n");
  CHECK(load_document_embeddings(dir / "ok.txt").dim() == 3);
  CHECK(load_document_embeddings(dir / "ok.txt", 1).size() == 1);

  test::write_file(dir / "short.txt", "2 3\na\t1 2 3\nb\t4 5\n");
  CHECK_THROWS_WITH_AS(load_document_embeddings(dir / "short.txt"), doctest::Contains("dimension mismatch"), InputError);

  test::write_file(dir / "nan.txt", "1 2\na\tnan 1\n");
  CHECK_THROWS_WITH_AS(load_document_embeddings(dir / "nan.txt"), doctest::Contains("non-finite"), InputError);

  test::write_file(dir / "dup.txt", "2 1\na\t1\na\t2\n");
  CHECK_THROWS_AS(load_document_embeddings(dir / "dup.txt"), InputError);

  test::write_file(dir / "empty.txt", "");
  CHECK_THROWS_WITH_AS(load_document_embeddings(dir / "empty.txt"), doctest::Contains("missing header"), InputError);

  test::write_file(dir / "count.txt", "3 1\na\t1\n");
  CHECK_THROWS_AS(load_document_embeddings(dir / "count.txt"), InputError);
}

TEST_CASE("embedding save and load round trip at 9 significant digits") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  EmbeddingMatrix e;
  for (int i = 0; i < 7; ++i) e.doc_ids.push_back("id" + std::to_string(i));
  e.rows.resize(7, 5);
  for (Eigen::Index i = 0; i < e.rows.size(); ++i) e.rows.data()[i] = n(rng);

  test::TempDir dir;
  save_document_embeddings(e, dir / "e.txt");
  const auto back = load_document_embeddings(dir / "e.txt");
  CHECK(back.doc_ids == e.doc_ids);
  REQUIRE(back.dim() == e.dim());
  for (Eigen::Index i = 0; i < e.rows.size(); ++i)
    CHECK(std::abs(back.rows.data()[i] - e.rows.data()[i]) <= 1e-8 * std::abs(e.rows.data()[i]));

  save_document_embeddings(back, dir / "f.txt");
  CHECK(test::read_file(dir / "e.txt") == test::read_file(dir / "f.txt"));
}

TEST_CASE("align reorders to the bow ids") {
  const auto d = align(bow_with_ids({"b", "a"}), emb_with_ids({"a", "b"}));
  REQUIRE(d.emb);
  CHECK(d.emb->doc_ids == std::vector<std::string>{"b", "a"});
  CHECK(d.emb->rows(0, 0) == 1.0);
  CHECK(d.emb->rows(1, 0) == 0.0);
}

TEST_CASE("align discards extra embedding rows") {
  const auto d = align(bow_with_ids({"a"}), emb_with_ids({"a", "c"}));
  CHECK(d.emb->size() == 1);
  CHECK(d.bow.num_docs() == 1);
}

TEST_CASE("align names missing ids") {
  CHECK_THROWS_WITH_AS(align(bow_with_ids({"a", "x"}), emb_with_ids({"a"})), doctest::Contains("x"), InputError);
}

TEST_CASE("align is idempotent") {
  const auto bow = bow_with_ids({"c", "a", "b"});
  const auto once = align(bow, emb_with_ids({"a", "b", "c", "d"}));
  const auto twice = align(bow, *once.emb);
  CHECK(twice.emb->doc_ids == once.emb->doc_ids);
  CHECK(twice.emb->rows == once.emb->rows);
}

TEST_CASE("word vectors") {
  test::TempDir dir;
  test::write_file(dir / "wv.txt", "2 2\ncat 1 0\ndog 0 1\n");
  const auto wv = load_word_vectors(dir / "wv.txt");
  CHECK(wv.dim == 2);
  CHECK(wv.table.size() == 2);
  REQUIRE(wv.find("dog"));
  CHECK((*wv.find("dog"))(1) == 1.0);
  CHECK(wv.find("eel") == nullptr);

  test::write_file(dir / "dup.txt", "2 2\ncat 1 0\ncat 0 1\n");
  CHECK_THROWS_AS(load_word_vectors(dir / "dup.txt"), InputError);
  test::write_file(dir / "empty.txt", "");
  CHECK_THROWS_WITH_AS(load_word_vectors(dir / "empty.txt"), doctest::Contains("missing header"), InputError);
}

TEST_CASE("checkpoint round trip is exact") {
  for (Mode mode : {Mode::ProdLda, Mode::Combined}) {
    ModelConfig cfg;
    cfg.num_topics = 3;
    cfg.vocab_size = 6;
    cfg.hidden_size = 4;
    cfg.mode = mode;
    cfg.embedding_dim = mode == Mode::Combined ? 2 : 0;
    cfg.seed = 9;
    Checkpoint ck{init_model(cfg), Vocabulary({"a", "b", "c", "d", "e", "f"})};
    ck.model.bn_dec.running_mean(2) = 0.1 / 3.0;
    const auto text = serialize_checkpoint(ck);
    const auto back = parse_checkpoint(text);
    CHECK(back.vocab == ck.vocab);
    CHECK(back.model.config.mode == mode);
    CHECK(back.model.bn_dec.running_mean == ck.model.bn_dec.running_mean);
    const auto a = ck.model.params.views();
    const auto b = back.model.params.views();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin(), b[i].values.end()));
    CHECK(serialize_checkpoint(back) == text);
  }
  CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), InputError);
}
