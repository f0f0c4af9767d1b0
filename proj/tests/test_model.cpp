#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "ctm/error.hpp"
#include "ctm/model.hpp"
#include "doctest.h"

using namespace ctm;

namespace {

ModelConfig small_config(Mode mode = Mode::ProdLda) {
  ModelConfig c;
  c.num_topics = 5;
  c.vocab_size = 10;
  c.hidden_size = 6;
  c.mode = mode;
  c.embedding_dim = mode == Mode::Combined ? 4 : 0;
  c.seed = 7;
  return c;
}

Matrix random_counts(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> d(0, 4);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

bool bit_equal(const Parameters& a, const Parameters& b) {
  const auto va = a.views(), vb = b.views();
  if (va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < va.size(); ++i)
    if (!std::equal(va[i].values.begin(), va[i].values.end(), vb[i].values.begin(), vb[i].values.end())) return false;
  return true;
}

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Mat to_mat(const Matrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

Vec to_vec(const RowVector& v) { return Vec(v.data(), v.data() + v.size()); }

Mat affine(const Mat& x, const Mat& w, const Vec* b) {
  Mat out(x.size(), Vec(w[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b ? (*b)[j] : 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      out[i][j] = s;
    }
  return out;
}

Mat softplus(Mat x) {
  for (auto& r : x)
    for (auto& v : r) v = std::log1p(std::exp(v));
  return x;
}

// Training-mode batch normalization followed by an elementwise affine map.
Mat batch_norm(const Mat& x, const Vec& scale, const Vec& shift) {
  const double n = static_cast<double>(x.size());
  Mat out = x;
  for (std::size_t j = 0; j < x[0].size(); ++j) {
    double mean = 0.0, var = 0.0;
    for (const auto& r : x) mean += r[j];
    mean /= n;
    for (const auto& r : x) var += (r[j] - mean) * (r[j] - mean);
    var /= n;
    for (std::size_t i = 0; i < x.size(); ++i) out[i][j] = scale[j] * (x[i][j] - mean) / std::sqrt(var + 1e-5) + shift[j];
  }
  return out;
}

// Loss of a training-mode pass without dropout, written out independently of the library.
double oracle_loss(const TopicModel& m, const Matrix& bow_m, const Matrix& noise_m) {
  const auto& p = m.params;
  const std::size_t K = static_cast<std::size_t>(m.num_topics());
  const Mat bow = to_mat(bow_m), noise = to_mat(noise_m);
  const Vec enc1_b = to_vec(p.enc1_b), enc2_b = to_vec(p.enc2_b);
  const Mat h = softplus(affine(softplus(affine(bow, to_mat(p.enc1_w), &enc1_b)), to_mat(p.enc2_w), &enc2_b));
  const Mat mu = batch_norm(affine(h, to_mat(p.mu_w), nullptr), to_vec(p.bn_mu_scale), to_vec(p.bn_mu_shift));
  const Mat lv = batch_norm(affine(h, to_mat(p.logvar_w), nullptr), to_vec(p.bn_logvar_scale), to_vec(p.bn_logvar_shift));
  Mat theta(bow.size(), Vec(K));
  for (std::size_t i = 0; i < bow.size(); ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(mu[i][k] + std::exp(0.5 * lv[i][k]) * noise[i][k]);
    for (std::size_t k = 0; k < K; ++k) theta[i][k] = std::exp(mu[i][k] + std::exp(0.5 * lv[i][k]) * noise[i][k]) / denom;
  }
  const Vec ones(static_cast<std::size_t>(m.vocab_size()), 1.0);
  const Mat logits = batch_norm(affine(theta, to_mat(p.beta), nullptr), ones, to_vec(p.bn_dec_shift));
  double recon = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < bow.size(); ++i) {
    double denom = 0.0;
    for (double v : logits[i]) denom += std::exp(v);
    for (std::size_t w = 0; w < ones.size(); ++w) recon -= bow[i][w] * (logits[i][w] - std::log(denom));
    for (std::size_t k = 0; k < K; ++k) {
      const double vq = std::exp(lv[i][k]), vp = std::exp(p.prior_logvar(static_cast<Eigen::Index>(k)));
      const double d = mu[i][k] - p.prior_mu(static_cast<Eigen::Index>(k));
      kl += 0.5 * (vq / vp + d * d / vp - 1.0 + std::log(vp) - std::log(vq));
    }
  }
  return (recon + kl) / static_cast<double>(bow.size());
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
  CHECK(bit_equal(init_model(small_config()).params, init_model(small_config()).params));
  auto other = small_config();
  other.seed = 8;
  CHECK_FALSE(bit_equal(init_model(small_config()).params, init_model(other).params));
}

TEST_CASE("combined input concatenates a vocabulary-sized block") {
  auto c = small_config(Mode::Combined);
  CHECK(c.input_dim() == 20);
  const auto m = init_model(c);
  CHECK(m.params.enc1_w.rows() == 20);
  CHECK(m.params.proj_w.rows() == 4);
  CHECK(m.params.proj_w.cols() == 10);
}

TEST_CASE("prior log-variance starts at log(1 - 1/K)") {
  const auto m = init_model(small_config());
  for (Eigen::Index k = 0; k < 5; ++k) {
    CHECK(m.params.prior_logvar(k) == doctest::Approx(std::log(0.8)).epsilon(1e-15));
    CHECK(m.params.prior_mu(k) == 0.0);
  }
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.num_topics = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = small_config(Mode::Combined);
  c.embedding_dim = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = small_config();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("encode shapes and eval determinism") {
  const auto m = init_model(small_config());
  const Matrix bow = random_counts(3, 10, 1);
  Rng rng(1);
  const auto [mu, logvar] = encode(m, bow, nullptr, false, rng);
  CHECK(mu.rows() == 3);
  CHECK(mu.cols() == 5);
  CHECK(logvar.rows() == 3);
  CHECK(logvar.cols() == 5);
  CHECK(mu.allFinite());
  CHECK(logvar.allFinite());
  const auto again = encode(m, bow, nullptr, false, rng);
  CHECK(again.first == mu);
  CHECK(again.second == logvar);
}

TEST_CASE("zero bow row stays finite in eval mode") {
  const auto m = init_model(small_config());
  Rng rng(2);
  const auto [mu, logvar] = encode(m, Matrix::Zero(2, 10), nullptr, false, rng);
  CHECK(mu.allFinite());
  CHECK(logvar.allFinite());
}

TEST_CASE("encode checks mode and shapes") {
  const auto p = init_model(small_config());
  const auto c = init_model(small_config(Mode::Combined));
  const Matrix bow = random_counts(2, 10, 3);
  const Matrix emb = random_normal(2, 4, 3);
  Rng rng(0);
  CHECK_THROWS_AS(encode(p, bow, &emb, false, rng), InputError);
  CHECK_THROWS_AS(encode(c, bow, nullptr, false, rng), InputError);
  CHECK_THROWS_AS(encode(p, random_counts(2, 9, 3), nullptr, false, rng), InputError);
  CHECK_NOTHROW(encode(c, bow, &emb, false, rng));
}

TEST_CASE("eval forward pass does not mutate the model") {
  const auto m = init_model(small_config(Mode::Combined));
  const auto before = m;
  const Matrix bow = random_counts(4, 10, 5);
  const Matrix emb = random_normal(4, 4, 5);
  Rng a(1), b(1);
  ForwardOptions eval;
  eval.sample = false;
  const auto c1 = forward(m, bow, &emb, eval, a);
  const auto c2 = forward(m, bow, &emb, eval, b);
  CHECK(c1.log_word_dist == c2.log_word_dist);
  CHECK(bit_equal(m.params, before.params));
  CHECK(m.bn_dec.running_mean == before.bn_dec.running_mean);
}

TEST_CASE("zero embeddings with a zero projection give a constant block") {
  auto m = init_model(small_config(Mode::Combined));
  m.params.proj_w.setZero();
  const Matrix bow = random_counts(3, 10, 4);
  const Matrix emb = Matrix::Zero(3, 4);
  Rng rng(0);
  ForwardOptions eval;
  eval.sample = false;
  const auto c = forward(m, bow, &emb, eval, rng);
  CHECK(c.input.leftCols(10) == bow);
  CHECK((c.input.rightCols(10).array() == std::log(2.0)).all());
  CHECK(c.log_word_dist.allFinite());
}

TEST_CASE("reparameterize with vanishing variance returns mu") {
  const Matrix mu = random_normal(3, 4, 6);
  const Matrix logvar = Matrix::Constant(3, 4, -50.0);
  Rng rng(3);
  CHECK((reparameterize(mu, logvar, rng) - mu).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("reparameterize is reproducible under a seed") {
  const Matrix mu = random_normal(2, 3, 1);
  const Matrix logvar = random_normal(2, 3, 2);
  Rng a(42), b(42);
  CHECK(reparameterize(mu, logvar, a) == reparameterize(mu, logvar, b));
}

TEST_CASE("reparameterized noise has the requested moments") {
  const int n = 100000;
  const RowVector lv = (RowVector(3) << 0.5, -1.0, 2.0).finished();
  const Matrix mu = Matrix::Constant(n, 3, 1.5);
  const Matrix logvar = lv.replicate(n, 1);
  Rng rng(2024);
  const Matrix d = reparameterize(mu, logvar, rng) - mu;
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double sd = std::exp(0.5 * lv(k));
    const double m = d.col(k).mean();
    const double var = (d.col(k).array() - m).square().sum() / (n - 1);
    CHECK(std::abs(m) < 3.0 * sd / std::sqrt(n));
    // Standard error of the sample variance of a normal is var·sqrt(2/(n−1)).
    CHECK(std::abs(var - sd * sd) < 4.0 * sd * sd * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("decode rows are distributions") {
  const auto m = init_model(small_config());
  const Matrix z = random_normal(6, 5, 8, 3.0);
  for (bool train : {false, true}) {
    const auto [theta, words] = decode(m, z, train);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      CHECK(theta.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(words.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("large one-hot z puts theta on a vertex") {
  const auto m = init_model(small_config());
  Matrix z = Matrix::Zero(1, 5);
  z(0, 2) = 60.0;
  const auto [theta, words] = decode(m, z, false);
  CHECK(theta(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
  for (Eigen::Index k : {0, 1, 3, 4}) CHECK(theta(0, k) < 1e-25);
}

TEST_CASE("decode matches a hand computation") {
  ModelConfig c;
  c.num_topics = 2;
  c.vocab_size = 3;
  c.hidden_size = 2;
  auto m = init_model(c);
  m.params.beta << 1.0, 2.0, 0.0, -1.0, 0.5, 3.0;
  // Running statistics chosen so eval-mode normalization is the identity.
  m.bn_dec.running_var.setConstant(1.0 - m.bn_dec.eps);
  Matrix z(1, 2);
  z << 0.0, std::log(3.0);
  const auto [theta, words] = decode(m, z, false);
  CHECK(theta(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(theta(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
  // theta·beta = [0.25 − 0.75, 0.5 + 0.375, 2.25] = [−0.5, 0.875, 2.25]
  const double e0 = std::exp(-0.5), e1 = std::exp(0.875), e2 = std::exp(2.25);
  const double s = e0 + e1 + e2;
  CHECK(words(0, 0) == doctest::Approx(e0 / s).epsilon(1e-12));
  CHECK(words(0, 1) == doctest::Approx(e1 / s).epsilon(1e-12));
  CHECK(words(0, 2) == doctest::Approx(e2 / s).epsilon(1e-12));
}

TEST_CASE("softmax is stable for large inputs") {
  const Matrix x = random_normal(20, 7, 9, 25.0).cwiseMax(-50.0).cwiseMin(50.0);
  const Matrix s = softmax_rows(x);
  CHECK(s.allFinite());
  for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-6);
  Matrix big(1, 2);
  big << 1000.0, 1000.0;
  CHECK(softmax_rows(big)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("kl of identical gaussians is zero") {
  const Matrix mu = random_normal(4, 3, 1);
  const Matrix lv = random_normal(4, 3, 2);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const auto kl = kl_divergence(mu.row(i), lv.row(i), mu.row(i), lv.row(i));
    CHECK(std::abs(kl(0)) < 1e-9);
  }
}

TEST_CASE("kl hand value") {
  Matrix mu(1, 1), lv(1, 1);
  mu << 1.0;
  lv << 0.0;
  CHECK(kl_divergence(mu, lv, RowVector::Zero(1), RowVector::Zero(1))(0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kl is nonnegative on fuzzed inputs") {
  Rng rng(77);
  std::normal_distribution<double> d(0.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    Matrix mu(1, 4), lv(1, 4);
    RowVector pm(4), plv(4);
    for (int k = 0; k < 4; ++k) {
      mu(0, k) = d(rng);
      lv(0, k) = d(rng);
      pm(k) = d(rng);
      plv(k) = d(rng);
    }
    CHECK(kl_divergence(mu, lv, pm, plv)(0) >= 0.0);
    // Moving q off p makes the divergence strictly positive.
    Matrix shifted = pm;
    shifted(0, trial % 4) += 1e-2;
    CHECK(kl_divergence(shifted, plv, pm, plv)(0) > 1e-9);
  }
}

TEST_CASE("loss is recon plus kl") {
  const auto m = init_model(small_config());
  const Matrix bow = random_counts(5, 10, 12);
  Rng rng(1);
  for (bool train : {false, true}) {
    const auto t = elbo_loss(m, bow, nullptr, rng, train);
    CHECK(t.loss == t.recon + t.kl);
    CHECK(t.kl >= 0.0);
  }
}

TEST_CASE("uniform word distribution gives N log V reconstruction") {
  auto m = init_model(small_config());
  m.params.beta.setZero();
  const Matrix bow = Matrix::Constant(3, 10, 2.0);  // 20 tokens per document
  Rng rng(1);
  ForwardOptions eval;
  const auto c = forward(m, bow, nullptr, eval, rng);
  CHECK(loss_terms(m, c, bow).recon == doctest::Approx(20.0 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("tiny model loss matches an independent forward pass") {
  ModelConfig cfg;
  cfg.num_topics = 2;
  cfg.vocab_size = 4;
  cfg.hidden_size = 3;
  cfg.seed = 31;
  auto m = init_model(cfg);
  m.params.enc1_b << 0.1, -0.2, 0.05;
  m.params.bn_mu_scale << 1.3, 0.7;
  m.params.bn_logvar_shift << -0.4, 0.2;
  m.params.bn_dec_shift << 0.1, 0.0, -0.3, 0.2;
  m.params.prior_mu << 0.25, -0.5;
  Matrix bow(2, 4);
  bow << 3, 0, 1, 2, 0, 4, 1, 0;
  const Matrix noise = random_normal(2, 2, 99);

  ForwardOptions opts;
  opts.train = true;
  opts.apply_dropout = false;
  opts.noise = &noise;
  Rng rng(0);
  const auto cache = forward(m, bow, nullptr, opts, rng);
  CHECK(loss_terms(m, cache, bow).loss == doctest::Approx(oracle_loss(m, bow, noise)).epsilon(1e-12));
}

TEST_CASE("top words by weight with index tie-break") {
  Matrix beta(2, 3);
  beta << 0.1, 0.9, 0.5, 0.3, 0.3, 0.3;
  const auto idx = top_word_indices(beta, 2);
  CHECK(idx[0] == std::vector<int>{1, 2});
  CHECK(idx[1] == std::vector<int>{0, 1});
}

TEST_CASE("get_topics infers normalized theta") {
  auto cfg = small_config(Mode::Combined);
  const auto m = init_model(cfg);
  AlignedDataset data;
  data.bow.vocab = Vocabulary({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
  EmbeddingMatrix emb;
  emb.rows = random_normal(4, 4, 3);
  for (int i = 0; i < 4; ++i) {
    data.bow.doc_ids.push_back("d" + std::to_string(i));
    data.bow.rows.push_back({{i, 1}, {i + 3, 2}});
  }
  emb.doc_ids = data.bow.doc_ids;
  CHECK_THROWS_AS(get_topics(m, 3, data), InputError);
  data.emb = emb;
  const auto sol = get_topics(m, 3, data);
  REQUIRE(sol.topics.size() == 5);
  CHECK(sol.topics[0].size() == 3);
  REQUIRE(sol.theta.rows() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(sol.theta.row(i).sum() - 1.0) < 1e-5);
}
