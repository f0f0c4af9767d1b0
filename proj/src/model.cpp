#include "ctm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctm/error.hpp"

namespace ctm {
namespace {

Matrix softplus(const Matrix& x) {
  return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix log_softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

struct BnOutput {
  Matrix hat;
  RowVector mean, var;  // batch statistics (biased variance); empty in eval mode
};

BnOutput batchnorm(const Matrix& x, const BatchNormState& state, bool train) {
  BnOutput out;
  RowVector mean, var;
  if (train) {
    if (x.rows() < 2) throw InputError("batch normalization in training needs a batch of at least 2");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean();
    out.mean = mean;
    out.var = var;
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  const RowVector inv = (var.array() + state.eps).rsqrt();
  out.hat = ((x.rowwise() - mean).array().rowwise() * inv.array()).matrix();
  return out;
}

// Gradient through x̂ = (x − mean)/sqrt(var + eps) with batch statistics.
Matrix batchnorm_backward(const Matrix& dhat, const Matrix& hat, const RowVector& var, double eps) {
  const RowVector inv = (var.array() + eps).rsqrt();
  const RowVector mean_d = dhat.colwise().mean();
  const RowVector mean_dh = dhat.cwiseProduct(hat).colwise().mean();
  Matrix centered = dhat.rowwise() - mean_d;
  centered -= (hat.array().rowwise() * mean_dh.array()).matrix();
  return (centered.array().rowwise() * inv.array()).matrix();
}

Matrix batchnorm_eval_backward(const Matrix& dhat, const BatchNormState& state) {
  const RowVector inv = (state.running_var.array() + state.eps).rsqrt();
  return (dhat.array().rowwise() * inv.array()).matrix();
}

void check_batch(const TopicModel& model, const Matrix& bow, const Matrix* emb) {
  if (bow.rows() == 0) throw InputError("empty batch");
  if (bow.cols() != model.vocab_size())
    throw InputError("bow batch has " + std::to_string(bow.cols()) + " columns, model vocabulary is " +
                     std::to_string(model.vocab_size()));
  const bool combined = model.config.mode == Mode::Combined;
  if (combined && emb == nullptr) throw InputError("combined mode requires an embedding batch");
  if (!combined && emb != nullptr) throw InputError("prodlda mode takes no embedding batch");
  if (emb) {
    if (emb->rows() != bow.rows()) throw InputError("embedding batch rows differ from bow batch rows");
    if (emb->cols() != model.config.embedding_dim)
      throw InputError("embedding batch has dimension " + std::to_string(emb->cols()) + ", model expects " +
                       std::to_string(model.config.embedding_dim));
  }
}

// Encoder up to (mu, logvar); fills the corresponding cache fields.
void run_encoder(const TopicModel& model, const Matrix& bow, const Matrix* emb, const ForwardOptions& opts, Rng& rng,
                 ForwardCache& c) {
  check_batch(model, bow, emb);
  const auto& p = model.params;
  if (model.config.mode == Mode::Combined) {
    c.proj_pre = (*emb * p.proj_w).rowwise() + p.proj_b;
    c.input.resize(bow.rows(), 2 * bow.cols());
    c.input.leftCols(bow.cols()) = bow;
    c.input.rightCols(bow.cols()) = softplus(c.proj_pre);
  } else {
    c.input = bow;
  }
  c.h1_pre = (c.input * p.enc1_w).rowwise() + p.enc1_b;
  c.h1 = softplus(c.h1_pre);
  c.h2_pre = (c.h1 * p.enc2_w).rowwise() + p.enc2_b;
  c.h2 = softplus(c.h2_pre);

  const double rate = model.config.dropout_rate;
  if (opts.train && opts.apply_dropout && rate > 0.0) {
    const double keep = 1.0 - rate;
    std::bernoulli_distribution coin(keep);
    c.dropout_mask.resize(c.h2.rows(), c.h2.cols());
    for (Eigen::Index i = 0; i < c.dropout_mask.size(); ++i) c.dropout_mask.data()[i] = coin(rng) ? 1.0 / keep : 0.0;
    c.hidden = c.h2.cwiseProduct(c.dropout_mask);
  } else {
    c.dropout_mask.resize(0, 0);
    c.hidden = c.h2;
  }

  c.mu_pre = c.hidden * p.mu_w;
  c.logvar_pre = c.hidden * p.logvar_w;
  auto bn_mu = batchnorm(c.mu_pre, model.bn_mu, opts.train);
  auto bn_lv = batchnorm(c.logvar_pre, model.bn_logvar, opts.train);
  c.mu_hat = std::move(bn_mu.hat);
  c.mu_batch_mean = std::move(bn_mu.mean);
  c.mu_batch_var = std::move(bn_mu.var);
  c.logvar_hat = std::move(bn_lv.hat);
  c.logvar_batch_mean = std::move(bn_lv.mean);
  c.logvar_batch_var = std::move(bn_lv.var);
  c.mu = (c.mu_hat.array().rowwise() * p.bn_mu_scale.array()).matrix().rowwise() + p.bn_mu_shift;
  c.logvar = (c.logvar_hat.array().rowwise() * p.bn_logvar_scale.array()).matrix().rowwise() + p.bn_logvar_shift;
}

void run_decoder(const TopicModel& model, bool train, ForwardCache& c) {
  c.theta = softmax_rows(c.z);
  c.logits = c.theta * model.params.beta;
  auto bn = batchnorm(c.logits, model.bn_dec, train);
  c.logits_hat = std::move(bn.hat);
  c.dec_batch_mean = std::move(bn.mean);
  c.dec_batch_var = std::move(bn.var);
  c.log_word_dist = log_softmax_rows(c.logits_hat.rowwise() + model.params.bn_dec_shift);
}

void fold(RowVector& running, const RowVector& batch, double momentum) {
  running = momentum * running + (1.0 - momentum) * batch;
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::Combined ? "combined" : "prodlda"; }

Mode parse_mode(std::string_view s) {
  if (s == "prodlda") return Mode::ProdLda;
  if (s == "combined") return Mode::Combined;
  throw InputError("unknown mode '" + std::string(s) + "' (expected prodlda or combined)");
}

void ModelConfig::validate() const {
  if (num_topics < 2) throw InputError("num_topics must be at least 2");
  if (hidden_size < 1) throw InputError("hidden_size must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout_rate must lie in [0, 1)");
  if (vocab_size < 1) throw InputError("vocab_size must be at least 1");
  if (mode == Mode::Combined && embedding_dim < 1) throw InputError("combined mode requires embedding_dim >= 1");
  if (mode == Mode::ProdLda && embedding_dim != 0) throw InputError("prodlda mode takes no embedding_dim");
}

std::vector<ParamView> Parameters::views() {
  auto v = [](std::string_view g, std::string_view n, auto& m) {
    return ParamView{g, n, std::span<double>(m.data(), static_cast<std::size_t>(m.size()))};
  };
  return {v("projection", "proj_w", proj_w),
          v("projection", "proj_b", proj_b),
          v("enc1", "enc1_w", enc1_w),
          v("enc1", "enc1_b", enc1_b),
          v("enc2", "enc2_w", enc2_w),
          v("enc2", "enc2_b", enc2_b),
          v("mu_head", "mu_w", mu_w),
          v("logvar_head", "logvar_w", logvar_w),
          v("bn_mu", "bn_mu_scale", bn_mu_scale),
          v("bn_mu", "bn_mu_shift", bn_mu_shift),
          v("bn_logvar", "bn_logvar_scale", bn_logvar_scale),
          v("bn_logvar", "bn_logvar_shift", bn_logvar_shift),
          v("bn_decoder", "bn_dec_shift", bn_dec_shift),
          v("prior_mu", "prior_mu", prior_mu),
          v("prior_logvar", "prior_logvar", prior_logvar),
          v("beta", "beta", beta)};
}

std::vector<ConstParamView> Parameters::views() const {
  std::vector<ConstParamView> out;
  for (const auto& v : const_cast<Parameters*>(this)->views()) out.push_back({v.group, v.name, v.values});
  return out;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  for (auto& v : z.views()) std::fill(v.values.begin(), v.values.end(), 0.0);
  return z;
}

std::size_t Parameters::total_size() const {
  std::size_t n = 0;
  for (const auto& v : views()) n += v.values.size();
  return n;
}

bool Parameters::all_finite() const {
  for (const auto& v : views())
    for (double x : v.values)
      if (!std::isfinite(x)) return false;
  return true;
}

BatchNormState BatchNormState::identity(Eigen::Index features) {
  BatchNormState s;
  s.running_mean = RowVector::Zero(features);
  s.running_var = RowVector::Ones(features);
  return s;
}

TopicModel init_model(const ModelConfig& config) {
  config.validate();
  TopicModel m;
  m.config = config;
  Rng rng(config.seed);
  const Eigen::Index V = config.vocab_size, K = config.num_topics, H = config.hidden_size;
  auto& p = m.params;
  if (config.mode == Mode::Combined) {
    p.proj_w = uniform_init(config.embedding_dim, V, rng);
    p.proj_b = RowVector::Zero(V);
  } else {
    p.proj_w.resize(0, 0);
    p.proj_b.resize(0);
  }
  p.enc1_w = uniform_init(config.input_dim(), H, rng);
  p.enc1_b = RowVector::Zero(H);
  p.enc2_w = uniform_init(H, H, rng);
  p.enc2_b = RowVector::Zero(H);
  p.mu_w = uniform_init(H, K, rng);
  p.logvar_w = uniform_init(H, K, rng);
  p.bn_mu_scale = RowVector::Ones(K);
  p.bn_mu_shift = RowVector::Zero(K);
  p.bn_logvar_scale = RowVector::Ones(K);
  p.bn_logvar_shift = RowVector::Zero(K);
  p.bn_dec_shift = RowVector::Zero(V);
  p.prior_mu = RowVector::Zero(K);
  p.prior_logvar = RowVector::Constant(K, std::log(1.0 - 1.0 / static_cast<double>(K)));
  p.beta = uniform_init(K, V, rng);
  m.bn_mu = BatchNormState::identity(K);
  m.bn_logvar = BatchNormState::identity(K);
  m.bn_dec = BatchNormState::identity(V);
  return m;
}

Matrix softmax_rows(const Matrix& x) { return log_softmax_rows(x).array().exp().matrix(); }

ForwardCache forward(const TopicModel& model, const Matrix& bow, const Matrix* emb, const ForwardOptions& opts,
                     Rng& rng) {
  ForwardCache c;
  c.options = opts;
  run_encoder(model, bow, emb, opts, rng, c);
  if (opts.sample) {
    if (opts.noise) {
      if (opts.noise->rows() != c.mu.rows() || opts.noise->cols() != c.mu.cols())
        throw InputError("frozen noise has the wrong shape");
      c.eps = *opts.noise;
    } else {
      c.eps = standard_normal(c.mu.rows(), c.mu.cols(), rng);
    }
    c.z = c.mu + (0.5 * c.logvar.array()).exp().matrix().cwiseProduct(c.eps);
  } else {
    c.eps.resize(0, 0);
    c.z = c.mu;
  }
  run_decoder(model, opts.train, c);
  return c;
}

Eigen::VectorXd kl_divergence(const Matrix& mu_q, const Matrix& logvar_q, const RowVector& prior_mu,
                              const RowVector& prior_logvar) {
  if (mu_q.rows() != logvar_q.rows() || mu_q.cols() != logvar_q.cols() || mu_q.cols() != prior_mu.size() ||
      prior_mu.size() != prior_logvar.size())
    throw InputError("kl_divergence: shape mismatch");
  const Eigen::Index K = mu_q.cols();
  Eigen::VectorXd out(mu_q.rows());
  for (Eigen::Index b = 0; b < mu_q.rows(); ++b) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double lq = logvar_q(b, k), lp = prior_logvar(k);
      const double diff = prior_mu(k) - mu_q(b, k);
      s += std::exp(lq - lp) + diff * diff * std::exp(-lp) - 1.0 + lp - lq;
    }
    out(b) = 0.5 * s;
  }
  return out;
}

LossTerms loss_terms(const TopicModel& model, const ForwardCache& cache, const Matrix& bow) {
  const double B = static_cast<double>(bow.rows());
  const double recon = -(bow.cwiseProduct(cache.log_word_dist)).sum() / B;
  const double kl = kl_divergence(cache.mu, cache.logvar, model.params.prior_mu, model.params.prior_logvar).sum() / B;
  return {recon + kl, recon, kl};
}

Parameters backward(const TopicModel& model, const ForwardCache& c, const Matrix& bow, const Matrix* emb) {
  const auto& p = model.params;
  const bool train = c.options.train;
  Parameters g = p.zeros_like();
  const double invB = 1.0 / static_cast<double>(bow.rows());

  // Reconstruction: d/dy of −Σ bow·log softmax(y) is n·softmax(y) − bow.
  const Eigen::VectorXd doc_len = bow.rowwise().sum();
  Matrix dy = c.log_word_dist.array().exp().matrix();
  dy = (dy.array().colwise() * doc_len.array()).matrix() - bow;
  dy *= invB;

  g.bn_dec_shift = dy.colwise().sum();
  const Matrix dlogits =
      train ? batchnorm_backward(dy, c.logits_hat, c.dec_batch_var, model.bn_dec.eps) : batchnorm_eval_backward(dy, model.bn_dec);
  g.beta = c.theta.transpose() * dlogits;
  const Matrix dtheta = dlogits * p.beta.transpose();
  const Eigen::VectorXd inner = dtheta.cwiseProduct(c.theta).rowwise().sum();
  const Matrix dz = c.theta.cwiseProduct(dtheta.colwise() - inner);

  // KL terms and the reparameterization path.
  const RowVector inv_prior_var = (-p.prior_logvar.array()).exp();
  const Matrix mu_minus_prior = c.mu.rowwise() - p.prior_mu;
  const Matrix var_ratio = (c.logvar.rowwise() - p.prior_logvar).array().exp().matrix();

  Matrix dmu = dz + invB * (mu_minus_prior.array().rowwise() * inv_prior_var.array()).matrix();
  Matrix dlogvar = (invB * 0.5) * (var_ratio.array() - 1.0).matrix();
  if (c.eps.size() > 0) {
    dlogvar += (0.5 * dz.array() * c.eps.array() * (0.5 * c.logvar.array()).exp()).matrix();
  }
  g.prior_mu = -invB * (mu_minus_prior.array().rowwise() * inv_prior_var.array()).matrix().colwise().sum();
  g.prior_logvar =
      (invB * 0.5) *
      (1.0 - var_ratio.array() - (mu_minus_prior.array().square().rowwise() * inv_prior_var.array())).matrix().colwise().sum();

  // Batch normalization on mu / logvar.
  g.bn_mu_scale = dmu.cwiseProduct(c.mu_hat).colwise().sum();
  g.bn_mu_shift = dmu.colwise().sum();
  g.bn_logvar_scale = dlogvar.cwiseProduct(c.logvar_hat).colwise().sum();
  g.bn_logvar_shift = dlogvar.colwise().sum();
  const Matrix dmu_hat = (dmu.array().rowwise() * p.bn_mu_scale.array()).matrix();
  const Matrix dlv_hat = (dlogvar.array().rowwise() * p.bn_logvar_scale.array()).matrix();
  const Matrix dmu_pre = train ? batchnorm_backward(dmu_hat, c.mu_hat, c.mu_batch_var, model.bn_mu.eps)
                               : batchnorm_eval_backward(dmu_hat, model.bn_mu);
  const Matrix dlv_pre = train ? batchnorm_backward(dlv_hat, c.logvar_hat, c.logvar_batch_var, model.bn_logvar.eps)
                               : batchnorm_eval_backward(dlv_hat, model.bn_logvar);

  g.mu_w = c.hidden.transpose() * dmu_pre;
  g.logvar_w = c.hidden.transpose() * dlv_pre;
  Matrix dh2 = dmu_pre * p.mu_w.transpose() + dlv_pre * p.logvar_w.transpose();
  if (c.dropout_mask.size() > 0) dh2 = dh2.cwiseProduct(c.dropout_mask);

  const Matrix dh2_pre = dh2.cwiseProduct(sigmoid(c.h2_pre));
  g.enc2_w = c.h1.transpose() * dh2_pre;
  g.enc2_b = dh2_pre.colwise().sum();
  const Matrix dh1_pre = (dh2_pre * p.enc2_w.transpose()).cwiseProduct(sigmoid(c.h1_pre));
  g.enc1_w = c.input.transpose() * dh1_pre;
  g.enc1_b = dh1_pre.colwise().sum();

  if (model.config.mode == Mode::Combined) {
    const Eigen::Index V = model.vocab_size();
    const Matrix dproj_out = dh1_pre * p.enc1_w.bottomRows(V).transpose();
    const Matrix dproj_pre = dproj_out.cwiseProduct(sigmoid(c.proj_pre));
    g.proj_w = emb->transpose() * dproj_pre;
    g.proj_b = dproj_pre.colwise().sum();
  }
  return g;
}

void update_running_stats(TopicModel& model, const ForwardCache& cache) {
  if (!cache.options.train) return;
  const double n = static_cast<double>(cache.mu.rows());
  const double unbias = n / (n - 1.0);
  fold(model.bn_mu.running_mean, cache.mu_batch_mean, model.bn_mu.momentum);
  fold(model.bn_mu.running_var, cache.mu_batch_var * unbias, model.bn_mu.momentum);
  fold(model.bn_logvar.running_mean, cache.logvar_batch_mean, model.bn_logvar.momentum);
  fold(model.bn_logvar.running_var, cache.logvar_batch_var * unbias, model.bn_logvar.momentum);
  fold(model.bn_dec.running_mean, cache.dec_batch_mean, model.bn_dec.momentum);
  fold(model.bn_dec.running_var, cache.dec_batch_var * unbias, model.bn_dec.momentum);
}

std::pair<Matrix, Matrix> encode(const TopicModel& model, const Matrix& bow, const Matrix* emb, bool train, Rng& rng) {
  ForwardCache c;
  ForwardOptions opts;
  opts.train = train;
  run_encoder(model, bow, emb, opts, rng, c);
  return {std::move(c.mu), std::move(c.logvar)};
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) throw InputError("reparameterize: shape mismatch");
  const Matrix eps = standard_normal(mu.rows(), mu.cols(), rng);
  return mu + (0.5 * logvar.array()).exp().matrix().cwiseProduct(eps);
}

std::pair<Matrix, Matrix> decode(const TopicModel& model, const Matrix& z, bool train) {
  if (z.cols() != model.num_topics()) throw InputError("decode: z has the wrong number of topics");
  ForwardCache c;
  c.z = z;
  run_decoder(model, train, c);
  return {std::move(c.theta), c.log_word_dist.array().exp().matrix()};
}

LossTerms elbo_loss(const TopicModel& model, const Matrix& bow, const Matrix* emb, Rng& rng, bool train) {
  ForwardOptions opts;
  opts.train = train;
  const auto cache = forward(model, bow, emb, opts, rng);
  return loss_terms(model, cache, bow);
}

std::vector<std::vector<std::string>> TopicSolution::word_lists() const {
  std::vector<std::vector<std::string>> out;
  out.reserve(topics.size());
  for (const auto& t : topics) {
    std::vector<std::string> words;
    for (const auto& tw : t) words.push_back(tw.word);
    out.push_back(std::move(words));
  }
  return out;
}

std::vector<std::vector<int>> top_word_indices(const Matrix& beta, int top_n) {
  if (top_n < 1 || top_n > beta.cols()) throw InputError("top_n must lie in [1, vocabulary size]");
  std::vector<std::vector<int>> out;
  std::vector<int> order(static_cast<std::size_t>(beta.cols()));
  for (Eigen::Index k = 0; k < beta.rows(); ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + top_n, order.end(), [&](int a, int b) {
      const double va = beta(k, a), vb = beta(k, b);
      if (va != vb) return va > vb;
      return a < b;
    });
    out.emplace_back(order.begin(), order.begin() + top_n);
  }
  return out;
}

std::vector<std::vector<TopicWord>> top_words(const TopicModel& model, const Vocabulary& vocab, int top_n) {
  if (static_cast<int>(vocab.size()) != model.vocab_size())
    throw InputError("vocabulary size does not match the model");
  std::vector<std::vector<TopicWord>> out;
  const auto idx = top_word_indices(model.params.beta, top_n);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::vector<TopicWord> topic;
    for (int w : idx[k]) topic.push_back({vocab.word(static_cast<std::size_t>(w)), model.params.beta(static_cast<Eigen::Index>(k), w)});
    out.push_back(std::move(topic));
  }
  return out;
}

Matrix infer_theta(const TopicModel& model, const BowCorpus& bow, const EmbeddingMatrix* emb) {
  constexpr std::size_t kChunk = 1024;
  Matrix theta(static_cast<Eigen::Index>(bow.num_docs()), model.num_topics());
  Rng unused(0);
  for (std::size_t start = 0; start < bow.num_docs(); start += kChunk) {
    const std::size_t n = std::min(kChunk, bow.num_docs() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix x = bow.dense_rows(idx);
    Matrix e;
    if (emb) e = emb->rows.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n));
    const auto [mu, logvar] = encode(model, x, emb ? &e : nullptr, false, unused);
    theta.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = softmax_rows(mu);
  }
  return theta;
}

TopicSolution get_topics(const TopicModel& model, int top_n, const AlignedDataset& data) {
  TopicSolution s;
  s.topics = top_words(model, data.bow.vocab, top_n);
  const bool use_emb = model.config.mode == Mode::Combined;
  if (use_emb && !data.emb) throw InputError("combined-mode model needs document embeddings");
  s.theta = infer_theta(model, data.bow, use_emb ? &*data.emb : nullptr);
  return s;
}

}  // namespace ctm
