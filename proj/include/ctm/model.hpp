#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctm/corpus.hpp"
#include "ctm/embeddings.hpp"
#include "ctm/types.hpp"

namespace ctm {

enum class Mode { ProdLda, Combined };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

using Rng = std::mt19937_64;

struct ModelConfig {
  int num_topics = 0;
  int hidden_size = 100;
  double dropout_rate = 0.2;
  Mode mode = Mode::ProdLda;
  int embedding_dim = 0;  // required iff mode == Combined
  int vocab_size = 0;
  std::uint64_t seed = 0;

  /// Throws InputError naming the offending field.
  void validate() const;
  int input_dim() const { return mode == Mode::Combined ? 2 * vocab_size : vocab_size; }
};

/// A named slice of parameter storage. `group` is the unit the gradient checker reports on.
struct ParamView {
  std::string_view group;
  std::string_view name;
  std::span<double> values;
};

struct ConstParamView {
  std::string_view group;
  std::string_view name;
  std::span<const double> values;
};

/// Every learnable tensor. The same layout doubles as the gradient container.
///
/// The mu/logvar heads carry no bias: each feeds a batch normalization whose
/// mean subtraction would cancel it. The decoder normalization keeps a unit
/// scale and learns only its shift.
struct Parameters {
  Matrix proj_w;  // E×|V| (combined only)
  RowVector proj_b;
  Matrix enc1_w;  // input_dim×H
  RowVector enc1_b;
  Matrix enc2_w;  // H×H
  RowVector enc2_b;
  Matrix mu_w;      // H×K
  Matrix logvar_w;  // H×K
  RowVector bn_mu_scale, bn_mu_shift;
  RowVector bn_logvar_scale, bn_logvar_shift;
  RowVector bn_dec_shift;  // |V|
  RowVector prior_mu, prior_logvar;
  Matrix beta;  // K×|V|

  std::vector<ParamView> views();
  std::vector<ConstParamView> views() const;

  /// Zero tensors of identical shapes.
  Parameters zeros_like() const;
  std::size_t total_size() const;
  bool all_finite() const;
};

struct BatchNormState {
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.99;  // weight on the previous running value
  double eps = 1e-5;

  static BatchNormState identity(Eigen::Index features);
};

struct TopicModel {
  ModelConfig config;
  Parameters params;
  BatchNormState bn_mu, bn_logvar, bn_dec;

  int num_topics() const { return config.num_topics; }
  int vocab_size() const { return config.vocab_size; }
};

TopicModel init_model(const ModelConfig& config);

struct ForwardOptions {
  bool train = false;          // batch statistics in BN, dropout when apply_dropout
  bool apply_dropout = true;   // ignored outside training
  bool sample = true;          // false: z = mu
  const Matrix* noise = nullptr;  // frozen B×K standard normal draws
};

/// Intermediates of one forward pass, kept for the backward pass.
struct ForwardCache {
  ForwardOptions options;
  Matrix proj_pre;  // combined only
  Matrix input;
  Matrix h1_pre, h1, h2_pre, h2;
  Matrix dropout_mask;  // empty when dropout inactive
  Matrix hidden;
  Matrix mu_pre, logvar_pre;
  Matrix mu_hat, logvar_hat;  // normalized, before scale/shift
  RowVector mu_batch_mean, mu_batch_var, logvar_batch_mean, logvar_batch_var;
  Matrix mu, logvar;
  Matrix eps;  // empty when not sampling
  Matrix z, theta;
  Matrix logits, logits_hat;
  RowVector dec_batch_mean, dec_batch_var;
  Matrix log_word_dist;
};

/// Full forward pass. `emb` must be present iff the model is in combined mode.
ForwardCache forward(const TopicModel& model, const Matrix& bow, const Matrix* emb, const ForwardOptions& opts,
                     Rng& rng);

struct LossTerms {
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

LossTerms loss_terms(const TopicModel& model, const ForwardCache& cache, const Matrix& bow);

/// Gradient of the batch-mean ELBO loss with respect to every parameter.
Parameters backward(const TopicModel& model, const ForwardCache& cache, const Matrix& bow, const Matrix* emb);

/// Folds the batch statistics of a training pass into the running statistics.
void update_running_stats(TopicModel& model, const ForwardCache& cache);

// Individual stages, mirroring the public operations of the model.

std::pair<Matrix, Matrix> encode(const TopicModel& model, const Matrix& bow, const Matrix* emb, bool train, Rng& rng);
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, Rng& rng);
std::pair<Matrix, Matrix> decode(const TopicModel& model, const Matrix& z, bool train);
Eigen::VectorXd kl_divergence(const Matrix& mu_q, const Matrix& logvar_q, const RowVector& prior_mu,
                              const RowVector& prior_logvar);
LossTerms elbo_loss(const TopicModel& model, const Matrix& bow, const Matrix* emb, Rng& rng, bool train);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& x);

struct TopicWord {
  std::string word;
  double weight = 0.0;
};

struct TopicSolution {
  std::vector<std::vector<TopicWord>> topics;
  Matrix theta;  // docs×K, empty when not inferred

  std::vector<std::vector<std::string>> word_lists() const;
};

/// Indices of the top_n largest entries of each beta row, ties by lower index.
std::vector<std::vector<int>> top_word_indices(const Matrix& beta, int top_n);
std::vector<std::vector<TopicWord>> top_words(const TopicModel& model, const Vocabulary& vocab, int top_n);

/// Posterior-mean topic proportions (eval mode, z = mu), computed in chunks.
Matrix infer_theta(const TopicModel& model, const BowCorpus& bow, const EmbeddingMatrix* emb);

TopicSolution get_topics(const TopicModel& model, int top_n, const AlignedDataset& data);

}  // namespace ctm
