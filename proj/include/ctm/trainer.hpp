#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ctm/embeddings.hpp"
#include "ctm/model.hpp"

namespace ctm {

struct TrainConfig {
  double learning_rate = 0.002;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 200;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  /// CSV with header `epoch,loss,recon,kl,seconds`.
  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
};

/// First and second moment estimates, laid out like Parameters.
struct AdamState {
  Parameters m;
  Parameters v;
  long step = 0;

  static AdamState for_params(const Parameters& params);
};

/// One bias-corrected Adam update for step index `t` (1-based).
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v, long t,
               const TrainConfig& tc);

/// Applies adam_step to every tensor of `params`; increments state.step first.
void adam_update(Parameters& params, const Parameters& grads, AdamState& state, const TrainConfig& tc);

/// Batch boundaries for N documents: a trailing singleton is merged into the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size);

struct TrainResult {
  TopicModel model;
  TrainingLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains for tc.epochs epochs, shuffling every epoch. Throws RunError on a
/// non-finite loss, naming the step and the offending component.
TrainResult train(TopicModel model, const AlignedDataset& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

// Finite-difference verification of the analytic gradients.

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  std::size_t min_coords = 25;  // per group; smaller groups are checked exhaustively
  std::uint64_t seed = 0;       // selects coordinates
  /// Applied to the analytic gradients before comparison (checker sensitivity tests).
  std::function<void(Parameters&)> tamper;
};

struct GradCheckFailure {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GroupReport {
  std::string group;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
  std::vector<GradCheckFailure> failures;
};

struct GradCheckReport {
  std::vector<GroupReport> groups;
  bool passed() const;
};

/// Compares backward() against central differences of the batch-mean loss,
/// with dropout off, training-mode batch statistics and the given frozen noise.
GradCheckReport gradient_check(const TopicModel& model, const Matrix& bow, const Matrix* emb, const Matrix& noise,
                               const GradCheckOptions& opts);

/// Builds the canonical small random instance and checks it. Used by the CLI.
GradCheckReport gradient_check_instance(Mode mode, int num_topics, int vocab_size, int hidden_size, int batch,
                                        int embedding_dim, const GradCheckOptions& opts);

}  // namespace ctm
