#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctm/embeddings.hpp"
#include "ctm/metrics.hpp"
#include "ctm/model.hpp"
#include "ctm/trainer.hpp"

namespace ctm {

struct SweepSpec {
  std::vector<int> topic_counts{25, 50, 75, 100, 150};
  std::vector<std::uint64_t> seeds;
  std::vector<Mode> modes{Mode::ProdLda, Mode::Combined};

  void validate() const;
};

/// The first `count` outputs of a 64-bit Mersenne Twister seeded with `master`.
std::vector<std::uint64_t> default_seeds(std::uint64_t master, std::size_t count = 30);

struct ResultRow {
  Mode mode = Mode::ProdLda;
  int num_topics = 0;
  std::uint64_t seed = 0;
  double tau = 0.0;
  std::optional<double> alpha;
  double rho = 0.0;
  double train_seconds = 0.0;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Per-(mode, K) aggregate; num_topics == 0 marks the per-mode aggregate over every K.
struct AggregateRow {
  Mode mode = Mode::ProdLda;
  int num_topics = 0;
  std::size_t runs = 0;
  Summary tau, alpha, rho, train_seconds;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregates;

  /// Rows sorted by (mode, K, seed); aggregates recomputed from them.
  void canonicalize();
};

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

inline constexpr const char* kResultsHeader = "mode,k,seed,tau,alpha,rho,train_seconds";

std::string format_row(const ResultRow& row);
ResultRow parse_row(const std::string& line);
std::string results_csv(const std::vector<ResultRow>& rows);
std::string aggregates_csv(const std::vector<AggregateRow>& rows);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Model hyperparameters that are not part of the sweep grid.
struct ModelOptions {
  int hidden_size = 100;
  double dropout_rate = 0.2;
};

struct SweepInputs {
  AlignedDataset data;  // emb required when any mode is combined
  std::optional<WordVectors> word_vectors;
};

struct SweepOptions {
  std::filesystem::path results;  // append-only store; empty keeps results in memory
  std::size_t workers = 1;
  ModelOptions model;
  EvalOptions eval;
};

struct RunFailure {
  Mode mode = Mode::ProdLda;
  int num_topics = 0;
  std::uint64_t seed = 0;
  std::string reason;
};

struct SweepOutcome {
  ResultTable table;
  std::vector<RunFailure> failures;
  std::size_t executed = 0;  // runs performed in this invocation (resumed ones excluded)
};

/// Trains and evaluates one (mode, K, seed) triple; the seed drives both model
/// initialization and training.
ResultRow run_single(const SweepInputs& inputs, Mode mode, int num_topics, std::uint64_t seed, const TrainConfig& tc,
                     const SweepOptions& opts);

/// Runs every missing triple of the grid on a bounded worker pool. Completed
/// triples already in `opts.results` are skipped; failures are collected and
/// written to `<results>.failures`.
SweepOutcome run_sweep(const SweepInputs& inputs, const SweepSpec& spec, const TrainConfig& tc,
                       const SweepOptions& opts);

/// Everything a `sweep --config` JSON file describes.
struct SweepConfig {
  std::filesystem::path bow;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> word_vectors;
  SweepSpec spec;
  TrainConfig train;
  SweepOptions options;
};

/// Relative paths are resolved against `base_dir`.
SweepConfig parse_sweep_config(const std::string& json_text, const std::filesystem::path& base_dir);

}  // namespace ctm
