#include "ctm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ctm/error.hpp"

namespace ctm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InputError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InputError("beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw InputError("adam_epsilon must be positive");
  if (batch_size < 1) throw InputError("batch_size must be at least 1");
  if (epochs < 1) throw InputError("epochs must be at least 1");
}

std::string TrainingLog::to_csv() const {
  std::string out = "epoch,loss,recon,kl,seconds\n";
  char buf[160];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.6f\n", r.epoch, r.loss, r.recon, r.kl, r.seconds);
    out += buf;
  }
  return out;
}

void TrainingLog::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_csv();
}

AdamState AdamState::for_params(const Parameters& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v, long t,
               const TrainConfig& tc) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw InputError("adam_step: shape mismatch");
  if (t < 1) throw InputError("adam_step: step index must be >= 1");
  const double b1 = tc.beta1, b2 = tc.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    params[i] -= tc.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + tc.adam_epsilon);
  }
}

void adam_update(Parameters& params, const Parameters& grads, AdamState& state, const TrainConfig& tc) {
  ++state.step;
  auto pv = params.views();
  const auto gv = grads.views();
  auto mv = state.m.views();
  auto vv = state.v.views();
  for (std::size_t i = 0; i < pv.size(); ++i) adam_step(pv[i].values, gv[i].values, mv[i].values, vv[i].values, state.step, tc);
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) out.emplace_back(start, std::min(n, start + batch_size));
  if (out.size() >= 2 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

TrainResult train(TopicModel model, const AlignedDataset& data, const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  const bool combined = model.config.mode == Mode::Combined;
  const auto& bow = data.bow;
  const std::size_t n = bow.num_docs();
  if (n < 2) throw InputError("training needs at least 2 documents");
  if (static_cast<int>(bow.vocab_size()) != model.vocab_size())
    throw InputError("corpus vocabulary size does not match the model");
  if (combined) {
    if (!data.emb) throw InputError("combined mode requires aligned document embeddings");
    if (static_cast<int>(data.emb->dim()) != model.config.embedding_dim)
      throw InputError("embedding dimension does not match the model");
    if (data.emb->size() != n) throw InputError("embeddings are not aligned with the corpus");
  }

  Rng rng(tc.seed);
  AdamState adam = AdamState::for_params(model.params);
  TrainingLog log;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto ranges = batch_ranges(n, static_cast<std::size_t>(tc.batch_size));
  ForwardOptions opts;
  opts.train = true;
  long step = 0;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum_loss = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    for (const auto& [lo, hi] : ranges) {
      ++step;
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Matrix x = bow.dense_rows(idx);
      Matrix e;
      if (combined) {
        e.resize(static_cast<Eigen::Index>(idx.size()), data.emb->rows.cols());
        for (std::size_t r = 0; r < idx.size(); ++r)
          e.row(static_cast<Eigen::Index>(r)) = data.emb->rows.row(static_cast<Eigen::Index>(idx[r]));
      }
      const Matrix* ep = combined ? &e : nullptr;
      const auto cache = forward(model, x, ep, opts, rng);
      const auto terms = loss_terms(model, cache, x);
      if (!std::isfinite(terms.recon) || !std::isfinite(terms.kl)) {
        const char* which = !std::isfinite(terms.recon) ? "recon" : "kl";
        throw RunError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                       "): " + which + " component");
      }
      const auto grads = backward(model, cache, x, ep);
      adam_update(model.params, grads, adam, tc);
      update_running_stats(model, cache);

      const double w = static_cast<double>(hi - lo);
      sum_loss += w * terms.loss;
      sum_recon += w * terms.recon;
      sum_kl += w * terms.kl;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double dn = static_cast<double>(n);
    EpochRecord rec{epoch, sum_loss / dn, sum_recon / dn, sum_kl / dn, secs};
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!model.params.all_finite()) throw RunError("training produced non-finite parameters");
  return {std::move(model), std::move(log)};
}

}  // namespace ctm
