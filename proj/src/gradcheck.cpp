#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctm/error.hpp"
#include "ctm/trainer.hpp"

namespace ctm {
namespace {

struct Coord {
  std::size_t view = 0;
  std::size_t index = 0;
};

double loss_at(const TopicModel& model, const Matrix& bow, const Matrix* emb, const ForwardOptions& opts) {
  Rng unused(0);
  return loss_terms(model, forward(model, bow, emb, opts, unused), bow).loss;
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupReport& g) { return g.passed; });
}

GradCheckReport gradient_check(const TopicModel& model, const Matrix& bow, const Matrix* emb, const Matrix& noise,
                               const GradCheckOptions& opts) {
  ForwardOptions fo;
  fo.train = true;
  fo.apply_dropout = false;
  fo.sample = true;
  fo.noise = &noise;

  Rng unused(0);
  const auto cache = forward(model, bow, emb, fo, unused);
  Parameters analytic = backward(model, cache, bow, emb);
  if (opts.tamper) opts.tamper(analytic);

  TopicModel probe = model;
  auto probe_views = probe.params.views();
  const auto grad_views = analytic.views();

  // Group coordinates, preserving first-appearance order of groups.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<Coord>, std::less<>> by_group;
  for (std::size_t vi = 0; vi < probe_views.size(); ++vi) {
    const std::string g(probe_views[vi].group);
    if (probe_views[vi].values.empty()) continue;
    if (!by_group.contains(g)) group_order.push_back(g);
    auto& coords = by_group[g];
    for (std::size_t i = 0; i < probe_views[vi].values.size(); ++i) coords.push_back({vi, i});
  }

  Rng pick(opts.seed);
  GradCheckReport report;
  for (const auto& g : group_order) {
    auto coords = by_group[g];
    const std::size_t budget = 2 * opts.min_coords;
    if (coords.size() > budget) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(budget);
    }
    GroupReport gr;
    gr.group = g;
    for (const auto& c : coords) {
      double& slot = probe_views[c.view].values[c.index];
      const double orig = slot;
      slot = orig + opts.step;
      const double fp = loss_at(probe, bow, emb, fo);
      slot = orig - opts.step;
      const double fm = loss_at(probe, bow, emb, fo);
      slot = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = grad_views[c.view].values[c.index];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      gr.max_rel_error = std::max(gr.max_rel_error, rel);
      ++gr.coords_checked;
      if (!(rel < opts.tolerance)) {
        gr.passed = false;
        gr.failures.push_back({std::string(probe_views[c.view].name), c.index, a, numeric});
      }
    }
    report.groups.push_back(std::move(gr));
  }
  return report;
}

GradCheckReport gradient_check_instance(Mode mode, int num_topics, int vocab_size, int hidden_size, int batch,
                                        int embedding_dim, const GradCheckOptions& opts) {
  if (batch < 2) throw InputError("gradient check needs a batch of at least 2");
  ModelConfig cfg;
  cfg.num_topics = num_topics;
  cfg.vocab_size = vocab_size;
  cfg.hidden_size = hidden_size;
  cfg.mode = mode;
  cfg.embedding_dim = mode == Mode::Combined ? embedding_dim : 0;
  cfg.dropout_rate = 0.0;
  cfg.seed = opts.seed + 1;
  TopicModel model = init_model(cfg);

  Rng rng(opts.seed + 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 4);
  // Move the normalization and prior parameters off their initial values so
  // that their gradients are generic.
  auto jitter = [&](RowVector& v, double scale) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += scale * normal(rng);
  };
  jitter(model.params.bn_mu_scale, 0.2);
  jitter(model.params.bn_mu_shift, 0.2);
  jitter(model.params.bn_logvar_scale, 0.2);
  jitter(model.params.bn_logvar_shift, 0.2);
  jitter(model.params.bn_dec_shift, 0.2);
  jitter(model.params.prior_mu, 0.3);
  jitter(model.params.prior_logvar, 0.3);
  jitter(model.params.enc1_b, 0.1);
  jitter(model.params.enc2_b, 0.1);
  if (mode == Mode::Combined) jitter(model.params.proj_b, 0.1);

  Matrix bow(batch, vocab_size);
  for (Eigen::Index i = 0; i < bow.size(); ++i) bow.data()[i] = count(rng);
  for (Eigen::Index r = 0; r < bow.rows(); ++r)
    if (bow.row(r).sum() == 0.0) bow(r, r % vocab_size) = 1.0;

  Matrix emb;
  if (mode == Mode::Combined) {
    emb.resize(batch, embedding_dim);
    for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = normal(rng);
  }
  Matrix noise(batch, num_topics);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);

  return gradient_check(model, bow, mode == Mode::Combined ? &emb : nullptr, noise, opts);
}

}  // namespace ctm
