#include "ctm/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "ctm/error.hpp"
#include "json.hpp"

namespace ctm {
namespace {

using nlohmann::json;

template <class M>
json tensor_to_json(const M& m) {
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

template <class M>
void tensor_from_json(const json& j, M& m, std::string_view name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(data.size()))
    throw InputError("checkpoint tensor " + std::string(name) + " has an inconsistent shape");
  if constexpr (M::RowsAtCompileTime == 1) {
    if (shape[0] != 1) throw InputError("checkpoint tensor " + std::string(name) + " must be a row vector");
    m.resize(shape[1]);
  } else {
    m.resize(shape[0], shape[1]);
  }
  std::copy(data.begin(), data.end(), m.data());
}

json bn_to_json(const BatchNormState& s) {
  return json{{"running_mean", tensor_to_json(s.running_mean)},
              {"running_var", tensor_to_json(s.running_var)},
              {"momentum", s.momentum},
              {"eps", s.eps}};
}

BatchNormState bn_from_json(const json& j, std::string_view name) {
  BatchNormState s;
  tensor_from_json(j.at("running_mean"), s.running_mean, name);
  tensor_from_json(j.at("running_var"), s.running_var, name);
  s.momentum = j.at("momentum").get<double>();
  s.eps = j.at("eps").get<double>();
  return s;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  json j;
  j["config"] = {{"num_topics", m.config.num_topics},   {"hidden_size", m.config.hidden_size},
                 {"dropout_rate", m.config.dropout_rate}, {"mode", std::string(to_string(m.config.mode))},
                 {"embedding_dim", m.config.embedding_dim}, {"vocab_size", m.config.vocab_size},
                 {"seed", m.config.seed}};
  j["vocab"] = ckpt.vocab.words();
  json params = json::object();
  const auto& p = m.params;
  params["proj_w"] = tensor_to_json(p.proj_w);
  params["proj_b"] = tensor_to_json(p.proj_b);
  params["enc1_w"] = tensor_to_json(p.enc1_w);
  params["enc1_b"] = tensor_to_json(p.enc1_b);
  params["enc2_w"] = tensor_to_json(p.enc2_w);
  params["enc2_b"] = tensor_to_json(p.enc2_b);
  params["mu_w"] = tensor_to_json(p.mu_w);
  params["logvar_w"] = tensor_to_json(p.logvar_w);
  params["bn_mu_scale"] = tensor_to_json(p.bn_mu_scale);
  params["bn_mu_shift"] = tensor_to_json(p.bn_mu_shift);
  params["bn_logvar_scale"] = tensor_to_json(p.bn_logvar_scale);
  params["bn_logvar_shift"] = tensor_to_json(p.bn_logvar_shift);
  params["bn_dec_shift"] = tensor_to_json(p.bn_dec_shift);
  params["prior_mu"] = tensor_to_json(p.prior_mu);
  params["prior_logvar"] = tensor_to_json(p.prior_logvar);
  params["beta"] = tensor_to_json(p.beta);
  j["params"] = std::move(params);
  j["batchnorm"] = {{"mu", bn_to_json(m.bn_mu)}, {"logvar", bn_to_json(m.bn_logvar)}, {"decoder", bn_to_json(m.bn_dec)}};

  std::string out(kCheckpointHeader);
  out += '\n';
  out += j.dump();
  out += '\n';
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  const auto nl = text.find('\n');
  if (text.substr(0, nl) != kCheckpointHeader)
    throw InputError("not a checkpoint (expected header " + std::string(kCheckpointHeader) + ")");
  Checkpoint ckpt;
  try {
    const json j = json::parse(text.substr(nl + 1));
    const auto& c = j.at("config");
    auto& cfg = ckpt.model.config;
    cfg.num_topics = c.at("num_topics").get<int>();
    cfg.hidden_size = c.at("hidden_size").get<int>();
    cfg.dropout_rate = c.at("dropout_rate").get<double>();
    cfg.mode = parse_mode(c.at("mode").get<std::string>());
    cfg.embedding_dim = c.at("embedding_dim").get<int>();
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.validate();
    ckpt.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());

    const auto& jp = j.at("params");
    auto& p = ckpt.model.params;
    tensor_from_json(jp.at("proj_w"), p.proj_w, "proj_w");
    tensor_from_json(jp.at("proj_b"), p.proj_b, "proj_b");
    tensor_from_json(jp.at("enc1_w"), p.enc1_w, "enc1_w");
    tensor_from_json(jp.at("enc1_b"), p.enc1_b, "enc1_b");
    tensor_from_json(jp.at("enc2_w"), p.enc2_w, "enc2_w");
    tensor_from_json(jp.at("enc2_b"), p.enc2_b, "enc2_b");
    tensor_from_json(jp.at("mu_w"), p.mu_w, "mu_w");
    tensor_from_json(jp.at("logvar_w"), p.logvar_w, "logvar_w");
    tensor_from_json(jp.at("bn_mu_scale"), p.bn_mu_scale, "bn_mu_scale");
    tensor_from_json(jp.at("bn_mu_shift"), p.bn_mu_shift, "bn_mu_shift");
    tensor_from_json(jp.at("bn_logvar_scale"), p.bn_logvar_scale, "bn_logvar_scale");
    tensor_from_json(jp.at("bn_logvar_shift"), p.bn_logvar_shift, "bn_logvar_shift");
    tensor_from_json(jp.at("bn_dec_shift"), p.bn_dec_shift, "bn_dec_shift");
    tensor_from_json(jp.at("prior_mu"), p.prior_mu, "prior_mu");
    tensor_from_json(jp.at("prior_logvar"), p.prior_logvar, "prior_logvar");
    tensor_from_json(jp.at("beta"), p.beta, "beta");

    const auto& bn = j.at("batchnorm");
    ckpt.model.bn_mu = bn_from_json(bn.at("mu"), "bn_mu");
    ckpt.model.bn_logvar = bn_from_json(bn.at("logvar"), "bn_logvar");
    ckpt.model.bn_dec = bn_from_json(bn.at("decoder"), "bn_decoder");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }

  const auto& cfg = ckpt.model.config;
  const auto& p = ckpt.model.params;
  if (static_cast<int>(ckpt.vocab.size()) != cfg.vocab_size) throw InputError("checkpoint vocabulary size mismatch");
  if (p.beta.rows() != cfg.num_topics || p.beta.cols() != cfg.vocab_size ||
      p.enc1_w.rows() != cfg.input_dim() || p.enc1_w.cols() != cfg.hidden_size ||
      p.mu_w.cols() != cfg.num_topics || p.prior_mu.size() != cfg.num_topics)
    throw InputError("checkpoint tensor shapes disagree with its config");
  if (!p.all_finite()) throw InputError("checkpoint contains non-finite parameters");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << serialize_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace ctm
