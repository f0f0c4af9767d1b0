// Command-line front end: preprocess, train, evaluate, topics, sweep, synth, gradcheck.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ctm/checkpoint.hpp"
#include "ctm/corpus.hpp"
#include "ctm/embeddings.hpp"
#include "ctm/error.hpp"
#include "ctm/metrics.hpp"
#include "ctm/model.hpp"
#include "ctm/sweep.hpp"
#include "ctm/synthetic.hpp"
#include "ctm/trainer.hpp"

namespace {

using namespace ctm;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kRunFailure = 1;
constexpr int kInvalidInput = 2;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

BowCorpus head(const BowCorpus& bow, std::optional<std::size_t> limit) {
  if (!limit || *limit >= bow.num_docs()) return bow;
  BowCorpus out;
  out.vocab = bow.vocab;
  out.rows.assign(bow.rows.begin(), bow.rows.begin() + static_cast<std::ptrdiff_t>(*limit));
  out.doc_ids.assign(bow.doc_ids.begin(), bow.doc_ids.begin() + static_cast<std::ptrdiff_t>(*limit));
  return out;
}

// preprocess ------------------------------------------------------------------

struct PreprocessArgs {
  std::string input, stopwords, output;
  std::size_t max_vocab = 2000;
  bool passthrough = false;
};

int run_preprocess(const PreprocessArgs& a) {
  if (a.stopwords.empty() && !a.passthrough) throw InputError("--stopwords is required unless --passthrough is set");
  const auto raw = read_corpus_file(a.input);
  const StopwordSet stop = a.stopwords.empty() ? StopwordSet{} : read_stopwords(a.stopwords);
  const auto docs = preprocess(raw, stop, a.passthrough);
  const auto vocab = build_vocabulary(docs, a.max_vocab);
  const auto result = vectorize(docs, vocab);

  fs::create_directories(a.output);
  const fs::path dir(a.output);
  save_bow(result.corpus, dir / "bow.json");
  std::string vtext;
  for (const auto& w : vocab.words()) vtext += w + "\n";
  write_text(dir / "vocab.txt", vtext);
  std::string dropped;
  for (const auto& id : result.dropped_ids) dropped += id + "\n";
  write_text(dir / "dropped_ids.txt", dropped);
  std::printf("%zu documents, %zu words, %zu dropped\n", result.corpus.num_docs(), vocab.size(),
              result.dropped_ids.size());
  return kOk;
}

// train -----------------------------------------------------------------------

struct TrainArgs {
  std::string bow, embeddings, mode = "prodlda", checkpoint, log;
  int topics = 0;
  std::uint64_t seed = 0;
  int epochs = 100, batch = 200, hidden = 100;
  double lr = 0.002, beta1 = 0.99, dropout = 0.2;
  std::optional<std::size_t> limit;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const Mode mode = parse_mode(a.mode);
  const BowCorpus bow = head(load_bow(a.bow), a.limit);
  AlignedDataset data{bow, std::nullopt};
  if (mode == Mode::Combined) {
    if (a.embeddings.empty()) throw InputError("combined mode requires --embeddings");
    data = align(bow, load_document_embeddings(a.embeddings));
  } else if (!a.embeddings.empty()) {
    throw InputError("--embeddings is only used in combined mode");
  }

  ModelConfig cfg;
  cfg.num_topics = a.topics;
  cfg.hidden_size = a.hidden;
  cfg.dropout_rate = a.dropout;
  cfg.mode = mode;
  cfg.vocab_size = static_cast<int>(bow.vocab_size());
  cfg.embedding_dim = data.emb ? static_cast<int>(data.emb->dim()) : 0;
  cfg.seed = a.seed;

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.beta1 = a.beta1;
  tc.seed = a.seed;
  tc.validate();

  auto result = train(init_model(cfg), data, tc, [&](const EpochRecord& r) {
    if (!a.quiet)
      std::fprintf(stderr, "epoch %d loss %.4f recon %.4f kl %.4f (%.2fs)\n", r.epoch, r.loss, r.recon, r.kl, r.seconds);
  });
  save_checkpoint({std::move(result.model), bow.vocab}, a.checkpoint);
  if (!a.log.empty()) result.log.save_csv(a.log);
  return kOk;
}

// evaluate / topics -------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, bow, embeddings, word_vectors, report, theta;
  std::size_t top_n = 10;
  double rbo_p = kRboP;
  std::optional<std::size_t> limit;
};

std::vector<WordList> word_lists(const Checkpoint& ckpt, std::size_t top_n) {
  std::vector<WordList> out;
  for (const auto& t : top_words(ckpt.model, ckpt.vocab, static_cast<int>(top_n))) {
    WordList w;
    for (const auto& tw : t) w.push_back(tw.word);
    out.push_back(std::move(w));
  }
  return out;
}

int run_evaluate(const EvaluateArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto bow = load_bow(a.bow);
  if (!(bow.vocab == ckpt.vocab)) throw InputError("corpus vocabulary differs from the checkpoint vocabulary");
  std::optional<WordVectors> wv;
  if (!a.word_vectors.empty()) wv = load_word_vectors(a.word_vectors, a.limit);

  EvalOptions opts;
  opts.top_n = a.top_n;
  opts.rbo_p = a.rbo_p;
  const auto topics = word_lists(ckpt, a.top_n);
  const auto report = evaluate(topics, bow, wv ? &*wv : nullptr, opts);
  write_text(a.report, report.to_json() + "\n");

  if (!a.theta.empty()) {
    AlignedDataset data{bow, std::nullopt};
    if (ckpt.model.config.mode == Mode::Combined) {
      if (a.embeddings.empty()) throw InputError("--theta for a combined model requires --embeddings");
      data = align(bow, load_document_embeddings(a.embeddings));
    }
    const auto solution = get_topics(ckpt.model, static_cast<int>(a.top_n), data);
    std::string text;
    char buf[32];
    for (Eigen::Index d = 0; d < solution.theta.rows(); ++d) {
      text += data.bow.doc_ids[static_cast<std::size_t>(d)];
      for (Eigen::Index k = 0; k < solution.theta.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.9g", solution.theta(d, k));
        text += (k ? " " : "\t");
        text += buf;
      }
      text += "\n";
    }
    write_text(a.theta, text);
  }
  std::printf("tau %.6f alpha %s rho %.6f\n", report.tau,
              report.alpha ? std::to_string(*report.alpha).c_str() : "n/a", report.rho);
  return kOk;
}

int run_topics(const std::string& checkpoint, std::size_t top_n) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto topics = word_lists(ckpt, top_n);
  for (std::size_t k = 0; k < topics.size(); ++k) {
    std::printf("%zu:", k);
    for (const auto& w : topics[k]) std::printf(" %s", w.c_str());
    std::printf("\n");
  }
  return kOk;
}

// sweep -----------------------------------------------------------------------

int run_sweep_cmd(const std::string& config_path) {
  const fs::path cfg_path(config_path);
  const auto cfg = parse_sweep_config(slurp(cfg_path), cfg_path.parent_path());
  const auto bow = load_bow(cfg.bow);
  SweepInputs inputs{{bow, std::nullopt}, std::nullopt};
  if (cfg.embeddings) inputs.data = align(bow, load_document_embeddings(*cfg.embeddings));
  if (cfg.word_vectors) inputs.word_vectors = load_word_vectors(*cfg.word_vectors);

  const auto outcome = run_sweep(inputs, cfg.spec, cfg.train, cfg.options);
  std::printf("%zu runs executed, %zu rows, %zu failures; results in %s\n", outcome.executed,
              outcome.table.rows.size(), outcome.failures.size(), cfg.options.results.string().c_str());
  for (const auto& f : outcome.failures)
    std::fprintf(stderr, "failed %s K=%d seed=%llu: %s\n", std::string(to_string(f.mode)).c_str(), f.num_topics,
                 static_cast<unsigned long long>(f.seed), f.reason.c_str());
  return outcome.failures.empty() ? kOk : kRunFailure;
}

// synth -----------------------------------------------------------------------

int run_synth(const SyntheticSpec& spec, const std::string& emb, const std::string& output) {
  SyntheticSpec s = spec;
  s.embeddings = parse_embedding_kind(emb);
  const auto data = generate_synthetic(s);
  write_synthetic(data, output);
  std::printf("%zu documents, %zu words written to %s\n", data.bow.num_docs(), data.bow.vocab_size(), output.c_str());
  return kOk;
}

// gradcheck -------------------------------------------------------------------

struct GradcheckArgs {
  int k = 3, vocab = 8, hidden = 4, batch = 4, emb_dim = 5;
  double tolerance = 1e-4, step = 1e-4;
  std::string mode = "both";
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<Mode> modes;
  if (a.mode == "both") {
    modes = {Mode::ProdLda, Mode::Combined};
  } else {
    modes = {parse_mode(a.mode)};
  }
  GradCheckOptions opts;
  opts.step = a.step;
  opts.tolerance = a.tolerance;
  opts.seed = a.seed;
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (Mode m : modes) {
    const auto report = gradient_check_instance(m, a.k, a.vocab, a.hidden, a.batch, a.emb_dim, opts);
    std::printf("mode %s\n", std::string(to_string(m)).c_str());
    for (const auto& g : report.groups) {
      std::printf("  %-13s coords %3zu  max rel error %.3e  %s\n", g.group.c_str(), g.coords_checked, g.max_rel_error,
                  g.passed ? "PASS" : "FAIL");
      for (const auto& f : g.failures)
        std::printf("    %s[%zu] analytic %.9g numeric %.9g\n", f.tensor.c_str(), f.index, f.analytic, f.numeric);
    }
    ok = ok && report.passed();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s in %.2fs\n", ok ? "all groups pass" : "gradient check FAILED", secs);
  return ok ? kOk : kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural topic models with contextual document embeddings"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Tokenize a corpus and build its bag-of-words matrix");
  c_pre->add_option("--input", pre.input, "corpus file, one document per line")->required();
  c_pre->add_option("--stopwords", pre.stopwords, "stopword file, one word per line");
  c_pre->add_option("--max-vocab", pre.max_vocab, "vocabulary size cap")->capture_default_str();
  c_pre->add_option("--output", pre.output, "output directory")->required();
  c_pre->add_flag("--passthrough", pre.passthrough, "input is already preprocessed; only split on whitespace");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a topic model");
  c_train->add_option("--bow", tr.bow, "bag-of-words JSON")->required();
  c_train->add_option("--embeddings", tr.embeddings, "document embeddings (combined mode)");
  c_train->add_option("--mode", tr.mode, "prodlda or combined")->required();
  c_train->add_option("--topics", tr.topics, "number of topics")->required();
  c_train->add_option("--seed", tr.seed, "random seed")->required();
  c_train->add_option("--epochs", tr.epochs)->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--beta1", tr.beta1)->capture_default_str();
  c_train->add_option("--hidden", tr.hidden)->capture_default_str();
  c_train->add_option("--dropout", tr.dropout)->capture_default_str();
  c_train->add_option("--checkpoint", tr.checkpoint, "output checkpoint")->required();
  c_train->add_option("--log", tr.log, "training log CSV");
  c_train->add_option("--limit", tr.limit, "use only the first N documents");
  c_train->add_flag("--quiet", tr.quiet);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score a trained model (tau, alpha, rho)");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--bow", ev.bow, "reference corpus for NPMI")->required();
  c_eval->add_option("--embeddings", ev.embeddings, "document embeddings, for --theta of combined models");
  c_eval->add_option("--word-vectors", ev.word_vectors, "word2vec text file for alpha");
  c_eval->add_option("--top-n", ev.top_n)->capture_default_str();
  c_eval->add_option("--rbo-p", ev.rbo_p)->capture_default_str();
  c_eval->add_option("--report", ev.report, "output JSON report")->required();
  c_eval->add_option("--theta", ev.theta, "also write document-topic proportions");
  c_eval->add_option("--limit", ev.limit, "read only the first N word vectors");

  std::string topics_ckpt;
  std::size_t topics_n = 10;
  auto* c_topics = app.add_subcommand("topics", "Print the top words of each topic");
  c_topics->add_option("--checkpoint", topics_ckpt)->required();
  c_topics->add_option("--top-n", topics_n)->capture_default_str();

  std::string sweep_cfg;
  auto* c_sweep = app.add_subcommand("sweep", "Multi-seed benchmark over topic counts and modes");
  c_sweep->add_option("--config", sweep_cfg, "sweep JSON file")->required();

  SyntheticSpec syn;
  std::string syn_emb = "informative", syn_out;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted topics");
  c_synth->add_option("--k", syn.num_topics)->required();
  c_synth->add_option("--vocab", syn.vocab_size)->required();
  c_synth->add_option("--docs", syn.num_docs)->required();
  c_synth->add_option("--emb", syn_emb, "informative, noise or none")->required();
  c_synth->add_option("--seed", syn.seed)->required();
  c_synth->add_option("--output", syn_out)->required();
  c_synth->add_option("--doc-length", syn.doc_length)->capture_default_str();
  c_synth->add_option("--sharpness", syn.topic_sharpness)->capture_default_str();
  c_synth->add_option("--emb-dim", syn.embedding_dim, "0 means K")->capture_default_str();

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
  c_grad->add_option("--k", gc.k)->capture_default_str();
  c_grad->add_option("--vocab", gc.vocab)->capture_default_str();
  c_grad->add_option("--hidden", gc.hidden)->capture_default_str();
  c_grad->add_option("--batch", gc.batch)->capture_default_str();
  c_grad->add_option("--emb-dim", gc.emb_dim)->capture_default_str();
  c_grad->add_option("--tolerance", gc.tolerance)->capture_default_str();
  c_grad->add_option("--step", gc.step)->capture_default_str();
  c_grad->add_option("--mode", gc.mode, "prodlda, combined or both")->capture_default_str();
  c_grad->add_option("--seed", gc.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalidInput;
  }

  try {
    if (*c_pre) return run_preprocess(pre);
    if (*c_train) return run_train(tr);
    if (*c_eval) return run_evaluate(ev);
    if (*c_topics) return run_topics(topics_ckpt, topics_n);
    if (*c_sweep) return run_sweep_cmd(sweep_cfg);
    if (*c_synth) return run_synth(syn, syn_emb, syn_out);
    if (*c_grad) return run_gradcheck(gc);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalidInput;
  } catch (const RunError& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kRunFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalidInput;
  }
  return kInvalidInput;
}
