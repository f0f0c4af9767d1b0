#include "ctm/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "ctm/error.hpp"
#include "ctm/stats.hpp"
#include "json.hpp"

namespace ctm {
namespace {

using Key = std::tuple<int, int, std::uint64_t>;  // (mode, K, seed)

Key key_of(Mode m, int k, std::uint64_t seed) { return {static_cast<int>(m), k, seed}; }
Key key_of(const ResultRow& r) { return key_of(r.mode, r.num_topics, r.seed); }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s.empty()) return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InputError("malformed number '" + s + "'");
  return v;
}

Summary summarize(const std::vector<double>& xs) {
  std::vector<double> finite;
  for (double x : xs)
    if (!std::isnan(x)) finite.push_back(x);
  if (finite.empty()) return {std::nan(""), std::nan("")};
  std::sort(finite.begin(), finite.end());
  return {mean(finite), stddev(finite)};
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out += suffix;
  return out;
}

}  // namespace

void SweepSpec::validate() const {
  if (topic_counts.empty()) throw InputError("sweep: topic_counts is empty");
  if (seeds.empty()) throw InputError("sweep: seeds is empty");
  if (modes.empty()) throw InputError("sweep: modes is empty");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw InputError("sweep: seeds must be distinct");
  for (int k : topic_counts)
    if (k < 2) throw InputError("sweep: topic counts must be at least 2");
}

std::vector<std::uint64_t> default_seeds(std::uint64_t master, std::size_t count) {
  std::mt19937_64 gen(master);
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  while (seeds.size() < count) {
    const auto s = gen();
    if (seen.insert(s).second) seeds.push_back(s);
  }
  return seeds;
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::pair<int, int>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    groups[{static_cast<int>(r.mode), r.num_topics}].push_back(&r);
    groups[{static_cast<int>(r.mode), 0}].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    std::vector<double> tau, alpha, rho, secs;
    for (const auto* r : members) {
      tau.push_back(r->tau);
      alpha.push_back(r->alpha.value_or(std::nan("")));
      rho.push_back(r->rho);
      secs.push_back(r->train_seconds);
    }
    AggregateRow a;
    a.mode = static_cast<Mode>(key.first);
    a.num_topics = key.second;
    a.runs = members.size();
    a.tau = summarize(tau);
    a.alpha = summarize(alpha);
    a.rho = summarize(rho);
    a.train_seconds = summarize(secs);
    out.push_back(a);
  }
  // Per-K rows first, then the per-mode overall rows.
  std::stable_sort(out.begin(), out.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return (a.num_topics == 0) < (b.num_topics == 0);
  });
  return out;
}

void ResultTable::canonicalize() {
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return key_of(a) < key_of(b); });
  aggregates = aggregate(rows);
}

std::string format_row(const ResultRow& r) {
  return std::string(to_string(r.mode)) + "," + std::to_string(r.num_topics) + "," + std::to_string(r.seed) + "," +
         fmt(r.tau) + "," + fmt(r.alpha.value_or(std::nan(""))) + "," + fmt(r.rho) + "," + fmt(r.train_seconds);
}

ResultRow parse_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 7) throw InputError("malformed result row: " + line);
  ResultRow r;
  try {
    r.mode = parse_mode(f[0]);
    r.num_topics = std::stoi(f[1]);
    r.seed = std::stoull(f[2]);
    r.tau = parse_double(f[3]);
    const double a = parse_double(f[4]);
    if (!std::isnan(a)) r.alpha = a;
    r.rho = parse_double(f[5]);
    r.train_seconds = parse_double(f[6]);
  } catch (const std::logic_error&) {
    throw InputError("malformed result row: " + line);
  }
  return r;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

std::string aggregates_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "mode,k,runs,tau_mean,tau_std,alpha_mean,alpha_std,rho_mean,rho_std,train_seconds_mean,train_seconds_std\n";
  for (const auto& a : rows) {
    out += std::string(to_string(a.mode)) + "," + (a.num_topics == 0 ? std::string("all") : std::to_string(a.num_topics)) +
           "," + std::to_string(a.runs) + "," + fmt(a.tau.mean) + "," + fmt(a.tau.stddev) + "," + fmt(a.alpha.mean) +
           "," + fmt(a.alpha.stddev) + "," + fmt(a.rho.mean) + "," + fmt(a.rho.stddev) + "," +
           fmt(a.train_seconds.mean) + "," + fmt(a.train_seconds.stddev) + "\n";
  }
  return out;
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line == kResultsHeader) continue;
    }
    if (line.empty()) continue;
    rows.push_back(parse_row(line));
  }
  return rows;
}

ResultRow run_single(const SweepInputs& inputs, Mode mode, int num_topics, std::uint64_t seed, const TrainConfig& tc,
                     const SweepOptions& opts) {
  ModelConfig cfg;
  cfg.num_topics = num_topics;
  cfg.hidden_size = opts.model.hidden_size;
  cfg.dropout_rate = opts.model.dropout_rate;
  cfg.mode = mode;
  cfg.vocab_size = static_cast<int>(inputs.data.bow.vocab_size());
  cfg.seed = seed;
  if (mode == Mode::Combined) {
    if (!inputs.data.emb) throw InputError("combined mode requires document embeddings");
    cfg.embedding_dim = static_cast<int>(inputs.data.emb->dim());
  }
  TrainConfig run_tc = tc;
  run_tc.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(init_model(cfg), inputs.data, run_tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<WordList> topics;
  for (const auto& t : top_words(result.model, inputs.data.bow.vocab, static_cast<int>(opts.eval.top_n))) {
    WordList words;
    for (const auto& tw : t) words.push_back(tw.word);
    topics.push_back(std::move(words));
  }
  const auto report = evaluate(topics, inputs.data.bow, inputs.word_vectors ? &*inputs.word_vectors : nullptr, opts.eval);

  ResultRow row;
  row.mode = mode;
  row.num_topics = num_topics;
  row.seed = seed;
  row.tau = report.tau;
  row.alpha = report.alpha;
  row.rho = report.rho;
  row.train_seconds = secs;
  return row;
}

SweepOutcome run_sweep(const SweepInputs& inputs, const SweepSpec& spec, const TrainConfig& tc,
                       const SweepOptions& opts) {
  spec.validate();
  tc.validate();
  for (Mode m : spec.modes)
    if (m == Mode::Combined && !inputs.data.emb) throw InputError("sweep: combined mode requires document embeddings");

  std::set<Key> wanted;
  for (Mode m : spec.modes)
    for (int k : spec.topic_counts)
      for (auto s : spec.seeds) wanted.insert(key_of(m, k, s));

  SweepOutcome outcome;
  std::set<Key> done;
  if (!opts.results.empty()) {
    for (auto& r : read_results(opts.results)) {
      if (!wanted.contains(key_of(r)) || done.contains(key_of(r))) continue;
      done.insert(key_of(r));
      outcome.table.rows.push_back(std::move(r));
    }
    // Rewrite the store so that appends below land after a clean header.
    write_atomic(opts.results, results_csv(outcome.table.rows));
  }

  std::vector<Key> jobs;
  for (const auto& k : wanted)
    if (!done.contains(k)) jobs.push_back(k);

  std::mutex mu;
  std::ofstream store;
  if (!opts.results.empty()) store.open(opts.results, std::ios::app);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto [m, k, seed] = jobs[i];
      const Mode mode = static_cast<Mode>(m);
      try {
        auto row = run_single(inputs, mode, k, seed, tc, opts);
        std::lock_guard lock(mu);
        if (store.is_open()) {
          store << format_row(row) << '\n';
          store.flush();
        }
        outcome.table.rows.push_back(std::move(row));
        ++outcome.executed;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        outcome.failures.push_back({mode, k, seed, e.what()});
        ++outcome.executed;
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opts.workers, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  store.close();

  outcome.table.canonicalize();
  std::sort(outcome.failures.begin(), outcome.failures.end(), [](const RunFailure& a, const RunFailure& b) {
    return key_of(a.mode, a.num_topics, a.seed) < key_of(b.mode, b.num_topics, b.seed);
  });
  if (!opts.results.empty()) {
    write_atomic(opts.results, results_csv(outcome.table.rows));
    write_atomic(sibling(opts.results, ".aggregate.csv"), aggregates_csv(outcome.table.aggregates));
    const auto fail_path = sibling(opts.results, ".failures");
    if (outcome.failures.empty()) {
      std::filesystem::remove(fail_path);
    } else {
      std::string text;
      for (const auto& f : outcome.failures)
        text += std::string(to_string(f.mode)) + "," + std::to_string(f.num_topics) + "," + std::to_string(f.seed) +
                "," + f.reason + "\n";
      write_atomic(fail_path, text);
    }
  }
  return outcome;
}

SweepConfig parse_sweep_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  SweepConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    const auto j = nlohmann::json::parse(json_text);
    c.bow = resolve(j.at("bow").get<std::string>());
    if (j.contains("embeddings") && !j["embeddings"].is_null()) c.embeddings = resolve(j["embeddings"].get<std::string>());
    if (j.contains("word_vectors") && !j["word_vectors"].is_null())
      c.word_vectors = resolve(j["word_vectors"].get<std::string>());
    c.options.results = resolve(j.value("results", std::string("results.csv")));
    c.options.workers = j.value("workers", std::size_t{1});
    c.options.eval.top_n = j.value("top_n", std::size_t{10});
    c.options.eval.rbo_p = j.value("rbo_p", kRboP);

    if (j.contains("topic_counts")) c.spec.topic_counts = j["topic_counts"].get<std::vector<int>>();
    if (j.contains("seeds")) {
      c.spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } else {
      c.spec.seeds = default_seeds(j.value("master_seed", std::uint64_t{0}), j.value("num_seeds", std::size_t{30}));
    }
    if (j.contains("modes")) {
      c.spec.modes.clear();
      for (const auto& m : j["modes"]) c.spec.modes.push_back(parse_mode(m.get<std::string>()));
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.options.model.hidden_size = m.value("hidden", c.options.model.hidden_size);
      c.options.model.dropout_rate = m.value("dropout", c.options.model.dropout_rate);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch", c.train.batch_size);
      c.train.learning_rate = t.value("lr", c.train.learning_rate);
      c.train.beta1 = t.value("beta1", c.train.beta1);
      c.train.beta2 = t.value("beta2", c.train.beta2);
      c.train.adam_epsilon = t.value("adam_epsilon", c.train.adam_epsilon);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("sweep config: ") + e.what());
  }
  c.spec.validate();
  c.train.validate();
  if (c.options.workers < 1) throw InputError("sweep config: workers must be at least 1");
  return c;
}

}  // namespace ctm
