#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "ctm/sweep.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace ctm;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CTM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli exit codes") {
  test::TempDir dir;
  CHECK(run("synth --k 3 --vocab 60 --docs 80 --emb informative --seed 1 --output " + q(dir / "syn")) == 0);
  CHECK(run("synth --k 3 --vocab 10 --docs 80 --emb informative --seed 1 --output " + q(dir / "bad")) == 2);
  CHECK(run("synth --k 3 --vocab 60 --docs 80 --emb sideways --seed 1 --output " + q(dir / "bad")) == 2);
  CHECK(run("train --bow " + q(dir / "missing.json") + " --mode prodlda --topics 3 --seed 1 --checkpoint " +
            q(dir / "m.ckpt")) == 2);
  CHECK(run("train --bow " + q(dir / "syn/bow.json") + " --mode combined --topics 3 --seed 1 --checkpoint " +
            q(dir / "m.ckpt")) == 2);
  CHECK(run("train --bow " + q(dir / "syn/bow.json") + " --mode prodlda --topics 3 --seed 1 --epochs 0 --checkpoint " +
            q(dir / "m.ckpt")) == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("gradcheck --k 3 --vocab 8 --hidden 4 --tolerance 1e-4") == 0);
}

TEST_CASE("cli preprocess, train, evaluate and topics") {
  test::TempDir dir;
  test::write_file(dir / "corpus.txt",
                   "a\tThe cat sat on the mat with another cat\n"
                   "b\tDogs chase cats; the dog barks at 3am\n"
                   "c\t12345 !!!\n"
                   "d\tA mat for the dog and a mat for the cat\n");
  test::write_file(dir / "stop.txt", "the\non\nwith\nat\nfor\nand\na\n");
  REQUIRE(run("preprocess --input " + q(dir / "corpus.txt") + " --stopwords " + q(dir / "stop.txt") +
              " --max-vocab 50 --output " + q(dir / "pre")) == 0);
  CHECK(test::read_file(dir / "pre/dropped_ids.txt") == "c\n");
  const auto bow = load_bow(dir / "pre/bow.json");
  CHECK(bow.doc_ids == std::vector<std::string>{"a", "b", "d"});
  CHECK(bow.vocab.word(0) == "cat");

  REQUIRE(run("train --bow " + q(dir / "pre/bow.json") + " --mode prodlda --topics 2 --seed 3 --epochs 3 --hidden 8 " +
              "--checkpoint " + q(dir / "m.ckpt") + " --log " + q(dir / "log.csv")) == 0);
  CHECK(test::read_file(dir / "log.csv").rfind("epoch,loss,recon,kl,seconds\n", 0) == 0);
  REQUIRE(run("evaluate --checkpoint " + q(dir / "m.ckpt") + " --bow " + q(dir / "pre/bow.json") + " --top-n 3 --report " +
              q(dir / "r.json")) == 0);
  const auto report = nlohmann::json::parse(test::read_file(dir / "r.json"));
  CHECK(report["topics"].size() == 2);
  CHECK(report["alpha"].is_null());
  CHECK(run("topics --checkpoint " + q(dir / "m.ckpt") + " --top-n 3") == 0);
  CHECK(run("topics --checkpoint " + q(dir / "corpus.txt")) == 2);
}

TEST_CASE("sweep reproduces individual train and evaluate runs") {
  test::TempDir dir;
  REQUIRE(run("synth --k 3 --vocab 60 --docs 150 --emb informative --seed 5 --output " + q(dir / "syn")) == 0);
  test::write_file(dir / "sweep.json", R"({
    "bow": "syn/bow.json", "embeddings": "syn/embeddings.txt", "results": "results.csv",
    "topic_counts": [3], "seeds": [77], "modes": ["prodlda", "combined"],
    "model": {"hidden": 10}, "train": {"epochs": 3, "batch": 40}
  })");
  REQUIRE(run("sweep --config " + q(dir / "sweep.json")) == 0);
  const auto rows = read_results(dir / "results.csv");
  REQUIRE(rows.size() == 2);

  for (const auto& row : rows) {
    const std::string mode(to_string(row.mode));
    const std::string emb = row.mode == Mode::Combined ? " --embeddings " + q(dir / "syn/embeddings.txt") : "";
    REQUIRE(run("train --bow " + q(dir / "syn/bow.json") + emb + " --mode " + mode +
                " --topics 3 --seed 77 --epochs 3 --batch 40 --hidden 10 --checkpoint " + q(dir / (mode + ".ckpt"))) == 0);
    REQUIRE(run("evaluate --checkpoint " + q(dir / (mode + ".ckpt")) + " --bow " + q(dir / "syn/bow.json") +
                " --report " + q(dir / (mode + ".json"))) == 0);
    const auto report = nlohmann::json::parse(test::read_file(dir / (mode + ".json")));
    CHECK(report["tau"].get<double>() == row.tau);
    CHECK(report["rho"].get<double>() == row.rho);
  }
}

TEST_CASE("cli sweep resumes from its results file") {
  test::TempDir dir;
  REQUIRE(run("synth --k 3 --vocab 60 --docs 100 --emb none --seed 6 --output " + q(dir / "syn")) == 0);
  test::write_file(dir / "sweep.json", R"({
    "bow": "syn/bow.json", "results": "results.csv", "topic_counts": [2, 3], "master_seed": 1, "num_seeds": 2,
    "modes": ["prodlda"], "model": {"hidden": 6}, "train": {"epochs": 2, "batch": 50}
  })");
  REQUIRE(run("sweep --config " + q(dir / "sweep.json")) == 0);
  const auto full = read_results(dir / "results.csv");
  REQUIRE(full.size() == 4);
  auto rows = full;
  rows.pop_back();
  test::write_file(dir / "results.csv", results_csv(rows));
  REQUIRE(run("sweep --config " + q(dir / "sweep.json")) == 0);
  const auto again = read_results(dir / "results.csv");
  REQUIRE(again.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(format_row(again[i]) == format_row(rows[i]));
  CHECK(again[3].tau == full[3].tau);
  CHECK(again[3].rho == full[3].rho);
  CHECK(std::filesystem::exists(dir / "results.csv.aggregate.csv"));
}
