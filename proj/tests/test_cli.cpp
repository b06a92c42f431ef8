#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aes/cli.hpp"
#include "aes/corpus.hpp"
#include "aes/text.hpp"
#include "support/toy_data.hpp"

using namespace aes;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::path("/tmp") / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& rel) const { return (root / rel).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string write_toy_tsv(const Workspace& ws, std::size_t n, std::size_t classes,
                          std::uint64_t seed) {
  Corpus corpus = toy::make_corpus(n, classes, seed);
  std::string path = ws.path("data.tsv");
  emit_tsv(corpus, path);
  return path;
}

std::vector<std::string> tiny_model_flags() {
  return {"--embed-dim", "16", "--heads", "2", "--layers", "2", "--ffn-dim", "24",
          "--max-len", "24", "--mem-len", "0", "--dropout", "0"};
}

int run(std::vector<std::string> args, const std::vector<std::string>& extra = {}) {
  for (const auto& e : extra) args.push_back(e);
  return run_cli(args);
}

}  // namespace

TEST_CASE("ingest summarizes and writes a manifest") {
  Workspace ws("aes_cli_ingest");
  std::string data = write_toy_tsv(ws, 10, 2, 1);
  CHECK(run({"ingest", "--data", data, "--out", ws.path("out")}) == 0);
  CHECK(fs::exists(ws.path("out/manifest.txt")));
  std::string metrics = read_file(ws.path("out/metrics.tsv"));
  CHECK(metrics.find("item\tessays\tmin_score\tmax_score") == 0);
  CHECK(metrics.find("1\t10\t1\t2") != std::string::npos);
}

TEST_CASE("errors exit nonzero without crashing") {
  Workspace ws("aes_cli_errors");
  CHECK(run({"ingest", "--data", ws.path("missing.tsv"), "--out", ws.path("out")}) == 1);
  CHECK(run({"ingest", "--no-such-flag"}) != 0);
  CHECK(run({"train", "--data", write_toy_tsv(ws, 10, 2, 2), "--out", ws.path("out"),
             "--model", "nonsense"}) == 1);
  // usage (no subcommand) prints help and succeeds
  CHECK(run({}) == 0);
}

TEST_CASE("vocab command writes one piece per line") {
  Workspace ws("aes_cli_vocab");
  std::string data = write_toy_tsv(ws, 10, 2, 3);
  CHECK(run({"vocab", "--data", data, "--out", ws.path("out"), "--vocab-size", "80"}) == 0);
  std::string vocab = read_file(ws.path("out/vocab.txt"));
  auto lines = split(vocab, '\n');
  CHECK(lines[0] == "[PAD]");
  CHECK(lines[4] == "[MASK]");
  CHECK(lines.size() >= 40);
}

TEST_CASE("train writes checkpoint, metrics, history, predictions, manifest") {
  Workspace ws("aes_cli_train");
  std::string data = write_toy_tsv(ws, 15, 3, 4);
  CHECK(run({"train", "--data", data, "--out", ws.path("out"), "--model", "bert",
             "--epochs", "2", "--lr", "2e-3", "--batch-size", "4", "--seed", "5"},
            tiny_model_flags()) == 0);
  for (const char* f : {"checkpoint.aesf", "metrics.tsv", "history.tsv",
                        "predictions.tsv", "manifest.txt"}) {
    CHECK(fs::exists(ws.path(std::string("out/") + f)));
  }
  std::string metrics = read_file(ws.path("out/metrics.tsv"));
  CHECK(metrics.find("fold\tn_train\tn_dev\tn_val\tdev_qwk\tval_qwk\tval_acc") == 0);
  std::string manifest = read_file(ws.path("out/manifest.txt"));
  CHECK(manifest.find("command = train") != std::string::npos);
  CHECK(manifest.find("seed = 5") != std::string::npos);
  CHECK(manifest.find("manifest.checkpoint_hash = ") != std::string::npos);
}

TEST_CASE("reproducibility: identical seed and config give identical metrics") {
  Workspace ws("aes_cli_repro");
  std::string data = write_toy_tsv(ws, 15, 3, 6);
  auto go = [&](const std::string& out) {
    REQUIRE(run({"train", "--data", data, "--out", ws.path(out), "--model", "lstm",
                 "--epochs", "2", "--lr", "5e-3", "--batch-size", "4", "--seed", "9",
                 "--lstm-embed", "8", "--lstm-hidden", "8"}) == 0);
  };
  go("a");
  go("b");
  CHECK(read_file(ws.path("a/metrics.tsv")) == read_file(ws.path("b/metrics.tsv")));
  CHECK(read_file(ws.path("a/predictions.tsv")) == read_file(ws.path("b/predictions.tsv")));
}

TEST_CASE("config file provides defaults, flags override") {
  Workspace ws("aes_cli_config");
  std::string cfg_path = ws.path("run.cfg");
  std::ofstream(cfg_path) << "model = lstm\nepochs = 7\nseed = 33\n";
  // --print-config reflects the merge: config sets model/epochs, flag overrides epochs
  // We verify through a train run's manifest.
  std::string data = write_toy_tsv(ws, 12, 2, 7);
  REQUIRE(run({"train", "--config", cfg_path, "--data", data, "--out", ws.path("out"),
               "--epochs", "2", "--lstm-embed", "8", "--lstm-hidden", "8",
               "--batch-size", "4"}) == 0);
  std::string manifest = read_file(ws.path("out/manifest.txt"));
  CHECK(manifest.find("model = lstm") != std::string::npos);   // from config file
  CHECK(manifest.find("epochs = 2") != std::string::npos);     // flag wins
  CHECK(manifest.find("seed = 33") != std::string::npos);      // from config file
  // the manifest itself is a loadable config
  REQUIRE(run({"train", "--config", ws.path("out/manifest.txt"), "--out",
               ws.path("out2")}) == 0);
  CHECK(read_file(ws.path("out2/metrics.tsv")) == read_file(ws.path("out/metrics.tsv")));
}

TEST_CASE("evaluate: perfect predictions give qwk 1.0") {
  Workspace ws("aes_cli_eval");
  Corpus corpus = toy::make_corpus(12, 3, 8);
  std::string data = ws.path("data.tsv");
  emit_tsv(corpus, data);
  // predictions equal to the initial (rater1) scores
  std::ofstream pred(ws.path("pred.tsv"));
  pred << "essay_id\titem\tpredicted_score\n";
  for (const auto& e : corpus.essays) pred << e.essay_id << "\t1\t" << e.rater1 << "\n";
  pred.close();
  REQUIRE(run({"evaluate", "--data", data, "--pred", ws.path("pred.tsv"), "--out",
               ws.path("out")}) == 0);
  std::string metrics = read_file(ws.path("out/metrics.tsv"));
  auto lines = split(trim(metrics), '\n');
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "item\tn\tqwk_engine\tqwk_human\tacc_engine\tacc_human");
  auto fields = split(lines[1], '\t');
  CHECK(fields[0] == "1");
  CHECK(std::stod(fields[2]) == doctest::Approx(1.0));

  // the paper-literal study variant is labeled as such
  REQUIRE(run({"evaluate", "--data", data, "--pred", ws.path("pred.tsv"), "--out",
               ws.path("out2"), "--qwk-variant", "paper-literal"}) == 0);
  CHECK(read_file(ws.path("out2/metrics.tsv")).find("qwk_engine_paper_literal") !=
        std::string::npos);
}

TEST_CASE("kfold emits five fold rows plus average and pooled rows") {
  Workspace ws("aes_cli_kfold");
  std::string data = write_toy_tsv(ws, 20, 2, 9);
  REQUIRE(run({"kfold", "--data", data, "--out", ws.path("out"), "--model", "bow",
               "--epochs", "30", "--lr", "0.1", "--seed", "3"}) == 0);
  std::string metrics = read_file(ws.path("out/metrics.tsv"));
  auto lines = split(trim(metrics), '\n');
  REQUIRE(lines.size() == 8);  // header + folds 0..4 + avg + pooled
  CHECK(split(lines[1], '\t')[0] == "0");
  CHECK(split(lines[5], '\t')[0] == "4");
  CHECK(split(lines[6], '\t')[0] == "avg");
  CHECK(split(lines[7], '\t')[0] == "pooled");
  // predictions cover every essay exactly once (validation folds tile)
  std::string preds = read_file(ws.path("out/predictions.tsv"));
  CHECK(split(trim(preds), '\n').size() == 21);  // header + 20 essays
}

TEST_CASE("kfold with parallel jobs matches the sequential run") {
  Workspace ws("aes_cli_jobs");
  std::string data = write_toy_tsv(ws, 20, 2, 10);
  REQUIRE(run({"kfold", "--data", data, "--out", ws.path("seq"), "--model", "bow",
               "--epochs", "20", "--lr", "0.1", "--seed", "3", "--jobs", "1"}) == 0);
  REQUIRE(run({"kfold", "--data", data, "--out", ws.path("par"), "--model", "bow",
               "--epochs", "20", "--lr", "0.1", "--seed", "3", "--jobs", "5"}) == 0);
  CHECK(read_file(ws.path("seq/metrics.tsv")) == read_file(ws.path("par/metrics.tsv")));
}

TEST_CASE("grid reproduces the delta-table format for one item") {
  Workspace ws("aes_cli_grid");
  std::string data = write_toy_tsv(ws, 30, 2, 11);
  REQUIRE(run({"grid", "--data", data, "--out", ws.path("out"), "--model", "bert",
               "--item", "1", "--epochs", "3", "--lr", "2e-3", "--batch-size", "4",
               "--seed", "13"},
              tiny_model_flags()) == 0);
  std::string grid = read_file(ws.path("out/grid.tsv"));
  auto lines = split(trim(grid), '\n');
  REQUIRE(lines.size() == 12);  // header + base + 10 variants
  CHECK(lines[0] == "variant\titem1\tmean");
  CHECK(split(lines[1], '\t')[0] == "base");
  const char* expected_rows[] = {
      "(1) gradual unfreezing",
      "(2) discriminative finetuning (xi=0.95)",
      "1+2",
      "(3) dropout (0.2)",
      "1+3",
      "2+3",
      "1+2+3",
      "(4) remove stop-words",
      "(5) 3 layers",
      "4+5",
  };
  for (std::size_t i = 0; i < 10; ++i) {
    auto fields = split(lines[2 + i], '\t');
    CHECK(fields[0] == expected_rows[i]);
    REQUIRE(fields.size() == 3);  // one column per item plus the mean
    // delta columns parse as percentages
    CHECK_NOTHROW((void)std::stod(fields[1]));
    CHECK(std::stod(fields[1]) == doctest::Approx(std::stod(fields[2])));
  }
}

TEST_CASE("score and ensemble round trip") {
  Workspace ws("aes_cli_ensemble");
  std::string data = write_toy_tsv(ws, 20, 2, 12);
  // two quick members: bow and lstm
  REQUIRE(run({"train", "--data", data, "--out", ws.path("bow"), "--model", "bow",
               "--epochs", "40", "--lr", "0.1", "--seed", "7"}) == 0);
  REQUIRE(run({"train", "--data", data, "--out", ws.path("lstm"), "--model", "lstm",
               "--epochs", "10", "--lr", "5e-3", "--batch-size", "4", "--seed", "7",
               "--lstm-embed", "8", "--lstm-hidden", "8"}) == 0);

  REQUIRE(run({"score", "--data", data, "--out", ws.path("scored"), "--checkpoint",
               ws.path("bow/checkpoint.aesf")}) == 0);
  std::string preds = read_file(ws.path("scored/predictions.tsv"));
  CHECK(split(trim(preds), '\n').size() == 21);
  CHECK(preds.find("essay_id\titem\tpredicted_score") == 0);

  REQUIRE(run({"ensemble", "--data", data, "--out", ws.path("ens"), "--checkpoints",
               ws.path("bow/checkpoint.aesf"), ws.path("lstm/checkpoint.aesf"),
               "--mode", "mean", "--best-member", "0", "--seed", "7"}) == 0);
  std::string metrics = read_file(ws.path("ens/metrics.tsv"));
  auto lines = split(trim(metrics), '\n');
  REQUIRE(lines.size() == 4);  // header + 2 members + ensemble
  CHECK(split(lines[3], '\t')[0] == "ensemble");

  // majority mode also runs
  REQUIRE(run({"ensemble", "--data", data, "--out", ws.path("ensm"), "--checkpoints",
               ws.path("bow/checkpoint.aesf"), ws.path("lstm/checkpoint.aesf"),
               "--mode", "majority", "--best-member", "1", "--seed", "7"}) == 0);
}

TEST_CASE("selftest passes") {
  CHECK(run({"selftest"}) == 0);
}

TEST_CASE("AESF_SEED is the seed fallback") {
  Workspace ws("aes_cli_envseed");
  std::string data = write_toy_tsv(ws, 10, 2, 14);
  setenv("AESF_SEED", "4242", 1);
  REQUIRE(run({"ingest", "--data", data, "--out", ws.path("out")}) == 0);
  unsetenv("AESF_SEED");
  CHECK(read_file(ws.path("out/manifest.txt")).find("seed = 4242") != std::string::npos);
}

TEST_CASE("grid deltas match hand-computed percentages from separate runs") {
  Workspace ws("aes_cli_grid_arith");
  std::string data = write_toy_tsv(ws, 30, 2, 15);
  std::vector<std::string> base_flags = {"--item", "1",     "--fold",       "0",
                                         "--epochs", "3",   "--lr",         "2e-3",
                                         "--batch-size", "4", "--seed",     "21"};
  REQUIRE(run({"grid", "--data", data, "--out", ws.path("grid"), "--model", "bert"},
              [&] {
                auto v = tiny_model_flags();
                v.insert(v.end(), base_flags.begin(), base_flags.end());
                return v;
              }()) == 0);

  auto dev_qwk_of = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args = {"train", "--data", data, "--out", ws.path(out),
                                     "--model", "bert"};
    auto flags = tiny_model_flags();
    args.insert(args.end(), flags.begin(), flags.end());
    args.insert(args.end(), base_flags.begin(), base_flags.end());
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(run_cli(args) == 0);
    auto lines = split(trim(read_file(ws.path(out + "/metrics.tsv"))), '\n');
    return std::stod(split(lines[1], '\t')[4]);  // dev_qwk column
  };
  double base = dev_qwk_of("base", {});
  double dropped = dev_qwk_of("var3", {"--dropout-override", "0.2"});
  double expected_delta = 100.0 * (dropped - base) / base;

  auto lines = split(trim(read_file(ws.path("grid/grid.tsv"))), '\n');
  double grid_delta = 0.0;
  bool found = false;
  for (const auto& line : lines) {
    auto fields = split(line, '\t');
    if (fields[0] == "(3) dropout (0.2)") {
      grid_delta = std::stod(fields[1]);
      found = true;
    }
  }
  REQUIRE(found);
  // grid prints two decimals; the hand value comes from six-decimal metrics
  CHECK(std::abs(grid_delta - expected_delta) < 0.02);
}

TEST_CASE("score accepts new essays without rating columns") {
  Workspace ws("aes_cli_score_unscored");
  std::string data = write_toy_tsv(ws, 15, 2, 16);
  REQUIRE(run({"train", "--data", data, "--out", ws.path("m"), "--model", "bow",
               "--epochs", "30", "--lr", "0.1", "--seed", "3"}) == 0);
  std::ofstream fresh(ws.path("new.tsv"));
  fresh << "essay_id\tessay_set\tessay\n"
        << "9001\t1\tsteady plain essay with orderly ideas\n"
        << "9002\t1\tmuddle and jumble of scattered words\n";
  fresh.close();
  REQUIRE(run({"score", "--data", ws.path("new.tsv"), "--out", ws.path("scored"),
               "--checkpoint", ws.path("m/checkpoint.aesf")}) == 0);
  auto lines = split(trim(read_file(ws.path("scored/predictions.tsv"))), '\n');
  REQUIRE(lines.size() == 3);
  CHECK(split(lines[1], '\t')[0] == "9001");
}

TEST_CASE("print-config and warmup flags") {
  CHECK(run({"--print-config"}) == 0);
  Workspace ws("aes_cli_warmup");
  std::string data = write_toy_tsv(ws, 12, 2, 17);
  REQUIRE(run({"train", "--data", data, "--out", ws.path("out"), "--model", "lstm",
               "--epochs", "2", "--lr", "5e-3", "--batch-size", "4", "--seed", "5",
               "--lstm-embed", "8", "--lstm-hidden", "8", "--warmup"}) == 0);
  CHECK(read_file(ws.path("out/manifest.txt")).find("warmup = 1") != std::string::npos);
}

TEST_CASE("ingest honors a sidecar item spec") {
  Workspace ws("aes_cli_sidecar");
  std::string data = write_toy_tsv(ws, 10, 2, 18);
  std::ofstream(ws.path("spec.tsv")) << "item\tmin_score\tmax_score\n1\t0\t5\n";
  REQUIRE(run({"ingest", "--data", data, "--spec", ws.path("spec.tsv"), "--out",
               ws.path("out")}) == 0);
  CHECK(read_file(ws.path("out/metrics.tsv")).find("1\t10\t0\t5") != std::string::npos);
}

TEST_CASE("neural kfold fans out across workers deterministically") {
  Workspace ws("aes_cli_jobs_lstm");
  std::string data = write_toy_tsv(ws, 20, 2, 19);
  std::vector<std::string> flags = {"--model", "lstm", "--epochs", "3", "--lr", "5e-3",
                                    "--batch-size", "4", "--seed", "11",
                                    "--lstm-embed", "8", "--lstm-hidden", "8"};
  REQUIRE(run({"kfold", "--data", data, "--out", ws.path("seq"), "--jobs", "1"}, flags) == 0);
  REQUIRE(run({"kfold", "--data", data, "--out", ws.path("par"), "--jobs", "5"}, flags) == 0);
  CHECK(read_file(ws.path("seq/metrics.tsv")) == read_file(ws.path("par/metrics.tsv")));
  CHECK(read_file(ws.path("seq/predictions.tsv")) == read_file(ws.path("par/predictions.tsv")));
}

TEST_CASE("grid spans all items when none is selected") {
  Workspace ws("aes_cli_grid_items");
  Corpus one = toy::make_corpus(25, 2, 20, /*item=*/1);
  Corpus two = toy::make_corpus(25, 2, 21, /*item=*/2, /*min_score=*/3);
  for (auto& e : two.essays) one.essays.push_back(e);
  one.items.push_back(two.items.front());
  std::string data = ws.path("data.tsv");
  emit_tsv(one, data);
  REQUIRE(run({"grid", "--data", data, "--out", ws.path("out"), "--model", "bow",
               "--epochs", "40", "--lr", "0.1", "--seed", "23"}) == 0);
  auto lines = split(trim(read_file(ws.path("out/grid.tsv"))), '\n');
  CHECK(lines[0] == "variant\titem1\titem2\tmean");
  REQUIRE(lines.size() == 12);
  // variants that only touch encoder knobs are exact no-ops for bow
  for (const auto& line : lines) {
    auto fields = split(line, '\t');
    if (fields[0] == "(1) gradual unfreezing" || fields[0] == "(3) dropout (0.2)" ||
        fields[0] == "(5) 3 layers") {
      CHECK(std::stod(fields[1]) == 0.0);
      CHECK(std::stod(fields[2]) == 0.0);
      CHECK(std::stod(fields[3]) == 0.0);
    }
  }
  // training a specific later item works too
  REQUIRE(run({"train", "--data", data, "--out", ws.path("t2"), "--model", "bow",
               "--epochs", "30", "--lr", "0.1", "--seed", "23", "--item", "2"}) == 0);
  std::string preds = read_file(ws.path("t2/predictions.tsv"));
  CHECK(preds.find("\t2\t") != std::string::npos);
}
