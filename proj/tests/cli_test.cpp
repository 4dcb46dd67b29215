#include <gtest/gtest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "ppimtt/embedder.hpp"
#include "support/support.hpp"

namespace ppimtt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::CliResult;
using testing::read_file;
using testing::run_cli;
using testing::TempDir;
using testing::write_file;

std::string weights_text(std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream s;
  write_mlstm_weights(s, testing::random_mlstm(5, 4, rng));
  return s.str();
}

std::size_t line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

class CliFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    testing::FamilySpec family;
    family.humans = 40;
    family.hh_pairs = 100;
    family.vh_train_pairs = 40;
    family.vh_test_pairs = 20;
    manifest_ = testing::write_bundle(testing::cluster_family(family, 21), dir_ / "data");
    write_file(dir_ / "config.json", R"({"data": "data/manifest.json", "embeddings": "data/embeddings.emb",
      "config": {"epochs": 10, "hid": 8, "lr": 0.01, "batch_size": 8, "epoch_stride": 2}})");
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult train_runs(std::size_t n) {
    write_file(dir_ / "train.json", R"({"data": "data/manifest.json", "embeddings": "data/embeddings.emb",
      "config": {"epochs": 6, "hid": 8, "lr": 0.01, "batch_size": 8, "epoch_stride": 2}, "n_runs": )" +
                                        std::to_string(n) + "}");
    return run_cli({"-q", "train", "--config", path("train.json"), "--out", path("runs")});
  }

  TempDir dir_;
  fs::path manifest_;
};

TEST(CliEmbed, OneRowPerRecord) {
  TempDir dir;
  write_file(dir / "w.txt", weights_text(1));
  write_file(dir / "in.fasta", ">a\nMKV\n>b\nACDEFG\n>c\nW\n");
  const auto r = run_cli({"-q", "embed", "--weights", (dir / "w.txt").string(), "--fasta",
                          (dir / "in.fasta").string(), "--out", (dir / "out.emb").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = read_embeddings(dir / "out.emb");
  EXPECT_EQ(table.entries.size(), 3u);
  EXPECT_EQ(table.dim, 5u);
  EXPECT_NE(r.out.find("\t3"), std::string::npos);
}

TEST(CliEmbed, MalformedWeightsNameTheTensor) {
  TempDir dir;
  auto text = weights_text(1);
  const auto at = text.find("tensor b_f");
  ASSERT_NE(at, std::string::npos);
  const auto next = text.find("tensor", at + 1);
  text.erase(at, next == std::string::npos ? std::string::npos : next - at);
  write_file(dir / "w.txt", text);
  write_file(dir / "in.fasta", ">a\nMKV\n");
  const auto r = run_cli({"-q", "embed", "--weights", (dir / "w.txt").string(), "--fasta",
                          (dir / "in.fasta").string(), "--out", (dir / "out.emb").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("b_f"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out.emb"));
}

TEST(CliEmbed, ParallelOutputIsByteIdentical) {
  TempDir dir;
  write_file(dir / "w.txt", weights_text(2));
  std::string fasta;
  for (int i = 0; i < 40; ++i) fasta += ">p" + std::to_string(i) + "\n" + std::string(5 + i % 13, "ACDEFGHIK"[i % 9]) + "\n";
  write_file(dir / "in.fasta", fasta);
  for (const char* n : {"1", "4"}) {
    const auto r = run_cli({"-q", "embed", "--weights", (dir / "w.txt").string(), "--fasta",
                            (dir / "in.fasta").string(), "--out", (dir / (std::string(n) + ".emb")).string(),
                            "--parallel", n});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read_file(dir / "1.emb"), read_file(dir / "4.emb"));
}

TEST_F(CliFixture, GridsearchSinglePoint) {
  const auto r = run_cli({"-q", "gridsearch", "--config", path("config.json"), "--out", path("grid")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t ckpts = 0, reports = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "grid")) {
    ckpts += e.path().extension() == ".ckpt";
    reports += e.path().extension() == ".json";
  }
  EXPECT_EQ(ckpts, 1u);
  EXPECT_EQ(reports, 1u);
  const auto report = json::parse(read_file(dir_ / "grid" / "report.json"));
  EXPECT_EQ(report.at("variant"), "MTT");
  EXPECT_EQ(report.at("table").size(), 1u);
}

TEST_F(CliFixture, GridsearchAlphaZeroIsSingleTask) {
  write_file(dir_ / "stt.json", R"({"data": "data/manifest.json", "embeddings": "data/embeddings.emb",
    "grid": {"hid": [8], "alpha": [0], "lr": [0.01], "epochs": 6, "stride": 2}})");
  const auto r = run_cli({"-q", "gridsearch", "--config", path("stt.json"), "--out", path("grid")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(read_file(dir_ / "grid" / "report.json")).at("variant"), "STT");
}

TEST_F(CliFixture, MissingDataIsADataError) {
  write_file(dir_ / "bad.json", R"({"data": "nowhere/manifest.json", "embeddings": "data/embeddings.emb"})");
  EXPECT_EQ(run_cli({"-q", "gridsearch", "--config", path("bad.json"), "--out", path("grid")}).code, 3);
  EXPECT_EQ(run_cli({"-q", "train", "--config", path("missing.json"), "--out", path("x")}).code, 2);
}

TEST_F(CliFixture, TrainWritesRunsAndAggregate) {
  const auto r = train_runs(2);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"run_000.ckpt", "run_000.json", "run_001.ckpt", "run_001.json", "aggregate.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "runs" / f)) << f;
  }
  const auto agg = json::parse(read_file(dir_ / "runs" / "aggregate.json"));
  EXPECT_EQ(agg.at("n_runs"), 2);
  EXPECT_NE(r.out.find("best_validation_f1"), std::string::npos);
}

TEST_F(CliFixture, EvaluateThresholdChangesCountsOnly) {
  ASSERT_EQ(train_runs(1).code, 0);
  const auto ckpt = path("runs/run_000.ckpt");
  const auto test = (dir_ / "data" / "vh_test.tsv").string();
  ASSERT_EQ(run_cli({"-q", "evaluate", "--checkpoint", ckpt, "--test", test, "--out", path("a.json")}).code, 0);
  ASSERT_EQ(run_cli({"-q", "evaluate", "--checkpoint", ckpt, "--test", test, "--out", path("b.json"),
                     "--threshold", "0.9"}).code, 0);
  const auto r = run_cli({"-q", "evaluate", "--checkpoint", ckpt, "--test", test, "--out", path("c.json"),
                          "--r-precision"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("f1\t", 0), 0u);
  const auto a = json::parse(read_file(dir_ / "a.json"));
  const auto b = json::parse(read_file(dir_ / "b.json"));
  const auto c = json::parse(read_file(dir_ / "c.json"));
  EXPECT_EQ(a.at("auc"), b.at("auc"));
  EXPECT_EQ(a.at("ap"), b.at("ap"));
  EXPECT_EQ(b.at("threshold"), 0.9);
  EXPECT_GE(a.at("tp").get<int>() + a.at("fp").get<int>(), b.at("tp").get<int>() + b.at("fp").get<int>());
  EXPECT_EQ(c.at("mode"), "r_precision");
  EXPECT_EQ(c.at("precision"), c.at("recall"));
}

TEST(CliEvaluate, PerfectOnSeparableData) {
  TempDir dir;
  const auto data = testing::separable_pairs(5);
  testing::write_bundle(data, dir / "data");
  write_file(dir / "config.json", R"({"data": "data/manifest.json", "embeddings": "data/embeddings.emb",
    "config": {"epochs": 300, "hid": 32, "lr": 0.01, "alpha": 0, "batch_size": 16, "epoch_stride": 10}})");
  ASSERT_EQ(run_cli({"-q", "train", "--config", (dir / "config.json").string(), "--out", (dir / "runs").string()}).code,
            0);
  const auto r = run_cli({"-q", "evaluate", "--checkpoint", (dir / "runs" / "run_000.ckpt").string(), "--test",
                          (dir / "data" / "vh_train.tsv").string(), "--out", (dir / "report.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(read_file(dir / "report.json")).at("f1"), 100.0);
}

TEST_F(CliFixture, RankSingleRunHasZeroSpread) {
  ASSERT_EQ(train_runs(1).code, 0);
  write_file(dir_ / "cands.txt", "# candidates\nh1 extra\nh3\nh5\n\nh7\n");
  const auto r = run_cli({"-q", "rank", "--checkpoint", path("runs/run_000.ckpt"), "--virus-protein", "v1",
                          "--candidates", path("cands.txt"), "--true-id", "h3", "--out", path("rank.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(read_file(dir_ / "rank.json"));
  EXPECT_EQ(j.at("candidates"), 4);
  EXPECT_EQ(j.at("topk").size(), 10u);
  for (const auto& row : j.at("ranking")) EXPECT_EQ(row.at("stddev"), 0.0);
  EXPECT_NE(r.out.find("top10=yes"), std::string::npos);
}

TEST_F(CliFixture, RankErrors) {
  ASSERT_EQ(train_runs(2).code, 0);
  write_file(dir_ / "cands.txt", "h1\nh5\n");
  const std::vector<std::string> base = {"-q", "rank", "--checkpoint", path("runs"), "--virus-protein", "v1",
                                         "--candidates", path("cands.txt"), "--out", path("rank.json")};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  };
  EXPECT_EQ(with({"--true-id", "h3", "--runs", "2"}).code, 2);  // not a candidate
  EXPECT_EQ(with({"--true-id", "h1", "--runs", "3"}).code, 2);  // only two checkpoints
  EXPECT_EQ(with({"--true-id", "h1", "--runs", "2"}).code, 0);
}

TEST_F(CliFixture, TtestIdenticalSetsAndTooFewFiles) {
  ASSERT_EQ(train_runs(3).code, 0);
  const auto pattern = path("runs/run_*.json");
  const auto same = run_cli({"-q", "ttest", "--a", pattern, "--b", pattern});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_NE(same.out.find("significant at 0.05: no"), std::string::npos) << same.out;

  const auto few = run_cli({"-q", "ttest", "--a", path("runs/run_000.json"), "--b", pattern});
  EXPECT_EQ(few.code, 2);
}

TEST(CliArgs, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"embed", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

}  // namespace
}  // namespace ppimtt
