#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/experiments.hpp"

using namespace ccg;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  std::istringstream in(
      "version = 1\ndataset_size = 40\ntest_size = 20\npilot_size = 10\ntraining_triplets = 200\n"
      "train.epochs = 2\nsplits = 3\ncalibsize_n = 5, 10\ncalibsize_splits = 2\n");
  return ExperimentConfig::from_kv(KvConfig::parse(in));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("ccg_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, KvRoundTrip) {
  const auto cfg = small_config();
  EXPECT_EQ(cfg.dataset_size, 40u);
  const auto back = ExperimentConfig::from_kv(cfg.to_kv());
  EXPECT_EQ(back.to_kv().values(), cfg.to_kv().values());
}

TEST(Config, UnknownKeyIsRejected) {
  std::istringstream in("version = 1\nsplitz = 3\n");
  EXPECT_THROW(ExperimentConfig::from_kv(KvConfig::parse(in)), ParseError);
}

TEST(Config, InconsistentSizesAreRejected) {
  std::istringstream in("version = 1\ndataset_size = 10\ntest_size = 20\n");
  EXPECT_THROW(ExperimentConfig::from_kv(KvConfig::parse(in)), InvalidArgument);
}

TEST(Splits, PermutationIsSeededAndComplete) {
  const auto a = split_permutation(30, 5, 0);
  EXPECT_EQ(a, split_permutation(30, 5, 0));
  EXPECT_NE(a, split_permutation(30, 5, 1));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Export, JsonlRoundTripAndFlags) {
  EvalRecord cg;
  cg.record_id = "ep-00001";
  cg.method = "CG";
  cg.mae_throughput = 0.5;
  EvalRecord ccg;
  ccg.record_id = "ep-00002";
  ccg.method = "CCG";
  ccg.epsilon = 0.3;
  ccg.split = 0;
  ccg.set_loss = 1;
  ccg.set_size = 2;
  ccg.k_stop = 4;
  const auto dir = scratch("export");
  EXPECT_EQ(export_results({cg, ccg}, dir / "rows"), 1u);
  const auto back = read_results_jsonl(dir / "rows.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].mae_throughput, 0.5);
  EXPECT_FALSE(back[0].xcorr_delay.has_value());
  EXPECT_EQ(back[1].k_stop, 4u);
  EXPECT_TRUE(back[1].res_flagged());
  const auto csv = slurp(dir / "rows.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Export, EmptyListWritesHeaderOnly) {
  const auto dir = scratch("empty");
  EXPECT_EQ(export_results({}, dir / "none"), 0u);
  const auto csv = slurp(dir / "none.csv");
  EXPECT_EQ(csv.rfind("record_id,method,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(slurp(dir / "none.jsonl").empty());
}

TEST(Experiments, UnknownNameIsUsageError) {
  EXPECT_THROW(run_experiment("fig9", small_config(), 1, scratch("unknown")), UsageError);
}

TEST(Experiments, RiskCurvesAreReproducible) {
  const auto cfg = small_config();
  const auto a = scratch("rc_a"), b = scratch("rc_b");
  const auto manifest = run_experiment("riskcurves", cfg, 3, a);
  run_experiment("riskcurves", cfg, 3, b);
  EXPECT_EQ(manifest.at("experiment"), "riskcurves");
  const auto csv = slurp(a / "riskcurves.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kRiskCurvesHeader);
  EXPECT_EQ(csv, slurp(b / "riskcurves.csv"));
  EXPECT_EQ(slurp(a / "riskcurves_records.csv"), slurp(b / "riskcurves_records.csv"));
  EXPECT_TRUE(fs::exists(a / "manifest.json"));
}

TEST(Experiments, Table1WritesAllMethods) {
  const auto dir = scratch("t1");
  run_experiment("table1", small_config(), 2, dir);
  const auto csv = slurp(dir / "table1.csv");
  for (const char* m : {"\nCG,throughput", "\nIG,delay", "\nSIG,throughput"}) EXPECT_NE(csv.find(m), std::string::npos);
  EXPECT_EQ(read_results_jsonl(dir / "table1_records.jsonl").size(), 3u * 20u);
}
