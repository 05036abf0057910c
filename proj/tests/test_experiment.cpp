#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "igds/error.hpp"
#include "igds/experiment.hpp"

using namespace igds;
using experiment::ExperimentConfig;
using experiment::ExperimentReport;
using experiment::ReportRow;

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
# small enough to run in a few seconds
[dataset]
n_per_class = 40
test_per_class = 100
[ve]
steps = 30
head_epochs = 10
[diffusion]
steps = 10
train_steps = 100
[guidance]
betas = 0, 0.5
ipcs = 1, 2
[eval]
epochs = 20
[run]
seeds = 0, 1
)";

ExperimentConfig tiny(const std::string& out) {
  std::istringstream in(kTiny);
  auto cfg = experiment::parse_config(in);
  cfg.out_dir = fs::temp_directory_path() / out;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ReportRow row(std::size_t ipc, double beta, std::uint64_t seed, double acc) {
  ReportRow r;
  r.ipc = ipc;
  r.beta = beta;
  r.seed = seed;
  r.accuracy = acc;
  return r;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  std::istringstream empty("");
  const auto cfg = experiment::parse_config(empty);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.seeds.size(), 5u);
  EXPECT_EQ(cfg.guidance.betas, std::vector<double>({0.0, 0.1, 0.5}));
}

TEST(Config, ParsesValuesAndComments) {
  std::istringstream in("[guidance]\neta = 2.5 ; inline\nbetas = 0.2\n[run]\nseeds = 3,4\nworkers = 4\n");
  const auto cfg = experiment::parse_config(in);
  EXPECT_EQ(cfg.guidance.eta, 2.5);
  EXPECT_EQ(cfg.guidance.betas, std::vector<double>({0.2}));
  EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>({3, 4}));
  EXPECT_EQ(cfg.workers, 4u);
  EXPECT_EQ(cfg.with_seed_offset(10).seeds, std::vector<std::uint64_t>({13, 14}));
}

TEST(Config, WriteThenParseRoundTrips) {
  auto cfg = tiny("unused");
  cfg.guidance.eta = 0.123456789;
  std::ostringstream out;
  experiment::write_config(out, cfg);
  std::istringstream in(out.str());
  const auto back = experiment::parse_config(in);
  std::ostringstream again;
  experiment::write_config(again, back);
  EXPECT_EQ(out.str(), again.str());
  EXPECT_EQ(back.guidance.eta, 0.123456789);
}

TEST(Config, Errors) {
  const std::vector<std::string> bad{
      "[nosuch]\n",
      "[dataset]\nbogus = 1\n",
      "[dataset]\nclasses = three\n",
      "[dataset]\nclasses = 1\n",
      "[guidance]\nbetas =\n",
      "[guidance]\nbetas = 0.1, 0.1\n",
      "[guidance]\nbetas = -1\n",
      "[run]\nseeds = 1, 1\n",
      "[run]\nworkers = 0\n",
      "[diffusion]\nbeta_start = 0.5\nbeta_end = 0.1\n",
      "key_outside = 1\n",
      "[dataset]\nno equals sign\n",
  };
  for (const auto& text : bad) {
    std::istringstream in(text);
    EXPECT_THROW(experiment::parse_config(in), ConfigError) << text;
  }
  EXPECT_THROW(experiment::load_config("/no/such/config.ini"), ConfigError);
}

TEST(Sweep, TieGoesToSmallerBeta) {
  ExperimentReport r;
  for (double b : {0.0, 0.1, 0.5})
    for (std::uint64_t s : {0u, 1u}) r.rows.push_back(row(1, b, s, 0.8));
  const auto sweep = experiment::beta_sweep(r, {1}, {0.0, 0.1, 0.5});
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_EQ(sweep[0].best_beta, 0.0);
}

TEST(Sweep, MeansBestAndAbsentCells) {
  ExperimentReport r;
  r.rows = {row(1, 0.0, 0, 0.5), row(1, 0.0, 1, 0.7), row(1, 0.5, 0, 0.9), row(1, 0.5, 1, 0.7)};
  auto failed = row(2, 0.0, 0, 0.0);
  failed.failed_stage = "distill";
  r.rows.push_back(failed);
  const auto sweep = experiment::beta_sweep(r, {1, 2}, {0.0, 0.5});
  EXPECT_DOUBLE_EQ(*sweep[0].mean_accuracy[0], 0.6);
  EXPECT_DOUBLE_EQ(*sweep[0].mean_accuracy[1], 0.8);
  EXPECT_EQ(sweep[0].best_beta, 0.5);
  EXPECT_FALSE(sweep[1].mean_accuracy[0].has_value());
  EXPECT_FALSE(sweep[1].best_beta.has_value());
}

TEST(Sweep, SingleBetaIsAlwaysBest) {
  ExperimentReport r;
  r.rows = {row(1, 0.3, 0, 0.2), row(10, 0.3, 0, 0.9)};
  for (const auto& s : experiment::beta_sweep(r, {1, 10}, {0.3})) EXPECT_EQ(s.best_beta, 0.3);
}

TEST(Report, CsvLayout) {
  ExperimentReport r;
  r.rows = {row(1, 0.1, 0, 0.75)};
  auto failed = row(10, 0.5, 3, 0.0);
  failed.failed_stage = "eval";
  failed.error = "boom";
  r.rows.push_back(failed);
  std::ostringstream out;
  r.write_csv(out);
  EXPECT_EQ(out.str(),
            "ipc,beta,seed,accuracy,prototype_lb,contextual_lb,runtime_seconds\n"
            "1,0.1,0,0.75,0,0,0\n"
            "10,0.5,3,nan,nan,nan,0\n");
  EXPECT_EQ(r.failures(), 1u);
}

TEST(ParallelFor, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(97);
  experiment::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(RunExperiment, SingleCell) {
  auto cfg = tiny("igds_single_cell");
  cfg.guidance.betas = {0.0};
  cfg.guidance.ipcs = {1};
  cfg.seeds = {0};
  const auto report = experiment::run_experiment(cfg, false);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_TRUE(report.rows[0].ok()) << report.rows[0].error;
  EXPECT_GE(report.rows[0].accuracy, 0.0);
  EXPECT_LE(report.rows[0].accuracy, 1.0);
}

TEST(RunExperiment, RerunsAndWorkerCountsAreByteIdentical) {
  auto a = tiny("igds_repro_a"), b = tiny("igds_repro_b");
  b.workers = 4;
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
  const auto ra = experiment::run_experiment(a);
  experiment::run_experiment(b);
  EXPECT_EQ(ra.rows.size(), 8u);
  EXPECT_EQ(ra.failures(), 0u);
  const std::string first = slurp(a.out_dir / "report.csv");
  EXPECT_EQ(first, slurp(b.out_dir / "report.csv"));
  EXPECT_TRUE(fs::exists(a.out_dir / "seed_0" / "ve.ckpt"));
  EXPECT_TRUE(fs::exists(a.out_dir / "cells" / "ipc_2_beta_0.5_seed_1" / "distilled.txt"));
  EXPECT_FALSE(fs::exists(a.out_dir / "errors.csv"));
  experiment::run_experiment(a);
  EXPECT_EQ(first, slurp(a.out_dir / "report.csv"));
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
}

TEST(RunExperiment, StageFailureIsRecordedPerRow) {
  auto cfg = tiny("igds_failure");
  cfg.guidance.ipcs = {1};
  cfg.guidance.betas = {0.0};
  cfg.seeds = {0};
  cfg.diffusion.train.learning_rate = 1e4;
  cfg.diffusion.train.steps = 300;
  const auto report = experiment::run_experiment(cfg, false);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].failed_stage, "train-diffusion");
}
