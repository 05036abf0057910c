#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igds/dataset.hpp"
#include "igds/diffusion.hpp"
#include "igds/distill.hpp"
#include "igds/guidance.hpp"
#include "igds/ve.hpp"

namespace igds::experiment {

struct DatasetParams {
  std::size_t classes = 3;
  std::size_t modes = 3;
  std::size_t n_per_class = 300;
  double separation = 1.0;
  double mode_offset = 0.8;
  double mode_std = 0.15;
  std::size_t test_per_class = 2000;
};

struct VeParams {
  ve::VeConfig model;
  std::size_t steps = 600;
  std::size_t batch_size = 32;
  ve::HeadTrainConfig head;
};

struct DiffusionParams {
  std::size_t steps = 100;  // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  /// Multiply both ends by 1000 / T.
  bool scale_to_steps = true;
  diffusion::DenoiserConfig net;
  diffusion::DenoiserTrainConfig train;

  diffusion::Schedule schedule() const;
};

struct GuidanceParams {
  std::vector<double> betas{0.0, 0.1, 0.5};
  std::vector<std::size_t> ipcs{1, 10};
  double eta = 15.0;
  double tau = 0.07;
  bool entropy_term = true;
  bool scale_by_noise = true;
};

struct ExperimentConfig {
  DatasetParams dataset;
  VeParams ve;
  DiffusionParams diffusion;
  GuidanceParams guidance;
  distill::DownstreamConfig eval;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path out_dir = "out";
  std::size_t workers = 1;
  /// Write wall-clock seconds into the report instead of 0.
  bool timing = false;

  /// Throws ConfigError on empty grids, duplicate seeds or bad values.
  void validate() const;
  /// seeds shifted by `offset`.
  ExperimentConfig with_seed_offset(std::uint64_t offset) const;
};

/// `[section]` headers and `key = value` lines; `#` and `;` start comments.
/// Lists are comma separated. Unknown sections or keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// Everything trained once per seed and shared by that seed's cells.
struct Pipeline {
  std::uint64_t seed = 0;
  LabeledDataset train;
  LabeledDataset test;
  ve::VeModel ve;
  ve::ClassifierHead head;
  ve::HeadTrainReport head_report;
  diffusion::Schedule schedule = diffusion::Schedule::linear(1, 0.5, 0.5);
  diffusion::DenoiserNet denoiser;
  std::vector<double> ve_loss;
  std::vector<double> denoiser_loss;

  guidance::Models models() const { return {&denoiser, &schedule, &ve, &head}; }
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Individual stages on p.seed; each uses its own derived random stream so
/// they can run separately (CLI) or together.
void build_data(const ExperimentConfig& cfg, Pipeline& p);
void build_ve(const ExperimentConfig& cfg, Pipeline& p);
void build_denoiser(const ExperimentConfig& cfg, Pipeline& p);

/// Trains dataset, VE, head and denoiser for one seed. Failures are rethrown
/// as StageError naming the stage.
Pipeline train_pipeline(const ExperimentConfig& cfg, std::uint64_t seed);

struct ReportRow {
  std::size_t ipc = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double prototype_lb = 0.0;
  double contextual_lb = 0.0;
  double runtime_seconds = 0.0;
  /// Empty on success, otherwise the failing stage and message.
  std::string failed_stage;
  std::string error;

  bool ok() const { return failed_stage.empty(); }
};

struct CellOutput {
  ReportRow row;
  DistilledSet distilled;
  std::vector<guidance::GuidanceTrace> traces;
};

/// Distills and evaluates one (ipc, beta) cell on a trained pipeline.
CellOutput run_cell(const ExperimentConfig& cfg, const Pipeline& pipe, std::size_t ipc, double beta);

struct ExperimentReport {
  std::vector<ReportRow> rows;  // sorted by ipc, beta, seed

  std::size_t failures() const;
  void write_csv(std::ostream& out) const;
};

inline constexpr const char* kReportHeader = "ipc,beta,seed,accuracy,prototype_lb,contextual_lb,runtime_seconds";

/// Full grid over seeds x ipcs x betas with cfg.workers threads. Writes
/// checkpoints, distilled sets, traces and report.csv under cfg.out_dir
/// unless `persist` is false.
ExperimentReport run_experiment(const ExperimentConfig& cfg, bool persist = true);

struct SweepSummary {
  std::size_t ipc = 0;
  std::vector<double> betas;
  /// Seed-averaged accuracy per beta; nullopt when no successful cell exists.
  std::vector<std::optional<double>> mean_accuracy;
  std::optional<double> best_beta;
};

/// Per ipc, mean accuracy per beta and the arg-max beta, ties toward the
/// smaller beta.
std::vector<SweepSummary> beta_sweep(const ExperimentReport& report, const std::vector<std::size_t>& ipcs,
                                     const std::vector<double>& betas);
void write_sweep_csv(std::ostream& out, const std::vector<SweepSummary>& sweep);

/// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace igds::experiment
