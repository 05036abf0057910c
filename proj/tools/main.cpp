#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "igds/checkpoint.hpp"
#include "igds/error.hpp"
#include "igds/experiment.hpp"
#include "igds/infotheory.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace igds;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;

struct CommonFlags {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::uint64_t seed_offset = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file");
  cmd->add_option("--out", f.out, "output directory (overrides run.out)");
  cmd->add_option("--workers", f.workers, "worker threads (overrides run.workers)");
  cmd->add_option("--seed-offset", f.seed_offset, "added to every configured seed");
}

experiment::ExperimentConfig resolve(const CommonFlags& f) {
  experiment::ExperimentConfig cfg = f.config.empty() ? experiment::ExperimentConfig{} : experiment::load_config(f.config);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.workers > 0) cfg.workers = f.workers;
  cfg = cfg.with_seed_offset(f.seed_offset);
  cfg.validate();
  return cfg;
}

// Single-seed subcommands work on the first configured seed.
experiment::Pipeline seeded(const experiment::ExperimentConfig& cfg) {
  experiment::Pipeline p;
  p.seed = cfg.seeds.front();
  experiment::build_data(cfg, p);
  return p;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
}

int train_ve_cmd(const CommonFlags& f) {
  const auto cfg = resolve(f);
  fs::create_directories(cfg.out_dir);
  auto p = seeded(cfg);
  experiment::build_ve(cfg, p);
  ckpt::save(cfg.out_dir / "ve.ckpt", ckpt::from_ve(p.ve, &p.head));
  write_file(cfg.out_dir / "train.txt", [&](std::ostream& o) { write_dataset(o, p.train); });
  std::printf("seed %llu: VE loss %.6f -> %.6f, head accuracy %.4f, rank %zu%s\n",
              static_cast<unsigned long long>(p.seed), p.ve_loss.empty() ? 0.0 : p.ve_loss.front(),
              p.ve_loss.empty() ? 0.0 : p.ve_loss.back(), p.head_report.accuracy, p.head_report.rank,
              p.head_report.rank_deficient ? " (rank deficient)" : "");
  std::printf("prototype_lb %.6f  contextual_lb %.6f\n", ve::prototype_info_lb(p.ve, p.head, p.train),
              ve::contextual_info_lb(p.ve, p.train));
  return kOk;
}

int train_diffusion_cmd(const CommonFlags& f) {
  const auto cfg = resolve(f);
  fs::create_directories(cfg.out_dir);
  auto p = seeded(cfg);
  experiment::build_denoiser(cfg, p);
  ckpt::save(cfg.out_dir / "denoiser.ckpt", ckpt::from_denoiser(p.denoiser, p.schedule));
  const auto& loss = p.denoiser_loss;
  const std::size_t k = std::max<std::size_t>(1, loss.size() / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < k && i < loss.size(); ++i) {
    first += loss[i] / static_cast<double>(k);
    last += loss[loss.size() - 1 - i] / static_cast<double>(k);
  }
  std::printf("seed %llu: denoiser loss first decile %.6f, last decile %.6f\n",
              static_cast<unsigned long long>(p.seed), first, last);
  return kOk;
}

int distill_cmd(const CommonFlags& f) {
  const auto cfg = resolve(f);
  auto p = seeded(cfg);
  const fs::path ve_path = cfg.out_dir / "ve.ckpt";
  const fs::path dn_path = cfg.out_dir / "denoiser.ckpt";
  if (!fs::exists(ve_path) || !fs::exists(dn_path)) {
    throw StructuralError("distill needs ve.ckpt and denoiser.ckpt in " + cfg.out_dir.string() +
                          " (run train-ve and train-diffusion first)");
  }
  const auto ve_ckpt = ckpt::load(ve_path);
  p.ve = ckpt::to_ve(ve_ckpt);
  p.head = ckpt::head_from(ve_ckpt);
  const auto dn_ckpt = ckpt::load(dn_path);
  p.denoiser = ckpt::to_denoiser(dn_ckpt);
  p.schedule = ckpt::schedule_from(dn_ckpt);
  int status = kOk;
  for (std::size_t ipc : cfg.guidance.ipcs) {
    for (double beta : cfg.guidance.betas) {
      auto cell = experiment::run_cell(cfg, p, ipc, beta);
      char name[128];
      std::snprintf(name, sizeof(name), "distilled_ipc_%zu_beta_%g", ipc, beta);
      if (!cell.row.ok()) {
        std::fprintf(stderr, "%s failed in %s: %s\n", name, cell.row.failed_stage.c_str(), cell.row.error.c_str());
        status = kPartial;
        continue;
      }
      write_file(cfg.out_dir / (std::string(name) + ".txt"), [&](std::ostream& o) { write_distilled(o, cell.distilled); });
      for (std::size_t c = 0; c < cell.traces.size(); ++c) {
        write_file(cfg.out_dir / (std::string(name) + "_trace_class_" + std::to_string(c) + ".csv"),
                   [&](std::ostream& o) { cell.traces[c].write_csv(o); });
      }
      std::printf("%s: accuracy %.4f prototype_lb %.6f contextual_lb %.6f\n", name, cell.row.accuracy,
                  cell.row.prototype_lb, cell.row.contextual_lb);
    }
  }
  return status;
}

int eval_cmd(const CommonFlags& f, const std::string& input) {
  const auto cfg = resolve(f);
  std::ifstream in(input);
  if (!in) throw StructuralError("cannot open " + input);
  const DistilledSet set = read_distilled(in);
  const auto p = seeded(cfg);
  Rng rng = Rng::derive(p.seed, {4, set.provenance.ipc});
  const double acc = distill::evaluate_downstream(set.data, p.test, cfg.eval, rng);
  std::printf("accuracy %.6f on %zu test samples (ipc %zu, beta %g)\n", acc, p.test.size(), set.provenance.ipc,
              set.provenance.beta);
  return kOk;
}

int sweep_cmd(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const auto report = experiment::run_experiment(cfg);
  const auto sweep = experiment::beta_sweep(report, cfg.guidance.ipcs, cfg.guidance.betas);
  for (const auto& s : sweep) {
    std::printf("ipc %zu:", s.ipc);
    for (std::size_t k = 0; k < s.betas.size(); ++k) {
      if (s.mean_accuracy[k]) {
        std::printf("  beta %g -> %.4f", s.betas[k], *s.mean_accuracy[k]);
      } else {
        std::printf("  beta %g -> absent", s.betas[k]);
      }
    }
    if (s.best_beta) std::printf("  best %g", *s.best_beta);
    std::printf("\n");
  }
  std::printf("report: %s (%zu rows, %zu failed)\n", (cfg.out_dir / "report.csv").string().c_str(), report.rows.size(),
              report.failures());
  return report.failures() == 0 ? kOk : kPartial;
}

int oracle_cmd(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw StructuralError("cannot open " + path);
    in = &file;
  }
  const auto j = info::read_joint(*in);
  const double hx = info::entropy(j.marginal_x());
  const double hy = info::entropy(j.marginal_y());
  const double hxy = info::joint_entropy(j);
  std::printf("H(X)   %.12f\nH(Y)   %.12f\nH(X,Y) %.12f\nI(X;Y) %.12f\nH(X|Y) %.12f\nH(Y|X) %.12f\n", hx, hy, hxy,
              info::mutual_information(j), info::conditional_entropy(j), hxy - hx);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-guided diffusion sampling for dataset distillation on toy data"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string input;
  std::string joint = "-";

  app.add_subcommand("selftest", "run the built-in oracle and property checks");
  add_common(app.add_subcommand("train-ve", "train the variational estimator and classifier head"), flags);
  add_common(app.add_subcommand("train-diffusion", "train the toy denoiser"), flags);
  add_common(app.add_subcommand("distill", "generate distilled sets from saved checkpoints"), flags);
  auto* eval = app.add_subcommand("eval", "train a fresh classifier on a distilled set and report test accuracy");
  add_common(eval, flags);
  eval->add_option("--input", input, "distilled set file")->required();
  add_common(app.add_subcommand("sweep", "run the full ipc x beta x seed grid"), flags);
  auto* oracle = app.add_subcommand("oracle", "information measures of a text joint table");
  oracle->add_option("joint", joint, "table file, rows of nonnegative counts ('-' for stdin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "selftest") return tools::run_selftest();
    if (cmd == "train-ve") return train_ve_cmd(flags);
    if (cmd == "train-diffusion") return train_diffusion_cmd(flags);
    if (cmd == "distill") return distill_cmd(flags);
    if (cmd == "eval") return eval_cmd(flags, input);
    if (cmd == "sweep") return sweep_cmd(flags);
    if (cmd == "oracle") return oracle_cmd(joint);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s failed: %s\n", cmd.c_str(), e.what());
    return kPartial;
  }
  return kConfigError;
}
