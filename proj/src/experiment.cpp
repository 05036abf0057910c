#include "igds/experiment.hpp"

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

#include "igds/checkpoint.hpp"
#include "igds/error.hpp"

namespace igds::experiment {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' is out of range");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_beta(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out << ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out << fmt(xs[i]);
    } else {
      out << xs[i];
    }
  }
  return out.str();
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define IGDS_SIZE(key, expr) \
  t[key] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { expr = static_cast<std::size_t>(to_uint(k, v)); }
#define IGDS_REAL(key, expr) \
  t[key] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { expr = to_real(k, v); }
#define IGDS_BOOL(key, expr) \
  t[key] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { expr = to_bool(k, v); }
    IGDS_SIZE("dataset.classes", c.dataset.classes);
    IGDS_SIZE("dataset.modes", c.dataset.modes);
    IGDS_SIZE("dataset.n_per_class", c.dataset.n_per_class);
    IGDS_REAL("dataset.separation", c.dataset.separation);
    IGDS_REAL("dataset.mode_offset", c.dataset.mode_offset);
    IGDS_REAL("dataset.mode_std", c.dataset.mode_std);
    IGDS_SIZE("dataset.test_per_class", c.dataset.test_per_class);

    IGDS_SIZE("ve.feature_dim", c.ve.model.feature_dim);
    IGDS_SIZE("ve.hidden", c.ve.model.hidden);
    IGDS_REAL("ve.sharpness", c.ve.model.softplus_sharpness);
    IGDS_REAL("ve.lambda", c.ve.model.lambda);
    IGDS_SIZE("ve.queue_size", c.ve.model.queue_size);
    IGDS_REAL("ve.momentum", c.ve.model.momentum);
    IGDS_REAL("ve.temperature", c.ve.model.temperature);
    IGDS_REAL("ve.learning_rate", c.ve.model.learning_rate);
    IGDS_BOOL("ve.normalize_contrastive", c.ve.model.normalize_contrastive);
    IGDS_SIZE("ve.steps", c.ve.steps);
    IGDS_SIZE("ve.batch_size", c.ve.batch_size);
    IGDS_SIZE("ve.head_epochs", c.ve.head.epochs);
    IGDS_SIZE("ve.head_batch_size", c.ve.head.batch_size);
    IGDS_REAL("ve.head_learning_rate", c.ve.head.learning_rate);
    t["ve.kl_target"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "class_centroid") {
        c.ve.model.kl_target = ve::KlTarget::ClassCentroid;
      } else if (v == "two_view_mean") {
        c.ve.model.kl_target = ve::KlTarget::TwoViewMean;
      } else {
        throw ConfigError("config: '" + k + "' must be class_centroid or two_view_mean");
      }
    };

    IGDS_SIZE("diffusion.steps", c.diffusion.steps);
    IGDS_REAL("diffusion.beta_start", c.diffusion.beta_start);
    IGDS_REAL("diffusion.beta_end", c.diffusion.beta_end);
    IGDS_BOOL("diffusion.scale_to_steps", c.diffusion.scale_to_steps);
    IGDS_SIZE("diffusion.hidden", c.diffusion.net.hidden);
    IGDS_SIZE("diffusion.time_features", c.diffusion.net.time_features);
    IGDS_SIZE("diffusion.train_steps", c.diffusion.train.steps);
    IGDS_SIZE("diffusion.batch_size", c.diffusion.train.batch_size);
    IGDS_REAL("diffusion.learning_rate", c.diffusion.train.learning_rate);

    t["guidance.betas"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.guidance.betas.clear();
      for (const auto& item : split_list(v)) c.guidance.betas.push_back(to_real(k, item));
    };
    t["guidance.ipcs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.guidance.ipcs.clear();
      for (const auto& item : split_list(v)) c.guidance.ipcs.push_back(static_cast<std::size_t>(to_uint(k, item)));
    };
    IGDS_REAL("guidance.eta", c.guidance.eta);
    IGDS_REAL("guidance.tau", c.guidance.tau);
    IGDS_BOOL("guidance.entropy_term", c.guidance.entropy_term);
    IGDS_BOOL("guidance.scale_by_noise", c.guidance.scale_by_noise);

    IGDS_SIZE("eval.hidden", c.eval.hidden);
    IGDS_SIZE("eval.epochs", c.eval.epochs);
    IGDS_SIZE("eval.batch_size", c.eval.batch_size);
    IGDS_REAL("eval.learning_rate", c.eval.learning_rate);

    t["run.seeds"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.seeds.clear();
      for (const auto& item : split_list(v)) c.seeds.push_back(to_uint(k, item));
    };
    t["run.out"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
    IGDS_SIZE("run.workers", c.workers);
    IGDS_BOOL("run.timing", c.timing);
#undef IGDS_SIZE
#undef IGDS_REAL
#undef IGDS_BOOL
    return t;
  }();
  return table;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
}

void write_loss(std::ostream& out, const std::vector<double>& loss) {
  out << "step,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) out << i << ',' << fmt(loss[i]) << '\n';
}

std::string cell_name(std::size_t ipc, double beta, std::uint64_t seed) {
  return "ipc_" + std::to_string(ipc) + "_beta_" + fmt_beta(beta) + "_seed_" + std::to_string(seed);
}

}  // namespace

diffusion::Schedule DiffusionParams::schedule() const {
  if (!scale_to_steps) return diffusion::build_schedule(steps, beta_start, beta_end);
  const double k = 1000.0 / static_cast<double>(steps);
  return diffusion::build_schedule(steps, std::min(beta_start * k, 0.999), std::min(beta_end * k, 0.999));
}

void ExperimentConfig::validate() const {
  if (dataset.classes < 2) throw ConfigError("config: dataset.classes must be >= 2");
  if (dataset.modes < 1) throw ConfigError("config: dataset.modes must be >= 1");
  if (dataset.n_per_class < 1 || dataset.test_per_class < 1) throw ConfigError("config: empty dataset");
  if (guidance.betas.empty()) throw ConfigError("config: guidance.betas is empty");
  if (guidance.ipcs.empty()) throw ConfigError("config: guidance.ipcs is empty");
  if (seeds.empty()) throw ConfigError("config: run.seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("config: run.seeds must be distinct");
  }
  for (double b : guidance.betas) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("config: betas must be finite and >= 0");
  }
  if (std::set<double>(guidance.betas.begin(), guidance.betas.end()).size() != guidance.betas.size()) {
    throw ConfigError("config: guidance.betas must be distinct");
  }
  for (std::size_t ipc : guidance.ipcs) {
    if (ipc < 1) throw ConfigError("config: ipcs must be >= 1");
    if (ipc > dataset.n_per_class) throw ConfigError("config: ipc exceeds n_per_class");
  }
  if (!(guidance.eta >= 0.0) || !std::isfinite(guidance.eta)) throw ConfigError("config: eta must be finite and >= 0");
  if (!(guidance.tau > 0.0)) throw ConfigError("config: tau must be > 0");
  if (diffusion.steps < 1) throw ConfigError("config: diffusion.steps must be >= 1");
  if (workers < 1) throw ConfigError("config: run.workers must be >= 1");
  if (ve.batch_size < 1 || diffusion.train.batch_size < 1 || eval.batch_size < 1) {
    throw ConfigError("config: batch sizes must be >= 1");
  }
  if (!(diffusion.beta_start > 0.0 && diffusion.beta_start <= diffusion.beta_end && diffusion.beta_end < 1.0)) {
    throw ConfigError("config: need 0 < diffusion.beta_start <= diffusion.beta_end < 1");
  }
  try {
    (void)diffusion.schedule();
  } catch (const StructuralError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::with_seed_offset(std::uint64_t offset) const {
  ExperimentConfig out = *this;
  for (auto& s : out.seeds) s += offset;
  return out;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  static const std::set<std::string> sections{"dataset", "ve", "diffusion", "guidance", "eval", "run"};
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    it->second(cfg, key, trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[dataset]\n"
      << "classes = " << c.dataset.classes << "\nmodes = " << c.dataset.modes << "\nn_per_class = " << c.dataset.n_per_class
      << "\nseparation = " << fmt(c.dataset.separation) << "\nmode_offset = " << fmt(c.dataset.mode_offset)
      << "\nmode_std = " << fmt(c.dataset.mode_std) << "\ntest_per_class = " << c.dataset.test_per_class << "\n\n";
  const auto& v = c.ve.model;
  out << "[ve]\n"
      << "feature_dim = " << v.feature_dim << "\nhidden = " << v.hidden << "\nsharpness = " << fmt(v.softplus_sharpness)
      << "\nlambda = " << fmt(v.lambda) << "\nqueue_size = " << v.queue_size << "\nmomentum = " << fmt(v.momentum)
      << "\ntemperature = " << fmt(v.temperature) << "\nlearning_rate = " << fmt(v.learning_rate)
      << "\nnormalize_contrastive = " << b(v.normalize_contrastive)
      << "\nkl_target = " << (v.kl_target == ve::KlTarget::ClassCentroid ? "class_centroid" : "two_view_mean")
      << "\nsteps = " << c.ve.steps << "\nbatch_size = " << c.ve.batch_size << "\nhead_epochs = " << c.ve.head.epochs
      << "\nhead_batch_size = " << c.ve.head.batch_size << "\nhead_learning_rate = " << fmt(c.ve.head.learning_rate)
      << "\n\n";
  const auto& d = c.diffusion;
  out << "[diffusion]\n"
      << "steps = " << d.steps << "\nbeta_start = " << fmt(d.beta_start) << "\nbeta_end = " << fmt(d.beta_end)
      << "\nscale_to_steps = " << b(d.scale_to_steps) << "\nhidden = " << d.net.hidden
      << "\ntime_features = " << d.net.time_features << "\ntrain_steps = " << d.train.steps
      << "\nbatch_size = " << d.train.batch_size << "\nlearning_rate = " << fmt(d.train.learning_rate) << "\n\n";
  const auto& g = c.guidance;
  out << "[guidance]\n"
      << "betas = " << join(g.betas) << "\nipcs = " << join(g.ipcs) << "\neta = " << fmt(g.eta)
      << "\ntau = " << fmt(g.tau) << "\nentropy_term = " << b(g.entropy_term)
      << "\nscale_by_noise = " << b(g.scale_by_noise) << "\n\n";
  out << "[eval]\n"
      << "hidden = " << c.eval.hidden << "\nepochs = " << c.eval.epochs << "\nbatch_size = " << c.eval.batch_size
      << "\nlearning_rate = " << fmt(c.eval.learning_rate) << "\n\n";
  out << "[run]\n"
      << "seeds = " << join(c.seeds) << "\nout = " << c.out_dir.string() << "\nworkers = " << c.workers
      << "\ntiming = " << b(c.timing) << "\n";
}

void build_data(const ExperimentConfig& cfg, Pipeline& p) {
  Rng rng = Rng::derive(p.seed, {0});
  const auto& ds = cfg.dataset;
  const MixtureSpec spec = make_mixture(ds.classes, ds.modes, ds.separation, rng, ds.mode_offset, ds.mode_std);
  p.train = sample_mixture(spec, ds.n_per_class, rng);
  Rng test_rng = Rng::derive(p.seed, {5});
  p.test = sample_mixture(spec, ds.test_per_class, test_rng);
}

void build_ve(const ExperimentConfig& cfg, Pipeline& p) {
  Rng rng = Rng::derive(p.seed, {1});
  ve::VeConfig vc = cfg.ve.model;
  vc.input_dim = p.train.dim();
  p.ve = ve::VeModel::create(vc, rng);
  p.ve_loss = ve::train_ve(p.ve, p.train, cfg.ve.steps, cfg.ve.batch_size, rng);
  p.head = ve::ClassifierHead::zeros(vc.feature_dim, cfg.dataset.classes);
  p.head_report = ve::train_classifier(p.ve, p.head, p.train, cfg.ve.head, rng);
}

void build_denoiser(const ExperimentConfig& cfg, Pipeline& p) {
  Rng rng = Rng::derive(p.seed, {2});
  p.schedule = cfg.diffusion.schedule();
  diffusion::DenoiserConfig dc = cfg.diffusion.net;
  dc.data_dim = p.train.dim();
  dc.classes = cfg.dataset.classes;
  p.denoiser = diffusion::DenoiserNet::create(dc, rng);
  p.denoiser_loss = diffusion::train_denoiser(p.denoiser, p.schedule, p.train, cfg.diffusion.train, rng);
}

Pipeline train_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  Pipeline p;
  p.seed = seed;
  stage("dataset", [&] {
    build_data(cfg, p);
    return 0;
  });
  stage("train-ve", [&] {
    build_ve(cfg, p);
    return 0;
  });
  stage("train-diffusion", [&] {
    build_denoiser(cfg, p);
    return 0;
  });
  return p;
}

CellOutput run_cell(const ExperimentConfig& cfg, const Pipeline& pipe, std::size_t ipc, double beta) {
  const auto start = std::chrono::steady_clock::now();
  CellOutput out;
  out.row.ipc = ipc;
  out.row.beta = beta;
  out.row.seed = pipe.seed;
  try {
    stage("distill", [&] {
      guidance::GuidanceConfig gc;
      gc.beta = beta;
      gc.eta = cfg.guidance.eta;
      gc.tau = cfg.guidance.tau;
      gc.ipc = ipc;
      gc.entropy_term = cfg.guidance.entropy_term;
      gc.scale_by_noise = cfg.guidance.scale_by_noise;
      std::vector<std::size_t> classes(cfg.dataset.classes);
      for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = c;
      const std::uint64_t gen_seed = Rng::derive(pipe.seed, {3, ipc}).next_u64();
      out.distilled = distill::assemble_distilled(pipe.models(), classes, gc, gen_seed, &out.traces);
      out.distilled.provenance.seeds = {pipe.seed, gen_seed};
      out.row.prototype_lb = ve::prototype_info_lb(pipe.ve, pipe.head, out.distilled.data);
      out.row.contextual_lb = ve::contextual_info_lb(pipe.ve, out.distilled.data);
      return 0;
    });
    stage("eval", [&] {
      Rng rng = Rng::derive(pipe.seed, {4, ipc});
      out.row.accuracy = distill::evaluate_downstream(out.distilled.data, pipe.test, cfg.eval, rng);
      return 0;
    });
  } catch (const StageError& e) {
    out.row.failed_stage = e.stage();
    out.row.error = e.what();
  }
  out.row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::size_t ExperimentReport::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.ok(); }));
}

void ExperimentReport::write_csv(std::ostream& out) const {
  out << kReportHeader << '\n';
  for (const auto& r : rows) {
    out << r.ipc << ',' << fmt_beta(r.beta) << ',' << r.seed << ',';
    if (r.ok()) {
      out << fmt(r.accuracy) << ',' << fmt(r.prototype_lb) << ',' << fmt(r.contextual_lb);
    } else {
      out << "nan,nan,nan";
    }
    out << ',' << fmt(r.runtime_seconds) << '\n';
  }
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, bool persist) {
  cfg.validate();
  namespace fs = std::filesystem;
  if (persist) fs::create_directories(cfg.out_dir);

  // stage 1: one pipeline per seed
  std::vector<std::optional<Pipeline>> pipes(cfg.seeds.size());
  std::vector<std::pair<std::string, std::string>> pipe_errors(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    try {
      pipes[i] = train_pipeline(cfg, seed);
      if (persist) {
        const fs::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        const Pipeline& p = *pipes[i];
        write_text(dir / "train.txt", [&](std::ostream& o) { write_dataset(o, p.train); });
        ckpt::save(dir / "ve.ckpt", ckpt::from_ve(p.ve, &p.head));
        ckpt::save(dir / "denoiser.ckpt", ckpt::from_denoiser(p.denoiser, p.schedule));
        write_text(dir / "ve_loss.csv", [&](std::ostream& o) { write_loss(o, p.ve_loss); });
        write_text(dir / "denoiser_loss.csv", [&](std::ostream& o) { write_loss(o, p.denoiser_loss); });
      }
    } catch (const StageError& e) {
      pipes[i].reset();
      pipe_errors[i] = {e.stage(), e.what()};
    } catch (const std::exception& e) {
      pipes[i].reset();
      pipe_errors[i] = {"persist", e.what()};
    }
  });

  // stage 2: grid cells in report order
  std::vector<std::size_t> ipcs = cfg.guidance.ipcs;
  std::vector<double> betas = cfg.guidance.betas;
  std::vector<std::size_t> seed_order(cfg.seeds.size());
  for (std::size_t i = 0; i < seed_order.size(); ++i) seed_order[i] = i;
  std::sort(ipcs.begin(), ipcs.end());
  ipcs.erase(std::unique(ipcs.begin(), ipcs.end()), ipcs.end());
  std::sort(betas.begin(), betas.end());
  std::sort(seed_order.begin(), seed_order.end(), [&](auto a, auto b) { return cfg.seeds[a] < cfg.seeds[b]; });

  struct Cell {
    std::size_t ipc;
    double beta;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (std::size_t ipc : ipcs) {
    for (double beta : betas) {
      for (std::size_t s : seed_order) cells.push_back({ipc, beta, s});
    }
  }

  ExperimentReport report;
  report.rows.resize(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const Cell& c = cells[i];
    ReportRow& row = report.rows[i];
    if (!pipes[c.seed_index]) {
      row.ipc = c.ipc;
      row.beta = c.beta;
      row.seed = cfg.seeds[c.seed_index];
      row.failed_stage = pipe_errors[c.seed_index].first;
      row.error = pipe_errors[c.seed_index].second;
      return;
    }
    CellOutput out = run_cell(cfg, *pipes[c.seed_index], c.ipc, c.beta);
    if (persist && out.row.ok()) {
      try {
        const fs::path dir = cfg.out_dir / "cells" / cell_name(c.ipc, c.beta, out.row.seed);
        fs::create_directories(dir);
        write_text(dir / "distilled.txt", [&](std::ostream& o) { write_distilled(o, out.distilled); });
        for (std::size_t k = 0; k < out.traces.size(); ++k) {
          write_text(dir / ("trace_class_" + std::to_string(k) + ".csv"),
                     [&](std::ostream& o) { out.traces[k].write_csv(o); });
        }
      } catch (const std::exception& e) {
        out.row.failed_stage = "persist";
        out.row.error = e.what();
      }
    }
    row = std::move(out.row);
  });

  std::vector<double> wall(report.rows.size());
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    wall[i] = report.rows[i].runtime_seconds;
    if (!cfg.timing) report.rows[i].runtime_seconds = 0.0;
  }

  if (persist) {
    write_text(cfg.out_dir / "config.ini", [&](std::ostream& o) { write_config(o, cfg); });
    write_text(cfg.out_dir / "report.csv", [&](std::ostream& o) { report.write_csv(o); });
    write_text(cfg.out_dir / "sweep.csv", [&](std::ostream& o) {
      write_sweep_csv(o, beta_sweep(report, cfg.guidance.ipcs, cfg.guidance.betas));
    });
    write_text(cfg.out_dir / "timing.csv", [&](std::ostream& o) {
      o << "ipc,beta,seed,seconds\n";
      for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        o << r.ipc << ',' << fmt_beta(r.beta) << ',' << r.seed << ',' << fmt(wall[i]) << '\n';
      }
    });
    const fs::path errors = cfg.out_dir / "errors.csv";
    if (report.failures() > 0) {
      write_text(errors, [&](std::ostream& o) {
        o << "ipc,beta,seed,stage,message\n";
        for (const auto& r : report.rows) {
          if (r.ok()) continue;
          std::string msg = r.error;
          std::replace(msg.begin(), msg.end(), ',', ';');
          std::replace(msg.begin(), msg.end(), '\n', ' ');
          o << r.ipc << ',' << fmt_beta(r.beta) << ',' << r.seed << ',' << r.failed_stage << ',' << msg << '\n';
        }
      });
    } else {
      fs::remove(errors);
    }
  }
  return report;
}

std::vector<SweepSummary> beta_sweep(const ExperimentReport& report, const std::vector<std::size_t>& ipcs,
                                     const std::vector<double>& betas) {
  std::vector<double> grid = betas;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<SweepSummary> out;
  for (std::size_t ipc : ipcs) {
    SweepSummary s;
    s.ipc = ipc;
    s.betas = grid;
    for (double beta : grid) {
      double total = 0.0;
      std::size_t n = 0;
      for (const auto& r : report.rows) {
        if (r.ipc == ipc && r.beta == beta && r.ok()) {
          total += r.accuracy;
          ++n;
        }
      }
      s.mean_accuracy.push_back(n > 0 ? std::optional<double>(total / static_cast<double>(n)) : std::nullopt);
    }
    // ascending beta order, so a strict comparison keeps the smaller beta on ties
    std::optional<double> best_acc;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto& acc = s.mean_accuracy[k];
      if (acc && (!best_acc || *acc > *best_acc + 1e-12)) {
        best_acc = acc;
        s.best_beta = grid[k];
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepSummary>& sweep) {
  out << "ipc,beta,mean_accuracy,best\n";
  for (const auto& s : sweep) {
    for (std::size_t k = 0; k < s.betas.size(); ++k) {
      out << s.ipc << ',' << fmt_beta(s.betas[k]) << ',';
      if (s.mean_accuracy[k]) {
        out << fmt(*s.mean_accuracy[k]);
      } else {
        out << "absent";
      }
      out << ',' << (s.best_beta && *s.best_beta == s.betas[k] ? 1 : 0) << '\n';
    }
  }
}

}  // namespace igds::experiment
