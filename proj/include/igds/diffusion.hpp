#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "igds/dataset.hpp"
#include "igds/ndnum/nn.hpp"
#include "igds/rng.hpp"

namespace igds::diffusion {

using nd::Graph;
using nd::Tensor;
using nd::Var;

/// Noise schedule over steps t = 1..T with alpha_bar(0) = 1.
class Schedule {
 public:
  /// Linear beta ramp from beta_start (t = 1) to beta_end (t = T).
  static Schedule linear(std::size_t steps, double beta_start, double beta_end);
  /// The 1000-step 1e-4 -> 0.02 ramp rescaled to `steps` (betas times 1000 / steps),
  /// which keeps alpha_bar(T) near zero for short chains.
  static Schedule scaled_linear(std::size_t steps);
  /// Schedule from explicit betas (checkpoint restore).
  static Schedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const;
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  /// Valid for t in [0, T].
  double alpha_bar(std::size_t t) const;
  /// sqrt((1 - alpha_bar(t-1)) / (1 - alpha_bar(t)) * beta(t)); zero at t = 1.
  double sigma_tilde(std::size_t t) const;
  /// Coefficient of x_t in the posterior mean.
  double coef_xt(std::size_t t) const;
  /// Coefficient of the x_0 estimate in the posterior mean.
  double coef_x0(std::size_t t) const;

  const std::vector<double>& betas() const { return betas_; }

 private:
  explicit Schedule(std::vector<double> betas);
  void check_step(std::size_t t) const;

  std::vector<double> betas_;      // index t - 1
  std::vector<double> alpha_bar_;  // index t, alpha_bar_[0] = 1
};

Schedule build_schedule(std::size_t steps, double beta_start, double beta_end);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_noise(const Schedule& sched, const Tensor& x0, std::size_t t, const Tensor& eps);

/// Score of x_t implied by a noise prediction: -eps / sqrt(1 - alpha_bar_t).
Tensor score_from_eps(const Schedule& sched, std::size_t t, const Tensor& eps_hat);

/// (x_t + (1 - alpha_bar_t) * score) / sqrt(alpha_bar_t).
Tensor predict_x0(const Schedule& sched, const Tensor& x_t, std::size_t t, const Tensor& score);

/// Posterior-mean combination of x_t and the x_0 estimate plus sigma_tilde_t * z.
Tensor ancestral_step(const Schedule& sched, const Tensor& x_t, const Tensor& x0_tilde, std::size_t t, const Tensor& z);

struct DenoiserConfig {
  std::size_t data_dim = 2;
  std::size_t classes = 3;
  std::size_t hidden = 64;
  std::size_t time_features = 16;
};

/// Noise predictor eps(x_t, t, y): an MLP whose first pre-activation gets a
/// learned projection of sinusoidal time features plus a learned class embedding.
struct DenoiserNet {
  DenoiserConfig config;
  nn::Mlp mlp;
  Tensor time_projection;  // [time_features, hidden]
  Tensor class_embedding;  // [classes, hidden]

  static DenoiserNet create(const DenoiserConfig& config, Rng& rng);
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

/// Sinusoidal features of each step, shape [n, dim].
Tensor time_features(std::span<const std::size_t> steps, std::size_t dim);

struct BoundDenoiser {
  const DenoiserNet* net = nullptr;
  nn::BoundMlp mlp;
  Var time_projection;
  Var class_embedding;
};

BoundDenoiser bind(Graph& graph, const DenoiserNet& net, bool trainable);
Var predict_eps(const BoundDenoiser& bound, Var x_t, std::span<const std::size_t> steps,
                std::span<const std::size_t> labels);
/// Batch prediction at a common step.
Tensor predict_eps(const DenoiserNet& net, const Tensor& x_t, std::size_t t, std::span<const std::size_t> labels);

struct DenoiserTrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 128;
  double learning_rate = 2e-3;
  double divergence_factor = 10.0;
  std::size_t divergence_patience = 100;
};

/// Minimizes the mean squared noise-prediction error over uniform t; returns
/// the per-step loss. Throws TrainingDivergedError when the loss stays above
/// divergence_factor times its initial value for divergence_patience steps.
std::vector<double> train_denoiser(DenoiserNet& net, const Schedule& sched, const LabeledDataset& data,
                                   const DenoiserTrainConfig& config, Rng& rng);

/// Mean squared noise-prediction error on fresh draws of (t, eps) over `data`.
double evaluate_denoiser(const DenoiserNet& net, const Schedule& sched, const LabeledDataset& data,
                         std::size_t draws, Rng& rng);

/// One unguided reverse transition x_t -> x_{t-1}. Draws z from rng unless t == 1.
Tensor reverse_step(const DenoiserNet& net, const Schedule& sched, const Tensor& x_t, std::size_t t,
                    std::span<const std::size_t> labels, Rng& rng);

/// Full unguided chain from x_T ~ N(0, I) for `count` samples of class `label`.
Tensor sample(const DenoiserNet& net, const Schedule& sched, std::size_t count, std::size_t label, Rng& rng);

}  // namespace igds::diffusion
