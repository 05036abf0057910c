#include "igds/diffusion.hpp"

#include <cmath>

#include "igds/error.hpp"

namespace igds::diffusion {
namespace {

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor out(nd::Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw StructuralError("denoiser: class " + std::to_string(labels[i]) + " out of range");
    out.at(i, labels[i]) = 1.0;
  }
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw StructuralError(std::string(what) + ": shape " + nd::shape_string(a.shape()) + " vs " +
                          nd::shape_string(b.shape()));
  }
}

}  // namespace

Schedule::Schedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw StructuralError("schedule: T must be at least 1");
  alpha_bar_.assign(betas_.size() + 1, 1.0);
  for (std::size_t t = 1; t <= betas_.size(); ++t) {
    const double b = betas_[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw StructuralError("schedule: beta must lie in (0, 1)");
    alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - b);
  }
}

Schedule Schedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw StructuralError("build_schedule: T must be at least 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw StructuralError("build_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return Schedule(std::move(betas));
}

Schedule Schedule::scaled_linear(std::size_t steps) {
  if (steps < 1) throw StructuralError("build_schedule: T must be at least 1");
  const double scale = 1000.0 / static_cast<double>(steps);
  return linear(steps, std::min(1e-4 * scale, 0.999), std::min(0.02 * scale, 0.999));
}

Schedule Schedule::from_betas(std::vector<double> betas) { return Schedule(std::move(betas)); }

Schedule build_schedule(std::size_t steps, double beta_start, double beta_end) {
  return Schedule::linear(steps, beta_start, beta_end);
}

void Schedule::check_step(std::size_t t) const {
  if (t < 1 || t > betas_.size()) {
    throw StructuralError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(betas_.size()) + "]");
  }
}

double Schedule::beta(std::size_t t) const {
  check_step(t);
  return betas_[t - 1];
}

double Schedule::alpha_bar(std::size_t t) const {
  if (t > betas_.size()) throw StructuralError("alpha_bar: step out of range");
  return alpha_bar_[t];
}

double Schedule::sigma_tilde(std::size_t t) const {
  check_step(t);
  return std::sqrt((1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]) * betas_[t - 1]);
}

double Schedule::coef_xt(std::size_t t) const {
  check_step(t);
  return std::sqrt(1.0 - betas_[t - 1]) * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
}

double Schedule::coef_x0(std::size_t t) const {
  check_step(t);
  return std::sqrt(alpha_bar_[t - 1]) * betas_[t - 1] / (1.0 - alpha_bar_[t]);
}

Tensor forward_noise(const Schedule& sched, const Tensor& x0, std::size_t t, const Tensor& eps) {
  check_same_shape(x0, eps, "forward_noise");
  if (t < 1 || t > sched.steps()) throw StructuralError("forward_noise: step out of range");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

Tensor score_from_eps(const Schedule& sched, std::size_t t, const Tensor& eps_hat) {
  if (t < 1 || t > sched.steps()) throw StructuralError("score_from_eps: step out of range");
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out = eps_hat;
  for (double& v : out.data()) v = -v / s;
  return out;
}

Tensor predict_x0(const Schedule& sched, const Tensor& x_t, std::size_t t, const Tensor& score) {
  check_same_shape(x_t, score, "predict_x0");
  if (t < 1 || t > sched.steps()) throw StructuralError("predict_x0: step out of range");
  const double ab = sched.alpha_bar(t);
  if (ab < 1e-12) throw NumericDomainError("predict_x0: alpha_bar below 1e-12");
  const double inv = 1.0 / std::sqrt(ab);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] + (1.0 - ab) * score[i]);
  return out;
}

Tensor ancestral_step(const Schedule& sched, const Tensor& x_t, const Tensor& x0_tilde, std::size_t t, const Tensor& z) {
  if (t == 0) throw StructuralError("ancestral_step: no step below t = 0");
  check_same_shape(x_t, x0_tilde, "ancestral_step");
  check_same_shape(x_t, z, "ancestral_step");
  const double cx = sched.coef_xt(t);
  const double c0 = sched.coef_x0(t);
  const double sigma = sched.sigma_tilde(t);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cx * x_t[i] + c0 * x0_tilde[i] + sigma * z[i];
  return out;
}

DenoiserNet DenoiserNet::create(const DenoiserConfig& config, Rng& rng) {
  if (config.time_features % 2 != 0) throw StructuralError("denoiser: time_features must be even");
  DenoiserNet net;
  net.config = config;
  net.mlp = nn::Mlp::create({config.data_dim, config.hidden, config.hidden, config.data_dim}, nn::Activation::Relu,
                            1.0, rng);
  net.time_projection = Tensor(nd::Shape{config.time_features, config.hidden});
  const double tstd = std::sqrt(1.0 / static_cast<double>(config.time_features));
  for (double& v : net.time_projection.data()) v = tstd * rng.normal();
  net.class_embedding = Tensor(nd::Shape{config.classes, config.hidden});
  for (double& v : net.class_embedding.data()) v = 0.5 * rng.normal();
  return net;
}

std::vector<Tensor*> DenoiserNet::parameters() {
  auto out = mlp.parameters();
  out.push_back(&time_projection);
  out.push_back(&class_embedding);
  return out;
}

std::vector<const Tensor*> DenoiserNet::parameters() const {
  auto out = mlp.parameters();
  out.push_back(&time_projection);
  out.push_back(&class_embedding);
  return out;
}

Tensor time_features(std::span<const std::size_t> steps, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out(nd::Shape{steps.size(), dim});
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double t = static_cast<double>(steps[i]);
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::pow(1000.0, -static_cast<double>(k) / static_cast<double>(half));
      out.at(i, k) = std::sin(t * freq);
      out.at(i, half + k) = std::cos(t * freq);
    }
  }
  return out;
}

BoundDenoiser bind(Graph& graph, const DenoiserNet& net, bool trainable) {
  BoundDenoiser b;
  b.net = &net;
  b.mlp = nn::bind(graph, net.mlp, trainable, "denoiser");
  b.time_projection = graph.leaf("denoiser.time_projection", net.time_projection, trainable);
  b.class_embedding = graph.leaf("denoiser.class_embedding", net.class_embedding, trainable);
  return b;
}

Var predict_eps(const BoundDenoiser& bound, Var x_t, std::span<const std::size_t> steps,
                std::span<const std::size_t> labels) {
  Graph& g = x_t.graph();
  const std::size_t n = x_t.value().rows();
  if (steps.size() != n || labels.size() != n) throw StructuralError("predict_eps: batch size mismatch");
  const Var tf = g.constant(time_features(steps, bound.net->config.time_features));
  const Var y = g.constant(one_hot(labels, bound.net->config.classes));
  const Var offset = nd::add(nd::matmul(tf, bound.time_projection), nd::matmul(y, bound.class_embedding));
  return nn::forward(bound.mlp, x_t, offset);
}

Tensor predict_eps(const DenoiserNet& net, const Tensor& x_t, std::size_t t, std::span<const std::size_t> labels) {
  Graph g;
  const BoundDenoiser b = bind(g, net, false);
  const std::vector<std::size_t> steps(x_t.rows(), t);
  return predict_eps(b, g.constant(x_t), steps, labels).value();
}

std::vector<double> train_denoiser(DenoiserNet& net, const Schedule& sched, const LabeledDataset& data,
                                   const DenoiserTrainConfig& config, Rng& rng) {
  data.validate();
  if (data.size() == 0) throw StructuralError("train_denoiser: empty dataset");
  if (data.dim() != net.config.data_dim) throw StructuralError("train_denoiser: data dim mismatch");
  std::vector<double> trace;
  trace.reserve(config.steps);
  nn::Adam adam(config.learning_rate);
  const auto params = net.parameters();
  const std::size_t d = data.dim();
  double initial = 0.0;
  std::size_t above = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t b = config.batch_size;
    Tensor x0(nd::Shape{b, d});
    std::vector<std::size_t> labels(b), steps(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t k = rng.index(data.size());
      auto src = data.samples.row(k);
      std::copy(src.begin(), src.end(), x0.row(i).begin());
      labels[i] = data.labels[k];
      steps[i] = 1 + rng.index(sched.steps());
    }
    const Tensor eps = rng.normal_tensor(x0.shape());
    Tensor x_t(x0.shape());
    for (std::size_t i = 0; i < b; ++i) {
      const double a = std::sqrt(sched.alpha_bar(steps[i]));
      const double s = std::sqrt(1.0 - sched.alpha_bar(steps[i]));
      for (std::size_t j = 0; j < d; ++j) x_t.at(i, j) = a * x0.at(i, j) + s * eps.at(i, j);
    }

    Graph g;
    const BoundDenoiser bound = bind(g, net, true);
    const Var pred = predict_eps(bound, g.constant(x_t), steps, labels);
    const Var diff = nd::sub(pred, g.constant(eps));
    const Var loss = nd::mean(nd::mul(diff, diff));
    const double value = loss.value().item();
    trace.push_back(value);
    if (step == 0) initial = value;
    if (!std::isfinite(value) || value > config.divergence_factor * initial) {
      if (++above >= config.divergence_patience || !std::isfinite(value)) {
        throw TrainingDivergedError("train_denoiser: loss " + std::to_string(value) + " at step " +
                                    std::to_string(step) + " exceeded " + std::to_string(config.divergence_factor) +
                                    "x the initial loss " + std::to_string(initial));
      }
    } else {
      above = 0;
    }

    g.backward(loss);
    std::vector<Tensor> grads;
    for (const Var& p : bound.mlp.params) grads.push_back(g.grad(p));
    grads.push_back(g.grad(bound.time_projection));
    grads.push_back(g.grad(bound.class_embedding));
    adam.step(params, grads);
  }
  return trace;
}

double evaluate_denoiser(const DenoiserNet& net, const Schedule& sched, const LabeledDataset& data, std::size_t draws,
                         Rng& rng) {
  const std::size_t d = data.dim();
  Tensor x_t(nd::Shape{draws, d});
  Tensor eps = rng.normal_tensor(x_t.shape());
  std::vector<std::size_t> labels(draws), steps(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const std::size_t k = rng.index(data.size());
    labels[i] = data.labels[k];
    steps[i] = 1 + rng.index(sched.steps());
    const double a = std::sqrt(sched.alpha_bar(steps[i]));
    const double s = std::sqrt(1.0 - sched.alpha_bar(steps[i]));
    for (std::size_t j = 0; j < d; ++j) x_t.at(i, j) = a * data.samples.at(k, j) + s * eps.at(i, j);
  }
  Graph g;
  const BoundDenoiser bound = bind(g, net, false);
  const Var diff = nd::sub(predict_eps(bound, g.constant(x_t), steps, labels), g.constant(eps));
  return nd::mean(nd::mul(diff, diff)).value().item();
}

Tensor reverse_step(const DenoiserNet& net, const Schedule& sched, const Tensor& x_t, std::size_t t,
                    std::span<const std::size_t> labels, Rng& rng) {
  const Tensor eps_hat = predict_eps(net, x_t, t, labels);
  const Tensor x0 = predict_x0(sched, x_t, t, score_from_eps(sched, t, eps_hat));
  const Tensor z = t > 1 ? rng.normal_tensor(x_t.shape()) : Tensor(x_t.shape());
  return ancestral_step(sched, x_t, x0, t, z);
}

Tensor sample(const DenoiserNet& net, const Schedule& sched, std::size_t count, std::size_t label, Rng& rng) {
  const std::vector<std::size_t> labels(count, label);
  Tensor x = rng.normal_tensor({count, net.config.data_dim});
  for (std::size_t t = sched.steps(); t >= 1; --t) x = reverse_step(net, sched, x, t, labels, rng);
  return x;
}

}  // namespace igds::diffusion
