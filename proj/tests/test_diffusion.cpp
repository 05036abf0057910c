#include <gtest/gtest.h>

#include <cmath>

#include "igds/diffusion.hpp"
#include "igds/error.hpp"

using namespace igds;
using diffusion::Schedule;
using nd::Tensor;

namespace {

LabeledDataset two_class_mixture(std::uint64_t seed, std::size_t n_per_class) {
  Rng rng(seed);
  return make_synthetic_dataset(2, 1, n_per_class, 2.0, rng);
}

}  // namespace

TEST(Schedule, SingleStep) {
  const auto s = diffusion::build_schedule(1, 0.02, 0.02);
  EXPECT_NEAR(s.alpha_bar(1), 0.98, 1e-15);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_EQ(s.sigma_tilde(1), 0.0);
}

TEST(Schedule, ThousandStepProduct) {
  const auto s = diffusion::build_schedule(1000, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 0; t < 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
  EXPECT_NEAR(s.alpha_bar(1000), prod, 1e-15);
  EXPECT_NEAR(s.alpha_bar(1000), 4.0e-5, 0.1e-5);
}

TEST(Schedule, MonotoneAndNonnegativeNoise) {
  for (const auto& s : {diffusion::build_schedule(50, 1e-3, 0.05), Schedule::scaled_linear(100)}) {
    for (std::size_t t = 1; t <= s.steps(); ++t) {
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      EXPECT_GE(s.sigma_tilde(t), 0.0);
      const double expect = std::sqrt((1 - s.alpha_bar(t - 1)) / (1 - s.alpha_bar(t)) * s.beta(t));
      EXPECT_NEAR(s.sigma_tilde(t), expect, 1e-15);
    }
  }
  EXPECT_LT(Schedule::scaled_linear(100).alpha_bar(100), 1e-3);
}

TEST(Schedule, RangeErrors) {
  EXPECT_THROW(diffusion::build_schedule(0, 1e-4, 0.02), StructuralError);
  EXPECT_THROW(diffusion::build_schedule(10, 0.0, 0.02), StructuralError);
  EXPECT_THROW(diffusion::build_schedule(10, 0.03, 0.02), StructuralError);
  EXPECT_THROW(diffusion::build_schedule(10, 1e-4, 1.0), StructuralError);
  EXPECT_THROW(diffusion::build_schedule(10, 1e-4, 0.02).beta(11), StructuralError);
}

TEST(ForwardNoise, Limits) {
  const Tensor x0 = Tensor::vector({1.5, -2.0});
  const Tensor eps = Tensor::vector({0.3, 0.4});
  const auto tiny = Schedule::from_betas({1e-300});
  EXPECT_EQ(diffusion::forward_noise(tiny, x0, 1, eps), x0);
  const auto full = Schedule::from_betas({1.0 - 1e-12});
  const Tensor y = diffusion::forward_noise(full, x0, 1, eps);
  EXPECT_NEAR(y[0], 0.3, 1e-5);
  EXPECT_NEAR(y[1], 0.4, 1e-5);
  EXPECT_THROW(diffusion::forward_noise(full, x0, 0, eps), StructuralError);
  EXPECT_THROW(diffusion::forward_noise(full, x0, 2, eps), StructuralError);
}

TEST(ForwardNoise, MonteCarloMoments) {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.02);
  const std::size_t t = 40, n = 10000;
  const Tensor x0 = Tensor::vector({1.0, -0.5});
  Rng rng(1);
  double sum0 = 0, sum1 = 0, sq0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor y = diffusion::forward_noise(s, x0, t, rng.normal_tensor({2}));
    sum0 += y[0];
    sum1 += y[1];
    sq0 += y[0] * y[0];
  }
  const double a = std::sqrt(s.alpha_bar(t)), var = 1 - s.alpha_bar(t);
  const double band = 3.0 * std::sqrt(var / n);
  EXPECT_NEAR(sum0 / n, a * 1.0, band);
  EXPECT_NEAR(sum1 / n, a * -0.5, band);
  const double m = sum0 / n;
  EXPECT_NEAR(sq0 / n - m * m, var, 0.05 * var);
}

TEST(PredictX0, Examples) {
  const Tensor x = Tensor::vector({0.7, -1.2});
  EXPECT_EQ(diffusion::predict_x0(Schedule::from_betas({1e-300}), x, 1, Tensor::vector({0, 0})), x);

  const auto quarter = Schedule::from_betas({0.75});
  const Tensor s_hat = diffusion::score_from_eps(quarter, 1, Tensor::vector({0.5}));
  const Tensor x0 = diffusion::predict_x0(quarter, Tensor::vector({1.0}), 1, s_hat);
  EXPECT_NEAR(x0[0], (1 - std::sqrt(0.75) * 0.5) / 0.5, 1e-15);
  EXPECT_NEAR(x0[0], 1.133975, 1e-6);
}

TEST(PredictX0, InvertsForwardNoise) {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.02);
  Rng rng(2);
  for (std::size_t t : {1u, 10u, 50u, 100u}) {
    const Tensor x0 = rng.normal_tensor({5, 2}), eps = rng.normal_tensor({5, 2});
    const Tensor x_t = diffusion::forward_noise(s, x0, t, eps);
    const Tensor back = diffusion::predict_x0(s, x_t, t, diffusion::score_from_eps(s, t, eps));
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(back[i], x0[i], 1e-10);
  }
}

TEST(PredictX0, VanishingSignalIsADomainError) {
  const auto s = Schedule::from_betas({0.999999, 0.999999, 0.999999});
  EXPECT_THROW(diffusion::predict_x0(s, Tensor::vector({1.0}), 3, Tensor::vector({0.0})), NumericDomainError);
}

TEST(AncestralStep, Coefficients) {
  const auto s = diffusion::build_schedule(20, 1e-3, 0.1);
  for (std::size_t t = 2; t <= 20; ++t) {
    const double ab = s.alpha_bar(t), ab1 = s.alpha_bar(t - 1);
    EXPECT_NEAR(s.coef_xt(t), std::sqrt(s.alpha(t)) * (1 - ab1) / (1 - ab), 1e-15);
    EXPECT_NEAR(s.coef_x0(t), std::sqrt(ab1) * s.beta(t) / (1 - ab), 1e-15);
    const Tensor x = Tensor::vector({0.4, -2.0});
    const Tensor z = Tensor::vector({0.0, 0.0});
    const Tensor y = diffusion::ancestral_step(s, x, x, t, z);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(y[i], (s.coef_xt(t) + s.coef_x0(t)) * x[i], 1e-14);
    const Tensor noisy = diffusion::ancestral_step(s, x, x, t, Tensor::vector({1.0, 1.0}));
    EXPECT_NEAR(noisy[0] - y[0], s.sigma_tilde(t), 1e-14);
  }
  // At the first step alpha_bar(0) = 1: the x_0 coefficient is beta/(1 - alpha_bar) = 1.
  EXPECT_NEAR(s.coef_x0(1), s.beta(1) / (1 - s.alpha_bar(1)), 1e-15);
  EXPECT_NEAR(s.coef_x0(1), 1.0, 1e-12);
  EXPECT_EQ(s.coef_xt(1), 0.0);
  EXPECT_THROW(diffusion::ancestral_step(s, Tensor::vector({1.0}), Tensor::vector({1.0}), 0, Tensor::vector({0.0})),
               StructuralError);
}

TEST(AncestralStep, DdpmPosteriorMean) {
  // Posterior mean of q(x_{t-1} | x_t, x_0) written out in the usual form.
  const auto s = diffusion::build_schedule(10, 0.01, 0.2);
  for (std::size_t t = 2; t <= 10; ++t) {
    const double x_t = 0.8, x0 = -0.3;
    const double mean = (std::sqrt(s.alpha_bar(t - 1)) * s.beta(t) * x0 +
                         std::sqrt(s.alpha(t)) * (1 - s.alpha_bar(t - 1)) * x_t) /
                        (1 - s.alpha_bar(t));
    const Tensor y = diffusion::ancestral_step(s, Tensor::vector({x_t}), Tensor::vector({x0}), t, Tensor::vector({0.0}));
    EXPECT_NEAR(y[0], mean, 1e-15);
  }
}

TEST(Denoiser, OutputShapeAndTimeFeatures) {
  Rng rng(3);
  diffusion::DenoiserConfig cfg;
  cfg.classes = 2;
  const auto net = diffusion::DenoiserNet::create(cfg, rng);
  const std::vector<std::size_t> labels{0, 1, 1};
  EXPECT_EQ(diffusion::predict_eps(net, rng.normal_tensor({3, 2}), 5, labels).shape(), nd::Shape({3, 2}));
  const std::vector<std::size_t> steps{0, 7};
  const Tensor f = diffusion::time_features(steps, 16);
  EXPECT_EQ(f.shape(), nd::Shape({2, 16}));
  EXPECT_EQ(f.at(0, 0), 0.0);
  EXPECT_EQ(f.at(0, 8), 1.0);
  EXPECT_NEAR(f.at(1, 0), std::sin(7.0), 1e-15);
  EXPECT_THROW(diffusion::predict_eps(net, rng.normal_tensor({1, 2}), 5, std::vector<std::size_t>{2}), StructuralError);
}

TEST(Denoiser, ZeroStepsLeaveNetUnchanged) {
  Rng rng(4);
  auto net = diffusion::DenoiserNet::create(diffusion::DenoiserConfig{}, rng);
  const auto before = nn::checksum(std::as_const(net).parameters());
  diffusion::DenoiserTrainConfig cfg;
  cfg.steps = 0;
  const auto trace = diffusion::train_denoiser(net, Schedule::scaled_linear(100), two_class_mixture(4, 10), cfg, rng);
  EXPECT_TRUE(trace.empty());
  EXPECT_EQ(before, nn::checksum(std::as_const(net).parameters()));
}

// With all data at the origin, x_t = sqrt(1 - abar) eps, so the optimal
// predictor reaches zero error; the untrained zero predictor scores 1.
TEST(Denoiser, LearnsDegenerateData) {
  Rng rng(5);
  diffusion::DenoiserConfig cfg;
  cfg.classes = 1;
  auto net = diffusion::DenoiserNet::create(cfg, rng);
  LabeledDataset zeros{Tensor(nd::Shape{64, 2}), std::vector<std::size_t>(64, 0), 1, std::nullopt};
  const auto sched = Schedule::scaled_linear(100);
  diffusion::DenoiserTrainConfig tc;
  tc.steps = 2000;
  diffusion::train_denoiser(net, sched, zeros, tc, rng);
  const double mse = diffusion::evaluate_denoiser(net, sched, zeros, 20000, rng);
  EXPECT_LE(mse, 0.05 * 1.0);
}

TEST(Denoiser, LossDecreasesOnMixture) {
  Rng rng(6);
  diffusion::DenoiserConfig cfg;
  cfg.classes = 2;
  auto net = diffusion::DenoiserNet::create(cfg, rng);
  const auto trace =
      diffusion::train_denoiser(net, Schedule::scaled_linear(100), two_class_mixture(6, 300), {}, rng);
  ASSERT_EQ(trace.size(), 3000u);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 300; ++i) {
    first += trace[i];
    last += trace[2700 + i];
  }
  EXPECT_GT(first, last);
}

TEST(Denoiser, DivergenceAborts) {
  Rng rng(7);
  auto net = diffusion::DenoiserNet::create(diffusion::DenoiserConfig{}, rng);
  diffusion::DenoiserTrainConfig cfg;
  cfg.steps = 300;
  cfg.learning_rate = 1e4;
  EXPECT_THROW(diffusion::train_denoiser(net, Schedule::scaled_linear(100), two_class_mixture(7, 50), cfg, rng),
               TrainingDivergedError);
}

TEST(Sampling, BitReproducibleAndNoiseFreeLastStep) {
  Rng init(8);
  const auto net = diffusion::DenoiserNet::create(diffusion::DenoiserConfig{}, init);
  const auto sched = Schedule::scaled_linear(30);
  Rng a(9), b(9);
  EXPECT_EQ(diffusion::sample(net, sched, 5, 1, a), diffusion::sample(net, sched, 5, 1, b));
  EXPECT_EQ(a.next_u64(), b.next_u64());

  // t = 1 consumes no randomness.
  const Tensor x = Tensor::matrix({{0.1, 0.2}});
  const std::vector<std::size_t> label{0};
  Rng c(10), d(10);
  const Tensor y = diffusion::reverse_step(net, sched, x, 1, label, c);
  EXPECT_EQ(c.next_u64(), d.next_u64());
  EXPECT_EQ(y, diffusion::reverse_step(net, sched, x, 1, label, d));
}

TEST(Sampling, SinglePointDataConcentrates) {
  Rng rng(11);
  diffusion::DenoiserConfig cfg;
  cfg.classes = 1;
  auto net = diffusion::DenoiserNet::create(cfg, rng);
  Tensor pts(nd::Shape{64, 2});
  for (std::size_t i = 0; i < 64; ++i) {
    pts.at(i, 0) = 1.0;
    pts.at(i, 1) = -0.5;
  }
  const LabeledDataset data{pts, std::vector<std::size_t>(64, 0), 1, std::nullopt};
  const auto sched = Schedule::scaled_linear(100);
  diffusion::train_denoiser(net, sched, data, {}, rng);
  const Tensor s = diffusion::sample(net, sched, 1000, 0, rng);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    m0 += s.at(i, 0) / 1000.0;
    m1 += s.at(i, 1) / 1000.0;
  }
  EXPECT_NEAR(m0, 1.0, 0.05);
  EXPECT_NEAR(m1, -0.5, 0.05);
}
