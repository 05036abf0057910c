#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "igds/error.hpp"
#include "igds/guidance.hpp"
#include "igds/ndnum/grad_check.hpp"
#include "oracles.hpp"

using namespace igds;
using guidance::GuidanceConfig;
using nd::Tensor;

namespace {

struct Frozen {
  diffusion::DenoiserNet denoiser;
  diffusion::Schedule schedule = diffusion::Schedule::scaled_linear(20);
  ve::VeModel ve;
  ve::ClassifierHead head;

  explicit Frozen(std::uint64_t seed) {
    Rng rng(seed);
    denoiser = diffusion::DenoiserNet::create(diffusion::DenoiserConfig{}, rng);
    ve = ve::VeModel::create(ve::VeConfig{}, rng);
    head.psi = rng.normal_tensor({16, 3});
  }
  guidance::Models models() const { return {&denoiser, &schedule, &ve, &head}; }
  std::uint64_t checksum() const {
    std::vector<const Tensor*> all = denoiser.parameters();
    for (auto* p : ve.encoder.parameters()) all.push_back(p);
    for (auto* p : ve.momentum_encoder.parameters()) all.push_back(p);
    all.push_back(&head.psi);
    return nn::checksum(all);
  }
};

GuidanceConfig config(std::size_t ipc, double beta, double eta) {
  GuidanceConfig cfg;
  cfg.ipc = ipc;
  cfg.beta = beta;
  cfg.eta = eta;
  cfg.target_class = 1;
  return cfg;
}

}  // namespace

TEST(IgdsLoss, BetaZeroDropsContextualTerm) {
  Rng rng(1);
  const Tensor f = rng.normal_tensor({4, 16}), l = rng.normal_tensor({4, 3});
  const auto a = guidance::igds_loss(f, l, config(4, 0.0, 0.1));
  EXPECT_EQ(a.total, a.proto + a.entropy);
  const auto b = guidance::igds_loss(f, l, config(4, 0.7, 0.1));
  EXPECT_EQ(a.proto, b.proto);
  EXPECT_EQ(a.entropy, b.entropy);
  EXPECT_NEAR(b.total, b.proto + b.entropy + 0.7 * b.contextual, 1e-12);
}

TEST(IgdsLoss, TermsMatchOracles) {
  Rng rng(2);
  const Tensor f = rng.normal_tensor({5, 6}), l = rng.normal_tensor({5, 3});
  GuidanceConfig cfg = config(5, 0.3, 0.1);
  cfg.tau = 0.5;
  const auto t = guidance::igds_loss(f, l, cfg);
  double proto = 0.0;
  std::vector<double> pbar(3, 0.0), q(6, 0.0);
  std::vector<std::vector<double>> h;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto p = oracle::softmax({l.row(i).begin(), l.row(i).end()});
    proto += std::log(p[1]) / 5.0;
    for (std::size_t k = 0; k < 3; ++k) pbar[k] += p[k] / 5.0;
    std::vector<double> z(f.row(i).begin(), f.row(i).end());
    for (double& v : z) v /= 0.5;
    h.push_back(oracle::softmax(z));
    for (std::size_t k = 0; k < 6; ++k) q[k] += h.back()[k] / 5.0;
  }
  double ctx = 0.0;
  for (const auto& hi : h) ctx += oracle::kl(hi, q) / 5.0;
  EXPECT_NEAR(t.proto, proto, 1e-12);
  EXPECT_NEAR(t.entropy, oracle::entropy(pbar), 1e-12);
  EXPECT_NEAR(t.contextual, ctx, 1e-12);
}

TEST(IgdsLoss, IdenticalFeaturesGiveZeroContext) {
  const Tensor f = Tensor::matrix({{0.3, -0.3}, {0.3, -0.3}, {0.3, -0.3}});
  EXPECT_EQ(guidance::igds_loss(f, Tensor(nd::Shape{3, 3}), config(3, 1.0, 0.1)).contextual, 0.0);
}

TEST(IgdsLoss, OppositeOneHotGivesLog2) {
  GuidanceConfig cfg = config(2, 1.0, 0.1);
  cfg.tau = 1e-3;
  const Tensor f = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  EXPECT_NEAR(guidance::igds_loss(f, Tensor(nd::Shape{2, 3}), cfg).contextual, std::log(2.0), 1e-9);
}

TEST(IgdsLoss, ReducedFormHasNoEntropy) {
  Rng rng(3);
  GuidanceConfig cfg = config(3, 0.2, 0.1);
  cfg.entropy_term = false;
  const auto t = guidance::igds_loss(rng.normal_tensor({3, 4}), rng.normal_tensor({3, 3}), cfg);
  EXPECT_EQ(t.entropy, 0.0);
  EXPECT_NEAR(t.total, t.proto + 0.2 * t.contextual, 1e-12);
}

TEST(IgdsLoss, Errors) {
  Rng rng(4);
  EXPECT_THROW(guidance::igds_loss(rng.normal_tensor({3, 4}), rng.normal_tensor({3, 3}), config(2, 0.1, 0.1)),
               StructuralError);
  GuidanceConfig bad = config(3, 0.1, 0.1);
  bad.target_class = 5;
  EXPECT_THROW(guidance::igds_loss(rng.normal_tensor({3, 4}), rng.normal_tensor({3, 3}), bad), StructuralError);
  bad = config(3, -1.0, 0.1);
  EXPECT_THROW(bad.validate(), StructuralError);
  bad = config(3, 0.1, INFINITY);
  EXPECT_THROW(bad.validate(), StructuralError);
  bad = config(0, 0.1, 0.1);
  EXPECT_THROW(bad.validate(), StructuralError);
}

TEST(LossAndGrad, MatchesFiniteDifferences) {
  const Frozen m(5);
  Rng rng(6);
  for (double beta : {0.0, 0.1, 0.5}) {
    const auto cfg = config(4, beta, 0.1);
    const Tensor x = rng.normal_tensor({4, 2});
    const auto lg = guidance::loss_and_grad(m.models(), x, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-5;
      Tensor xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (guidance::loss_and_grad(m.models(), xp, cfg).terms.total -
                         guidance::loss_and_grad(m.models(), xm, cfg).terms.total) /
                        (2 * h);
      EXPECT_LE(std::abs(fd - lg.grad[i]) / std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-6}), 1e-4);
    }
  }
}

TEST(SampleStep, EtaZeroIsUnguidedBitwise) {
  const Frozen m(7);
  const auto cfg = config(3, 0.5, 0.0);
  Rng init(8);
  const Tensor x = init.normal_tensor({3, 2});
  const std::vector<std::size_t> labels(3, 1);
  for (std::size_t t : {1u, 7u, 20u}) {
    Rng a(9), b(9);
    guidance::TraceRow row;
    EXPECT_EQ(guidance::igds_sample_step(x, t, m.models(), cfg, a, &row),
              diffusion::reverse_step(m.denoiser, m.schedule, x, t, labels, b));
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  Rng a(10), b(10);
  const auto gen = guidance::igds_generate(m.models(), cfg, a);
  EXPECT_EQ(gen.batch.samples, diffusion::sample(m.denoiser, m.schedule, 3, 1, b));
}

TEST(SampleStep, SmallStepAscends) {
  const Frozen m(11);
  Rng init(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = config(4, 0.1, 1e-3);
    cfg.scale_by_noise = false;
    const Tensor x_t = init.normal_tensor({4, 2});
    const std::size_t t = 10;
    Rng a(100 + trial), b(100 + trial);
    const Tensor guided = guidance::igds_sample_step(x_t, t, m.models(), cfg, a);
    const Tensor plain = diffusion::reverse_step(m.denoiser, m.schedule, x_t, t, std::vector<std::size_t>(4, 1), b);
    EXPECT_GE(guidance::loss_and_grad(m.models(), guided, cfg).terms.total,
              guidance::loss_and_grad(m.models(), plain, cfg).terms.total);
  }
}

TEST(Generate, TraceShapeIdentityAndFrozenModels) {
  const Frozen m(13);
  const auto before = m.checksum();
  Rng rng(14);
  const auto gen = guidance::igds_generate(m.models(), config(5, 0.5, 0.5), rng);
  EXPECT_EQ(m.checksum(), before);
  EXPECT_EQ(gen.batch.samples.shape(), nd::Shape({5, 2}));
  EXPECT_EQ(gen.batch.labels, std::vector<std::size_t>(5, 1));
  ASSERT_EQ(gen.trace.rows.size(), 20u);
  EXPECT_EQ(gen.trace.rows.front().step, 20u);
  EXPECT_EQ(gen.trace.rows.back().step, 1u);
  EXPECT_LE(gen.trace.max_identity_gap(), 1e-10);
  EXPECT_EQ(gen.trace.skipped_steps(), 0u);
  for (const auto& r : gen.trace.rows) {
    EXPECT_NEAR(r.terms.total, r.terms.proto + r.terms.entropy + 0.5 * r.terms.contextual, 1e-12);
  }

  std::ostringstream csv;
  gen.trace.write_csv(csv);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "step,total,proto,entropy,contextual,grad_norm");
  std::size_t n = 0;
  for (std::string l; std::getline(lines, l);) ++n;
  EXPECT_EQ(n, 20u);
}

TEST(Generate, NonFiniteGradientIsSkipped) {
  Frozen m(15);
  m.head.psi[0] = INFINITY;
  Rng rng(16);
  const auto gen = guidance::igds_generate(m.models(), config(2, 0.1, 0.1), rng);
  EXPECT_EQ(gen.trace.skipped_steps(), gen.trace.rows.size());
}

TEST(Generate, SameSeedSameBatch) {
  const Frozen m(17);
  Rng a(18), b(18);
  EXPECT_EQ(guidance::igds_generate(m.models(), config(3, 0.1, 0.3), a).batch.samples,
            guidance::igds_generate(m.models(), config(3, 0.1, 0.3), b).batch.samples);
}
