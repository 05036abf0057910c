#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "igds/distill.hpp"
#include "igds/error.hpp"
#include "oracles.hpp"

using namespace igds;
using nd::Tensor;

namespace {

struct Scored {
  std::vector<double> scores;
  std::vector<bool> keep;
  std::vector<std::size_t> labels;
};

Scored two_classes() {
  Scored s;
  s.scores = {0.1, 0.4, 0.9, 0.05, 0.3, 0.6, 1.2, 0.8};
  s.keep = {true, true, true, true, true, false, true, true};
  s.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  return s;
}

LabeledDataset mixture(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  return make_synthetic_dataset(3, 1, n, 3.0, rng);
}

}  // namespace

TEST(SelectionProbabilities, NormalizedWithinClassAndPeaked) {
  const auto s = two_classes();
  for (std::size_t c = 0; c < 2; ++c) {
    const auto p = distill::selection_probabilities(s.scores, s.keep, s.labels, c, 0.5);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (s.labels[i] != c || !s.keep[i]) {
        EXPECT_EQ(p[i], 0.0);
      }
    }
  }
  const auto p = distill::selection_probabilities(s.scores, s.keep, s.labels, 0, 0.4);
  EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), 1);
  // Closed form of the kernel.
  double z = 0.0;
  for (std::size_t i : {0u, 1u, 2u, 3u}) z += std::exp(-std::pow(s.scores[i] - 0.4, 2));
  EXPECT_NEAR(p[2], std::exp(-std::pow(0.9 - 0.4, 2)) / z, 1e-15);
  // Masked sample 5 never wins even when alpha sits on its score.
  const auto q = distill::selection_probabilities(s.scores, s.keep, s.labels, 1, 0.6);
  EXPECT_EQ(q[5], 0.0);
}

TEST(WeightedSubset, FrequenciesMatchClosedForm) {
  const auto s = two_classes();
  const double alpha = 0.35;
  const auto p0 = distill::selection_probabilities(s.scores, s.keep, s.labels, 0, alpha);
  const auto p1 = distill::selection_probabilities(s.scores, s.keep, s.labels, 1, alpha);
  std::vector<double> counts(s.scores.size(), 0.0);
  Rng rng(1);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto idx = distill::weighted_subset(s.scores, s.keep, s.labels, alpha, 1, rng);
    ASSERT_EQ(idx.size(), 2u);
    EXPECT_EQ(s.labels[idx[0]], 0u);
    EXPECT_EQ(s.labels[idx[1]], 1u);
    for (auto k : idx) counts[k] += 1.0;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double p = s.labels[i] == 0 ? p0[i] : p1[i];
    EXPECT_NEAR(counts[i] / n, p, 3.0 * std::sqrt(p * (1 - p) / n) + 1e-12) << i;
  }
}

TEST(WeightedSubset, WithoutReplacement) {
  const auto s = two_classes();
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    auto idx = distill::weighted_subset(s.scores, s.keep, s.labels, 0.2, 3, rng);
    ASSERT_EQ(idx.size(), 6u);
    for (std::size_t k = 3; k < 6; ++k) EXPECT_NE(idx[k], 5u);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  }
}

TEST(WeightedSubset, FarAlphaPicksTopScores) {
  std::vector<double> scores;
  for (int i = 0; i < 12; ++i) scores.push_back(0.5 * ((i * 7) % 12));
  const std::vector<bool> keep(12, true);
  const std::vector<std::size_t> labels(12, 0);
  const double alpha = *std::max_element(scores.begin(), scores.end()) + 10.0;
  std::vector<std::size_t> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> top(order.begin(), order.begin() + 3);
  std::sort(top.begin(), top.end());
  Rng rng(3);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    auto idx = distill::weighted_subset(scores, keep, labels, alpha, 3, rng);
    std::sort(idx.begin(), idx.end());
    hits += idx == top ? 1 : 0;
  }
  EXPECT_GE(hits, 990);
}

TEST(WeightedSubset, MeanScoreMonotoneInAlpha) {
  Rng rng(4);
  std::vector<double> scores;
  for (int i = 0; i < 40; ++i) scores.push_back(rng.uniform(0.0, 2.0));
  const std::vector<bool> keep(40, true);
  const std::vector<std::size_t> labels(40, 0);
  double prev = -INFINITY;
  for (double alpha = 0.0; alpha <= 2.0 + 1e-9; alpha += 0.25) {
    double mean = 0.0;
    for (int d = 0; d < 2000; ++d)
      for (auto i : distill::weighted_subset(scores, keep, labels, alpha, 5, rng)) mean += scores[i];
    mean /= 2000.0 * 5.0;
    EXPECT_GE(mean, prev);
    prev = mean;
  }
}

TEST(WeightedSubset, Errors) {
  const auto s = two_classes();
  Rng rng(5);
  try {
    distill::weighted_subset(s.scores, s.keep, s.labels, 0.0, 4, rng);
    FAIL() << "expected an error";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
  }
  EXPECT_THROW(distill::weighted_subset(s.scores, std::vector<bool>(3, true), s.labels, 0.0, 1, rng), StructuralError);
  EXPECT_THROW(distill::weighted_subset(s.scores, s.keep, s.labels, 1e200, 2, rng), NumericDomainError);
}

TEST(ContextualScores, MaskAndJensenGap) {
  Rng rng(6);
  const auto model = ve::VeModel::create(ve::VeConfig{}, rng);
  ve::ClassifierHead head{rng.normal_tensor({16, 3})};
  const auto data = mixture(6, 30);
  const Tensor probs = ve::softmax_rows(ve::encode(model, data.samples));
  const auto table = ve::CentroidTable::from_batch(probs, data.labels, 16);
  const auto scored = distill::contextual_scores(model, head, table, data);
  const auto pred = ve::predict(model, head, data.samples);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(scored.keep[i], pred[i] == data.labels[i]);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> mean(16, 0.0);
    double h = 0.0, s = 0.0, n = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] != c) continue;
      const std::vector<double> p(probs.row(i).begin(), probs.row(i).end());
      for (std::size_t k = 0; k < 16; ++k) mean[k] += p[k];
      h += oracle::entropy(p);
      s += scored.scores[i];
      n += 1.0;
    }
    for (double& v : mean) v /= n;
    EXPECT_NEAR(s / n, oracle::entropy(mean) - h / n, 1e-10);
  }
}

TEST(ContextualScores, SampleAtCentroidScoresZero) {
  Rng rng(7);
  const auto model = ve::VeModel::create(ve::VeConfig{}, rng);
  ve::ClassifierHead head{rng.normal_tensor({16, 3})};
  const auto data = mixture(7, 1);
  const auto table = ve::CentroidTable::from_batch(ve::softmax_rows(ve::encode(model, data.samples)), data.labels, 16);
  for (double s : distill::contextual_scores(model, head, table, data).scores) EXPECT_EQ(s, 0.0);
}

namespace {

struct Frozen {
  diffusion::DenoiserNet denoiser;
  diffusion::Schedule schedule = diffusion::Schedule::scaled_linear(15);
  ve::VeModel ve;
  ve::ClassifierHead head;
  explicit Frozen(std::uint64_t seed) {
    Rng rng(seed);
    denoiser = diffusion::DenoiserNet::create(diffusion::DenoiserConfig{}, rng);
    ve = ve::VeModel::create(ve::VeConfig{}, rng);
    head.psi = rng.normal_tensor({16, 3});
  }
  guidance::Models models() const { return {&denoiser, &schedule, &ve, &head}; }
};

}  // namespace

TEST(Assemble, ShapeProvenanceAndDeterminism) {
  const Frozen m(8);
  guidance::GuidanceConfig cfg;
  cfg.ipc = 10;
  cfg.beta = 0.1;
  std::vector<guidance::GuidanceTrace> traces;
  const auto a = distill::assemble_distilled(m.models(), {0, 1, 2}, cfg, 42, &traces);
  EXPECT_EQ(a.data.size(), 30u);
  EXPECT_EQ(a.data.class_counts(), std::vector<std::size_t>({10, 10, 10}));
  EXPECT_EQ(a.provenance.ipc, 10u);
  EXPECT_EQ(a.provenance.beta, 0.1);
  EXPECT_EQ(traces.size(), 3u);
  const auto b = distill::assemble_distilled(m.models(), {0, 1, 2}, cfg, 42);
  EXPECT_EQ(a.data.samples, b.data.samples);
  EXPECT_EQ(a.data.labels, b.data.labels);
  const auto c = distill::assemble_distilled(m.models(), {0, 1, 2}, cfg, 43);
  EXPECT_NE(a.data.samples, c.data.samples);
}

TEST(BatchScore, IdenticalSamplesScoreZero) {
  Rng rng(9);
  const auto model = ve::VeModel::create(ve::VeConfig{}, rng);
  EXPECT_EQ(distill::batch_contextual_score(model, Tensor::matrix({{0.2, 0.1}, {0.2, 0.1}})), 0.0);
  EXPECT_GT(distill::batch_contextual_score(model, Tensor::matrix({{0.2, 0.1}, {-2.0, 1.0}})), 0.0);
}

TEST(Downstream, SeparableDataAndDeterminism) {
  const auto train = mixture(10, 200), test = mixture(11, 500);
  Rng a(12), b(12);
  const double acc = distill::evaluate_downstream(train, test, {}, a);
  EXPECT_GE(acc, 0.95);
  EXPECT_EQ(acc, distill::evaluate_downstream(train, test, {}, b));
}

TEST(Downstream, ShuffledLabelsGiveChance) {
  auto train = mixture(13, 200), test = mixture(14, 500);
  Rng rng(15);
  // Both sides shuffled: predictions carry no information about test labels.
  std::shuffle(train.labels.begin(), train.labels.end(), rng.engine());
  std::shuffle(test.labels.begin(), test.labels.end(), rng.engine());
  const double acc = distill::evaluate_downstream(train, test, {}, rng);
  EXPECT_NEAR(acc, 1.0 / 3.0, 0.07);
}
