#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "igds/diffusion.hpp"
#include "igds/guidance.hpp"
#include "igds/infotheory.hpp"
#include "igds/ndnum/grad_check.hpp"
#include "igds/rng.hpp"

namespace igds::tools {
namespace {

using nd::Tensor;

info::DiscreteJoint random_joint(Rng& rng, std::size_t nx, std::size_t ny) {
  std::vector<double> w(nx * ny);
  for (double& v : w) v = rng.uniform() + 1e-3;
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return info::DiscreteJoint(nx, ny, w);
}

bool entropy_decomposition() {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto j = random_joint(rng, 2 + rng.index(5), 2 + rng.index(5));
    const double gap = info::entropy(j.marginal_x()) - info::mutual_information(j) - info::conditional_entropy(j);
    if (std::abs(gap) > 1e-10) return false;
  }
  return true;
}

bool kl_example() {
  const double kl = info::kl_divergence(info::ProbVector({0.75, 0.25}), info::ProbVector({0.5, 0.5})).value;
  return std::abs(kl - (0.75 * std::log(1.5) + 0.25 * std::log(0.5))) < 1e-12;
}

bool centroid_identity() {
  Rng rng(12);
  for (int b = 0; b < 50; ++b) {
    std::vector<info::ProbVector> ps;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> w(6);
      for (double& v : w) v = rng.uniform() + 1e-3;
      ps.push_back(info::ProbVector::normalized(w));
    }
    const auto q = info::mean_of(ps);
    double mean_h = 0.0;
    for (const auto& p : ps) mean_h += info::entropy(p) / static_cast<double>(ps.size());
    if (std::abs(info::mean_kl_to_centroid(ps, q) - (info::entropy(q) - mean_h)) > 1e-10) return false;
  }
  return true;
}

bool softmax_gradients() {
  Rng rng(13);
  nd::Graph g;
  const auto x = g.leaf("x", rng.normal_tensor({4, 5}), true);
  const auto y = nd::sum(nd::mul(nd::softmax(x), nd::log(nd::softmax(nd::scale(x, 2.0)))));
  return nd::grad_check(g, y, x, 1e-5, 1e-4).passed;
}

bool schedule_example() {
  const auto s = diffusion::build_schedule(1000, 1e-4, 0.02);
  double prod = 1.0;
  for (std::size_t t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * static_cast<double>(t - 1) / 999.0);
  return std::abs(s.alpha_bar(1000) - prod) < 1e-15 && s.sigma_tilde(1) == 0.0;
}

bool contextual_term_example() {
  guidance::GuidanceConfig cfg;
  cfg.ipc = 2;
  cfg.beta = 1.0;
  cfg.tau = 1e-3;
  const Tensor features = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  const Tensor logits = Tensor::matrix({{0.0, 0.0}, {0.0, 0.0}});
  return std::abs(guidance::igds_loss(features, logits, cfg).contextual - std::log(2.0)) < 1e-9;
}

}  // namespace

int run_selftest() {
  const std::vector<std::pair<std::string, std::function<bool()>>> checks{
      {"entropy decomposition on 200 random joints", entropy_decomposition},
      {"KL([0.75,0.25] || uniform)", kl_example},
      {"mean KL to centroid equals entropy gap", centroid_identity},
      {"softmax/log gradient against central differences", softmax_gradients},
      {"alpha_bar of the 1000-step linear schedule", schedule_example},
      {"contextual term of opposite one-hot features", contextual_term_example},
  };
  std::size_t failed = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "  %s threw: %s\n", name.c_str(), e.what());
    }
    std::printf("%s  %s\n", ok ? "PASS" : "FAIL", name.c_str());
    failed += ok ? 0 : 1;
  }
  std::printf("%zu/%zu checks passed\n", checks.size() - failed, checks.size());
  return failed == 0 ? 0 : 2;
}

}  // namespace igds::tools
