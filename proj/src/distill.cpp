#include "igds/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "igds/error.hpp"
#include "igds/infotheory.hpp"

namespace igds::distill {

ScoredSet contextual_scores(const ve::VeModel& model, const ve::ClassifierHead& head, const ve::CentroidTable& table,
                            const LabeledDataset& data) {
  data.validate();
  const Tensor features = ve::encode(model, data.samples);
  const auto probs = ve::to_prob_vectors(ve::softmax_rows(features));
  const auto pred = ve::predict(model, head, data.samples);
  ScoredSet out;
  out.scores.resize(data.size());
  out.keep.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.scores[i] = info::kl_divergence(probs[i], table.centroid(data.labels[i])).value;
    out.keep[i] = pred[i] == data.labels[i];
  }
  return out;
}

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<bool>& keep,
                  const std::vector<std::size_t>& labels) {
  if (scores.size() != keep.size() || scores.size() != labels.size()) {
    throw StructuralError("weighted_subset: scores, mask and labels differ in length");
  }
}

}  // namespace

std::vector<double> selection_probabilities(const std::vector<double>& scores, const std::vector<bool>& keep,
                                            const std::vector<std::size_t>& labels, std::size_t cls, double alpha) {
  check_inputs(scores, keep, labels);
  std::vector<double> w(scores.size(), 0.0);
  // shift by the smallest squared distance so the peak weight is 1
  double best = INFINITY;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (keep[i] && labels[i] == cls) best = std::min(best, (scores[i] - alpha) * (scores[i] - alpha));
  }
  if (!std::isfinite(best)) return w;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (keep[i] && labels[i] == cls) {
      const double d = scores[i] - alpha;
      w[i] = std::exp(-(d * d - best));
      total += w[i];
    }
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<std::size_t> weighted_subset(const std::vector<double>& scores, const std::vector<bool>& keep,
                                         const std::vector<std::size_t>& labels, double alpha, std::size_t ipc,
                                         Rng& rng) {
  check_inputs(scores, keep, labels);
  if (ipc < 1) throw StructuralError("weighted_subset: ipc must be >= 1");
  std::size_t classes = 0;
  for (std::size_t y : labels) classes = std::max(classes, y + 1);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> w = selection_probabilities(scores, keep, labels, c, alpha);
    const std::size_t available = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) {
      return v > 0.0;
    }));
    std::size_t kept = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) kept += (keep[i] && labels[i] == c) ? 1 : 0;
    if (kept < ipc) {
      throw StructuralError("weighted_subset: class " + std::to_string(c) + " has " + std::to_string(kept) +
                            " kept samples, needs " + std::to_string(ipc));
    }
    if (available < ipc) {
      throw NumericDomainError("weighted_subset: class " + std::to_string(c) + " has kernel weights underflowing to 0");
    }
    for (std::size_t k = 0; k < ipc; ++k) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = rng.uniform() * total;
      std::size_t pick = w.size();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        pick = i;
        if (u < w[i]) break;
        u -= w[i];
      }
      out.push_back(pick);
      w[pick] = 0.0;
    }
  }
  return out;
}

double batch_contextual_score(const ve::VeModel& model, const Tensor& samples) {
  const auto probs = ve::to_prob_vectors(ve::softmax_rows(ve::encode(model, samples)));
  const info::ProbVector q = info::mean_of(probs);
  return info::mean_kl_to_centroid(probs, q);
}

DistilledSet assemble_distilled(const guidance::Models& models, const std::vector<std::size_t>& classes,
                                const guidance::GuidanceConfig& cfg, std::uint64_t seed,
                                std::vector<guidance::GuidanceTrace>* traces) {
  cfg.validate();
  const std::size_t d = models.denoiser->config.data_dim;
  DistilledSet out;
  out.data.num_classes = models.head->classes();
  out.data.samples = Tensor(nd::Shape{classes.size() * cfg.ipc, d});
  std::size_t row = 0;
  for (std::size_t c : classes) {
    guidance::GuidanceConfig per_class = cfg;
    per_class.target_class = c;
    Rng rng = Rng::derive(seed, {c});
    auto gen = guidance::igds_generate(models, per_class, rng);
    for (std::size_t i = 0; i < cfg.ipc; ++i, ++row) {
      auto src = gen.batch.samples.row(i);
      std::copy(src.begin(), src.end(), out.data.samples.row(row).begin());
      out.data.labels.push_back(c);
    }
    if (traces) traces->push_back(std::move(gen.trace));
  }
  out.provenance.beta = cfg.beta;
  out.provenance.eta = cfg.eta;
  out.provenance.ipc = cfg.ipc;
  out.provenance.seeds = {seed};
  out.provenance.generator = cfg.entropy_term ? "igds" : "igds-reduced";
  return out;
}

double evaluate_downstream(const LabeledDataset& train, const LabeledDataset& test, const DownstreamConfig& config,
                           Rng& rng) {
  train.validate();
  test.validate();
  if (train.size() == 0) throw StructuralError("evaluate_downstream: empty training set");
  if (train.dim() != test.dim()) throw StructuralError("evaluate_downstream: train/test dim mismatch");
  const std::size_t classes = std::max(train.num_classes, test.num_classes);
  nn::Mlp net = nn::Mlp::create({train.dim(), config.hidden, config.hidden, classes}, nn::Activation::Relu, 1.0, rng);
  nn::Adam adam(config.learning_rate);
  const auto params = net.parameters();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const LabeledDataset batch = train.subset(idx);
      nd::Graph g;
      const nn::BoundMlp bound = nn::bind(g, net, true, "clf");
      const nd::Var logits = nn::forward(bound, g.constant(batch.samples));
      Tensor target(nd::Shape{idx.size(), classes});
      for (std::size_t i = 0; i < idx.size(); ++i) target.at(i, batch.labels[i]) = 1.0;
      const nd::Var picked = nd::sum_last(nd::mul(logits, g.constant(target)));
      const nd::Var loss = nd::mean(nd::sub(nd::logsumexp(logits), picked));
      g.backward(loss);
      std::vector<Tensor> grads;
      for (const auto& p : bound.params) grads.push_back(g.grad(p));
      adam.step(params, grads);
    }
  }
  const auto pred = ve::argmax_rows(nn::infer(net, test.samples));
  return ve::accuracy(pred, test.labels);
}

}  // namespace igds::distill
