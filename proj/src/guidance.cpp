#include "igds/guidance.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "igds/error.hpp"
#include "igds/infotheory.hpp"

namespace igds::guidance {

void GuidanceConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw StructuralError("guidance: beta must be finite and >= 0");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw StructuralError("guidance: eta must be finite and >= 0");
  if (!(tau > 0.0)) throw StructuralError("guidance: tau must be > 0");
  if (ipc < 1) throw StructuralError("guidance: ipc must be >= 1");
}

LossVars build_igds_loss(Var features, Var logits, const GuidanceConfig& cfg) {
  cfg.validate();
  Graph& g = features.graph();
  const auto& fs = features.value();
  const auto& ls = logits.value();
  if (fs.rank() != 2 || ls.rank() != 2 || fs.rows() != ls.rows()) {
    throw StructuralError("igds_loss: features and logits must be [n, *] with equal n");
  }
  if (fs.rows() != cfg.ipc) {
    throw StructuralError("igds_loss: batch of " + std::to_string(fs.rows()) + " for ipc " + std::to_string(cfg.ipc));
  }
  const std::size_t classes = ls.cols();
  if (cfg.target_class >= classes) throw StructuralError("igds_loss: target class out of range");

  Tensor pick(nd::Shape{classes});
  pick[cfg.target_class] = 1.0;
  LossVars out;
  // log softmax at the target, averaged over the batch
  out.proto = nd::mean(nd::sub(nd::matmul(logits, g.constant(pick)), nd::logsumexp(logits)));

  if (cfg.entropy_term) {
    const Var pbar = nd::mean_rows(nd::softmax(logits));
    out.entropy = nd::scale(nd::sum(nd::mul(pbar, nd::log(pbar))), -1.0);
  } else {
    out.entropy = g.constant(Tensor::scalar(0.0));
  }

  const Var h = nd::softmax(nd::scale(features, 1.0 / cfg.tau));
  const Var q = nd::mean_rows(h);
  const Var kl_rows = nd::sum_last(nd::mul(h, nd::sub(nd::log(h), nd::log(q))));
  out.contextual = nd::mean(kl_rows);

  out.total = nd::add(nd::add(out.proto, out.entropy), nd::scale(out.contextual, cfg.beta));
  return out;
}

LossTerms igds_loss(const Tensor& features, const Tensor& logits, const GuidanceConfig& cfg) {
  Graph g;
  const LossVars v = build_igds_loss(g.constant(features), g.constant(logits), cfg);
  return {v.total.value().item(), v.proto.value().item(), v.entropy.value().item(), v.contextual.value().item()};
}

namespace {

double centroid_identity(const Tensor& features, double tau) {
  Tensor scaled = features;
  for (double& v : scaled.data()) v /= tau;
  const auto probs = ve::to_prob_vectors(ve::softmax_rows(scaled));
  const info::ProbVector q = info::mean_of(probs);
  double mean_h = 0.0;
  for (const auto& p : probs) mean_h += info::entropy(p);
  return info::entropy(q) - mean_h / static_cast<double>(probs.size());
}

void check_models(const Models& m) {
  if (!m.denoiser || !m.schedule || !m.ve || !m.head) throw StructuralError("guidance: missing model handle");
}

}  // namespace

LossAndGrad loss_and_grad(const Models& models, const Tensor& x, const GuidanceConfig& cfg) {
  check_models(models);
  Graph g;
  const Var xv = g.leaf("x", x, true);
  const nn::BoundMlp enc = nn::bind(g, models.ve->encoder, false, "encoder");
  const Var features = ve::encode(enc, xv);
  const Var logits = nd::matmul(features, g.constant(models.head->psi));
  const LossVars v = build_igds_loss(features, logits, cfg);
  g.backward(v.total);
  LossAndGrad out;
  out.terms = {v.total.value().item(), v.proto.value().item(), v.entropy.value().item(), v.contextual.value().item()};
  out.grad = g.grad(xv);
  out.centroid_identity = centroid_identity(features.value(), cfg.tau);
  return out;
}

Tensor igds_sample_step(const Tensor& x_t, std::size_t t, const Models& models, const GuidanceConfig& cfg, Rng& rng,
                        TraceRow* row) {
  check_models(models);
  const std::vector<std::size_t> labels(x_t.rows(), cfg.target_class);
  Tensor x = diffusion::reverse_step(*models.denoiser, *models.schedule, x_t, t, labels, rng);

  TraceRow local;
  local.step = t;
  if (cfg.eta > 0.0 || row) {
    LossAndGrad lg;
    try {
      lg = loss_and_grad(models, x, cfg);
    } catch (const NumericDomainError&) {
      // Non-finite features or logits: nothing to ascend on at this step.
      const double nan = std::numeric_limits<double>::quiet_NaN();
      local.terms = {nan, nan, nan, nan};
      local.grad_norm = nan;
      local.skipped = true;
      if (row) *row = local;
      return x;
    }
    local.terms = lg.terms;
    local.identity_gap = std::abs(lg.terms.contextual - lg.centroid_identity);
    double sq = 0.0;
    for (double v : lg.grad.data()) sq += v * v;
    local.grad_norm = std::sqrt(sq);
    if (!std::isfinite(local.grad_norm) || !std::isfinite(lg.terms.total)) {
      local.skipped = true;
    } else if (cfg.eta > 0.0) {
      const double step = cfg.scale_by_noise ? cfg.eta * models.schedule->sigma_tilde(t) : cfg.eta;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += step * lg.grad[i];
    }
  }
  if (row) *row = local;
  return x;
}

Generated igds_generate(const Models& models, const GuidanceConfig& cfg, Rng& rng) {
  cfg.validate();
  check_models(models);
  const std::size_t d = models.denoiser->config.data_dim;
  Tensor x = rng.normal_tensor({cfg.ipc, d});
  Generated out;
  out.trace.rows.reserve(models.schedule->steps());
  for (std::size_t t = models.schedule->steps(); t >= 1; --t) {
    TraceRow row;
    x = igds_sample_step(x, t, models, cfg, rng, &row);
    out.trace.rows.push_back(row);
  }
  out.batch.samples = std::move(x);
  out.batch.labels.assign(cfg.ipc, cfg.target_class);
  out.batch.num_classes = models.head->classes();
  return out;
}

double GuidanceTrace::max_identity_gap() const {
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.identity_gap);
  return worst;
}

std::size_t GuidanceTrace::skipped_steps() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.skipped ? 1 : 0;
  return n;
}

void GuidanceTrace::write_csv(std::ostream& out) const {
  out << "step,total,proto,entropy,contextual,grad_norm\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << r.step << ',' << r.terms.total << ',' << r.terms.proto << ',' << r.terms.entropy << ','
        << r.terms.contextual << ',' << r.grad_norm << '\n';
  }
  out.precision(old);
}

}  // namespace igds::guidance
