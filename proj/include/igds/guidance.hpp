#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "igds/diffusion.hpp"
#include "igds/rng.hpp"
#include "igds/ve.hpp"

namespace igds::guidance {

using nd::Graph;
using nd::Tensor;
using nd::Var;

struct GuidanceConfig {
  double beta = 0.1;
  double eta = 0.1;
  double tau = 0.07;
  std::size_t ipc = 1;
  std::size_t target_class = 0;
  /// Keep the entropy of the mean prediction in the objective. Off gives the
  /// reduced form log-likelihood + beta * contextual.
  bool entropy_term = true;
  /// Multiply eta by sigma_tilde_t at each step.
  bool scale_by_noise = true;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double proto = 0.0;       // mean log P(target | logits)
  double entropy = 0.0;     // entropy of the batch-mean prediction
  double contextual = 0.0;  // mean KL(H_i || Q)
};

struct LossVars {
  Var total, proto, entropy, contextual;
};

/// Graph form of the guidance objective on features [n, f] and logits [n, C].
LossVars build_igds_loss(Var features, Var logits, const GuidanceConfig& cfg);
LossTerms igds_loss(const Tensor& features, const Tensor& logits, const GuidanceConfig& cfg);

/// Frozen models the sampler reads. None of them is modified.
struct Models {
  const diffusion::DenoiserNet* denoiser = nullptr;
  const diffusion::Schedule* schedule = nullptr;
  const ve::VeModel* ve = nullptr;
  const ve::ClassifierHead* head = nullptr;
};

struct LossAndGrad {
  LossTerms terms;
  Tensor grad;  // d total / d x
  /// H(Q) - mean H(H_i) computed independently of the loss graph.
  double centroid_identity = 0.0;
};

/// Objective and its gradient with respect to the sample batch x [n, d].
LossAndGrad loss_and_grad(const Models& models, const Tensor& x, const GuidanceConfig& cfg);

struct TraceRow {
  std::size_t step = 0;
  LossTerms terms;
  double grad_norm = 0.0;
  /// |contextual - (H(Q) - mean H(H_i))|
  double identity_gap = 0.0;
  bool skipped = false;
};

struct GuidanceTrace {
  std::vector<TraceRow> rows;

  double max_identity_gap() const;
  std::size_t skipped_steps() const;
  void write_csv(std::ostream& out) const;
};

/// One guided reverse transition x_t -> x_{t-1}. With eta = 0 the rng use and
/// result equal diffusion::reverse_step exactly.
Tensor igds_sample_step(const Tensor& x_t, std::size_t t, const Models& models, const GuidanceConfig& cfg, Rng& rng,
                        TraceRow* row = nullptr);

struct Generated {
  LabeledDataset batch;  // ipc samples, all labeled target_class
  GuidanceTrace trace;
};

/// Full guided chain for one class, all ipc samples as one joint batch.
Generated igds_generate(const Models& models, const GuidanceConfig& cfg, Rng& rng);

}  // namespace igds::guidance
