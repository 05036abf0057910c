#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "igds/dataset.hpp"
#include "igds/infotheory.hpp"
#include "igds/ndnum/nn.hpp"
#include "igds/rng.hpp"

namespace igds::ve {

using nd::Graph;
using nd::Tensor;
using nd::Var;

/// Target of the KL term in the estimator loss.
enum class KlTarget {
  ClassCentroid,  // running per-class centroid Q^y (needs labels)
  TwoViewMean,    // (softmax(q) + softmax(k)) / 2, label-free
};

enum class CentroidMode { Batch, Ema };

struct VeConfig {
  std::size_t input_dim = 2;
  std::size_t hidden = 64;
  std::size_t feature_dim = 16;
  double softplus_sharpness = 3.0;
  double lambda = 0.1;
  std::size_t queue_size = 256;
  double momentum = 0.99;
  double temperature = 0.07;
  double learning_rate = 1e-2;
  KlTarget kl_target = KlTarget::ClassCentroid;
  /// Unit-normalize query and key before the contrastive logits.
  bool normalize_contrastive = true;
  double centroid_decay = 0.99;
  // Augmentation for 2-D points.
  double jitter_std = 0.05;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

/// FIFO ring of key vectors.
class FeatureQueue {
 public:
  FeatureQueue() = default;
  FeatureQueue(std::size_t capacity, std::size_t dim);

  /// Appends rows of keys [n, dim], dropping the oldest beyond capacity.
  void push(const Tensor& keys);
  /// Entries oldest first, shape [size, dim].
  Tensor entries() const;
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  bool full() const { return count_ == capacity_; }

  /// Raw ring state for checkpoints.
  const Tensor& storage() const { return storage_; }
  std::size_t head() const { return head_; }
  static FeatureQueue restore(Tensor storage, std::size_t head, std::size_t count);

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::size_t head_ = 0;  // index of the oldest entry
  std::size_t count_ = 0;
  Tensor storage_;
};

/// Per-class centroid Q^y of softmaxed features.
class CentroidTable {
 public:
  CentroidTable() = default;
  CentroidTable(std::size_t dim, CentroidMode mode, double decay = 0.99);

  /// Batch mode: count-weighted running mean. Ema mode: Q <- d Q + (1-d) p per sample.
  /// Unseen classes start from the uniform distribution.
  void update(const Tensor& probs, std::span<const std::size_t> labels);
  static CentroidTable from_batch(const Tensor& probs, std::span<const std::size_t> labels, std::size_t dim);

  bool contains(std::size_t y) const { return entries_.count(y) > 0; }
  /// Centroid for y, uniform if y has not been seen.
  info::ProbVector centroid(std::size_t y) const;
  std::size_t count(std::size_t y) const;
  std::vector<std::size_t> classes() const;

  std::size_t dim() const { return dim_; }
  CentroidMode mode() const { return mode_; }
  double decay() const { return decay_; }

  struct Entry {
    std::vector<double> q;
    std::size_t count = 0;
  };
  const std::map<std::size_t, Entry>& entries() const { return entries_; }
  void set_entry(std::size_t y, Entry entry) { entries_[y] = std::move(entry); }

 private:
  std::size_t dim_ = 0;
  CentroidMode mode_ = CentroidMode::Batch;
  double decay_ = 0.99;
  std::map<std::size_t, Entry> entries_;
};

struct VeModel {
  VeConfig config;
  nn::Mlp encoder;
  nn::Mlp momentum_encoder;
  FeatureQueue queue;
  CentroidTable centroids;

  /// Encoder 2 -> hidden -> hidden -> feature_dim with SoftPlus; the momentum
  /// encoder starts as an exact copy.
  static VeModel create(const VeConfig& config, Rng& rng);
};

/// Encoder output with the per-vector mean removed.
Var encode(const nn::BoundMlp& encoder, Var x);
Tensor encode(const nn::Mlp& encoder, const Tensor& x);
Tensor encode(const VeModel& model, const Tensor& x);

/// Row-wise softmax of a [n, f] tensor.
Tensor softmax_rows(const Tensor& x);
std::vector<info::ProbVector> to_prob_vectors(const Tensor& probs);

/// Per-axis random scale then additive Gaussian jitter.
Tensor augment(const VeConfig& config, const Tensor& x, Rng& rng);

/// Loss graph of one training step, exposed for inspection and gradient checks.
struct VeLoss {
  Var loss;         // contrastive - lambda * kl
  Var contrastive;  // InfoNCE cross-entropy, positive at index 0
  Var kl;           // mean KL(softmax(q) || target)
  Var query;        // centered encoder output for the query view
  Var keys;         // constant key features (blocked)
  Var negatives;    // constant queue entries (blocked)
  std::size_t negative_count = 0;
};

VeLoss build_ve_loss(Graph& graph, const nn::BoundMlp& encoder, const VeModel& model, Var query_input,
                     const Tensor& key_input, std::span<const std::size_t> labels);

struct VeStepResult {
  double loss = 0.0;
  double contrastive = 0.0;
  double kl = 0.0;
  std::size_t negatives = 0;
  bool queue_underfilled = false;
};

/// One step: two augmented views, SGD on the query encoder, momentum update,
/// enqueue keys, update class centroids.
VeStepResult ve_train_step(VeModel& model, const Tensor& batch, std::span<const std::size_t> labels, Rng& rng);

/// f_m <- m f_m + (1 - m) f_theta.
void momentum_update(VeModel& model);

/// Runs `steps` minibatch steps; returns the per-step loss trace.
std::vector<double> train_ve(VeModel& model, const LabeledDataset& data, std::size_t steps, std::size_t batch_size,
                             Rng& rng);

/// Linear head psi [feature_dim, C]; logits = features * psi.
struct ClassifierHead {
  Tensor psi;

  static ClassifierHead zeros(std::size_t feature_dim, std::size_t classes);
  std::size_t classes() const { return psi.dim(1); }
};

struct HeadTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
};

struct HeadTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double accuracy = 0.0;
  std::size_t rank = 0;
  std::vector<double> singular_values;
  bool rank_deficient = false;
};

/// Cross-entropy training of the head on frozen features.
HeadTrainReport train_classifier(const VeModel& model, ClassifierHead& head, const LabeledDataset& data,
                                 const HeadTrainConfig& config, Rng& rng);

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
std::vector<std::size_t> argmax_rows(const Tensor& logits);
std::vector<std::size_t> predict(const VeModel& model, const ClassifierHead& head, const Tensor& x);
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

std::vector<double> singular_values(const Tensor& m);
/// Number of singular values above `threshold`.
std::size_t column_rank(const Tensor& m, double threshold = 1e-8);

struct PrototypeBound {
  /// H(Y_hat) + E log P(Y_hat | Y); the canonical estimate.
  double value = 0.0;
  /// H(Y) + E log P(Y | Y_hat).
  double label_form = 0.0;
  double prediction_entropy = 0.0;
  double label_entropy = 0.0;
};

/// Both bound forms from one-hot empirical counts of (label, prediction).
PrototypeBound prototype_bound_from_predictions(std::span<const std::size_t> labels,
                                                std::span<const std::size_t> predicted, std::size_t classes);

PrototypeBound prototype_info_bounds(const VeModel& model, const ClassifierHead& head, const LabeledDataset& data);
double prototype_info_lb(const VeModel& model, const ClassifierHead& head, const LabeledDataset& data);

/// E KL(p_i || Q^{y_i}) over samples whose class has a centroid in `table`
/// and at least one sample.
double contextual_info_from_probs(const Tensor& probs, std::span<const std::size_t> labels, const CentroidTable& table);

/// Contextual bound against the given table.
double contextual_info_lb(const VeModel& model, const CentroidTable& table, const LabeledDataset& data);
/// Contextual bound with centroids recomputed in batch mode from `data`.
double contextual_info_lb(const VeModel& model, const LabeledDataset& data);

}  // namespace igds::ve
