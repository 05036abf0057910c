#include "igds/ve.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "igds/error.hpp"

namespace igds::ve {
namespace {

Tensor normalize_rows(const Tensor& x) {
  Graph g;
  return nd::l2_normalize(g.constant(x)).value();
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  Tensor out(nd::Shape{idx.size(), x.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor out(nd::Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw StructuralError("label " + std::to_string(labels[i]) + " out of range");
    out.at(i, labels[i]) = 1.0;
  }
  return out;
}

// Mean cross-entropy of softmax(logits) against integer labels.
Var cross_entropy_var(Var logits, std::span<const std::size_t> labels) {
  Graph& g = logits.graph();
  const Var target = g.constant(one_hot(labels, logits.value().cols()));
  const Var picked = nd::sum_last(nd::mul(logits, target));
  return nd::mean(nd::sub(nd::logsumexp(logits), picked));
}

}  // namespace

// --- FeatureQueue -----------------------------------------------------------

FeatureQueue::FeatureQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), storage_(nd::Shape{capacity, dim}) {
  if (capacity == 0 || dim == 0) throw StructuralError("FeatureQueue: capacity and dim must be positive");
}

void FeatureQueue::push(const Tensor& keys) {
  if (keys.cols() != dim_) throw StructuralError("FeatureQueue::push: key dim mismatch");
  for (std::size_t r = 0; r < keys.rows(); ++r) {
    const std::size_t slot = (head_ + count_) % capacity_;
    auto src = keys.row(r);
    std::copy(src.begin(), src.end(), storage_.row(slot).begin());
    if (count_ < capacity_) {
      ++count_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }
}

Tensor FeatureQueue::entries() const {
  Tensor out(nd::Shape{count_, dim_});
  for (std::size_t i = 0; i < count_; ++i) {
    auto src = storage_.row((head_ + i) % capacity_);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

FeatureQueue FeatureQueue::restore(Tensor storage, std::size_t head, std::size_t count) {
  if (storage.rank() != 2) throw StructuralError("FeatureQueue::restore: storage must be a matrix");
  FeatureQueue q(storage.dim(0), storage.dim(1));
  if (head >= q.capacity_ || count > q.capacity_) throw StructuralError("FeatureQueue::restore: bad ring state");
  q.storage_ = std::move(storage);
  q.head_ = head;
  q.count_ = count;
  return q;
}

// --- CentroidTable ----------------------------------------------------------

CentroidTable::CentroidTable(std::size_t dim, CentroidMode mode, double decay) : dim_(dim), mode_(mode), decay_(decay) {
  if (dim == 0) throw StructuralError("CentroidTable: dim must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw StructuralError("CentroidTable: decay must lie in (0,1)");
}

void CentroidTable::update(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.cols() != dim_ || probs.rows() != labels.size()) {
    throw StructuralError("CentroidTable::update: shape mismatch");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    // Validates the row as a probability vector.
    const info::ProbVector p(std::vector<double>(probs.row(i).begin(), probs.row(i).end()));
    auto [it, inserted] = entries_.try_emplace(labels[i]);
    Entry& e = it->second;
    if (inserted) e.q.assign(dim_, 1.0 / static_cast<double>(dim_));
    if (mode_ == CentroidMode::Batch && e.count == 0) {
      e.q.assign(p.values().begin(), p.values().end());
    } else if (mode_ == CentroidMode::Batch) {
      const double w = 1.0 / static_cast<double>(e.count + 1);
      for (std::size_t j = 0; j < dim_; ++j) e.q[j] += w * (p[j] - e.q[j]);
    } else {
      for (std::size_t j = 0; j < dim_; ++j) e.q[j] = decay_ * e.q[j] + (1.0 - decay_) * p[j];
    }
    ++e.count;
  }
}

CentroidTable CentroidTable::from_batch(const Tensor& probs, std::span<const std::size_t> labels, std::size_t dim) {
  CentroidTable table(dim, CentroidMode::Batch);
  table.update(probs, labels);
  return table;
}

info::ProbVector CentroidTable::centroid(std::size_t y) const {
  const auto it = entries_.find(y);
  if (it == entries_.end()) return info::ProbVector::uniform(dim_);
  return info::ProbVector(it->second.q);
}

std::size_t CentroidTable::count(std::size_t y) const {
  const auto it = entries_.find(y);
  return it == entries_.end() ? 0 : it->second.count;
}

std::vector<std::size_t> CentroidTable::classes() const {
  std::vector<std::size_t> out;
  for (const auto& [y, e] : entries_) out.push_back(y);
  return out;
}

// --- model ------------------------------------------------------------------

VeModel VeModel::create(const VeConfig& config, Rng& rng) {
  if (!(config.temperature > 0.0)) throw StructuralError("VeConfig: temperature must be positive");
  if (!(config.momentum > 0.0 && config.momentum < 1.0)) throw StructuralError("VeConfig: momentum must lie in (0,1)");
  if (config.lambda < 0.0) throw StructuralError("VeConfig: lambda must be nonnegative");
  VeModel model;
  model.config = config;
  model.encoder = nn::Mlp::create({config.input_dim, config.hidden, config.hidden, config.feature_dim},
                                  nn::Activation::Softplus, config.softplus_sharpness, rng);
  model.momentum_encoder = model.encoder;
  model.queue = FeatureQueue(config.queue_size, config.feature_dim);
  model.centroids = CentroidTable(config.feature_dim, CentroidMode::Ema, config.centroid_decay);
  return model;
}

Var encode(const nn::BoundMlp& encoder, Var x) { return nd::center(nn::forward(encoder, x)); }

Tensor encode(const nn::Mlp& encoder, const Tensor& x) {
  Graph g;
  const nn::BoundMlp bound = nn::bind(g, encoder, false, "encoder");
  return encode(bound, g.constant(x)).value();
}

Tensor encode(const VeModel& model, const Tensor& x) { return encode(model.encoder, x); }

Tensor softmax_rows(const Tensor& x) {
  Graph g;
  return nd::softmax(g.constant(x)).value();
}

std::vector<info::ProbVector> to_prob_vectors(const Tensor& probs) {
  std::vector<info::ProbVector> out;
  out.reserve(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    out.emplace_back(std::vector<double>(probs.row(r).begin(), probs.row(r).end()));
  }
  return out;
}

Tensor augment(const VeConfig& config, const Tensor& x, Rng& rng) {
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) {
      const double s = rng.uniform(config.scale_lo, config.scale_hi);
      v = s * v + config.jitter_std * rng.normal();
    }
  }
  return out;
}

VeLoss build_ve_loss(Graph& graph, const nn::BoundMlp& encoder, const VeModel& model, Var query_input,
                     const Tensor& key_input, std::span<const std::size_t> labels) {
  const VeConfig& cfg = model.config;
  const std::size_t batch = query_input.value().rows();
  if (batch == 0) throw StructuralError("build_ve_loss: empty batch");
  if (key_input.rows() != batch) throw StructuralError("build_ve_loss: view batch sizes differ");
  if (cfg.kl_target == KlTarget::ClassCentroid && labels.size() != batch) {
    throw StructuralError("build_ve_loss: class-centroid target needs one label per sample");
  }

  VeLoss out;
  out.query = encode(encoder, query_input);

  // Key and queue leaves are marked differentiable but enter the loss through
  // detach, so their gradients are identically zero.
  out.keys = graph.leaf("keys", encode(model.momentum_encoder, key_input), true);
  const Var keys = nd::detach(out.keys);
  const Tensor queue = model.queue.entries();
  out.negative_count = queue.rows();
  out.negatives = graph.leaf("queue", queue.rows() > 0 ? queue.transposed() : Tensor(nd::Shape{cfg.feature_dim, 0}),
                             true);

  const Var q = cfg.normalize_contrastive ? nd::l2_normalize(out.query) : out.query;
  const Var k = cfg.normalize_contrastive ? nd::l2_normalize(keys) : keys;
  const double inv_tau = 1.0 / cfg.temperature;
  const Var l_pos = nd::inner(q, k);
  Var logits = nd::reshape(l_pos, {batch, 1});
  if (out.negative_count > 0) {
    logits = nd::concat({logits, nd::matmul(q, nd::detach(out.negatives))});
  }
  out.contrastive = nd::mean(nd::sub(nd::logsumexp(nd::scale(logits, inv_tau)), nd::scale(l_pos, inv_tau)));

  const Var h_q = nd::softmax(out.query);
  Var target;
  if (cfg.kl_target == KlTarget::ClassCentroid) {
    Tensor q_rows(nd::Shape{batch, cfg.feature_dim});
    for (std::size_t i = 0; i < batch; ++i) {
      const info::ProbVector c = model.centroids.centroid(labels[i]);
      std::copy(c.values().begin(), c.values().end(), q_rows.row(i).begin());
    }
    target = graph.constant(std::move(q_rows));
  } else {
    target = nd::scale(nd::add(h_q, nd::softmax(keys)), 0.5);
  }
  out.kl = nd::mean(nd::sum_last(nd::mul(h_q, nd::sub(nd::log(h_q), nd::log(target)))));
  out.loss = nd::sub(out.contrastive, nd::scale(out.kl, cfg.lambda));
  return out;
}

void momentum_update(VeModel& model) {
  const double m = model.config.momentum;
  auto target = model.momentum_encoder.parameters();
  const auto source = std::as_const(model.encoder).parameters();
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target[i]->data();
    auto s = source[i]->data();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = m * t[j] + (1.0 - m) * s[j];
  }
}

VeStepResult ve_train_step(VeModel& model, const Tensor& batch, std::span<const std::size_t> labels, Rng& rng) {
  if (batch.rows() == 0) throw StructuralError("ve_train_step: empty batch");
  const Tensor x_q = augment(model.config, batch, rng);
  const Tensor x_k = augment(model.config, batch, rng);

  Graph g;
  const nn::BoundMlp bound = nn::bind(g, model.encoder, true, "encoder");
  const VeLoss loss = build_ve_loss(g, bound, model, g.constant(x_q), x_k, labels);

  VeStepResult result;
  result.loss = loss.loss.value().item();
  result.contrastive = loss.contrastive.value().item();
  result.kl = loss.kl.value().item();
  result.negatives = loss.negative_count;
  result.queue_underfilled = !model.queue.full();

  g.backward(loss.loss);
  std::vector<Tensor> grads;
  for (const Var& p : bound.params) grads.push_back(g.grad(p));
  const auto params = model.encoder.parameters();
  nn::Sgd(model.config.learning_rate).step(params, grads);

  momentum_update(model);
  const Tensor& keys = loss.keys.value();
  model.queue.push(model.config.normalize_contrastive ? normalize_rows(keys) : keys);
  if (!labels.empty()) model.centroids.update(softmax_rows(loss.query.value()), labels);
  return result;
}

std::vector<double> train_ve(VeModel& model, const LabeledDataset& data, std::size_t steps, std::size_t batch_size,
                             Rng& rng) {
  data.validate();
  if (data.size() == 0) throw StructuralError("train_ve: empty dataset");
  std::vector<double> trace;
  trace.reserve(steps);
  std::vector<std::size_t> idx(batch_size);
  std::vector<std::size_t> labels(batch_size);
  const bool use_labels = model.config.kl_target == KlTarget::ClassCentroid;
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      idx[i] = rng.index(data.size());
      labels[i] = data.labels[idx[i]];
    }
    const Tensor batch = gather_rows(data.samples, idx);
    const auto step = ve_train_step(model, batch, use_labels ? std::span<const std::size_t>(labels)
                                                              : std::span<const std::size_t>(), rng);
    trace.push_back(step.loss);
  }
  return trace;
}

// --- classifier head ----------------------------------------------------------

ClassifierHead ClassifierHead::zeros(std::size_t feature_dim, std::size_t classes) {
  return ClassifierHead{Tensor(nd::Shape{feature_dim, classes})};
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  Graph g;
  return cross_entropy_var(g.constant(logits), labels).value().item();
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<std::size_t> predict(const VeModel& model, const ClassifierHead& head, const Tensor& x) {
  Graph g;
  const Var logits = nd::matmul(g.constant(encode(model, x)), g.constant(head.psi));
  return argmax_rows(logits.value());
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw StructuralError("accuracy: size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> singular_values(const Tensor& m) {
  if (m.rank() != 2) throw StructuralError("singular_values: matrix required");
  Eigen::MatrixXd a(m.dim(0), m.dim(1));
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.at(i, j);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::VectorXd s = svd.singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

std::size_t column_rank(const Tensor& m, double threshold) {
  const auto s = singular_values(m);
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v > threshold; }));
}

HeadTrainReport train_classifier(const VeModel& model, ClassifierHead& head, const LabeledDataset& data,
                                 const HeadTrainConfig& config, Rng& rng) {
  data.validate();
  if (data.size() == 0) throw StructuralError("train_classifier: empty dataset");
  const Tensor features = encode(model, data.samples);
  if (head.psi.dim(0) != features.cols()) throw StructuralError("train_classifier: head/feature dim mismatch");

  auto full_loss = [&] {
    Graph g;
    return cross_entropy_var(nd::matmul(g.constant(features), g.constant(head.psi)), data.labels).value().item();
  };

  HeadTrainReport report;
  report.initial_loss = full_loss();
  nn::Adam adam(config.learning_rate);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor* psi = &head.psi;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(data.labels[i]);
      Graph g;
      const Var w = g.leaf("psi", head.psi, true);
      const Var loss = cross_entropy_var(nd::matmul(g.constant(gather_rows(features, idx)), w), labels);
      g.backward(loss);
      const Tensor grad = g.grad(w);
      adam.step(std::span<Tensor* const>(&psi, 1), std::span<const Tensor>(&grad, 1));
    }
  }
  report.final_loss = full_loss();
  Graph g;
  const auto pred = argmax_rows(nd::matmul(g.constant(features), g.constant(head.psi)).value());
  report.accuracy = accuracy(pred, data.labels);
  report.singular_values = singular_values(head.psi);
  report.rank = column_rank(head.psi);
  report.rank_deficient = report.rank < std::min(head.psi.dim(0), head.psi.dim(1));
  return report;
}

// --- bounds -------------------------------------------------------------------

PrototypeBound prototype_bound_from_predictions(std::span<const std::size_t> labels,
                                                std::span<const std::size_t> predicted, std::size_t classes) {
  if (labels.empty()) throw StructuralError("prototype bound: empty data");
  if (labels.size() != predicted.size()) throw StructuralError("prototype bound: size mismatch");
  std::vector<double> joint(classes * classes, 0.0);
  std::vector<double> by_label(classes, 0.0);
  std::vector<double> by_pred(classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predicted[i] >= classes) throw StructuralError("prototype bound: class out of range");
    joint[labels[i] * classes + predicted[i]] += 1.0;
    by_label[labels[i]] += 1.0;
    by_pred[predicted[i]] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double ll_pred_given_label = 0.0;
  double ll_label_given_pred = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double c = joint[labels[i] * classes + predicted[i]];
    ll_pred_given_label += std::log(std::max(c / by_label[labels[i]], nd::kLogFloor));
    ll_label_given_pred += std::log(std::max(c / by_pred[predicted[i]], nd::kLogFloor));
  }
  PrototypeBound b;
  b.prediction_entropy = info::entropy(info::ProbVector::normalized(by_pred));
  b.label_entropy = info::entropy(info::ProbVector::normalized(by_label));
  b.value = b.prediction_entropy + ll_pred_given_label / n;
  b.label_form = b.label_entropy + ll_label_given_pred / n;
  return b;
}

PrototypeBound prototype_info_bounds(const VeModel& model, const ClassifierHead& head, const LabeledDataset& data) {
  data.validate();
  if (data.size() == 0) throw StructuralError("prototype_info_lb: empty data");
  const auto pred = predict(model, head, data.samples);
  return prototype_bound_from_predictions(data.labels, pred, std::max(head.classes(), data.num_classes));
}

double prototype_info_lb(const VeModel& model, const ClassifierHead& head, const LabeledDataset& data) {
  return prototype_info_bounds(model, head, data).value;
}

double contextual_info_from_probs(const Tensor& probs, std::span<const std::size_t> labels, const CentroidTable& table) {
  if (probs.rows() != labels.size()) throw StructuralError("contextual bound: size mismatch");
  double total = 0.0;
  std::size_t used = 0;
  std::map<std::size_t, info::ProbVector> cache;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!table.contains(labels[i]) || table.count(labels[i]) == 0) continue;
    auto it = cache.find(labels[i]);
    if (it == cache.end()) it = cache.emplace(labels[i], table.centroid(labels[i])).first;
    const info::ProbVector p(std::vector<double>(probs.row(i).begin(), probs.row(i).end()));
    total += info::kl_divergence(p, it->second).value;
    ++used;
  }
  return used == 0 ? 0.0 : total / static_cast<double>(used);
}

double contextual_info_lb(const VeModel& model, const CentroidTable& table, const LabeledDataset& data) {
  data.validate();
  return contextual_info_from_probs(softmax_rows(encode(model, data.samples)), data.labels, table);
}

double contextual_info_lb(const VeModel& model, const LabeledDataset& data) {
  data.validate();
  const Tensor probs = softmax_rows(encode(model, data.samples));
  return contextual_info_from_probs(probs, data.labels,
                                    CentroidTable::from_batch(probs, data.labels, model.config.feature_dim));
}

}  // namespace igds::ve
