#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "igds/dataset.hpp"
#include "igds/guidance.hpp"
#include "igds/rng.hpp"
#include "igds/ve.hpp"

namespace igds::distill {

using nd::Tensor;

struct ScoredSet {
  std::vector<double> scores;  // KL(softmax(feature) || Q^y)
  std::vector<bool> keep;      // correctly classified
};

ScoredSet contextual_scores(const ve::VeModel& model, const ve::ClassifierHead& head, const ve::CentroidTable& table,
                            const LabeledDataset& data);

/// Closed-form first-draw selection probabilities within `cls`:
/// exp(-(s - alpha)^2) normalized over kept samples of that class, 0 elsewhere.
std::vector<double> selection_probabilities(const std::vector<double>& scores, const std::vector<bool>& keep,
                                            const std::vector<std::size_t>& labels, std::size_t cls, double alpha);

/// Per class, ipc indices drawn without replacement by the kernel weights.
/// Output is grouped by class in ascending class order.
std::vector<std::size_t> weighted_subset(const std::vector<double>& scores, const std::vector<bool>& keep,
                                         const std::vector<std::size_t>& labels, double alpha, std::size_t ipc,
                                         Rng& rng);

/// Mean over the batch of KL(softmax(feature_i) || mean_j softmax(feature_j)).
double batch_contextual_score(const ve::VeModel& model, const Tensor& samples);

/// Runs the guided sampler once per class with a stream derived from
/// (seed, class) and concatenates the results.
DistilledSet assemble_distilled(const guidance::Models& models, const std::vector<std::size_t>& classes,
                                const guidance::GuidanceConfig& cfg, std::uint64_t seed,
                                std::vector<guidance::GuidanceTrace>* traces = nullptr);

struct DownstreamConfig {
  std::size_t hidden = 32;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
};

/// Trains a fresh MLP d -> hidden -> hidden -> C with Adam on `train` and
/// returns accuracy on `test`.
double evaluate_downstream(const LabeledDataset& train, const LabeledDataset& test, const DownstreamConfig& config,
                           Rng& rng);

}  // namespace igds::distill
