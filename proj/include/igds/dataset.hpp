#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "igds/ndnum/tensor.hpp"
#include "igds/rng.hpp"

namespace igds {

/// Generating parameters of the synthetic 2-D Gaussian mixture.
struct MixtureSpec {
  std::size_t classes = 3;
  std::size_t modes_per_class = 3;
  double separation = 2.0;
  /// Distance of each intra-class mode from its class center (unused for a single mode).
  double mode_offset = 0.6;
  /// Isotropic standard deviation of every mode.
  double mode_std = 0.15;
  /// mode_centers[c][m] = {x, y}.
  std::vector<std::vector<std::array<double, 2>>> mode_centers;

  std::array<double, 2> class_mean(std::size_t c) const;
};

struct LabeledDataset {
  nd::Tensor samples;  // [n, d]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::optional<MixtureSpec> mixture;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return samples.cols(); }
  std::vector<std::size_t> class_counts() const;
  /// Throws StructuralError on shape or label inconsistencies.
  void validate() const;
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

struct Provenance {
  double beta = 0.0;
  double eta = 0.0;
  std::size_t ipc = 0;
  std::vector<std::uint64_t> seeds;
  std::string generator;
};

/// Labeled synthetic samples with exactly `ipc` per class.
struct DistilledSet {
  LabeledDataset data;
  Provenance provenance;
};

/// Text format: header `n d C`, one row per sample (`d` reals then the
/// integer label), then optional `key=value` provenance lines.
void write_dataset(std::ostream& out, const LabeledDataset& data,
                   const std::map<std::string, std::string>& provenance = {});
LabeledDataset read_dataset(std::istream& in, std::map<std::string, std::string>* provenance = nullptr);

void write_distilled(std::ostream& out, const DistilledSet& set);
DistilledSet read_distilled(std::istream& in);

/// Mixture centers: class c centered at angle 2*pi*c/C on a circle of radius
/// `separation`; intra-class modes sit on a circle of radius `mode_offset`
/// around it with a random phase.
MixtureSpec make_mixture(std::size_t classes, std::size_t modes_per_class, double separation, Rng& rng,
                         double mode_offset = 0.6, double mode_std = 0.15);

/// Balanced draw: n_per_class samples per class, modes chosen uniformly.
LabeledDataset sample_mixture(const MixtureSpec& spec, std::size_t n_per_class, Rng& rng);

LabeledDataset make_synthetic_dataset(std::size_t classes, std::size_t modes_per_class, std::size_t n_per_class,
                                      double separation, Rng& rng);

}  // namespace igds
