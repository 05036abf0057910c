#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace igds::info {

/// Tolerance on the unit-sum constraint of probability vectors and joints.
inline constexpr double kSimplexTolerance = 1e-12;

/// A point on the probability simplex. Construction validates.
class ProbVector {
 public:
  /// Throws StructuralError unless entries are finite, >= 0 and sum to 1.
  explicit ProbVector(std::vector<double> p);
  static ProbVector uniform(std::size_t n);
  /// Normalizes nonnegative weights (at least one positive).
  static ProbVector normalized(std::vector<double> weights);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> p_;
};

/// Joint distribution table P(X = x, Y = y), rows indexed by x.
class DiscreteJoint {
 public:
  DiscreteJoint(std::size_t x_size, std::size_t y_size, std::vector<double> table);
  /// Normalizes a nonnegative count table.
  static DiscreteJoint from_counts(std::size_t x_size, std::size_t y_size, std::vector<double> counts);
  /// Joint of independent marginals.
  static DiscreteJoint product(const ProbVector& px, const ProbVector& py);

  std::size_t x_size() const { return x_size_; }
  std::size_t y_size() const { return y_size_; }
  double operator()(std::size_t x, std::size_t y) const { return table_[x * y_size_ + y]; }
  std::span<const double> table() const { return table_; }

  ProbVector marginal_x() const;
  ProbVector marginal_y() const;

 private:
  std::size_t x_size_, y_size_;
  std::vector<double> table_;
};

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(const ProbVector& p);

struct KlResult {
  double value = 0.0;
  /// Some q[i] == 0 where p[i] > 0; value then uses the log floor for q[i].
  bool support_violation = false;
};

/// KL(p || q) in nats, both arguments floored at 1e-12 inside the logs.
KlResult kl_divergence(const ProbVector& p, const ProbVector& q);

double joint_entropy(const DiscreteJoint& joint);
/// I(X;Y) = H(X) + H(Y) - H(X,Y).
double mutual_information(const DiscreteJoint& joint);
/// H(X|Y) = H(X,Y) - H(Y).
double conditional_entropy(const DiscreteJoint& joint);

/// Arithmetic mean of equally sized probability vectors.
ProbVector mean_of(std::span<const ProbVector> batch);

/// (1/n) sum_i KL(p_i || centroid). Throws on an empty batch.
double mean_kl_to_centroid(std::span<const ProbVector> batch, const ProbVector& centroid);

/// Joint of (g(X), Y) for a deterministic map g: [x_size] -> [image_size].
DiscreteJoint push_forward_x(const DiscreteJoint& joint, std::span<const std::size_t> map, std::size_t image_size);

/// Reads a whitespace-separated matrix, one X outcome per line. Blank lines
/// and lines starting with '#' are skipped. Nonnegative entries are
/// normalized to unit mass; ragged rows or negative entries throw.
DiscreteJoint read_joint(std::istream& in);

}  // namespace igds::info
