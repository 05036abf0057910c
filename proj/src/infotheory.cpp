#include "igds/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>

#include "igds/error.hpp"
#include "igds/ndnum/graph.hpp"

namespace igds::info {
namespace {

void check_simplex(std::span<const double> p, const char* what) {
  if (p.empty()) throw StructuralError(std::string(what) + ": empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw StructuralError(std::string(what) + ": entry " + std::to_string(v) + " is not a probability");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": mass " << total << " differs from 1";
    throw StructuralError(msg.str());
  }
}

double plogp_sum(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<double> normalize(std::vector<double> w, const char* what) {
  double total = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) throw StructuralError(std::string(what) + ": negative or non-finite weight");
    total += v;
  }
  if (!(total > 0.0)) throw StructuralError(std::string(what) + ": zero total mass");
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

ProbVector::ProbVector(std::vector<double> p) : p_(std::move(p)) { check_simplex(p_, "ProbVector"); }

ProbVector ProbVector::uniform(std::size_t n) {
  if (n == 0) throw StructuralError("ProbVector::uniform: n must be positive");
  return ProbVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVector ProbVector::normalized(std::vector<double> weights) {
  return ProbVector(normalize(std::move(weights), "ProbVector::normalized"));
}

DiscreteJoint::DiscreteJoint(std::size_t x_size, std::size_t y_size, std::vector<double> table)
    : x_size_(x_size), y_size_(y_size), table_(std::move(table)) {
  if (x_size_ * y_size_ != table_.size() || table_.empty()) {
    throw StructuralError("DiscreteJoint: table size does not match " + std::to_string(x_size_) + "x" +
                          std::to_string(y_size_));
  }
  check_simplex(table_, "DiscreteJoint");
}

DiscreteJoint DiscreteJoint::from_counts(std::size_t x_size, std::size_t y_size, std::vector<double> counts) {
  return DiscreteJoint(x_size, y_size, normalize(std::move(counts), "DiscreteJoint::from_counts"));
}

DiscreteJoint DiscreteJoint::product(const ProbVector& px, const ProbVector& py) {
  std::vector<double> t(px.size() * py.size());
  for (std::size_t x = 0; x < px.size(); ++x) {
    for (std::size_t y = 0; y < py.size(); ++y) t[x * py.size() + y] = px[x] * py[y];
  }
  return from_counts(px.size(), py.size(), std::move(t));
}

ProbVector DiscreteJoint::marginal_x() const {
  std::vector<double> m(x_size_, 0.0);
  for (std::size_t x = 0; x < x_size_; ++x) {
    for (std::size_t y = 0; y < y_size_; ++y) m[x] += (*this)(x, y);
  }
  return ProbVector::normalized(std::move(m));
}

ProbVector DiscreteJoint::marginal_y() const {
  std::vector<double> m(y_size_, 0.0);
  for (std::size_t x = 0; x < x_size_; ++x) {
    for (std::size_t y = 0; y < y_size_; ++y) m[y] += (*this)(x, y);
  }
  return ProbVector::normalized(std::move(m));
}

double entropy(const ProbVector& p) { return plogp_sum(p.values()); }

KlResult kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw StructuralError("kl_divergence: size mismatch");
  KlResult r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) r.support_violation = true;
    r.value += p[i] * (std::log(std::max(p[i], nd::kLogFloor)) - std::log(std::max(q[i], nd::kLogFloor)));
  }
  return r;
}

double joint_entropy(const DiscreteJoint& joint) { return plogp_sum(joint.table()); }

double mutual_information(const DiscreteJoint& joint) {
  return entropy(joint.marginal_x()) + entropy(joint.marginal_y()) - joint_entropy(joint);
}

double conditional_entropy(const DiscreteJoint& joint) { return joint_entropy(joint) - entropy(joint.marginal_y()); }

ProbVector mean_of(std::span<const ProbVector> batch) {
  if (batch.empty()) throw StructuralError("mean_of: empty batch");
  // running mean: a batch of identical vectors averages to that vector exactly
  std::vector<double> m(batch.front().values().begin(), batch.front().values().end());
  for (std::size_t k = 1; k < batch.size(); ++k) {
    const ProbVector& p = batch[k];
    if (p.size() != m.size()) throw StructuralError("mean_of: ragged batch");
    const double w = 1.0 / static_cast<double>(k + 1);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += w * (p[i] - m[i]);
  }
  return ProbVector(std::move(m));
}

double mean_kl_to_centroid(std::span<const ProbVector> batch, const ProbVector& centroid) {
  if (batch.empty()) throw StructuralError("mean_kl_to_centroid: empty batch");
  double total = 0.0;
  for (const ProbVector& p : batch) total += kl_divergence(p, centroid).value;
  return total / static_cast<double>(batch.size());
}

DiscreteJoint push_forward_x(const DiscreteJoint& joint, std::span<const std::size_t> map, std::size_t image_size) {
  if (map.size() != joint.x_size()) throw StructuralError("push_forward_x: map size mismatch");
  std::vector<double> t(image_size * joint.y_size(), 0.0);
  for (std::size_t x = 0; x < joint.x_size(); ++x) {
    if (map[x] >= image_size) throw StructuralError("push_forward_x: map value out of range");
    for (std::size_t y = 0; y < joint.y_size(); ++y) t[map[x] * joint.y_size() + y] += joint(x, y);
  }
  return DiscreteJoint::from_counts(image_size, joint.y_size(), std::move(t));
}

DiscreteJoint read_joint(std::istream& in) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::size_t n = 0;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) throw StructuralError("read_joint: bad number '" + token + "'");
      values.push_back(v);
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw StructuralError("read_joint: row " + std::to_string(rows + 1) + " has " + std::to_string(n) +
                                         " entries, expected " + std::to_string(cols));
    ++rows;
  }
  if (rows == 0) throw StructuralError("read_joint: no rows");
  return DiscreteJoint::from_counts(rows, cols, std::move(values));
}

}  // namespace igds::info
