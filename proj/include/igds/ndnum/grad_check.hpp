#pragma once

#include <cstddef>

#include "igds/ndnum/graph.hpp"

namespace igds::nd {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of a scalar output against central
/// differences, perturbing one coordinate of `wrt` at a time and replaying
/// the graph. Relative error per coordinate is |a - n| / max(|a|, |n|, denom_floor).
/// The graph is left in its original state on return.
GradCheckReport grad_check(Graph& graph, Var output, Var wrt, double step, double tolerance,
                           double denom_floor = 1e-6);

}  // namespace igds::nd
