#include "igds/ndnum/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "igds/error.hpp"

namespace igds::nd {

GradCheckReport grad_check(Graph& graph, Var output, Var wrt, double step, double tolerance, double denom_floor) {
  if (step < 1e-6 || step > 1e-3) throw StructuralError("grad_check: step must lie in [1e-6, 1e-3]");
  if (graph.op(wrt.id()) != Op::Leaf) throw StructuralError("grad_check: wrt must be a leaf");

  graph.recompute();
  graph.backward(output);
  const Tensor analytic = graph.grad(wrt);
  const Tensor original = wrt.value();

  GradCheckReport report;
  report.coordinates = original.size();
  for (std::size_t i = 0; i < original.size(); ++i) {
    Tensor probe = original;
    probe[i] = original[i] + step;
    graph.set_leaf(wrt, probe);
    graph.recompute();
    const double up = output.value().item();
    probe[i] = original[i] - step;
    graph.set_leaf(wrt, probe);
    graph.recompute();
    const double down = output.value().item();
    const double numeric = (up - down) / (2.0 * step);

    const double abs_err = std::abs(analytic[i] - numeric);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
    const double rel_err = abs_err / denom;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = i;
    }
  }
  graph.set_leaf(wrt, original);
  graph.recompute();
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace igds::nd
