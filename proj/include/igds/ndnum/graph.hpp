#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "igds/ndnum/tensor.hpp"

namespace igds::nd {

/// Floor applied to every log argument.
inline constexpr double kLogFloor = 1e-12;

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Exp,
  Log,
  Relu,
  Softplus,
  Sum,
  Mean,
  SumLast,
  MeanRows,
  Softmax,
  LogSumExp,
  Center,
  L2Normalize,
  Inner,
  Concat,
  Reshape,
  Detach,
};

const char* op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape. Every op evaluates eagerly when recorded; the recorded
/// op list can later be replayed with new leaf values (evaluate) and
/// differentiated in reverse (backward). Nodes are appended in topological
/// order, so the tape is acyclic by construction.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named input. Leaves with requires_grad receive gradients.
  Var leaf(std::string name, Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf("", std::move(value), false); }

  std::size_t node_count() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  Op op(std::size_t id) const { return nodes_.at(id).op; }
  const std::string& name(std::size_t id) const { return nodes_.at(id).name; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  Var find(const std::string& name);

  /// Rebinds named leaves and recomputes every node; returns output's value.
  const Tensor& evaluate(const std::map<std::string, Tensor>& inputs, Var output);
  /// Replaces one leaf value without recomputing.
  void set_leaf(Var leaf, Tensor value);
  /// Recomputes every non-leaf node from current leaf values.
  void recompute();

  /// Reverse pass from a scalar output; afterwards grad() returns d output / d node.
  void backward(Var output);
  /// Gradient from the last backward(); zeros for nodes off the gradient path.
  Tensor grad(Var node) const;

  // Used by the free-function ops.
  Var record(Op op, std::vector<std::size_t> inputs, double attr = 0.0, Shape attr_shape = {});

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    double attr = 0.0;
    Shape attr_shape;
    std::string name;
    bool requires_grad = false;
    Tensor value;
  };

  Tensor compute(const Node& node) const;
  void accumulate_input_grads(const Node& node, const Tensor& out_grad);
  void add_grad(std::size_t id, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

// Elementwise binary ops accept equal shapes, a scalar operand, or a rank-1
// operand matching the other's last axis (broadcast across rows).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// [m,k]x[k,n], [m,k]x[k], or [k]x[k,n].
Var matmul(Var a, Var b);
Var exp(Var a);
/// log(max(x, kLogFloor)); negative or non-finite arguments throw NumericDomainError.
Var log(Var a);
Var relu(Var a);
/// (1/sharpness) * log(1 + exp(sharpness * x)).
Var softplus(Var a, double sharpness);
Var sum(Var a);
Var mean(Var a);
/// Sum over the last axis.
Var sum_last(Var a);
/// Mean over the leading (row) axis of a [n,d] tensor, giving [d].
Var mean_rows(Var a);
/// Softmax over the last axis.
Var softmax(Var a);
/// Log-sum-exp over the last axis.
Var logsumexp(Var a);
/// Subtracts the per-row mean over the last axis.
Var center(Var a);
/// Divides each row by its Euclidean norm.
Var l2_normalize(Var a);
/// Per-row inner product over the last axis.
Var inner(Var a, Var b);
/// Concatenation along the last axis.
Var concat(const std::vector<Var>& parts);
Var reshape(Var a, Shape shape);
/// Identity in the forward pass, blocks gradients in the reverse pass.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double k, Var a) { return scale(a, k); }

/// Forward evaluation with rebound named inputs.
Tensor forward_eval(Graph& graph, const std::map<std::string, Tensor>& inputs, Var output);

/// Reverse-mode gradients of a scalar output with respect to the given nodes.
std::map<std::string, Tensor> backward_grad(Graph& graph, Var output, const std::vector<Var>& wrt);

}  // namespace igds::nd
