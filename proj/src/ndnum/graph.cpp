#include "igds/ndnum/graph.hpp"

#include <algorithm>
#include <cmath>

#include "igds/error.hpp"

namespace igds::nd {
namespace {

enum class Broadcast { Same, ScalarA, ScalarB, RowA, RowB };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1 && b.rank() == 0) return Broadcast::ScalarB;
  if (a.size() == 1 && a.rank() == 0) return Broadcast::ScalarA;
  if (b.rank() == 1 && a.rank() >= 1 && a.cols() == b.size()) return Broadcast::RowB;
  if (a.rank() == 1 && b.rank() >= 1 && b.cols() == a.size()) return Broadcast::RowA;
  throw StructuralError(std::string(what) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
}

const Shape& broadcast_shape(const Tensor& a, const Tensor& b, Broadcast kind) {
  return (kind == Broadcast::ScalarA || kind == Broadcast::RowA) ? b.shape() : a.shape();
}

std::size_t index_a(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::ScalarA: return 0;
    case Broadcast::RowA: return i % cols;
    default: return i;
  }
}

std::size_t index_b(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::ScalarB: return 0;
    case Broadcast::RowB: return i % cols;
    default: return i;
  }
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - (s.empty() ? 0 : 1)); }

struct MatDims {
  std::size_t m, k, n;
  Shape out;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0)) {
    return {a.dim(0), a.dim(1), b.dim(1), Shape{a.dim(0), b.dim(1)}};
  }
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    return {a.dim(0), a.dim(1), 1, Shape{a.dim(0)}};
  }
  if (a.rank() == 1 && b.rank() == 2 && a.dim(0) == b.dim(0)) {
    return {1, a.dim(0), b.dim(1), Shape{b.dim(1)}};
  }
  throw StructuralError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
}

// out[m,n] += a[m,k] * b[k,n], i-k-j order.
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

double softplus_value(double x, double s) {
  const double z = s * x;
  return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / s;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw StructuralError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(in[j] - m);
      z += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= z;
  }
  return y;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Relu: return "relu";
    case Op::Softplus: return "softplus";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumLast: return "sum_last";
    case Op::MeanRows: return "mean_rows";
    case Op::Softmax: return "softmax";
    case Op::LogSumExp: return "logsumexp";
    case Op::Center: return "center";
    case Op::L2Normalize: return "l2_normalize";
    case Op::Inner: return "inner";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::Detach: return "detach";
  }
  return "?";
}

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::leaf(std::string name, Tensor value, bool requires_grad) {
  Node node;
  node.op = Op::Leaf;
  node.name = std::move(name);
  node.requires_grad = requires_grad;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::find(const std::string& name) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::Leaf && nodes_[i].name == name) return Var(this, i);
  }
  throw StructuralError("no leaf named '" + name + "'");
}

Var Graph::record(Op op, std::vector<std::size_t> inputs, double attr, Shape attr_shape) {
  Node node;
  node.op = op;
  node.inputs = std::move(inputs);
  node.attr = attr;
  node.attr_shape = std::move(attr_shape);
  if (op != Op::Detach) {
    for (std::size_t in : node.inputs) node.requires_grad = node.requires_grad || nodes_.at(in).requires_grad;
  }
  node.value = compute(node);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::set_leaf(Var leaf, Tensor value) {
  Node& node = nodes_.at(leaf.id());
  if (node.op != Op::Leaf) throw StructuralError("set_leaf on a non-leaf node");
  if (node.value.shape() != value.shape()) {
    throw StructuralError("set_leaf: shape " + shape_string(value.shape()) + " does not match " +
                          shape_string(node.value.shape()));
  }
  node.value = std::move(value);
}

void Graph::recompute() {
  for (Node& node : nodes_) {
    if (node.op != Op::Leaf) node.value = compute(node);
  }
}

const Tensor& Graph::evaluate(const std::map<std::string, Tensor>& inputs, Var output) {
  for (const auto& [name, value] : inputs) set_leaf(find(name), value);
  recompute();
  return value(output.id());
}

Tensor Graph::compute(const Node& node) const {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_.at(node.inputs.at(k)).value; };
  switch (node.op) {
    case Op::Leaf: return node.value;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Broadcast kind = broadcast_kind(a, b, op_name(node.op));
      Tensor out(broadcast_shape(a, b, kind));
      const std::size_t c = out.cols();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a[index_a(kind, i, c)];
        const double y = b[index_b(kind, i, c)];
        out[i] = node.op == Op::Add ? x + y : node.op == Op::Sub ? x - y : x * y;
      }
      return out;
    }
    case Op::Scale: {
      Tensor out = in(0);
      for (double& v : out.data()) v *= node.attr;
      return out;
    }
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatDims d = matmul_dims(a, b);
      Tensor out(d.out);
      gemm_acc(a.data(), b.data(), out.data(), d.m, d.k, d.n);
      return out;
    }
    case Op::Exp: {
      Tensor out = in(0);
      for (double& v : out.data()) v = std::exp(v);
      return out;
    }
    case Op::Log: {
      Tensor out = in(0);
      for (double& v : out.data()) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw NumericDomainError("log: argument " + std::to_string(v) + " outside [0, inf)");
        }
        v = std::log(std::max(v, kLogFloor));
      }
      return out;
    }
    case Op::Relu: {
      Tensor out = in(0);
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case Op::Softplus: {
      Tensor out = in(0);
      for (double& v : out.data()) v = softplus_value(v, node.attr);
      return out;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double v : a.data()) s += v;
      if (node.op == Op::Mean) s /= static_cast<double>(a.size());
      return Tensor::scalar(s);
    }
    case Op::SumLast: {
      const Tensor& a = in(0);
      Tensor out(drop_last(a.shape()));
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        out[r] = s;
      }
      return out;
    }
    case Op::MeanRows: {
      const Tensor& a = in(0);
      if (a.rank() != 2) throw StructuralError("mean_rows needs a matrix, got " + shape_string(a.shape()));
      Tensor out(Shape{a.cols()});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j];
      }
      for (double& v : out.data()) v /= static_cast<double>(a.rows());
      return out;
    }
    case Op::Softmax: return softmax_rows(in(0));
    case Op::LogSumExp: {
      const Tensor& a = in(0);
      Tensor out(drop_last(a.shape()));
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - m);
        out[r] = m + std::log(z);
      }
      return out;
    }
    case Op::Center: {
      Tensor out = in(0);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double m = 0.0;
        for (double v : row) m += v;
        m /= static_cast<double>(row.size());
        for (double& v : row) v -= m;
      }
      return out;
    }
    case Op::L2Normalize: {
      Tensor out = in(0);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double ss = 0.0;
        for (double v : row) ss += v * v;
        const double norm = std::max(std::sqrt(ss), kLogFloor);
        for (double& v : row) v /= norm;
      }
      return out;
    }
    case Op::Inner: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      check_same_shape(a, b, "inner");
      Tensor out(drop_last(a.shape()));
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        auto y = b.row(r);
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
        out[r] = s;
      }
      return out;
    }
    case Op::Concat: {
      const Tensor& first = in(0);
      if (first.rank() == 0) throw StructuralError("concat: scalar parts");
      std::size_t total = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& p = in(k);
        if (p.rank() != first.rank() || drop_last(p.shape()) != drop_last(first.shape())) {
          throw StructuralError("concat: part " + shape_string(p.shape()) + " incompatible with " +
                                shape_string(first.shape()));
        }
        total += p.cols();
      }
      Shape shape = first.shape();
      shape.back() = total;
      Tensor out(shape);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& p = in(k);
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto src = p.row(r);
          std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += p.cols();
      }
      return out;
    }
    case Op::Reshape: return in(0).reshaped(node.attr_shape);
    case Op::Detach: return in(0);
  }
  throw StructuralError("unknown op");
}

void Graph::add_grad(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  if (!has_grad_[id]) {
    grads_[id] = g;
    has_grad_[id] = true;
    return;
  }
  auto dst = grads_[id].data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::accumulate_input_grads(const Node& node, const Tensor& g) {
  auto in_id = [&](std::size_t k) { return node.inputs.at(k); };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_.at(node.inputs.at(k)).value; };
  const Tensor& y = node.value;
  switch (node.op) {
    case Op::Leaf:
    case Op::Detach: return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Broadcast kind = broadcast_kind(a, b, op_name(node.op));
      const std::size_t c = y.cols();
      Tensor ga(a.shape());
      Tensor gb(b.shape());
      for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t ia = index_a(kind, i, c);
        const std::size_t ib = index_b(kind, i, c);
        if (node.op == Op::Mul) {
          ga[ia] += g[i] * b[ib];
          gb[ib] += g[i] * a[ia];
        } else {
          ga[ia] += g[i];
          gb[ib] += node.op == Op::Add ? g[i] : -g[i];
        }
      }
      add_grad(in_id(0), ga);
      add_grad(in_id(1), gb);
      return;
    }
    case Op::Scale: {
      Tensor ga = g;
      for (double& v : ga.data()) v *= node.attr;
      add_grad(in_id(0), ga);
      return;
    }
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatDims d = matmul_dims(a, b);
      if (nodes_[in_id(0)].requires_grad) {
        // dA[m,k] = G[m,n] * B^T
        Tensor ga(a.shape());
        const Tensor bt = Tensor(Shape{d.k, d.n}, b.values()).transposed();
        gemm_acc(g.data(), bt.data(), ga.data(), d.m, d.n, d.k);
        add_grad(in_id(0), ga);
      }
      if (nodes_[in_id(1)].requires_grad) {
        // dB[k,n] = A^T * G
        Tensor gb(b.shape());
        const Tensor at = Tensor(Shape{d.m, d.k}, a.values()).transposed();
        gemm_acc(at.data(), g.data(), gb.data(), d.k, d.m, d.n);
        add_grad(in_id(1), gb);
      }
      return;
    }
    case Op::Exp: {
      Tensor ga(y.shape());
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] = g[i] * y[i];
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Log: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] = x[i] > kLogFloor ? g[i] / x[i] : 0.0;
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Relu: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Softplus: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * sigmoid(node.attr * x[i]);
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = in(0);
      const double v = node.op == Op::Mean ? g.item() / static_cast<double>(x.size()) : g.item();
      add_grad(in_id(0), Tensor(x.shape(), v));
      return;
    }
    case Op::SumLast: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (double& v : ga.row(r)) v = g[r];
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::MeanRows: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      const double inv = 1.0 / static_cast<double>(x.rows());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = ga.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = g[j] * inv;
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Softmax: {
      Tensor ga(y.shape());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = g.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
        auto out = ga.row(r);
        for (std::size_t j = 0; j < yr.size(); ++j) out[j] = yr[j] * (gr[j] - dot);
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::LogSumExp: {
      const Tensor p = softmax_rows(in(0));
      Tensor ga(p.shape());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        auto pr = p.row(r);
        auto out = ga.row(r);
        for (std::size_t j = 0; j < pr.size(); ++j) out[j] = g[r] * pr[j];
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Center: {
      Tensor ga = g;
      for (std::size_t r = 0; r < ga.rows(); ++r) {
        auto row = ga.row(r);
        double m = 0.0;
        for (double v : row) m += v;
        m /= static_cast<double>(row.size());
        for (double& v : row) v -= m;
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::L2Normalize: {
      const Tensor& x = in(0);
      Tensor ga(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto yr = y.row(r);
        auto gr = g.row(r);
        double ss = 0.0;
        double dot = 0.0;
        for (std::size_t j = 0; j < xr.size(); ++j) {
          ss += xr[j] * xr[j];
          dot += yr[j] * gr[j];
        }
        const double norm = std::max(std::sqrt(ss), kLogFloor);
        auto out = ga.row(r);
        for (std::size_t j = 0; j < xr.size(); ++j) out[j] = (gr[j] - yr[j] * dot) / norm;
      }
      add_grad(in_id(0), ga);
      return;
    }
    case Op::Inner: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor ga(a.shape());
      Tensor gb(b.shape());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto ar = a.row(r);
        auto br = b.row(r);
        auto gar = ga.row(r);
        auto gbr = gb.row(r);
        for (std::size_t j = 0; j < ar.size(); ++j) {
          gar[j] = g[r] * br[j];
          gbr[j] = g[r] * ar[j];
        }
      }
      add_grad(in_id(0), ga);
      add_grad(in_id(1), gb);
      return;
    }
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& p = in(k);
        Tensor gp(p.shape());
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto src = g.row(r).subspan(offset, p.cols());
          std::copy(src.begin(), src.end(), gp.row(r).begin());
        }
        offset += p.cols();
        add_grad(in_id(k), gp);
      }
      return;
    }
    case Op::Reshape: add_grad(in_id(0), g.reshaped(in(0).shape())); return;
  }
}

void Graph::backward(Var output) {
  const Tensor& out = value(output.id());
  if (out.size() != 1) {
    throw StructuralError("backward: output must be scalar, got shape " + shape_string(out.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  if (!nodes_[output.id()].requires_grad) return;
  grads_[output.id()] = Tensor(out.shape(), 1.0);
  has_grad_[output.id()] = true;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    if (!has_grad_[id] || !nodes_[id].requires_grad) continue;
    accumulate_input_grads(nodes_[id], grads_[id]);
  }
}

Tensor Graph::grad(Var node) const {
  if (node.id() < has_grad_.size() && has_grad_[node.id()]) return grads_[node.id()];
  return Tensor(value(node.id()).shape(), 0.0);
}

Var add(Var a, Var b) { return a.graph().record(Op::Add, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return a.graph().record(Op::Sub, {a.id(), b.id()}); }
Var mul(Var a, Var b) { return a.graph().record(Op::Mul, {a.id(), b.id()}); }
Var scale(Var a, double factor) { return a.graph().record(Op::Scale, {a.id()}, factor); }
Var matmul(Var a, Var b) { return a.graph().record(Op::MatMul, {a.id(), b.id()}); }
Var exp(Var a) { return a.graph().record(Op::Exp, {a.id()}); }
Var log(Var a) { return a.graph().record(Op::Log, {a.id()}); }
Var relu(Var a) { return a.graph().record(Op::Relu, {a.id()}); }

Var softplus(Var a, double sharpness) {
  if (!(sharpness > 0.0)) throw StructuralError("softplus: sharpness must be positive");
  return a.graph().record(Op::Softplus, {a.id()}, sharpness);
}

Var sum(Var a) { return a.graph().record(Op::Sum, {a.id()}); }
Var mean(Var a) { return a.graph().record(Op::Mean, {a.id()}); }
Var sum_last(Var a) { return a.graph().record(Op::SumLast, {a.id()}); }
Var mean_rows(Var a) { return a.graph().record(Op::MeanRows, {a.id()}); }
Var softmax(Var a) { return a.graph().record(Op::Softmax, {a.id()}); }
Var logsumexp(Var a) { return a.graph().record(Op::LogSumExp, {a.id()}); }
Var center(Var a) { return a.graph().record(Op::Center, {a.id()}); }
Var l2_normalize(Var a) { return a.graph().record(Op::L2Normalize, {a.id()}); }
Var inner(Var a, Var b) { return a.graph().record(Op::Inner, {a.id(), b.id()}); }

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw StructuralError("concat: no parts");
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().graph().record(Op::Concat, std::move(ids));
}

Var reshape(Var a, Shape shape) { return a.graph().record(Op::Reshape, {a.id()}, 0.0, std::move(shape)); }
Var detach(Var a) { return a.graph().record(Op::Detach, {a.id()}); }

Tensor forward_eval(Graph& graph, const std::map<std::string, Tensor>& inputs, Var output) {
  return graph.evaluate(inputs, output);
}

std::map<std::string, Tensor> backward_grad(Graph& graph, Var output, const std::vector<Var>& wrt) {
  for (const Var& v : wrt) {
    if (graph.op(v.id()) == Op::Leaf && !graph.requires_grad(v.id())) {
      throw StructuralError("backward_grad: requested leaf was not marked requires_grad");
    }
  }
  graph.backward(output);
  std::map<std::string, Tensor> out;
  for (const Var& v : wrt) {
    const std::string& name = graph.name(v.id());
    out.emplace(name.empty() ? "#" + std::to_string(v.id()) : name, graph.grad(v));
  }
  return out;
}

}  // namespace igds::nd
