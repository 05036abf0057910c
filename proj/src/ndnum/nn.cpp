#include "igds/ndnum/nn.hpp"

#include <cmath>
#include <cstring>

#include "igds/error.hpp"

namespace igds::nn {

Mlp Mlp::create(const std::vector<std::size_t>& widths, Activation activation, double sharpness, Rng& rng) {
  if (widths.size() < 2) throw StructuralError("Mlp needs at least input and output widths");
  Mlp mlp;
  mlp.activation = activation;
  mlp.sharpness = sharpness;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const bool last = l + 2 == widths.size();
    const double gain = last ? 1.0 : 2.0;
    const double std = std::sqrt(gain / static_cast<double>(in));
    Linear layer{Tensor(nd::Shape{in, out}), Tensor(nd::Shape{out})};
    for (double& w : layer.weight.data()) w = std * rng.normal();
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (Linear& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const Linear& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

BoundMlp bind(Graph& graph, const Mlp& mlp, bool trainable, const std::string& prefix) {
  BoundMlp bound;
  bound.mlp = &mlp;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    bound.params.push_back(graph.leaf(base + ".weight", mlp.layers[l].weight, trainable));
    bound.params.push_back(graph.leaf(base + ".bias", mlp.layers[l].bias, trainable));
  }
  return bound;
}

Var forward(const BoundMlp& bound, Var x, std::optional<Var> first_layer_offset) {
  const std::size_t n_layers = bound.mlp->layers.size();
  Var h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = nd::add(nd::matmul(h, bound.params[2 * l]), bound.params[2 * l + 1]);
    if (l == 0 && first_layer_offset) h = nd::add(h, *first_layer_offset);
    if (l + 1 < n_layers) {
      h = bound.mlp->activation == Activation::Softplus ? nd::softplus(h, bound.mlp->sharpness) : nd::relu(h);
    }
  }
  return h;
}

Tensor infer(const Mlp& mlp, const Tensor& x) {
  Graph graph;
  const BoundMlp bound = bind(graph, mlp, false, "mlp");
  return forward(bound, graph.constant(x)).value();
}

std::uint64_t checksum(std::span<const Tensor* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor* t : params) {
    for (double v : t->data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

std::uint64_t checksum(const Mlp& mlp) {
  const auto params = mlp.parameters();
  return checksum(params);
}

void Sgd::step(std::span<Tensor* const> params, std::span<const Tensor> grads) const {
  if (params.size() != grads.size()) throw StructuralError("Sgd::step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= learning_rate_ * g[j];
  }
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw StructuralError("Adam::step: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= learning_rate_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon_);
    }
  }
}

}  // namespace igds::nn
