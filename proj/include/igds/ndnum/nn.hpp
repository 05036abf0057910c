#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igds/ndnum/graph.hpp"
#include "igds/rng.hpp"

namespace igds::nn {

using nd::Graph;
using nd::Tensor;
using nd::Var;

enum class Activation { Relu, Softplus };

/// y = x * weight + bias, weight stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;
};

/// Fully connected network; activation applied between layers, not after the last.
struct Mlp {
  std::vector<Linear> layers;
  Activation activation = Activation::Relu;
  double sharpness = 3.0;

  /// widths = {in, hidden..., out}. Weights ~ N(0, 2/fan_in) scaled for the
  /// activation, biases zero.
  static Mlp create(const std::vector<std::size_t>& widths, Activation activation, double sharpness, Rng& rng);

  std::size_t input_dim() const { return layers.front().weight.dim(0); }
  std::size_t output_dim() const { return layers.back().weight.dim(1); }

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

/// Parameters of an Mlp placed on a graph as leaves.
struct BoundMlp {
  const Mlp* mlp = nullptr;
  std::vector<Var> params;
};

BoundMlp bind(Graph& graph, const Mlp& mlp, bool trainable, const std::string& prefix);

/// Forward pass. `first_layer_offset`, when given, is added to the first
/// layer's pre-activation (used for conditioning embeddings).
Var forward(const BoundMlp& bound, Var x, std::optional<Var> first_layer_offset = std::nullopt);

/// Graph-free convenience: forward pass on constants.
Tensor infer(const Mlp& mlp, const Tensor& x);

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t checksum(std::span<const Tensor* const> params);
std::uint64_t checksum(const Mlp& mlp);

class Sgd {
 public:
  explicit Sgd(double learning_rate) : learning_rate_(learning_rate) {}
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) const;
  double learning_rate() const { return learning_rate_; }

 private:
  double learning_rate_;
};

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  double learning_rate_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace igds::nn
