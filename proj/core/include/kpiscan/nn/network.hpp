#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kpiscan/nn/layers.hpp"

namespace kpiscan::nn {

/// One gradient per network parameter, in Network::parameters() order.
struct GradientSet {
  std::vector<std::string> names;
  std::vector<Tensor> grads;

  std::size_t size() const { return grads.size(); }
};

/// A stack of layers ending in logits, trained against softmax cross-entropy.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// Parameter names are "<prefix>.<field>"; prefix must be unique per layer.
  void add(std::string prefix, LayerPtr layer);

  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i).layer; }

  /// Training path: caches every layer's activations.
  Tensor forward(const Tensor& x, Mode mode);
  /// Reverse pass from dL/dlogits. Throws NoForwardState without a preceding forward().
  GradientSet backward(const Tensor& grad_logits);
  /// Eval-mode logits, without touching any member state.
  Tensor infer(const Tensor& x) const;

  struct LossAndGradients {
    double loss;
    Tensor probabilities;
    GradientSet gradients;
  };
  /// forward + softmax cross-entropy + backward.
  LossAndGradients loss_and_gradients(const Tensor& x, std::span<const int> labels, Mode mode);
  /// Loss only (forward in `mode`, no backward).
  double loss(const Tensor& x, std::span<const int> labels, Mode mode);

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::vector<ParamRef> buffers();
  std::vector<ConstParamRef> buffers() const;
  std::size_t parameter_count() const;

  /// Reseeds every dropout layer: layer i draws from derive_seed(seed, i).
  void set_dropout_seed(std::uint64_t seed);

  Tensor::Shape output_shape(const Tensor::Shape& input) const;

 private:
  struct Entry {
    std::string prefix;
    LayerPtr layer;
  };
  std::vector<Entry> layers_;
  bool has_forward_ = false;
};

/// p <- p - lr * g for every parameter. Throws ShapeMismatch on incongruent sets.
void sgd_step(std::span<const ParamRef> params, const GradientSet& grads, double lr);
void sgd_step(Network& net, const GradientSet& grads, double lr);

}  // namespace kpiscan::nn
