#include "kpiscan/nn/network.hpp"

#include "kpiscan/error.hpp"
#include "kpiscan/rng.hpp"

namespace kpiscan::nn {

void Network::add(std::string prefix, LayerPtr layer) {
  for (const auto& e : layers_) {
    if (e.prefix == prefix) throw Error(ErrorCode::BadArchitecture, "duplicate layer name " + prefix);
  }
  layers_.push_back({std::move(prefix), std::move(layer)});
  has_forward_ = false;
}

Tensor Network::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& e : layers_) h = e.layer->forward(h, mode);
  has_forward_ = true;
  return h;
}

GradientSet Network::backward(const Tensor& grad_logits) {
  if (!has_forward_) throw Error(ErrorCode::NoForwardState, "backward() before forward()");
  // Slot ranges per layer, in parameters() order.
  std::vector<std::size_t> first(layers_.size());
  GradientSet gs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    first[i] = gs.names.size();
    for (auto& p : layers_[i].layer->parameters()) {
      gs.names.push_back(layers_[i].prefix + "." + p.name);
    }
  }
  gs.grads.resize(gs.names.size());

  Tensor g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t end = i + 1 < layers_.size() ? first[i + 1] : gs.grads.size();
    g = layers_[i].layer->backward(
        g, std::span<Tensor>(gs.grads.data() + first[i], end - first[i]));
  }
  return gs;
}

Tensor Network::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& e : layers_) h = e.layer->infer(h);
  return h;
}

Network::LossAndGradients Network::loss_and_gradients(const Tensor& x,
                                                      std::span<const int> labels, Mode mode) {
  const Tensor logits = forward(x, mode);
  LossResult lr = softmax_cross_entropy(logits, labels);
  GradientSet grads = backward(lr.grad_logits);
  return {lr.loss, std::move(lr.probabilities), std::move(grads)};
}

double Network::loss(const Tensor& x, std::span<const int> labels, Mode mode) {
  return softmax_cross_entropy(forward(x, mode), labels).loss;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (auto& e : layers_) {
    for (auto& p : e.layer->parameters()) out.push_back({e.prefix + "." + p.name, p.tensor});
  }
  return out;
}

std::vector<ConstParamRef> Network::parameters() const {
  std::vector<ConstParamRef> out;
  for (const auto& e : layers_) {
    for (auto& p : e.layer->parameters()) out.push_back({e.prefix + "." + p.name, p.tensor});
  }
  return out;
}

std::vector<ParamRef> Network::buffers() {
  std::vector<ParamRef> out;
  for (auto& e : layers_) {
    for (auto& p : e.layer->buffers()) out.push_back({e.prefix + "." + p.name, p.tensor});
  }
  return out;
}

std::vector<ConstParamRef> Network::buffers() const {
  std::vector<ConstParamRef> out;
  for (const auto& e : layers_) {
    for (auto& p : e.layer->buffers()) out.push_back({e.prefix + "." + p.name, p.tensor});
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

void Network::set_dropout_seed(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* d = dynamic_cast<DropoutLayer*>(layers_[i].layer.get())) {
      d->set_seed(derive_seed(seed, i));
    }
  }
}

Tensor::Shape Network::output_shape(const Tensor::Shape& input) const {
  Tensor::Shape s = input;
  for (const auto& e : layers_) s = e.layer->output_shape(s);
  return s;
}

void sgd_step(std::span<const ParamRef> params, const GradientSet& grads, double lr) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::ShapeMismatch, "sgd_step: " + std::to_string(params.size()) +
                                              " parameters vs " + std::to_string(grads.size()) +
                                              " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(grads.grads[i], params[i].tensor->shape(), "sgd_step gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor->data();
    auto g = grads.grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  }
}

void sgd_step(Network& net, const GradientSet& grads, double lr) {
  const auto params = net.parameters();
  sgd_step(params, grads, lr);
}

}  // namespace kpiscan::nn
