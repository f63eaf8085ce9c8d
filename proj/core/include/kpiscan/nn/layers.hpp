#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpiscan/nn/ops.hpp"
#include "kpiscan/tensor.hpp"

namespace kpiscan::nn {

/// A named view of a learnable (or persisted) tensor owned by a layer.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Layer with a cached training path and a stateless inference path.
///
/// forward() caches what backward() needs; backward() consumes the cache and
/// writes one gradient per parameter() into `param_grads` (same order).
/// infer() is always eval mode, touches no member state and is safe to call
/// concurrently.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;

  /// Learnable tensors, in a fixed order.
  virtual std::vector<ParamRef> parameters() { return {}; }
  /// Non-learnable persisted state (batchnorm running statistics).
  virtual std::vector<ParamRef> buffers() { return {}; }

  virtual Tensor::Shape output_shape(const Tensor::Shape& input) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class DenseLayer final : public Layer {
 public:
  explicit DenseLayer(DenseParams params) : p_(std::move(params)) {}

  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> parameters() override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

  const DenseParams& params() const { return p_; }

 private:
  DenseParams p_;
  std::optional<Tensor> input_;
  Tensor pre_activation_;
};

class Conv1dLayer final : public Layer {
 public:
  /// With train_bias false the bias stays fixed and is not exposed as a
  /// parameter (used when batchnorm follows and would cancel it).
  explicit Conv1dLayer(Conv1dParams params, bool train_bias = true)
      : p_(std::move(params)), train_bias_(train_bias) {}

  std::string kind() const override { return "conv1d"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> parameters() override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

  const Conv1dParams& params() const { return p_; }

 private:
  Conv1dParams p_;
  bool train_bias_ = true;
  std::optional<Tensor> input_;
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(BatchNormParams params) : p_(std::move(params)) {}

  std::string kind() const override { return "batchnorm"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> parameters() override;
  std::vector<ParamRef> buffers() override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override { return input; }

  const BatchNormParams& params() const { return p_; }

 private:
  BatchNormParams p_;
  std::optional<BatchNormCache> cache_;
  Mode cached_mode_ = Mode::train;
};

class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  std::string kind() const override { return std::string(activation_name(kind_)); }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override { return activation_apply(kind_, x); }
  Tensor::Shape output_shape(const Tensor::Shape& input) const override { return input; }

 private:
  Activation kind_;
  std::optional<Tensor> input_;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(std::size_t window) : window_(window) {}

  std::string kind() const override { return "maxpool1d"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override { return maxpool1d(x, window_).output; }
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

 private:
  std::size_t window_;
  std::optional<Tensor::Shape> input_shape_;
  std::vector<std::size_t> argmax_;
};

/// [batch, channels, length] -> [batch, length, channels], the sequence view the LSTM reads.
class ToSequenceLayer final : public Layer {
 public:
  std::string kind() const override { return "to_sequence"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

 private:
  bool has_forward_ = false;
};

/// [batch, ...] -> [batch, product(...)].
class FlattenLayer final : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

 private:
  std::optional<Tensor::Shape> input_shape_;
};

/// Runs the LSTM over [batch, steps, in] and emits the final hidden state [batch, hidden].
class LstmLayer final : public Layer {
 public:
  explicit LstmLayer(LstmParams params) : p_(std::move(params)) { p_.validate(); }

  std::string kind() const override { return "lstm"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> parameters() override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;

  const LstmParams& params() const { return p_; }

 private:
  LstmParams p_;
  std::optional<Tensor> input_;
  LstmForward fwd_;
};

/// Inverted dropout. The mask of each training forward is drawn from the
/// current seed, so a forward/backward pair (or repeated forwards under one
/// seed) see the same mask.
class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate);

  std::string kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out, std::span<Tensor> param_grads) override;
  Tensor infer(const Tensor& x) const override { return x; }
  Tensor::Shape output_shape(const Tensor::Shape& input) const override { return input; }

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::uint64_t seed_ = 0;
  std::optional<Tensor> mask_;
};

}  // namespace kpiscan::nn
