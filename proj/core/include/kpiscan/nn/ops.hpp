#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kpiscan/tensor.hpp"

// Functional layer kernels. Shapes follow the [batch, channels, length] convention
// for convolutional data and [batch, steps, features] for recurrent data.
namespace kpiscan::nn {

enum class Mode { train, eval };

enum class Activation { step, sigmoid, tanh, relu, identity };

std::string_view activation_name(Activation kind);
std::optional<Activation> activation_from_name(std::string_view name);

double activate(Activation kind, double x);

Tensor activation_apply(Activation kind, const Tensor& x);
/// Element-wise derivative at x. relu'(0) is 0. Throws NonDifferentiable for step.
Tensor activation_grad(Activation kind, const Tensor& x);

// ---------------------------------------------------------------------------
// Dense

struct DenseParams {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
  Activation activation = Activation::identity;

  std::size_t in_features() const { return weights.dim(1); }
  std::size_t out_features() const { return weights.dim(0); }
};

/// Pre-activation x * W^T + b for x of shape [batch, in].
Tensor dense_linear(const DenseParams& p, const Tensor& x);
/// activation(x * W^T + b).
Tensor dense_forward(const DenseParams& p, const Tensor& x);

struct DenseGrads {
  Tensor weights;
  Tensor bias;
  Tensor input;
};

/// Gradients given the layer input, its cached pre-activation and dL/d(output).
DenseGrads dense_backward(const DenseParams& p, const Tensor& x, const Tensor& pre_activation,
                          const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Conv1d: valid cross-correlation, out[b,f,i] = bias[f] + sum_{c,j} k[f,c,j] x[b,c,i*stride+j]

struct Conv1dParams {
  Tensor kernels;  // [filters, in_channels, k]
  Tensor bias;     // [filters]
  std::size_t stride = 1;

  std::size_t filters() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
};

/// floor((length - kernel) / stride) + 1, or 0 when kernel > length.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

Tensor conv1d_forward(const Conv1dParams& p, const Tensor& x);

struct Conv1dGrads {
  Tensor kernels;
  Tensor bias;
  Tensor input;
};

Conv1dGrads conv1d_backward(const Conv1dParams& p, const Tensor& x, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Max pooling over non-overlapping windows; a trailing remainder is dropped.

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element, first max on ties
};

MaxPoolResult maxpool1d(const Tensor& x, std::size_t window);
Tensor maxpool1d_backward(const Tensor::Shape& input_shape, std::span<const std::size_t> argmax,
                          const Tensor& grad_out);

// ---------------------------------------------------------------------------
// LSTM. With z = [x_t, h_{t-1}]:
//   f = sigmoid(W_f z + b_f)   i = sigmoid(W_i z + b_i)   g = tanh(W_c z + b_c)
//   c_t = f * c_{t-1} + i * g  o = sigmoid(W_o z + b_o)   h_t = o * tanh(c_t)

struct LstmParams {
  Tensor w_f, w_i, w_c, w_o;  // [hidden, input + hidden]
  Tensor b_f, b_i, b_c, b_o;  // [hidden]

  std::size_t hidden_size() const { return w_f.dim(0); }
  std::size_t input_size() const { return w_f.dim(1) - w_f.dim(0); }
  /// Throws ShapeMismatch unless all four gate blocks agree.
  void validate() const;
};

struct LstmForward {
  Tensor hidden_states;  // [batch, steps, hidden]
  Tensor h;              // [batch, hidden], final
  Tensor c;              // [batch, hidden], final
  // Backward caches, empty when produced by lstm_infer.
  Tensor gates;  // [batch, steps, 4*hidden] post-activation, order f,i,g,o
  Tensor cells;  // [batch, steps, hidden]
};

/// h0 / c0 default to zeros when null.
LstmForward lstm_forward(const LstmParams& p, const Tensor& x, const Tensor* h0 = nullptr,
                         const Tensor* c0 = nullptr);

/// Final hidden state only, without backward caches.
Tensor lstm_last_hidden(const LstmParams& p, const Tensor& x);

struct LstmGrads {
  Tensor w_f, w_i, w_c, w_o;
  Tensor b_f, b_i, b_c, b_o;
  Tensor input;  // [batch, steps, in]
  Tensor h0;     // [batch, hidden]
  Tensor c0;     // [batch, hidden]
};

/// Backpropagation through time. grad_hidden_states is dL/dh_t for every step
/// ([batch, steps, hidden]); grad_c_final (optional) is dL/dc_T.
LstmGrads lstm_backward(const LstmParams& p, const Tensor& x, const LstmForward& fwd,
                        const Tensor& grad_hidden_states, const Tensor* h0 = nullptr,
                        const Tensor* c0 = nullptr, const Tensor* grad_c_final = nullptr);

// ---------------------------------------------------------------------------
// Inverted dropout

/// Per-element multipliers: 0 with probability rate, else 1/(1-rate). Pure in (shape, rate, seed).
Tensor dropout_mask(const Tensor::Shape& shape, double rate, std::uint64_t seed);
Tensor dropout_apply(const Tensor& x, double rate, std::uint64_t seed, Mode mode);

// ---------------------------------------------------------------------------
// Batch normalization over every axis except axis 1 (channels)

struct BatchNormParams {
  Tensor gamma;         // [channels]
  Tensor beta;          // [channels]
  Tensor running_mean;  // [channels]
  Tensor running_var;   // [channels]
  double epsilon = 1e-5;
  double momentum = 0.9;

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
  Tensor normalized;             // x_hat
  std::vector<double> inv_std;   // per channel
};

/// Train mode standardizes by (biased) batch moments and folds them into the
/// running statistics with `momentum`; eval mode uses the running statistics.
Tensor batchnorm_forward(BatchNormParams& p, const Tensor& x, Mode mode,
                         BatchNormCache* cache = nullptr);
Tensor batchnorm_infer(const BatchNormParams& p, const Tensor& x);

struct BatchNormGrads {
  Tensor gamma;
  Tensor beta;
  Tensor input;
};

BatchNormGrads batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                  const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Softmax and the batch cross-entropy loss

Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss = 0.0;       // mean over the batch of -log p[true class]
  Tensor grad_logits;      // (softmax - onehot) / batch
  Tensor probabilities;
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Same, with one-hot targets. Throws ShapeMismatch on non-one-hot rows.
LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot_targets);

Tensor one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace kpiscan::nn
