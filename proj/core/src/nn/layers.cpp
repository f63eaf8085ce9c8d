#include "kpiscan/nn/layers.hpp"

#include <cmath>

#include "kpiscan/error.hpp"

namespace kpiscan::nn {

namespace {

[[noreturn]] void no_forward(const std::string& kind) {
  throw Error(ErrorCode::NoForwardState, kind + " backward called without a cached forward");
}

void check_grad_slots(std::span<Tensor> grads, std::size_t expected, const std::string& kind) {
  if (grads.size() != expected) {
    throw Error(ErrorCode::ShapeMismatch, kind + " expects " + std::to_string(expected) +
                                              " gradient slots");
  }
}

}  // namespace

// Dense ---------------------------------------------------------------------

Tensor DenseLayer::forward(const Tensor& x, Mode) {
  input_ = x;
  pre_activation_ = dense_linear(p_, x);
  if (p_.activation == Activation::identity) return pre_activation_;
  return activation_apply(p_.activation, pre_activation_);
}

Tensor DenseLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_) no_forward(kind());
  check_grad_slots(param_grads, 2, kind());
  DenseGrads g = dense_backward(p_, *input_, pre_activation_, grad_out);
  param_grads[0] = std::move(g.weights);
  param_grads[1] = std::move(g.bias);
  return std::move(g.input);
}

Tensor DenseLayer::infer(const Tensor& x) const { return dense_forward(p_, x); }

std::vector<ParamRef> DenseLayer::parameters() {
  return {{"weights", &p_.weights}, {"bias", &p_.bias}};
}

Tensor::Shape DenseLayer::output_shape(const Tensor::Shape& input) const {
  return {input.at(0), p_.out_features()};
}

// Conv1d --------------------------------------------------------------------

Tensor Conv1dLayer::forward(const Tensor& x, Mode) {
  Tensor y = conv1d_forward(p_, x);
  input_ = x;
  return y;
}

Tensor Conv1dLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_) no_forward(kind());
  check_grad_slots(param_grads, train_bias_ ? 2 : 1, kind());
  Conv1dGrads g = conv1d_backward(p_, *input_, grad_out);
  param_grads[0] = std::move(g.kernels);
  if (train_bias_) param_grads[1] = std::move(g.bias);
  return std::move(g.input);
}

Tensor Conv1dLayer::infer(const Tensor& x) const { return conv1d_forward(p_, x); }

std::vector<ParamRef> Conv1dLayer::parameters() {
  if (!train_bias_) return {{"kernels", &p_.kernels}};
  return {{"kernels", &p_.kernels}, {"bias", &p_.bias}};
}

Tensor::Shape Conv1dLayer::output_shape(const Tensor::Shape& input) const {
  return {input.at(0), p_.filters(),
          conv1d_output_length(input.at(2), p_.kernel_size(), p_.stride)};
}

// BatchNorm -----------------------------------------------------------------

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  cached_mode_ = mode;
  if (mode == Mode::eval) {
    cache_.emplace();
    cache_->normalized = x;  // eval backward only needs the shape
    return batchnorm_infer(p_, x);
  }
  BatchNormCache cache;
  Tensor y = batchnorm_forward(p_, x, mode, &cache);
  cache_ = std::move(cache);
  return y;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!cache_) no_forward(kind());
  check_grad_slots(param_grads, 2, kind());
  if (cached_mode_ == Mode::eval) {
    // Fixed affine map: y = (x - mean) * s + beta.
    const Tensor& x = cache_->normalized;
    const std::size_t ch = p_.channels();
    std::size_t inner = 1;
    for (std::size_t a = 2; a < x.rank(); ++a) inner *= x.dim(a);
    Tensor gg({ch}), gb({ch}), gx(x.shape());
    for (std::size_t b = 0; b < x.dim(0); ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double inv = 1.0 / std::sqrt(p_.running_var[c] + p_.epsilon);
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t off = (b * ch + c) * inner + i;
          gb[c] += grad_out[off];
          gg[c] += grad_out[off] * (x[off] - p_.running_mean[c]) * inv;
          gx[off] = grad_out[off] * p_.gamma[c] * inv;
        }
      }
    }
    param_grads[0] = std::move(gg);
    param_grads[1] = std::move(gb);
    return gx;
  }
  BatchNormGrads g = batchnorm_backward(p_, *cache_, grad_out);
  param_grads[0] = std::move(g.gamma);
  param_grads[1] = std::move(g.beta);
  return std::move(g.input);
}

Tensor BatchNormLayer::infer(const Tensor& x) const { return batchnorm_infer(p_, x); }

std::vector<ParamRef> BatchNormLayer::parameters() {
  return {{"gamma", &p_.gamma}, {"beta", &p_.beta}};
}

std::vector<ParamRef> BatchNormLayer::buffers() {
  return {{"running_mean", &p_.running_mean}, {"running_var", &p_.running_var}};
}

// Activation ----------------------------------------------------------------

Tensor ActivationLayer::forward(const Tensor& x, Mode) {
  input_ = x;
  return activation_apply(kind_, x);
}

Tensor ActivationLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_) no_forward(kind());
  check_grad_slots(param_grads, 0, kind());
  Tensor g = activation_grad(kind_, *input_);
  require_shape(grad_out, g.shape(), "activation grad_out");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= grad_out[i];
  return g;
}

// MaxPool -------------------------------------------------------------------

Tensor MaxPoolLayer::forward(const Tensor& x, Mode) {
  MaxPoolResult r = maxpool1d(x, window_);
  input_shape_ = x.shape();
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_shape_) no_forward(kind());
  check_grad_slots(param_grads, 0, kind());
  return maxpool1d_backward(*input_shape_, argmax_, grad_out);
}

Tensor::Shape MaxPoolLayer::output_shape(const Tensor::Shape& input) const {
  return {input.at(0), input.at(1), window_ == 0 ? 0 : input.at(2) / window_};
}

// ToSequence ----------------------------------------------------------------

namespace {

// [a, b, c] -> [a, c, b]
Tensor swap_last_two(const Tensor& x) {
  if (x.rank() != 3) {
    throw Error(ErrorCode::ShapeMismatch, "expected a rank-3 tensor, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), r = x.dim(1), c = x.dim(2);
  Tensor y({n, c, r});
  for (std::size_t b = 0; b < n; ++b) {
    const double* src = x.data().data() + b * r * c;
    double* dst = y.data().data() + b * r * c;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
  }
  return y;
}

}  // namespace

Tensor ToSequenceLayer::forward(const Tensor& x, Mode) {
  has_forward_ = true;
  return swap_last_two(x);
}

Tensor ToSequenceLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!has_forward_) no_forward(kind());
  check_grad_slots(param_grads, 0, kind());
  return swap_last_two(grad_out);
}

Tensor ToSequenceLayer::infer(const Tensor& x) const { return swap_last_two(x); }

Tensor::Shape ToSequenceLayer::output_shape(const Tensor::Shape& input) const {
  return {input.at(0), input.at(2), input.at(1)};
}

// Flatten -------------------------------------------------------------------

Tensor FlattenLayer::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  return infer(x);
}

Tensor FlattenLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_shape_) no_forward(kind());
  check_grad_slots(param_grads, 0, kind());
  return grad_out.reshaped(*input_shape_);
}

Tensor FlattenLayer::infer(const Tensor& x) const {
  return x.reshaped(output_shape(x.shape()));
}

Tensor::Shape FlattenLayer::output_shape(const Tensor::Shape& input) const {
  std::size_t rest = 1;
  for (std::size_t a = 1; a < input.size(); ++a) rest *= input[a];
  return {input.at(0), rest};
}

// LSTM ----------------------------------------------------------------------

Tensor LstmLayer::forward(const Tensor& x, Mode) {
  fwd_ = lstm_forward(p_, x);
  input_ = x;
  return fwd_.h;
}

Tensor LstmLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!input_) no_forward(kind());
  check_grad_slots(param_grads, 8, kind());
  const std::size_t batch = input_->dim(0);
  const std::size_t steps = input_->dim(1);
  const std::size_t h = p_.hidden_size();
  require_shape(grad_out, {batch, h}, "lstm grad_out");
  // Only the final hidden state feeds the classifier.
  Tensor dh({batch, steps, h});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(grad_out.data().data() + b * h, h, dh.data().data() + (b * steps + steps - 1) * h);
  }
  LstmGrads g = lstm_backward(p_, *input_, fwd_, dh);
  param_grads[0] = std::move(g.w_f);
  param_grads[1] = std::move(g.w_i);
  param_grads[2] = std::move(g.w_c);
  param_grads[3] = std::move(g.w_o);
  param_grads[4] = std::move(g.b_f);
  param_grads[5] = std::move(g.b_i);
  param_grads[6] = std::move(g.b_c);
  param_grads[7] = std::move(g.b_o);
  return std::move(g.input);
}

Tensor LstmLayer::infer(const Tensor& x) const { return lstm_last_hidden(p_, x); }

std::vector<ParamRef> LstmLayer::parameters() {
  return {{"W_f", &p_.w_f}, {"W_i", &p_.w_i}, {"W_c", &p_.w_c}, {"W_o", &p_.w_o},
          {"b_f", &p_.b_f}, {"b_i", &p_.b_i}, {"b_c", &p_.b_c}, {"b_o", &p_.b_o}};
}

Tensor::Shape LstmLayer::output_shape(const Tensor::Shape& input) const {
  return {input.at(0), p_.hidden_size()};
}

// Dropout -------------------------------------------------------------------

DropoutLayer::DropoutLayer(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::BadRate, "dropout rate must lie in [0, 1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::eval || rate_ == 0.0) {
    mask_ = Tensor(x.shape(), 1.0);
    return x;
  }
  mask_ = dropout_mask(x.shape(), rate_, seed_);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*mask_)[i];
  return y;
}

Tensor DropoutLayer::backward(const Tensor& grad_out, std::span<Tensor> param_grads) {
  if (!mask_) no_forward(kind());
  check_grad_slots(param_grads, 0, kind());
  require_shape(grad_out, mask_->shape(), "dropout grad_out");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= (*mask_)[i];
  return g;
}

}  // namespace kpiscan::nn
