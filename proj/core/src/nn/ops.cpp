#include "kpiscan/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "kpiscan/error.hpp"
#include "kpiscan/rng.hpp"

namespace kpiscan::nn {

namespace {

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(ErrorCode::ShapeMismatch, what);
}

inline double sigmoid(double x) { return detail::sigmoid_kernel(x); }

}  // namespace

// ---------------------------------------------------------------------------
// Activations

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::step: return "step";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

std::optional<Activation> activation_from_name(std::string_view name) {
  for (Activation a : {Activation::step, Activation::sigmoid, Activation::tanh, Activation::relu,
                       Activation::identity}) {
    if (activation_name(a) == name) return a;
  }
  return std::nullopt;
}

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::step: return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return detail::tanh_kernel(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

Tensor activation_apply(Activation kind, const Tensor& x) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate(kind, src[i]);
  }
  return out;
}

Tensor activation_grad(Activation kind, const Tensor& x) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  switch (kind) {
    case Activation::step:
      throw Error(ErrorCode::NonDifferentiable, "step activation has no usable derivative");
    case Activation::sigmoid:
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double s = sigmoid(src[i]);
        dst[i] = s * (1.0 - s);
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double t = detail::tanh_kernel(src[i]);
        dst[i] = 1.0 - t * t;
      }
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? 1.0 : 0.0;
      break;
    case Activation::identity:
      out.fill(1.0);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense

Tensor dense_linear(const DenseParams& p, const Tensor& x) {
  if (p.weights.rank() != 2 || p.bias.shape() != Tensor::Shape{p.weights.dim(0)}) {
    shape_error("dense parameters: weights " + shape_string(p.weights.shape()) + ", bias " +
                shape_string(p.bias.shape()));
  }
  const std::size_t out_f = p.out_features();
  const std::size_t in_f = p.in_features();
  if (x.rank() != 2 || x.dim(1) != in_f) {
    shape_error("dense input " + shape_string(x.shape()) + " vs " + std::to_string(in_f) +
                " features");
  }
  const std::size_t batch = x.dim(0);
  std::vector<double> wt(in_f * out_f);
  detail::transpose(p.weights.data().data(), out_f, in_f, wt.data());

  Tensor y({batch, out_f});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(p.bias.data().begin(), p.bias.data().end(), y.data().begin() + b * out_f);
  }
  detail::gemm_acc(x.data().data(), batch, in_f, wt.data(), out_f, y.data().data());
  return y;
}

Tensor dense_forward(const DenseParams& p, const Tensor& x) {
  Tensor y = dense_linear(p, x);
  if (p.activation == Activation::identity) return y;
  return activation_apply(p.activation, y);
}

DenseGrads dense_backward(const DenseParams& p, const Tensor& x, const Tensor& pre_activation,
                          const Tensor& grad_out) {
  const std::size_t out_f = p.out_features();
  const std::size_t in_f = p.in_features();
  const std::size_t batch = x.dim(0);
  require_shape(grad_out, {batch, out_f}, "dense grad_out");

  Tensor delta = grad_out;
  if (p.activation != Activation::identity) {
    const Tensor g = activation_grad(p.activation, pre_activation);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= g[i];
  }

  DenseGrads grads{Tensor({out_f, in_f}), Tensor({out_f}), Tensor({batch, in_f})};
  // dW[o, :] += delta[b, o] * x[b, :]
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data().data() + b * in_f;
    for (std::size_t o = 0; o < out_f; ++o) {
      const double d = delta[b * out_f + o];
      grads.bias[o] += d;
      double* wrow = grads.weights.data().data() + o * in_f;
      for (std::size_t i = 0; i < in_f; ++i) wrow[i] += d * xb[i];
    }
  }
  // dx = delta * W
  detail::gemm_acc(delta.data().data(), batch, out_f, p.weights.data().data(), in_f,
                   grads.input.data().data());
  return grads;
}

// ---------------------------------------------------------------------------
// Conv1d

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0 || kernel > length) return 0;
  return (length - kernel) / stride + 1;
}

namespace {

void check_conv(const Conv1dParams& p, const Tensor& x) {
  if (p.kernels.rank() != 3 || p.bias.shape() != Tensor::Shape{p.kernels.dim(0)}) {
    shape_error("conv1d parameters: kernels " + shape_string(p.kernels.shape()) + ", bias " +
                shape_string(p.bias.shape()));
  }
  if (p.stride == 0 || p.kernel_size() == 0) shape_error("conv1d kernel and stride must be >= 1");
  if (x.rank() != 3 || x.dim(1) != p.in_channels()) {
    shape_error("conv1d input " + shape_string(x.shape()) + " vs " +
                std::to_string(p.in_channels()) + " channels");
  }
  if (x.dim(2) < p.kernel_size()) {
    throw Error(ErrorCode::KernelTooLarge, "kernel " + std::to_string(p.kernel_size()) +
                                               " exceeds length " + std::to_string(x.dim(2)));
  }
}

}  // namespace

Tensor conv1d_forward(const Conv1dParams& p, const Tensor& x) {
  check_conv(p, x);
  const std::size_t batch = x.dim(0);
  const std::size_t ch = x.dim(1);
  const std::size_t len = x.dim(2);
  const std::size_t filters = p.filters();
  const std::size_t k = p.kernel_size();
  const std::size_t stride = p.stride;
  const std::size_t out_len = conv1d_output_length(len, k, stride);

  // im2col: cols[(c, j), i] = x[c, i * stride + j]; each output then sums
  // its products in ascending (c, j) order after the bias.
  Tensor y({batch, filters, out_len});
  const double* kern = p.kernels.data().data();
  std::vector<double> cols(ch * k * out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data().data() + b * ch * len;
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        double* row = cols.data() + (c * k + j) * out_len;
        const double* in = xb + c * len + j;
        for (std::size_t i = 0; i < out_len; ++i) row[i] = in[i * stride];
      }
    }
    double* yb = y.data().data() + b * filters * out_len;
    for (std::size_t f = 0; f < filters; ++f) {
      std::fill(yb + f * out_len, yb + (f + 1) * out_len, p.bias[f]);
    }
    detail::gemm_acc(kern, filters, ch * k, cols.data(), out_len, yb);
  }
  return y;
}

Conv1dGrads conv1d_backward(const Conv1dParams& p, const Tensor& x, const Tensor& grad_out) {
  check_conv(p, x);
  const std::size_t batch = x.dim(0);
  const std::size_t ch = x.dim(1);
  const std::size_t len = x.dim(2);
  const std::size_t filters = p.filters();
  const std::size_t k = p.kernel_size();
  const std::size_t stride = p.stride;
  const std::size_t out_len = conv1d_output_length(len, k, stride);
  require_shape(grad_out, {batch, filters, out_len}, "conv1d grad_out");

  Conv1dGrads g{Tensor(p.kernels.shape()), Tensor(p.bias.shape()), Tensor(x.shape())};
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < filters; ++f) {
      const double* go = grad_out.data().data() + (b * filters + f) * out_len;
      double bsum = 0.0;
      for (std::size_t i = 0; i < out_len; ++i) bsum += go[i];
      g.bias[f] += bsum;
      for (std::size_t c = 0; c < ch; ++c) {
        const double* in = x.data().data() + (b * ch + c) * len;
        double* gin = g.input.data().data() + (b * ch + c) * len;
        const double* w = p.kernels.data().data() + (f * ch + c) * k;
        double* gw = g.kernels.data().data() + (f * ch + c) * k;
        for (std::size_t j = 0; j < k; ++j) {
          double acc = 0.0;
          const double wj = w[j];
          for (std::size_t i = 0; i < out_len; ++i) {
            acc += go[i] * in[i * stride + j];
            gin[i * stride + j] += wj * go[i];
          }
          gw[j] += acc;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling

MaxPoolResult maxpool1d(const Tensor& x, std::size_t window) {
  if (x.rank() != 3) shape_error("maxpool1d expects [batch, channels, length]");
  if (window == 0) throw Error(ErrorCode::WindowTooLarge, "window must be >= 1");
  const std::size_t len = x.dim(2);
  if (len < window) {
    throw Error(ErrorCode::WindowTooLarge,
                "window " + std::to_string(window) + " exceeds length " + std::to_string(len));
  }
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t out_len = len / window;
  MaxPoolResult r{Tensor({x.dim(0), x.dim(1), out_len}), std::vector<std::size_t>(rows * out_len)};
  const double* src = x.data().data();
  double* dst = r.output.data().data();
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t o = 0; o < out_len; ++o) {
      const std::size_t base = row * len + o * window;
      std::size_t best = base;
      for (std::size_t j = 1; j < window; ++j) {
        if (src[base + j] > src[best]) best = base + j;
      }
      dst[row * out_len + o] = src[best];
      r.argmax[row * out_len + o] = best;
    }
  }
  return r;
}

Tensor maxpool1d_backward(const Tensor::Shape& input_shape, std::span<const std::size_t> argmax,
                          const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) shape_error("maxpool1d backward: argmax/grad size");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

// ---------------------------------------------------------------------------
// LSTM

void LstmParams::validate() const {
  if (w_f.rank() != 2 || w_f.dim(1) <= w_f.dim(0)) {
    shape_error("lstm W_f must be [hidden, input + hidden], got " + shape_string(w_f.shape()));
  }
  const Tensor::Shape ws = w_f.shape();
  const Tensor::Shape bs{w_f.dim(0)};
  for (const Tensor* w : {&w_i, &w_c, &w_o}) {
    if (w->shape() != ws) shape_error("lstm gate weight blocks differ in shape");
  }
  for (const Tensor* b : {&b_f, &b_i, &b_c, &b_o}) {
    if (b->shape() != bs) shape_error("lstm gate bias blocks must be [hidden]");
  }
}

namespace {

struct PackedLstm {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::vector<double> wt;    // [in + hidden, 4 * hidden], gate order f,i,g,o
  std::vector<double> bias;  // [4 * hidden]
};

PackedLstm pack(const LstmParams& p) {
  p.validate();
  PackedLstm pk;
  pk.in = p.input_size();
  pk.hidden = p.hidden_size();
  const std::size_t h = pk.hidden;
  const std::size_t z = pk.in + h;
  pk.wt.resize(z * 4 * h);
  pk.bias.resize(4 * h);
  const Tensor* ws[4] = {&p.w_f, &p.w_i, &p.w_c, &p.w_o};
  const Tensor* bs[4] = {&p.b_f, &p.b_i, &p.b_c, &p.b_o};
  for (std::size_t g = 0; g < 4; ++g) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < z; ++c) pk.wt[c * 4 * h + g * h + r] = (*ws[g])[r * z + c];
      pk.bias[g * h + r] = (*bs[g])[r];
    }
  }
  return pk;
}

void check_lstm_input(const PackedLstm& pk, const Tensor& x, const Tensor* h0, const Tensor* c0) {
  if (x.rank() != 3 || x.dim(2) != pk.in) {
    shape_error("lstm input " + shape_string(x.shape()) + " vs " + std::to_string(pk.in) +
                " features");
  }
  const Tensor::Shape state{x.dim(0), pk.hidden};
  if (h0) require_shape(*h0, state, "lstm h0");
  if (c0) require_shape(*c0, state, "lstm c0");
}

// Runs the recurrence; caches are written only when non-null.
void lstm_run(const PackedLstm& pk, const Tensor& x, const Tensor* h0, const Tensor* c0,
              double* hidden_states, double* gates_cache, double* cells_cache, double* h_final,
              double* c_final) {
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t in = pk.in;
  const std::size_t h = pk.hidden;
  const std::size_t zw = in + h;
  const std::size_t gw = 4 * h;

  std::vector<double> z(batch * zw);
  std::vector<double> pre(batch * gw);
  std::vector<double> c(batch * h, 0.0);
  std::vector<double> hcur(batch * h, 0.0);
  if (h0) std::copy(h0->data().begin(), h0->data().end(), hcur.begin());
  if (c0) std::copy(c0->data().begin(), c0->data().end(), c.begin());

  const double* xs = x.data().data();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(xs + (b * steps + t) * in, in, z.data() + b * zw);
      std::copy_n(hcur.data() + b * h, h, z.data() + b * zw + in);
      std::copy(pk.bias.begin(), pk.bias.end(), pre.data() + b * gw);
    }
    detail::gemm_acc(z.data(), batch, zw, pk.wt.data(), gw, pre.data());

    for (std::size_t b = 0; b < batch; ++b) {
      double* g = pre.data() + b * gw;
      double* cb = c.data() + b * h;
      double* hb = hcur.data() + b * h;
      detail::sigmoid_inplace(g, 2 * h);
      detail::tanh_inplace(g + 2 * h, h);
      detail::sigmoid_inplace(g + 3 * h, h);
      for (std::size_t u = 0; u < h; ++u) cb[u] = g[u] * cb[u] + g[h + u] * g[2 * h + u];
      std::copy_n(cb, h, hb);
      detail::tanh_inplace(hb, h);
      for (std::size_t u = 0; u < h; ++u) hb[u] *= g[3 * h + u];
      if (hidden_states) std::copy_n(hb, h, hidden_states + (b * steps + t) * h);
      if (gates_cache) std::copy_n(g, gw, gates_cache + (b * steps + t) * gw);
      if (cells_cache) std::copy_n(cb, h, cells_cache + (b * steps + t) * h);
    }
  }
  if (h_final) std::copy(hcur.begin(), hcur.end(), h_final);
  if (c_final) std::copy(c.begin(), c.end(), c_final);
}

}  // namespace

LstmForward lstm_forward(const LstmParams& p, const Tensor& x, const Tensor* h0,
                         const Tensor* c0) {
  const PackedLstm pk = pack(p);
  check_lstm_input(pk, x, h0, c0);
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  LstmForward f{Tensor({batch, steps, pk.hidden}), Tensor({batch, pk.hidden}),
                Tensor({batch, pk.hidden}), Tensor({batch, steps, 4 * pk.hidden}),
                Tensor({batch, steps, pk.hidden})};
  lstm_run(pk, x, h0, c0, f.hidden_states.data().data(), f.gates.data().data(),
           f.cells.data().data(), f.h.data().data(), f.c.data().data());
  return f;
}

Tensor lstm_last_hidden(const LstmParams& p, const Tensor& x) {
  const PackedLstm pk = pack(p);
  check_lstm_input(pk, x, nullptr, nullptr);
  Tensor h({x.dim(0), pk.hidden});
  lstm_run(pk, x, nullptr, nullptr, nullptr, nullptr, nullptr, h.data().data(), nullptr);
  return h;
}

LstmGrads lstm_backward(const LstmParams& p, const Tensor& x, const LstmForward& fwd,
                        const Tensor& grad_hidden_states, const Tensor* h0, const Tensor* c0,
                        const Tensor* grad_c_final) {
  p.validate();
  const std::size_t in = p.input_size();
  const std::size_t h = p.hidden_size();
  const std::size_t zw = in + h;
  const std::size_t gw = 4 * h;
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  if (fwd.gates.empty() || fwd.cells.empty()) {
    throw Error(ErrorCode::NoForwardState, "lstm backward needs a cached forward pass");
  }
  require_shape(grad_hidden_states, {batch, steps, h}, "lstm grad_hidden_states");
  require_shape(fwd.gates, {batch, steps, gw}, "lstm cached gates");

  // Packed weights in [4h, z] row layout, gate order f,i,g,o.
  std::vector<double> w(gw * zw);
  const Tensor* ws[4] = {&p.w_f, &p.w_i, &p.w_c, &p.w_o};
  for (std::size_t g = 0; g < 4; ++g) {
    std::copy(ws[g]->data().begin(), ws[g]->data().end(), w.begin() + g * h * zw);
  }

  std::vector<double> dw(gw * zw, 0.0);
  std::vector<double> db(gw, 0.0);
  Tensor dx(x.shape());
  std::vector<double> dh_next(batch * h, 0.0);
  std::vector<double> dc_next(batch * h, 0.0);
  if (grad_c_final) {
    require_shape(*grad_c_final, {batch, h}, "lstm grad_c_final");
    std::copy(grad_c_final->data().begin(), grad_c_final->data().end(), dc_next.begin());
  }
  std::vector<double> dgates(batch * gw);
  std::vector<double> z(batch * zw);
  std::vector<double> dz(batch * zw);

  const double* hs = fwd.hidden_states.data().data();
  const double* cs = fwd.cells.data().data();
  const double* gs = fwd.gates.data().data();
  const double* dhs = grad_hidden_states.data().data();

  for (std::size_t tt = steps; tt-- > 0;) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gate = gs + (b * steps + tt) * gw;
      const double* ct = cs + (b * steps + tt) * h;
      double* dg = dgates.data() + b * gw;
      for (std::size_t u = 0; u < h; ++u) {
        const double f = gate[u];
        const double i = gate[h + u];
        const double cand = gate[2 * h + u];
        const double o = gate[3 * h + u];
        double c_prev = 0.0;
        if (tt > 0) {
          c_prev = cs[(b * steps + tt - 1) * h + u];
        } else if (c0) {
          c_prev = (*c0)[b * h + u];
        }
        const double tanh_c = detail::tanh_kernel(ct[u]);
        const double dh = dhs[(b * steps + tt) * h + u] + dh_next[b * h + u];
        const double d_o = dh * tanh_c;
        const double dc = dc_next[b * h + u] + dh * o * (1.0 - tanh_c * tanh_c);
        dg[u] = dc * c_prev * f * (1.0 - f);
        dg[h + u] = dc * cand * i * (1.0 - i);
        dg[2 * h + u] = dc * i * (1.0 - cand * cand);
        dg[3 * h + u] = d_o * o * (1.0 - o);
        dc_next[b * h + u] = dc * f;
      }
      // z_t = [x_t, h_{t-1}]
      double* zb = z.data() + b * zw;
      std::copy_n(x.data().data() + (b * steps + tt) * in, in, zb);
      if (tt > 0) {
        std::copy_n(hs + (b * steps + tt - 1) * h, h, zb + in);
      } else if (h0) {
        std::copy_n(h0->data().data() + b * h, h, zb + in);
      } else {
        std::fill_n(zb + in, h, 0.0);
      }
    }

    // dW += dgates^T z ; db += sum_b dgates
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dg = dgates.data() + b * gw;
      const double* zb = z.data() + b * zw;
      for (std::size_t g = 0; g < gw; ++g) {
        const double v = dg[g];
        db[g] += v;
        double* row = dw.data() + g * zw;
        for (std::size_t k = 0; k < zw; ++k) row[k] += v * zb[k];
      }
    }
    // dz = dgates W
    std::fill(dz.begin(), dz.end(), 0.0);
    detail::gemm_acc(dgates.data(), batch, gw, w.data(), zw, dz.data());
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(dz.data() + b * zw, in, dx.data().data() + (b * steps + tt) * in);
      std::copy_n(dz.data() + b * zw + in, h, dh_next.data() + b * h);
    }
  }

  LstmGrads g;
  Tensor* gws[4] = {&g.w_f, &g.w_i, &g.w_c, &g.w_o};
  Tensor* gbs[4] = {&g.b_f, &g.b_i, &g.b_c, &g.b_o};
  for (std::size_t k = 0; k < 4; ++k) {
    *gws[k] = Tensor({h, zw}, std::vector<double>(dw.begin() + k * h * zw,
                                                  dw.begin() + (k + 1) * h * zw));
    *gbs[k] = Tensor({h}, std::vector<double>(db.begin() + k * h, db.begin() + (k + 1) * h));
  }
  g.input = std::move(dx);
  g.h0 = Tensor({batch, h}, dh_next);
  g.c0 = Tensor({batch, h}, dc_next);
  return g;
}

// ---------------------------------------------------------------------------
// Dropout

Tensor dropout_mask(const Tensor::Shape& shape, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::BadRate, "dropout rate must lie in [0, 1)");
  }
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  Rng rng(seed);
  for (double& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

Tensor dropout_apply(const Tensor& x, double rate, std::uint64_t seed, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::BadRate, "dropout rate must lie in [0, 1)");
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const Tensor mask = dropout_mask(x.shape(), rate, seed);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  return {Tensor({channels}, 1.0), Tensor({channels}, 0.0), Tensor({channels}, 0.0),
          Tensor({channels}, 1.0)};
}

namespace {

struct BnLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t inner;  // product of axes after the channel axis
};

BnLayout bn_layout(const BatchNormParams& p, const Tensor& x) {
  if (x.rank() < 2 || x.dim(1) != p.channels()) {
    shape_error("batchnorm input " + shape_string(x.shape()) + " vs " +
                std::to_string(p.channels()) + " channels");
  }
  const Tensor::Shape cs{p.channels()};
  if (p.beta.shape() != cs || p.running_mean.shape() != cs || p.running_var.shape() != cs) {
    shape_error("batchnorm parameter shapes differ");
  }
  std::size_t inner = 1;
  for (std::size_t a = 2; a < x.rank(); ++a) inner *= x.dim(a);
  return {x.dim(0), x.dim(1), inner};
}

}  // namespace

Tensor batchnorm_infer(const BatchNormParams& p, const Tensor& x) {
  const BnLayout l = bn_layout(p, x);
  Tensor y(x.shape());
  for (std::size_t c = 0; c < l.channels; ++c) {
    const double scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.epsilon);
    const double mean = p.running_mean[c];
    const double shift = p.beta[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const double* src = x.data().data() + (b * l.channels + c) * l.inner;
      double* dst = y.data().data() + (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] = (src[i] - mean) * scale + shift;
    }
  }
  return y;
}

Tensor batchnorm_forward(BatchNormParams& p, const Tensor& x, Mode mode, BatchNormCache* cache) {
  if (p.epsilon <= 0.0) throw Error(ErrorCode::BadSpec, "batchnorm epsilon must be positive");
  if (mode == Mode::eval) return batchnorm_infer(p, x);

  const BnLayout l = bn_layout(p, x);
  if (l.batch < 2) {
    throw Error(ErrorCode::BatchTooSmall, "batchnorm in train mode needs at least 2 rows");
  }
  const double count = static_cast<double>(l.batch * l.inner);
  Tensor y(x.shape());
  Tensor x_hat(x.shape());
  std::vector<double> inv_std(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const double* src = x.data().data() + (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const double* src = x.data().data() + (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const double is = 1.0 / std::sqrt(var + p.epsilon);
    inv_std[c] = is;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        const double xh = (x[off + i] - mean) * is;
        x_hat[off + i] = xh;
        y[off + i] = p.gamma[c] * xh + p.beta[c];
      }
    }
    p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0 - p.momentum) * mean;
    p.running_var[c] = p.momentum * p.running_var[c] + (1.0 - p.momentum) * var;
  }
  if (cache) {
    cache->normalized = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                  const Tensor& grad_out) {
  if (cache.normalized.empty()) {
    throw Error(ErrorCode::NoForwardState, "batchnorm backward needs a train-mode forward");
  }
  const BnLayout l = bn_layout(p, cache.normalized);
  require_shape(grad_out, cache.normalized.shape(), "batchnorm grad_out");
  const double count = static_cast<double>(l.batch * l.inner);
  BatchNormGrads g{Tensor({l.channels}), Tensor({l.channels}), Tensor(grad_out.shape())};
  for (std::size_t c = 0; c < l.channels; ++c) {
    double dgamma = 0.0;
    double dbeta = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        dbeta += grad_out[off + i];
        dgamma += grad_out[off + i] * cache.normalized[off + i];
      }
    }
    g.gamma[c] = dgamma;
    g.beta[c] = dbeta;
    const double k = p.gamma[c] * cache.inv_std[c] / count;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        g.input[off + i] =
            k * (count * grad_out[off + i] - dbeta - cache.normalized[off + i] * dgamma);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) shape_error("softmax expects [batch, classes]");
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* l = logits.data().data() + r * cols;
    double* out = p.data().data() + r * cols;
    const double m = *std::max_element(l, l + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(l[c] - m);
      sum += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= sum;
  }
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    shape_error("cross-entropy: logits " + shape_string(logits.shape()) + " vs " +
                std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  LossResult r;
  r.probabilities = softmax(logits);
  r.grad_logits = r.probabilities;
  const double inv_batch = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  for (std::size_t row = 0; row < rows; ++row) {
    const int y = labels[row];
    if (y < 0 || static_cast<std::size_t>(y) >= cols) shape_error("label outside class range");
    const double* l = logits.data().data() + row * cols;
    const double m = *std::max_element(l, l + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(l[c] - m);
    total += (m + std::log(sum)) - l[y];
    double* g = r.grad_logits.data().data() + row * cols;
    g[y] -= 1.0;
    for (std::size_t c = 0; c < cols; ++c) g[c] *= inv_batch;
  }
  r.loss = total * inv_batch;
  return r;
}

LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot_targets) {
  require_shape(one_hot_targets, logits.shape(), "cross-entropy targets");
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  std::vector<int> labels(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    int hot = -1;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = one_hot_targets[r * cols + c];
      if (v == 1.0 && hot < 0) {
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        hot = -2;
        break;
      }
    }
    if (hot < 0) shape_error("target row " + std::to_string(r) + " is not one-hot");
    labels[r] = hot;
  }
  return softmax_cross_entropy(logits, labels);
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    t[r * classes + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  return t;
}

}  // namespace kpiscan::nn
