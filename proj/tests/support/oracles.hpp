#pragma once

// Naive reference implementations and random generators for the test suites.
// Everything here is written as plain scalar loops over std:: math, independent
// of the engine's packed kernels.

#include <cmath>
#include <cstddef>
#include <vector>

#include "kpiscan/nn/ops.hpp"
#include "kpiscan/rng.hpp"
#include "kpiscan/tensor.hpp"

namespace oracle {

using kpiscan::Rng;
using kpiscan::Tensor;

inline Tensor random_tensor(Rng& rng, Tensor::Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// out[b][f][i] = bias[f] + sum_c sum_j k[f][c][j] * x[b][c][i*stride + j]
inline Tensor conv1d(const kpiscan::nn::Conv1dParams& p, const Tensor& x) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t F = p.kernels.dim(0), K = p.kernels.dim(2), S = p.stride;
  const std::size_t out = (L - K) / S + 1;
  Tensor y({B, F, out});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t i = 0; i < out; ++i) {
        double s = p.bias.at({f});
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t j = 0; j < K; ++j) s += p.kernels.at({f, c, j}) * x.at({b, c, i * S + j});
        }
        y.at({b, f, i}) = s;
      }
    }
  }
  return y;
}

struct LstmResult {
  Tensor hidden_states;  // [B, T, H]
  Tensor h;
  Tensor c;
};

/// Step-by-step LSTM with each gate written out as its own dot product.
inline LstmResult lstm(const kpiscan::nn::LstmParams& p, const Tensor& x, const Tensor* h0 = nullptr,
                       const Tensor* c0 = nullptr) {
  const std::size_t B = x.dim(0), T = x.dim(1), I = x.dim(2);
  const std::size_t H = p.w_f.dim(0);
  LstmResult r{Tensor({B, T, H}), Tensor({B, H}), Tensor({B, H})};
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> h(H, 0.0), c(H, 0.0);
    if (h0) for (std::size_t u = 0; u < H; ++u) h[u] = h0->at({b, u});
    if (c0) for (std::size_t u = 0; u < H; ++u) c[u] = c0->at({b, u});
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> z(I + H);
      for (std::size_t k = 0; k < I; ++k) z[k] = x.at({b, t, k});
      for (std::size_t k = 0; k < H; ++k) z[I + k] = h[k];
      auto affine = [&](const Tensor& w, const Tensor& bias, std::size_t u) {
        double s = bias.at({u});
        for (std::size_t k = 0; k < I + H; ++k) s += w.at({u, k}) * z[k];
        return s;
      };
      std::vector<double> hn(H);
      for (std::size_t u = 0; u < H; ++u) {
        const double f = sigmoid(affine(p.w_f, p.b_f, u));
        const double i = sigmoid(affine(p.w_i, p.b_i, u));
        const double g = std::tanh(affine(p.w_c, p.b_c, u));
        const double o = sigmoid(affine(p.w_o, p.b_o, u));
        c[u] = f * c[u] + i * g;
        hn[u] = o * std::tanh(c[u]);
      }
      h = hn;
      for (std::size_t u = 0; u < H; ++u) r.hidden_states.at({b, t, u}) = h[u];
    }
    for (std::size_t u = 0; u < H; ++u) {
      r.h.at({b, u}) = h[u];
      r.c.at({b, u}) = c[u];
    }
  }
  return r;
}

inline kpiscan::nn::LstmParams random_lstm(Rng& rng, std::size_t in, std::size_t hidden,
                                           double scale = 0.5) {
  kpiscan::nn::LstmParams p;
  for (Tensor* w : {&p.w_f, &p.w_i, &p.w_c, &p.w_o}) *w = random_tensor(rng, {hidden, in + hidden}, -scale, scale);
  for (Tensor* b : {&p.b_f, &p.b_i, &p.b_c, &p.b_o}) *b = random_tensor(rng, {hidden}, -scale, scale);
  return p;
}

/// Ordinary least-squares slope of v against 0..n-1.
inline double ls_slope(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += v[i];
    sxx += x * x;
    sxy += x * v[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

}  // namespace oracle
