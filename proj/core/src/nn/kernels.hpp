#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>

// Internal dense kernels. Each output element accumulates its products in
// ascending k order no matter how rows are blocked, so a row's result never
// depends on which other rows share the call.
namespace kpiscan::nn::detail {

using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

/// c[m x n] += a[m x k] * b[k x n], all row-major.
inline void gemm_acc(const double* a, std::size_t m, std::size_t k, const double* b,
                     std::size_t n, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      Vec8 x00 = load8(c0 + j), x01 = load8(c0 + j + 8);
      Vec8 x10 = load8(c1 + j), x11 = load8(c1 + j + 8);
      Vec8 x20 = load8(c2 + j), x21 = load8(c2 + j + 8);
      Vec8 x30 = load8(c3 + j), x31 = load8(c3 + j + 8);
      for (std::size_t p = 0; p < k; ++p) {
        const Vec8 b0 = load8(b + p * n + j);
        const Vec8 b1 = load8(b + p * n + j + 8);
        x00 += a0[p] * b0;
        x01 += a0[p] * b1;
        x10 += a1[p] * b0;
        x11 += a1[p] * b1;
        x20 += a2[p] * b0;
        x21 += a2[p] * b1;
        x30 += a3[p] * b0;
        x31 += a3[p] * b1;
      }
      store8(c0 + j, x00);
      store8(c0 + j + 8, x01);
      store8(c1 + j, x10);
      store8(c1 + j + 8, x11);
      store8(c2 + j, x20);
      store8(c2 + j + 8, x21);
      store8(c3 + j, x30);
      store8(c3 + j + 8, x31);
    }
    for (; j + 8 <= n; j += 8) {
      Vec8 x0 = load8(c0 + j), x1 = load8(c1 + j), x2 = load8(c2 + j), x3 = load8(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const Vec8 b0 = load8(b + p * n + j);
        x0 += a0[p] * b0;
        x1 += a1[p] * b0;
        x2 += a2[p] * b0;
        x3 += a3[p] * b0;
      }
      store8(c0 + j, x0);
      store8(c1 + j, x1);
      store8(c2 + j, x2);
      store8(c3 + j, x3);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double bj = b[p * n + j];
        s0 += a0[p] * bj;
        s1 += a1[p] * bj;
        s2 += a2[p] * bj;
        s3 += a3[p] * bj;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = ai[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += v * brow[j];
    }
  }
}

using Vec8i = std::int64_t __attribute__((vector_size(64)));

inline double pick(bool m, double a, double b) { return m ? a : b; }
inline Vec8 pick(Vec8i m, Vec8 a, Vec8 b) { return m ? a : b; }

inline double exp2_int(double n) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(static_cast<std::int64_t>(n) + 1023)
                               << 52);
}
inline Vec8 exp2_int(Vec8 n) {
  const Vec8i bits = (__builtin_convertvector(n, Vec8i) + 1023) << 52;
  Vec8 out;
  std::memcpy(&out, &bits, sizeof out);
  return out;
}

/// exp(x) with the same operation sequence for scalars and Vec8 lanes, so a
/// value's result does not depend on where it sits in a buffer. Within 1 ulp
/// on [-708, 709]; inputs outside are clamped.
template <typename T>
inline T exp_kernel(T x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  const T zero{};
  x = pick(x < -708.0, zero - 708.0, x);
  x = pick(x > 709.0, zero + 709.0, x);
  const T n = (x * kLog2e + kShifter) - kShifter;
  const T r = (x - n * kLn2Hi) - n * kLn2Lo;
  T p = zero + 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  return p * exp2_int(n);
}

template <typename T>
inline T sigmoid_kernel(T x) {
  return 1.0 / (1.0 + exp_kernel(-x));
}

/// tanh via exp; absolute error below 1e-15 everywhere.
template <typename T>
inline T tanh_kernel(T x) {
  const T zero{};
  x = pick(x < -20.0, zero - 20.0, x);
  x = pick(x > 20.0, zero + 20.0, x);
  return 1.0 - 2.0 / (exp_kernel(2.0 * x) + 1.0);
}

template <typename F>
inline void map_inplace(double* x, std::size_t n, F f) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) store8(x + i, f(load8(x + i)));
  for (; i < n; ++i) x[i] = f(x[i]);
}

inline void sigmoid_inplace(double* x, std::size_t n) {
  map_inplace(x, n, [](auto v) { return sigmoid_kernel(v); });
}

inline void tanh_inplace(double* x, std::size_t n) {
  map_inplace(x, n, [](auto v) { return tanh_kernel(v); });
}

/// dst[cols x rows] = transpose(src[rows x cols]).
inline void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace kpiscan::nn::detail
