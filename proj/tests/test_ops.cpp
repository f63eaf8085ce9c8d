#include <doctest.h>

#include <cmath>
#include <numeric>

#include "kpiscan/error.hpp"
#include "kpiscan/rng.hpp"
#include "kpiscan/nn/ops.hpp"
#include "oracles.hpp"

using namespace kpiscan;
using namespace kpiscan::nn;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

Tensor t1(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("shape, indexing and reshape") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t.at({1, 2, 3}) = 5.0;
  CHECK(t[23] == 5.0);
  const Tensor r = t.reshaped({6, 4});
  CHECK(r.at({5, 3}) == 5.0);
  CHECK(code_of([&] { t.reshaped({5, 5}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([] { Tensor({2, 2}, std::vector<double>{1, 2, 3}); }) == ErrorCode::ShapeMismatch);
  CHECK(shape_string({2, 3}) == "[2,3]");
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

}  // TEST_SUITE

TEST_SUITE("engine") {

TEST_CASE("activation values") {
  CHECK(activate(Activation::sigmoid, 0.0) == 0.5);
  CHECK(activate(Activation::tanh, 0.0) == 0.0);
  CHECK(activation_apply(Activation::relu, t1({-3, 0, 2})).values() == std::vector<double>{0, 0, 2});
  CHECK(activation_apply(Activation::step, t1({-1, 0, 0.1})).values() ==
        std::vector<double>{0, 0, 1});
  CHECK(activation_apply(Activation::identity, t1({-1, 4})).values() == std::vector<double>{-1, 4});

  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform(-40.0, 40.0);
    CHECK(std::abs(activate(Activation::sigmoid, x) - oracle::sigmoid(x)) < 1e-15);
    CHECK(std::abs(activate(Activation::tanh, x) - std::tanh(x)) < 1e-15);
  }
}

TEST_CASE("activation derivatives") {
  CHECK(activation_grad(Activation::sigmoid, t1({0}))[0] == 0.25);
  CHECK(activation_grad(Activation::tanh, t1({0}))[0] == 1.0);
  CHECK(activation_grad(Activation::relu, t1({0}))[0] == 0.0);
  CHECK(activation_grad(Activation::relu, t1({2}))[0] == 1.0);
  CHECK(activation_grad(Activation::identity, t1({-7}))[0] == 1.0);
  CHECK(code_of([] { activation_grad(Activation::step, t1({1})); }) == ErrorCode::NonDifferentiable);

  Rng rng(2);
  const double h = 1e-6;
  for (Activation a : {Activation::sigmoid, Activation::tanh}) {
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(-4.0, 4.0);
      const double fd = (activate(a, x + h) - activate(a, x - h)) / (2 * h);
      CHECK(activation_grad(a, t1({x}))[0] == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("dense forward") {
  DenseParams p{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}), Activation::identity};
  const Tensor x({3, 2}, {1, 2, -3, 4, 0.5, 0.25});
  CHECK(dense_forward(p, x) == x);

  p.weights.fill(0.0);
  p.bias = t1({1, 2});
  CHECK(dense_forward(p, x).values() == std::vector<double>{1, 2, 1, 2, 1, 2});

  p.weights = Tensor({2, 2}, {1, 2, 3, 4});
  p.bias.fill(0.0);
  CHECK(dense_forward(p, Tensor({1, 2}, {1, 1})).values() == std::vector<double>{3, 7});

  CHECK(code_of([&] { dense_forward(p, Tensor({1, 3})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("conv1d examples") {
  Conv1dParams id{Tensor({2, 2, 1}, {1, 0, 0, 1}), Tensor({2}), 1};
  const Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(conv1d_forward(id, x) == x);

  Conv1dParams diff{Tensor({1, 1, 2}, {1, -1}), Tensor({1}), 1};
  CHECK(conv1d_forward(diff, Tensor({1, 1, 3}, {1, 2, 4})).values() == std::vector<double>{-1, -2});

  Conv1dParams zero{Tensor({3, 2, 2}), t1({2.5, 2.5, 2.5}), 1};
  const Tensor filled = conv1d_forward(zero, x);
  for (double v : filled.data()) CHECK(v == 2.5);

  CHECK(conv1d_output_length(10, 3, 2) == 4);
  CHECK(conv1d_forward(Conv1dParams{Tensor({1, 1, 3}, {1, 1, 1}), Tensor({1}), 2},
                       Tensor({1, 1, 10}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}))
            .values() == std::vector<double>{3, 9, 15, 21});
  CHECK(code_of([&] { conv1d_forward(diff, Tensor({1, 1, 1})); }) == ErrorCode::KernelTooLarge);
}

TEST_CASE("conv1d matches the nested-loop oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t B = 1 + rng.below(4), C = 1 + rng.below(5), F = 1 + rng.below(6);
    const std::size_t K = 1 + rng.below(6), S = 1 + rng.below(3);
    const std::size_t L = K + rng.below(40);
    Conv1dParams p{oracle::random_tensor(rng, {F, C, K}), oracle::random_tensor(rng, {F}), S};
    const Tensor x = oracle::random_tensor(rng, {B, C, L}, -3, 3);
    const Tensor got = conv1d_forward(p, x);
    const Tensor want = oracle::conv1d(p, x);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("maxpool") {
  CHECK(maxpool1d(Tensor({1, 1, 4}, {1, 3, 2, 5}), 2).output.values() == std::vector<double>{3, 5});
  CHECK(maxpool1d(Tensor({1, 1, 6}, 4.0), 2).output.values() == std::vector<double>{4, 4, 4});
  const auto g = maxpool1d(Tensor({1, 1, 5}, {1, 9, 2, 9, 0}), 5);
  CHECK(g.output.values() == std::vector<double>{9});
  CHECK(g.argmax == std::vector<std::size_t>{1});
  const auto r = maxpool1d(Tensor({1, 1, 5}, {1, 2, 3, 4, 100}), 2);
  CHECK(r.output.values() == std::vector<double>{2, 4});
  const auto tie = maxpool1d(Tensor({1, 1, 2}, {7, 7}), 2);
  CHECK(tie.argmax == std::vector<std::size_t>{0});
  const Tensor back = maxpool1d_backward({1, 1, 2}, tie.argmax, Tensor({1, 1, 1}, {3.0}));
  CHECK(back.values() == std::vector<double>{3, 0});
  CHECK(code_of([] { maxpool1d(Tensor({1, 1, 2}), 3); }) == ErrorCode::WindowTooLarge);
}

TEST_CASE("lstm with zero parameters stays at the origin") {
  LstmParams p;
  for (Tensor* w : {&p.w_f, &p.w_i, &p.w_c, &p.w_o}) *w = Tensor({3, 5});
  for (Tensor* b : {&p.b_f, &p.b_i, &p.b_c, &p.b_o}) *b = Tensor({3});
  Rng rng(4);
  const auto f = lstm_forward(p, oracle::random_tensor(rng, {2, 6, 2}));
  for (double v : f.hidden_states.data()) CHECK(v == 0.0);
  for (double v : f.c.data()) CHECK(v == 0.0);
}

TEST_CASE("scalar lstm step against a hand calculation") {
  LstmParams p;
  p.w_f = Tensor({1, 2}, {0.5, -0.25});
  p.w_i = Tensor({1, 2}, {1.0, 0.5});
  p.w_c = Tensor({1, 2}, {-0.75, 0.25});
  p.w_o = Tensor({1, 2}, {0.3, 0.6});
  p.b_f = t1({0.1});
  p.b_i = t1({-0.2});
  p.b_c = t1({0.05});
  p.b_o = t1({0.0});
  const Tensor x({1, 1, 1}, {2.0});
  const Tensor h0({1, 1}, {0.4});
  const Tensor c0({1, 1}, {-0.3});
  const double f = 1 / (1 + std::exp(-(0.5 * 2 - 0.25 * 0.4 + 0.1)));
  const double i = 1 / (1 + std::exp(-(1.0 * 2 + 0.5 * 0.4 - 0.2)));
  const double g = std::tanh(-0.75 * 2 + 0.25 * 0.4 + 0.05);
  const double o = 1 / (1 + std::exp(-(0.3 * 2 + 0.6 * 0.4)));
  const double c = f * -0.3 + i * g;
  const double h = o * std::tanh(c);
  const auto r = lstm_forward(p, x, &h0, &c0);
  CHECK(std::abs(r.c[0] - c) < 1e-14);
  CHECK(std::abs(r.h[0] - h) < 1e-14);
}

TEST_CASE("saturated forget gate preserves memory") {
  LstmParams p;
  for (Tensor* w : {&p.w_f, &p.w_i, &p.w_c, &p.w_o}) *w = Tensor({1, 2});
  for (Tensor* b : {&p.b_f, &p.b_i, &p.b_c, &p.b_o}) *b = Tensor({1});
  p.b_f = t1({10.0});
  const Tensor c0({1, 1}, {1.0});
  const std::size_t T = 30;
  Rng rng(5);
  const auto r = lstm_forward(p, oracle::random_tensor(rng, {1, T, 1}), nullptr, &c0);
  const double s10 = 1.0 / (1.0 + std::exp(-10.0));
  // With i = 0.5 and g = tanh(0) = 0 every step, c_t = s10^t exactly in real arithmetic.
  double expected = 1.0;
  for (std::size_t t = 0; t < T; ++t) expected *= s10;
  CHECK(std::abs(r.c[0] - expected) < 1e-12);
  CHECK(r.c[0] > 0.99);
}

TEST_CASE("lstm matches the step-by-step oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t B = 1 + rng.below(3), T = 1 + rng.below(12);
    const std::size_t I = 1 + rng.below(5), H = 1 + rng.below(20);
    const auto p = oracle::random_lstm(rng, I, H);
    const Tensor x = oracle::random_tensor(rng, {B, T, I}, -2, 2);
    const Tensor h0 = oracle::random_tensor(rng, {B, H});
    const Tensor c0 = oracle::random_tensor(rng, {B, H});
    const bool with_state = trial % 2 == 0;
    const auto got = with_state ? lstm_forward(p, x, &h0, &c0) : lstm_forward(p, x);
    const auto want = with_state ? oracle::lstm(p, x, &h0, &c0) : oracle::lstm(p, x);
    CHECK(oracle::max_abs_diff(got.hidden_states, want.hidden_states) <= 1e-12);
    CHECK(oracle::max_abs_diff(got.h, want.h) <= 1e-12);
    CHECK(oracle::max_abs_diff(got.c, want.c) <= 1e-12);
    if (!with_state) CHECK(lstm_last_hidden(p, x) == got.h);
  }
}

TEST_CASE("lstm rejects mismatched gate shapes") {
  Rng rng(7);
  auto p = oracle::random_lstm(rng, 2, 3);
  CHECK(code_of([&] { lstm_forward(p, Tensor({1, 4, 3})); }) == ErrorCode::ShapeMismatch);
  p.w_o = Tensor({3, 6});
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("dropout") {
  Rng rng(8);
  const Tensor x = oracle::random_tensor(rng, {50, 40});
  CHECK(dropout_apply(x, 0.0, 1, Mode::train) == x);
  CHECK(dropout_apply(x, 0.7, 1, Mode::eval) == x);
  const Tensor big({100, 100}, 1.0);
  const Tensor y = dropout_apply(big, 0.5, 99, Mode::train);
  const double kept =
      static_cast<double>(std::count_if(y.data().begin(), y.data().end(), [](double v) { return v != 0.0; })) /
      static_cast<double>(y.size());
  CHECK(kept > 0.45);
  CHECK(kept < 0.55);
  for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));
  CHECK(dropout_apply(big, 0.5, 99, Mode::train) == y);
  CHECK_FALSE(dropout_apply(big, 0.5, 100, Mode::train) == y);
  CHECK(code_of([&] { dropout_apply(x, 1.0, 1, Mode::train); }) == ErrorCode::BadRate);
}

TEST_CASE("batchnorm") {
  auto p = BatchNormParams::identity(2);
  const Tensor constant({4, 2, 3}, 3.0);
  const Tensor centred = batchnorm_forward(p, constant, Mode::train);
  for (double v : centred.data()) CHECK(v == 0.0);

  auto q = BatchNormParams::identity(2);
  q.gamma.fill(0.0);
  q.beta = t1({0.5, -1.5});
  Rng rng(9);
  const Tensor x = oracle::random_tensor(rng, {5, 2, 7}, -4, 9);
  const Tensor y = batchnorm_forward(q, x, Mode::train);
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(y.at({b, 0, i}) == 0.5);
      CHECK(y.at({b, 1, i}) == -1.5);
    }
  }

  auto r = BatchNormParams::identity(3);
  const Tensor z = oracle::random_tensor(rng, {8, 3, 5}, -2, 6);
  const Tensor out = batchnorm_forward(r, z, Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0, mo = 0, vo = 0;
    for (std::size_t b = 0; b < 8; ++b) {
      for (std::size_t i = 0; i < 5; ++i) {
        m += z.at({b, c, i});
        mo += out.at({b, c, i});
      }
    }
    m /= 40;
    mo /= 40;
    for (std::size_t b = 0; b < 8; ++b) {
      for (std::size_t i = 0; i < 5; ++i) {
        v += std::pow(z.at({b, c, i}) - m, 2);
        vo += std::pow(out.at({b, c, i}) - mo, 2);
      }
    }
    v /= 40;
    vo /= 40;
    CHECK(std::abs(mo) < 1e-10);
    CHECK(std::abs(vo - v / (v + 1e-5)) < 1e-6);
    // running stats moved from (0, 1) toward the batch moments with momentum 0.9
    CHECK(r.running_mean[c] == doctest::Approx(0.1 * m).epsilon(1e-12));
    CHECK(r.running_var[c] == doctest::Approx(0.9 + 0.1 * v).epsilon(1e-12));
  }

  const Tensor e = batchnorm_forward(r, z, Mode::eval);
  CHECK(e == batchnorm_infer(r, z));
  CHECK(e.at({0, 1, 2}) ==
        doctest::Approx((z.at({0, 1, 2}) - r.running_mean[1]) / std::sqrt(r.running_var[1] + 1e-5)));
  CHECK(code_of([&] { batchnorm_forward(r, Tensor({1, 3, 5}), Mode::train); }) ==
        ErrorCode::BatchTooSmall);
  CHECK_NOTHROW(batchnorm_forward(r, Tensor({1, 3, 5}), Mode::eval));
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<int> labels{3};
  const auto uniform = softmax_cross_entropy(Tensor({1, 8}), labels);
  CHECK(uniform.loss == doctest::Approx(std::log(8.0)).epsilon(1e-15));

  Tensor logits({1, 8});
  logits[3] = 1000.0;
  CHECK(softmax_cross_entropy(logits, labels).loss < 1e-6);

  Rng rng(10);
  const Tensor z = oracle::random_tensor(rng, {5, 8}, -3, 3);
  const std::vector<int> y{0, 7, 2, 2, 5};
  const auto r = softmax_cross_entropy(z, y);
  const double h = 1e-5;
  for (std::size_t i = 0; i < z.size(); ++i) {
    Tensor zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const double fd =
        (softmax_cross_entropy(zp, y).loss - softmax_cross_entropy(zm, y).loss) / (2 * h);
    const double a = r.grad_logits[i];
    CHECK(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}) < 1e-6);
  }

  const auto same = softmax_cross_entropy(z, one_hot(y, 8));
  CHECK(same.loss == r.loss);
  CHECK(same.grad_logits == r.grad_logits);
  Tensor bad = one_hot(y, 8);
  bad[1] = 1.0;
  CHECK(code_of([&] { softmax_cross_entropy(z, bad); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor z = oracle::random_tensor(rng, {4, 8}, -50, 50);
    const Tensor p = softmax(z);
    for (std::size_t b = 0; b < 4; ++b) {
      double s = 0;
      for (std::size_t c = 0; c < 8; ++c) {
        const double v = p.at({b, c});
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

}  // TEST_SUITE
