#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kpiscan/checkpoint.hpp"
#include "kpiscan/rng.hpp"
#include "kpiscan/error.hpp"
#include "kpiscan/metrics.hpp"
#include "kpiscan/model.hpp"
#include "kpiscan/synth.hpp"
#include "oracles.hpp"

using namespace kpiscan;

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

// Layer arithmetic simulated one sample position at a time.
std::size_t simulate_length(std::size_t L, const std::vector<ConvBlock>& blocks) {
  long len = static_cast<long>(L);
  for (const auto& b : blocks) {
    long conv = 0;
    for (long i = 0; i + static_cast<long>(b.kernel) <= len; ++i) ++conv;
    long pooled = 0;
    for (long i = 0; (i + 1) * static_cast<long>(b.pool) <= conv; ++i) ++pooled;
    len = pooled;
  }
  return static_cast<std::size_t>(len);
}

ModelConfig small_config(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.input_length = 32;
  c.conv_blocks = {{4, 3, 2}};
  c.lstm_hidden = 8;
  c.dense_hidden = 8;
  return c;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default rcnn conv stack lengths") {
  ModelConfig c;
  CHECK(c.conv_output_length() == 21);
  CHECK(c.conv_output_channels() == 32);
  const Model m = build_model(c, 1);
  CHECK(m.network().output_shape({2, 1, 96}) == Tensor::Shape{2, 8});
  CHECK(m.network().layer(m.network().layer_count() - 3).output_shape({2, 21, 32}) ==
        Tensor::Shape{2, 64});
}

TEST_CASE("conv stack length equals simulated layer arithmetic") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    ModelConfig c;
    c.input_length = 4 + rng.below(300);
    c.conv_blocks.clear();
    const std::size_t blocks = 1 + rng.below(3);
    for (std::size_t b = 0; b < blocks; ++b) {
      c.conv_blocks.push_back({1 + rng.below(8), 1 + rng.below(7), 1 + rng.below(3)});
    }
    const std::size_t expect = simulate_length(c.input_length, c.conv_blocks);
    if (expect >= 1) {
      CHECK(c.conv_output_length() == expect);
      CHECK_NOTHROW(c.validate());
    } else {
      CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadArchitecture);
    }
  }
}

TEST_CASE("too short an input is rejected") {
  ModelConfig c;
  c.input_length = 8;
  CHECK(code_of([&] { build_model(c, 0); }) == ErrorCode::BadArchitecture);
  c = ModelConfig{};
  c.n_classes = 5;
  CHECK(code_of([&] { build_model(c, 0); }) == ErrorCode::BadArchitecture);
  CHECK(code_of([] { architecture_from_name("gru"); }) == ErrorCode::BadConfig);
}

TEST_CASE("initialisation is deterministic and fan-bounded") {
  const Model a = build_model(ModelConfig{}, 17);
  const Model b = build_model(ModelConfig{}, 17);
  const Model c = build_model(ModelConfig{}, 18);
  const auto pa = a.network().parameters();
  const auto pb = b.network().parameters();
  const auto pc = c.network().parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(*pa[i].tensor == *pb[i].tensor);
    differs = differs || !(*pa[i].tensor == *pc[i].tensor);
  }
  CHECK(differs);
  for (const auto& p : pa) {
    if (p.name == "block1.conv.kernels") {
      const double bound = std::sqrt(6.0 / (16 * 5 + 32 * 5));
      for (double v : p.tensor->data()) CHECK(std::abs(v) <= bound);
    }
    if (p.name.ends_with("bias") || p.name.ends_with("beta") || p.name.find(".b_") != std::string::npos) {
      for (double v : p.tensor->data()) CHECK(v == 0.0);
    }
    if (p.name.ends_with("gamma")) {
      for (double v : p.tensor->data()) CHECK(v == 1.0);
    }
  }
}

TEST_CASE("untrained models give near-uniform loss") {
  GeneratorSpec spec;
  spec.seed = 2;
  const Dataset data = generate_corpus(25, spec, 96);
  for (Architecture arch : {Architecture::rcnn, Architecture::cnn}) {
    ModelConfig c;
    c.arch = arch;
    const Model m = build_model(c, 5);
    const double loss = evaluate(m, data).mean_loss;
    CHECK(loss >= 1.8);
    CHECK(loss <= 2.4);
  }
}

TEST_CASE("predictions are distributions with lowest-index ties") {
  const Model m = build_model(ModelConfig{}, 3);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(96);
    for (double& v : x) v = rng.uniform();
    const Prediction p = m.predict(x);
    double s = 0.0;
    for (double v : p.probabilities) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(p.label == argmax_label(p.probabilities));
  }
  const std::array<double, 8> tie{0.1, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0, 0.3};
  CHECK(argmax_label(tie) == ClassLabel::SuddenlyIncreasing);
  CHECK(code_of([&] { m.predict(std::vector<double>(95, 0.5)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("step counting") {
  CHECK(steps_per_epoch(100, 32, false) == 4);
  CHECK(steps_per_epoch(97, 32, true) == 3);  // 32+32+33
  CHECK(steps_per_epoch(96, 32, true) == 3);
  CHECK(steps_per_epoch(1600, 32, true) == 50);
  CHECK(steps_per_epoch(5, 32, true) == 1);
}

TEST_CASE("one epoch on a single batch is one step") {
  GeneratorSpec spec;
  const Dataset data = generate_corpus(2, spec, 32);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  Model m = build_model(small_config(Architecture::rcnn), 1);
  const TrainResult r = train(m, data, data, tc);
  CHECK(r.steps == 1);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].epoch == 1);
  CHECK(std::isfinite(r.history[0].train_loss));
  CHECK(m.meta().epochs == 1);
}

TEST_CASE("training rejects mismatched feature lengths") {
  const Dataset data = generate_corpus(2, GeneratorSpec{}, 40);
  Model m = build_model(small_config(Architecture::cnn), 1);
  CHECK(code_of([&] { train(m, data, data, TrainConfig{}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { train(m, Dataset{}, data, TrainConfig{}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("training is deterministic and lowers the training loss") {
  GeneratorSpec spec;
  spec.seed = 5;
  const Split s = split(generate_corpus(12, spec, 32), 0.25, 5);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 8;
  tc.lr = 0.05;
  tc.seed = 9;
  for (Architecture arch : {Architecture::rcnn, Architecture::cnn}) {
    Model a = build_model(small_config(arch), 2);
    Model b = build_model(small_config(arch), 2);
    const auto ha = train(a, s.train, s.test, tc).history;
    const auto hb = train(b, s.train, s.test, tc).history;
    REQUIRE(ha.size() == 6);
    for (std::size_t e = 0; e < ha.size(); ++e) {
      CHECK(ha[e].train_loss == hb[e].train_loss);
      CHECK(ha[e].test_acc == hb[e].test_acc);
    }
    CHECK(checkpoint_to_string(a) == checkpoint_to_string(b));
    CHECK(ha.back().train_loss < ha.front().train_loss);
  }
}

TEST_CASE("history csv layout") {
  const TrainingHistory h{{1, 2.0, 0.25, 1.5, 0.5}, {2, 1.0, 0.5, 0.75, 0.875}};
  const auto path = std::filesystem::temp_directory_path() / "kpiscan_history_test.csv";
  write_history_csv(h, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "epoch,train_loss,train_acc,test_loss,test_acc\n1,2,0.25,1.5,0.5\n2,1,0.5,0.75,0.875\n");
  std::filesystem::remove(path);
}

}  // TEST_SUITE
