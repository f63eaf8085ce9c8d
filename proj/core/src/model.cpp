#include "kpiscan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "kpiscan/error.hpp"
#include "kpiscan/format.hpp"
#include "kpiscan/rng.hpp"

namespace kpiscan {

using nn::Activation;
using nn::Mode;

std::string_view architecture_name(Architecture arch) {
  return arch == Architecture::rcnn ? "rcnn" : "cnn";
}

Architecture architecture_from_name(std::string_view name) {
  if (name == "rcnn") return Architecture::rcnn;
  if (name == "cnn") return Architecture::cnn;
  throw Error(ErrorCode::BadConfig, "unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadArchitecture, what); };
  if (n_classes != kNumClasses) bad("n_classes must be 8");
  if (input_length < 1) bad("input_length must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must lie in [0, 1)");
  if (arch == Architecture::rcnn && lstm_hidden == 0) bad("lstm_hidden must be positive");
  if (arch == Architecture::cnn && dense_hidden == 0) bad("dense_hidden must be positive");
  std::size_t len = input_length;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    const ConvBlock& b = conv_blocks[i];
    if (b.filters == 0 || b.kernel == 0 || b.pool == 0) {
      bad("conv block " + std::to_string(i) + " has a zero size");
    }
    if (b.kernel > len) {
      bad("conv block " + std::to_string(i) + ": kernel " + std::to_string(b.kernel) +
          " exceeds length " + std::to_string(len));
    }
    len = nn::conv1d_output_length(len, b.kernel, 1);
    if (len / b.pool < 1) {
      bad("conv block " + std::to_string(i) + ": pool " + std::to_string(b.pool) +
          " exceeds length " + std::to_string(len));
    }
    len /= b.pool;
  }
}

std::size_t ModelConfig::conv_output_length() const {
  validate();
  std::size_t len = input_length;
  for (const ConvBlock& b : conv_blocks) len = nn::conv1d_output_length(len, b.kernel, 1) / b.pool;
  return len;
}

std::size_t ModelConfig::conv_output_channels() const {
  return conv_blocks.empty() ? 1 : conv_blocks.back().filters;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::BadConfig, "epochs must be at least 1");
  if (batch_size < 2) throw Error(ErrorCode::BadConfig, "batch_size must be at least 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::BadConfig, "lr must be positive");
}

ClassLabel argmax_label(std::span<const double> probabilities) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probabilities.size(); ++c) {
    if (probabilities[c] > probabilities[best]) best = c;
  }
  return static_cast<ClassLabel>(best);
}

namespace {

Tensor glorot(Tensor::Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::uint64_t tensor_index = 0;
  auto next_seed = [&] { return derive_seed(seed, tensor_index++); };

  nn::Network net;
  std::size_t channels = 1;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const ConvBlock& b = config.conv_blocks[i];
    const std::string block = "block" + std::to_string(i);
    nn::Conv1dParams conv{glorot({b.filters, channels, b.kernel}, channels * b.kernel,
                                 b.filters * b.kernel, next_seed()),
                          Tensor({b.filters}), 1};
    net.add(block + ".conv",
            std::make_unique<nn::Conv1dLayer>(std::move(conv), !config.use_batchnorm));
    if (config.use_batchnorm) {
      net.add(block + ".bn",
              std::make_unique<nn::BatchNormLayer>(nn::BatchNormParams::identity(b.filters)));
    }
    net.add(block + ".relu", std::make_unique<nn::ActivationLayer>(Activation::relu));
    net.add(block + ".pool", std::make_unique<nn::MaxPoolLayer>(b.pool));
    channels = b.filters;
  }

  const std::size_t out_len = config.conv_output_length();
  std::size_t features = 0;
  if (config.arch == Architecture::rcnn) {
    const std::size_t h = config.lstm_hidden;
    const std::size_t z = channels + h;
    net.add("to_sequence", std::make_unique<nn::ToSequenceLayer>());
    nn::LstmParams lstm;
    lstm.w_f = glorot({h, z}, z, h, next_seed());
    lstm.w_i = glorot({h, z}, z, h, next_seed());
    lstm.w_c = glorot({h, z}, z, h, next_seed());
    lstm.w_o = glorot({h, z}, z, h, next_seed());
    lstm.b_f = lstm.b_i = lstm.b_c = lstm.b_o = Tensor({h});
    net.add("lstm", std::make_unique<nn::LstmLayer>(std::move(lstm)));
    features = h;
  } else {
    const std::size_t flat = channels * out_len;
    const std::size_t h = config.dense_hidden;
    net.add("flatten", std::make_unique<nn::FlattenLayer>());
    net.add("hidden", std::make_unique<nn::DenseLayer>(nn::DenseParams{
                          glorot({h, flat}, flat, h, next_seed()), Tensor({h}), Activation::relu}));
    features = h;
  }
  net.add("dropout", std::make_unique<nn::DropoutLayer>(config.dropout_rate));
  net.add("head", std::make_unique<nn::DenseLayer>(nn::DenseParams{
                      glorot({config.n_classes, features}, features, config.n_classes, next_seed()),
                      Tensor({config.n_classes}), Activation::identity}));
  return Model(config, std::move(net));
}

std::vector<Prediction> Model::predict_batch(std::span<const double> features,
                                             std::size_t rows) const {
  const std::size_t len = config_.input_length;
  if (features.size() != rows * len) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(rows) + " x " +
                                              std::to_string(len) + " features, got " +
                                              std::to_string(features.size()));
  }
  std::vector<Prediction> out(rows);
  if (rows == 0) return out;
  const Tensor x({rows, 1, len}, std::vector<double>(features.begin(), features.end()));
  const Tensor probs = nn::softmax(net_.infer(x));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(probs.data().begin() + static_cast<std::ptrdiff_t>(r * kNumClasses), kNumClasses,
                out[r].probabilities.begin());
    out[r].label = argmax_label(out[r].probabilities);
  }
  return out;
}

Prediction Model::predict(std::span<const double> features) const {
  if (features.size() != config_.input_length) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(config_.input_length) +
                                              " features, got " + std::to_string(features.size()));
  }
  return predict_batch(features, 1).front();
}

Tensor features_tensor(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t len = data.examples.at(rows.front()).features.size();
  Tensor x({rows.size(), 1, len});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = data.examples.at(rows[r]).features;
    if (f.size() != len) throw Error(ErrorCode::ShapeMismatch, "ragged dataset features");
    std::copy(f.begin(), f.end(), x.data().begin() + static_cast<std::ptrdiff_t>(r * len));
  }
  return x;
}

namespace {

void require_length(const Dataset& data, std::size_t len, const char* which) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, std::string(which) + " set is empty");
  const std::size_t got = data.feature_length();
  if (got != len) {
    throw Error(ErrorCode::ShapeMismatch, std::string(which) + " features have length " +
                                              std::to_string(got) + ", model expects " +
                                              std::to_string(len));
  }
}

std::vector<int> labels_of(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<int> labels(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    labels[r] = class_index(data.examples[rows[r]].label);
  }
  return labels;
}

std::size_t correct_count(const Tensor& probabilities, std::span<const int> labels) {
  const std::size_t cols = probabilities.dim(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = probabilities.data().subspan(r * cols, cols);
    if (class_index(argmax_label(row)) == labels[r]) ++correct;
  }
  return correct;
}

constexpr std::size_t kEvalBatch = 256;

}  // namespace

EvalTotals evaluate_loss(const Model& model, const Dataset& data) {
  require_length(data, model.config().input_length, "evaluation");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const std::size_t end = std::min(data.size(), start + kEvalBatch);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto labels = labels_of(data, rows);
    const nn::LossResult lr =
        nn::softmax_cross_entropy(model.logits(features_tensor(data, rows)), labels);
    loss_sum += lr.loss * static_cast<double>(rows.size());
    correct += correct_count(lr.probabilities, labels);
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size, bool merge_singleton) {
  std::size_t steps = (examples + batch_size - 1) / batch_size;
  if (merge_singleton && steps > 1 && examples % batch_size == 1) --steps;
  return steps;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config) {
  config.validate();
  const std::size_t len = model.config().input_length;
  require_length(train_set, len, "training");
  require_length(test_set, len, "test");
  const bool needs_pairs = model.config().use_batchnorm;
  if (needs_pairs && train_set.size() < 2) {
    throw Error(ErrorCode::BatchTooSmall, "batchnorm training needs at least 2 examples");
  }

  nn::Network& net = model.network();
  const auto params = net.parameters();
  const std::size_t n = train_set.size();
  const std::size_t steps = steps_per_epoch(n, config.batch_size, needs_pairs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng rng(derive_seed(config.seed, 0x5EED, epoch));
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = s * config.batch_size;
      const std::size_t end = s + 1 == steps ? n : begin + config.batch_size;
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const auto labels = labels_of(train_set, rows);

      net.set_dropout_seed(derive_seed(config.seed, epoch, s));
      auto step = net.loss_and_gradients(features_tensor(train_set, rows), labels, Mode::train);
      nn::sgd_step(params, step.gradients, config.lr);

      loss_sum += step.loss * static_cast<double>(rows.size());
      correct += correct_count(step.probabilities, labels);
      ++result.steps;
    }
    const EvalTotals test = evaluate_loss(model, test_set);
    result.history.push_back({epoch, loss_sum / static_cast<double>(n),
                              static_cast<double>(correct) / static_cast<double>(n), test.mean_loss,
                              test.accuracy});
  }

  const EpochRecord& last = result.history.back();
  model.meta() = {last.train_loss, last.train_acc, last.test_loss, last.test_acc, config.epochs};
  return result;
}

void write_history_csv(const TrainingHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  std::string text = "epoch,train_loss,train_acc,test_loss,test_acc\n";
  for (const EpochRecord& r : history) {
    text += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.train_acc, r.test_loss, r.test_acc}) {
      text += ',';
      append_double(text, v);
    }
    text += '\n';
  }
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path);
}

}  // namespace kpiscan
