#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kpiscan/kpi.hpp"
#include "kpiscan/nn/network.hpp"
#include "kpiscan/synth.hpp"

namespace kpiscan {

enum class Architecture { rcnn, cnn };

std::string_view architecture_name(Architecture arch);
/// Throws Error(BadConfig) for anything but "rcnn" / "cnn".
Architecture architecture_from_name(std::string_view name);

struct ConvBlock {
  std::size_t filters = 16;
  std::size_t kernel = 5;
  std::size_t pool = 2;

  bool operator==(const ConvBlock&) const = default;
};

struct ModelConfig {
  Architecture arch = Architecture::rcnn;
  std::size_t input_length = 96;
  std::vector<ConvBlock> conv_blocks{{16, 5, 2}, {32, 5, 2}};
  std::size_t lstm_hidden = 64;   // rcnn only
  std::size_t dense_hidden = 64;  // cnn only
  std::size_t n_classes = kNumClasses;
  double dropout_rate = 0.2;
  bool use_batchnorm = true;

  /// Throws BadArchitecture when the conv stack does not fit input_length.
  void validate() const;
  /// Sequence length and channel count leaving the conv stack.
  std::size_t conv_output_length() const;
  std::size_t conv_output_channels() const;

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.01;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
};

using TrainingHistory = std::vector<EpochRecord>;

struct TrainingMeta {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::size_t epochs = 0;
};

struct Prediction {
  ClassLabel label = ClassLabel::Normal;
  std::array<double, kNumClasses> probabilities{};
};

/// Index of the largest probability; the lowest index wins ties.
ClassLabel argmax_label(std::span<const double> probabilities);

/// The classifier: a configured network plus its training metadata.
class Model {
 public:
  Model(ModelConfig config, nn::Network network)
      : config_(std::move(config)), net_(std::move(network)) {}

  const ModelConfig& config() const { return config_; }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

  TrainingMeta& meta() { return meta_; }
  const TrainingMeta& meta() const { return meta_; }

  /// Eval-mode class probabilities for [batch, L] features (rows are independent).
  std::vector<Prediction> predict_batch(std::span<const double> features, std::size_t rows) const;
  /// Throws ShapeMismatch unless features.size() == input_length.
  Prediction predict(std::span<const double> features) const;

  /// Logits for [batch, 1, L].
  Tensor logits(const Tensor& x) const { return net_.infer(x); }

 private:
  ModelConfig config_;
  nn::Network net_;
  TrainingMeta meta_;
};

/// Fan-balanced uniform weights, zero biases, unit gammas; deterministic in seed.
Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Packs rows of a dataset into a [rows, 1, L] tensor plus labels.
Tensor features_tensor(const Dataset& data, std::span<const std::size_t> rows);

struct EvalTotals {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

/// Eval-mode loss and accuracy over a whole dataset.
EvalTotals evaluate_loss(const Model& model, const Dataset& data);

/// Number of SGD steps per epoch for `examples` rows (a trailing single-row
/// batch is merged into the previous one when batchnorm needs two rows).
std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size, bool merge_singleton);

struct TrainResult {
  TrainingHistory history;
  std::size_t steps = 0;
};

/// Plain minibatch SGD on the batch cross-entropy. Deterministic in (model, data, config).
TrainResult train(Model& model, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config);

void write_history_csv(const TrainingHistory& history, const std::string& path);

}  // namespace kpiscan
