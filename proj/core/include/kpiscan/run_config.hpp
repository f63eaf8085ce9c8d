#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kpiscan/model.hpp"
#include "kpiscan/synth.hpp"

namespace kpiscan {

/// `key = value` overrides read from a config file. Blank lines and `#`
/// comments are ignored. Keys are namespaced by the structure they touch:
///
///   model.arch model.input_length model.conv_blocks model.lstm_hidden
///   model.dense_hidden model.dropout_rate model.use_batchnorm
///   train.epochs train.batch_size train.lr train.seed train.shuffle
///   gen.length gen.seed gen.baseline gen.noise_sigma gen.season_amp
///   gen.season_period gen.changepoint_low gen.changepoint_high
///   corpus.per_class
///
/// model.conv_blocks is a comma list of filters:kernel:pool triples, e.g. "16:5:2,32:5:2".
struct RunConfig {
  std::map<std::string, std::string> values;

  static const std::vector<std::string_view>& known_keys();

  /// Throws BadConfig on syntax errors, unknown or repeated keys.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);

  bool has(std::string_view key) const { return values.contains(std::string(key)); }

  /// Each apply() only touches the fields present; throws BadConfig on unparsable values.
  void apply(ModelConfig& model) const;
  void apply(TrainConfig& train) const;
  void apply(GeneratorSpec& gen) const;
  std::size_t per_class(std::size_t fallback) const;
};

std::vector<ConvBlock> parse_conv_blocks(std::string_view text);
std::string conv_blocks_string(const std::vector<ConvBlock>& blocks);

}  // namespace kpiscan
