#include "kpiscan/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kpiscan/error.hpp"

namespace kpiscan {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::BadConfig, what); }

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    bad(key + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    bad(key + ": expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    bad(key + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key + ": expected true/false, got '" + std::string(v) + "'");
}

}  // namespace

const std::vector<std::string_view>& RunConfig::known_keys() {
  static const std::vector<std::string_view> keys = {
      "model.arch",        "model.input_length", "model.conv_blocks",   "model.lstm_hidden",
      "model.dense_hidden", "model.dropout_rate", "model.use_batchnorm", "train.epochs",
      "train.batch_size",  "train.lr",           "train.seed",          "train.shuffle",
      "gen.length",        "gen.seed",           "gen.baseline",        "gen.noise_sigma",
      "gen.season_amp",    "gen.season_period",  "gen.changepoint_low", "gen.changepoint_high",
      "corpus.per_class",
  };
  return keys;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      bad("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      bad("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (value.empty()) bad("line " + std::to_string(line_no) + ": empty value for " + key);
    if (!cfg.values.emplace(key, value).second) {
      bad("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::apply(ModelConfig& m) const {
  for (const auto& [key, v] : values) {
    if (key == "model.arch") m.arch = architecture_from_name(v);
    else if (key == "model.input_length") m.input_length = to_size(key, v);
    else if (key == "model.conv_blocks") m.conv_blocks = parse_conv_blocks(v);
    else if (key == "model.lstm_hidden") m.lstm_hidden = to_size(key, v);
    else if (key == "model.dense_hidden") m.dense_hidden = to_size(key, v);
    else if (key == "model.dropout_rate") m.dropout_rate = to_double(key, v);
    else if (key == "model.use_batchnorm") m.use_batchnorm = to_bool(key, v);
  }
}

void RunConfig::apply(TrainConfig& t) const {
  for (const auto& [key, v] : values) {
    if (key == "train.epochs") t.epochs = to_size(key, v);
    else if (key == "train.batch_size") t.batch_size = to_size(key, v);
    else if (key == "train.lr") t.lr = to_double(key, v);
    else if (key == "train.seed") t.seed = to_u64(key, v);
    else if (key == "train.shuffle") t.shuffle = to_bool(key, v);
  }
}

void RunConfig::apply(GeneratorSpec& g) const {
  for (const auto& [key, v] : values) {
    if (key == "gen.length") g.length = to_size(key, v);
    else if (key == "gen.seed") g.seed = to_u64(key, v);
    else if (key == "gen.baseline") g.baseline = to_double(key, v);
    else if (key == "gen.noise_sigma") g.noise_sigma = to_double(key, v);
    else if (key == "gen.season_amp") g.season_amp = to_double(key, v);
    else if (key == "gen.season_period") g.season_period = to_size(key, v);
    else if (key == "gen.changepoint_low") g.changepoint_frac_range.first = to_double(key, v);
    else if (key == "gen.changepoint_high") g.changepoint_frac_range.second = to_double(key, v);
  }
}

std::size_t RunConfig::per_class(std::size_t fallback) const {
  const auto it = values.find("corpus.per_class");
  return it == values.end() ? fallback : to_size(it->first, it->second);
}

std::vector<ConvBlock> parse_conv_blocks(std::string_view text) {
  std::vector<ConvBlock> blocks;
  text = trim(text);
  if (text.empty() || text == "none") return blocks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string_view item =
        trim(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos));
    pos = comma == std::string_view::npos ? text.size() + 1 : comma + 1;
    std::size_t parts[3];
    std::size_t start = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto colon = k < 2 ? item.find(':', start) : item.size();
      if (colon == std::string_view::npos) bad("conv block '" + std::string(item) + "' is not f:k:p");
      parts[k] = to_size("model.conv_blocks", item.substr(start, colon - start));
      start = colon + 1;
    }
    blocks.push_back({parts[0], parts[1], parts[2]});
  }
  return blocks;
}

std::string conv_blocks_string(const std::vector<ConvBlock>& blocks) {
  if (blocks.empty()) return "none";
  std::string s;
  for (const ConvBlock& b : blocks) {
    if (!s.empty()) s += ',';
    s += std::to_string(b.filters) + ":" + std::to_string(b.kernel) + ":" + std::to_string(b.pool);
  }
  return s;
}

}  // namespace kpiscan
