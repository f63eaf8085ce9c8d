#include "kpiscan/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kpiscan/error.hpp"

namespace kpiscan {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::BadCheckpoint, what); }

json config_to_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const ConvBlock& b : c.conv_blocks) blocks.push_back({b.filters, b.kernel, b.pool});
  return {{"arch", architecture_name(c.arch)},
          {"input_length", c.input_length},
          {"conv_blocks", blocks},
          {"lstm_hidden", c.lstm_hidden},
          {"dense_hidden", c.dense_hidden},
          {"n_classes", c.n_classes},
          {"dropout_rate", c.dropout_rate},
          {"use_batchnorm", c.use_batchnorm}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.arch = architecture_from_name(j.at("arch").get<std::string>());
  c.input_length = j.at("input_length").get<std::size_t>();
  c.conv_blocks.clear();
  for (const json& b : j.at("conv_blocks")) {
    if (!b.is_array() || b.size() != 3) corrupt("conv block must be [filters, kernel, pool]");
    c.conv_blocks.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>(),
                             b[2].get<std::size_t>()});
  }
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.dense_hidden = j.at("dense_hidden").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.use_batchnorm = j.at("use_batchnorm").get<bool>();
  return c;
}

void restore(const json& params, const std::string& name, Tensor& target) {
  if (!params.contains(name)) corrupt("missing parameter " + name);
  const json& entry = params.at(name);
  Tensor::Shape shape = entry.at("shape").get<Tensor::Shape>();
  if (shape != target.shape()) {
    corrupt("parameter " + name + " has shape " + shape_string(shape) + ", config implies " +
            shape_string(target.shape()));
  }
  const json& values = entry.at("values");
  if (!values.is_array() || values.size() != target.size()) {
    corrupt("parameter " + name + " has the wrong number of values");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!values[i].is_number()) corrupt("parameter " + name + " holds a non-number");
    target[i] = values[i].get<double>();
  }
}

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  json labels = json::array();
  for (ClassLabel c : kAllClasses) labels.push_back(class_name(c));

  const TrainingMeta& m = model.meta();
  json params = json::object();
  auto emit = [&](const std::string& name, const Tensor& t) {
    params[name] = {{"shape", t.shape()}, {"values", t.values()}};
  };
  for (const auto& p : model.network().parameters()) emit(p.name, *p.tensor);
  for (const auto& b : model.network().buffers()) emit(b.name, *b.tensor);

  json doc = {{"format_version", kCheckpointFormatVersion},
              {"config", config_to_json(model.config())},
              {"label_names", labels},
              {"training_meta",
               {{"epochs", m.epochs},
                {"train_loss", m.train_loss},
                {"train_acc", m.train_acc},
                {"test_loss", m.test_loss},
                {"test_acc", m.test_acc}}},
              {"parameters", params}};
  return doc.dump() + "\n";
}

Model checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    corrupt(std::string("not a valid JSON document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version")) corrupt("no format_version field");
  if (!doc["format_version"].is_number_integer()) corrupt("format_version is not an integer");
  const auto version = doc["format_version"].get<long long>();
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion,
                "checkpoint format_version " + std::to_string(version) + ", this build reads " +
                    std::to_string(kCheckpointFormatVersion));
  }

  try {
    const ModelConfig config = config_from_json(doc.at("config"));
    const json& labels = doc.at("label_names");
    if (!labels.is_array() || labels.size() != kNumClasses) corrupt("label_names must list 8 names");
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      if (labels[i].get<std::string>() != class_name(static_cast<ClassLabel>(i))) {
        corrupt("label_names[" + std::to_string(i) + "] does not match this build");
      }
    }

    Model model = build_model(config, 0);
    const json& params = doc.at("parameters");
    if (!params.is_object()) corrupt("parameters must be an object");
    std::size_t expected = 0;
    for (auto& p : model.network().parameters()) {
      restore(params, p.name, *p.tensor);
      ++expected;
    }
    for (auto& b : model.network().buffers()) {
      restore(params, b.name, *b.tensor);
      ++expected;
    }
    if (params.size() != expected) corrupt("checkpoint carries parameters the config does not define");

    const json& meta = doc.at("training_meta");
    model.meta() = {meta.at("train_loss").get<double>(), meta.at("train_acc").get<double>(),
                    meta.at("test_loss").get<double>(), meta.at("test_acc").get<double>(),
                    meta.at("epochs").get<std::size_t>()};
    return model;
  } catch (const json::exception& e) {
    corrupt(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadCheckpoint) throw;
    corrupt(e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << checkpoint_to_string(model);
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace kpiscan
