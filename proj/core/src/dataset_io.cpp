#include "kpiscan/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "kpiscan/error.hpp"
#include "kpiscan/format.hpp"

namespace kpiscan {

std::string example_to_jsonl(const LabeledExample& example) {
  std::string line = "{\"source_id\":";
  line += nlohmann::json(example.source_id).dump();
  line += ",\"label\":";
  line += std::to_string(class_index(example.label));
  line += ",\"features\":[";
  for (std::size_t i = 0; i < example.features.size(); ++i) {
    if (i) line += ',';
    append_double(line, example.features[i]);
  }
  line += "]}";
  return line;
}

void write_dataset_jsonl(const Dataset& dataset, std::ostream& out) {
  for (const auto& e : dataset.examples) out << example_to_jsonl(e) << '\n';
}

void write_dataset_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  write_dataset_jsonl(dataset, out);
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path);
}

Dataset read_dataset_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  std::size_t length = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto bad = [&](const std::string& what) {
      throw Error(ErrorCode::MalformedData, "line " + std::to_string(line_no) + ": " + what);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      bad("not valid JSON");
    }
    if (!j.is_object() || !j.contains("source_id") || !j.contains("label") ||
        !j.contains("features")) {
      bad("expected source_id, label and features");
    }
    if (!j["source_id"].is_string()) bad("source_id must be a string");
    if (!j["label"].is_number_integer()) bad("label must be an integer");
    const auto label = j["label"].get<long long>();
    if (label < 0 || label >= static_cast<long long>(kNumClasses)) bad("label outside 0-7");
    const auto& feats = j["features"];
    if (!feats.is_array() || feats.empty()) bad("features must be a non-empty array");

    LabeledExample e;
    e.source_id = j["source_id"].get<std::string>();
    e.label = static_cast<ClassLabel>(label);
    e.features.reserve(feats.size());
    for (const auto& f : feats) {
      if (!f.is_number()) bad("features must be numbers");
      const double v = f.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) bad("feature outside [0,1]");
      e.features.push_back(v);
    }
    if (length == 0) length = e.features.size();
    if (e.features.size() != length) bad("feature length differs from earlier lines");
    data.push_back(std::move(e));
  }
  return data;
}

Dataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  return read_dataset_jsonl(in);
}

}  // namespace kpiscan
