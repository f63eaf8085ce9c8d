#pragma once

#include <iosfwd>
#include <string>

#include "kpiscan/synth.hpp"

namespace kpiscan {

/// One JSON object per line: {"source_id": str, "label": 0-7, "features": [...]},
/// keys in that order, doubles in shortest round-trip form.
std::string example_to_jsonl(const LabeledExample& example);
void write_dataset_jsonl(const Dataset& dataset, std::ostream& out);
void write_dataset_jsonl(const Dataset& dataset, const std::string& path);

/// Throws MalformedData naming the 1-based line, or Io if the file cannot be opened.
Dataset read_dataset_jsonl(std::istream& in);
Dataset read_dataset_jsonl(const std::string& path);

}  // namespace kpiscan
