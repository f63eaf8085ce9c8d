#pragma once

#include <iosfwd>
#include <string>

#include "kpiscan/model.hpp"

namespace kpiscan {

inline constexpr int kCheckpointFormatVersion = 1;

/// Serializes the model as one JSON document (layout in README.md).
std::string checkpoint_to_string(const Model& model);
/// Throws BadCheckpoint on anything malformed, UnsupportedVersion on a foreign format_version.
Model checkpoint_from_string(const std::string& text);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace kpiscan
