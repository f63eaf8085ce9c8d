#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kpiscan {

/// Failure categories raised by the library. Every throw site uses one of these.
enum class ErrorCode {
  EmptySeries,
  NonFinite,
  TooShort,
  BadSpec,
  TooFewPerClass,
  ShapeMismatch,
  KernelTooLarge,
  WindowTooLarge,
  BadRate,
  BatchTooSmall,
  NoForwardState,
  NonDifferentiable,
  BadArchitecture,
  BadCheckpoint,
  UnsupportedVersion,
  EmptyDataset,
  MalformedData,
  BadConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kpiscan
