#include "kpiscan/error.hpp"

namespace kpiscan {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::TooFewPerClass: return "TooFewPerClass";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::BadRate: return "BadRate";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NoForwardState: return "NoForwardState";
    case ErrorCode::NonDifferentiable: return "NonDifferentiable";
    case ErrorCode::BadArchitecture: return "BadArchitecture";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MalformedData: return "MalformedData";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace kpiscan
