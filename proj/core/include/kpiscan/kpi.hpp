#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpiscan {

inline constexpr std::size_t kNumClasses = 8;

/// The eight traffic-behaviour classes, in index order.
enum class ClassLabel : int {
  Normal = 0,
  SuddenlyIncreasing = 1,
  GraduallyIncreasing = 2,
  SuddenlyDecreasing = 3,
  GraduallyDecreasing = 4,
  FaultySite = 5,
  NewSite = 6,
  DownSite = 7,
};

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::Normal,          ClassLabel::SuddenlyIncreasing, ClassLabel::GraduallyIncreasing,
    ClassLabel::SuddenlyDecreasing, ClassLabel::GraduallyDecreasing, ClassLabel::FaultySite,
    ClassLabel::NewSite,         ClassLabel::DownSite,
};

std::string_view class_name(ClassLabel label);
std::optional<ClassLabel> class_from_name(std::string_view name);
/// Throws Error(BadSpec) when index is outside [0, 7].
ClassLabel class_from_index(int index);
constexpr int class_index(ClassLabel label) { return static_cast<int>(label); }

/// Sampling interval of a KPI export. Metadata only: nothing computes with it.
enum class Interval { hourly, daily, weekly, monthly };

std::string_view interval_name(Interval interval);

/// One cell's KPI trace.
struct KpiSeries {
  std::string cell_id;
  std::vector<double> values;
  Interval interval = Interval::hourly;

  /// Throws EmptySeries / NonFinite, or MalformedData for negative samples.
  void validate() const;
};

/// A fixed-length, [0,1]-scaled feature vector with its class.
struct LabeledExample {
  std::vector<double> features;
  ClassLabel label = ClassLabel::Normal;
  std::string source_id;
};

inline constexpr std::size_t kMinSeriesLength = 4;

/// Per-series min-max scaling onto [0,1]. A flat series maps to all 0.5.
std::vector<double> normalize_series(std::span<const double> values);

/// Piecewise-linear resampling onto `length` equally spaced points spanning the
/// original index range. Endpoints are preserved exactly; equal lengths copy.
std::vector<double> resample_to_length(std::span<const double> values, std::size_t length);

/// normalize_series(resample_to_length(series.values, length)).
std::vector<double> prepare_example(const KpiSeries& series, std::size_t length);
std::vector<double> prepare_example(std::span<const double> values, std::size_t length);

}  // namespace kpiscan
