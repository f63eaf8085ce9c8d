#include "kpiscan/kpi.hpp"

#include <algorithm>
#include <cmath>

#include "kpiscan/error.hpp"

namespace kpiscan {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Normal",      "SuddenlyIncreasing", "GraduallyIncreasing", "SuddenlyDecreasing",
    "GraduallyDecreasing", "FaultySite", "NewSite",             "DownSite",
};

}  // namespace

std::string_view class_name(ClassLabel label) {
  return kClassNames.at(static_cast<std::size_t>(label));
}

std::optional<ClassLabel> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

ClassLabel class_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumClasses)) {
    throw Error(ErrorCode::BadSpec, "class index " + std::to_string(index) + " outside [0,7]");
  }
  return static_cast<ClassLabel>(index);
}

std::string_view interval_name(Interval interval) {
  switch (interval) {
    case Interval::hourly: return "hourly";
    case Interval::daily: return "daily";
    case Interval::weekly: return "weekly";
    case Interval::monthly: return "monthly";
  }
  return "hourly";
}

void KpiSeries::validate() const {
  if (values.empty()) throw Error(ErrorCode::EmptySeries, "cell '" + cell_id + "' has no samples");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "cell '" + cell_id + "'");
    if (v < 0.0) throw Error(ErrorCode::MalformedData, "cell '" + cell_id + "' has a negative sample");
  }
}

std::vector<double> normalize_series(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySeries, "normalize_series");
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::NonFinite, "normalize_series");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(values.size(), 0.5);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
      // Clamp: (v - lo) / range can round a hair above 1.
      out[i] = std::clamp((values[i] - lo) / range, 0.0, 1.0);
    }
    out[static_cast<std::size_t>(lo_it - values.begin())] = 0.0;
    out[static_cast<std::size_t>(hi_it - values.begin())] = 1.0;
  }
  return out;
}

std::vector<double> resample_to_length(std::span<const double> values, std::size_t length) {
  if (values.size() < kMinSeriesLength) {
    throw Error(ErrorCode::TooShort, std::to_string(values.size()) + " samples, need at least " +
                                         std::to_string(kMinSeriesLength));
  }
  if (length < 2) throw Error(ErrorCode::TooShort, "target length below 2");
  if (values.size() == length) return {values.begin(), values.end()};

  const std::size_t n = values.size();
  std::vector<double> out(length);
  const double scale = static_cast<double>(n - 1) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(i) * scale;
    std::size_t left = static_cast<std::size_t>(pos);
    if (left >= n - 1) left = n - 2;
    const double frac = pos - static_cast<double>(left);
    out[i] = values[left] + frac * (values[left + 1] - values[left]);
  }
  out.front() = values.front();
  out.back() = values.back();
  return out;
}

std::vector<double> prepare_example(std::span<const double> values, std::size_t length) {
  if (values.empty()) throw Error(ErrorCode::EmptySeries, "prepare_example");
  return normalize_series(resample_to_length(values, length));
}

std::vector<double> prepare_example(const KpiSeries& series, std::size_t length) {
  return prepare_example(series.values, length);
}

}  // namespace kpiscan
