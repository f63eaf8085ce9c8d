#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "kpiscan/kpi.hpp"

namespace kpiscan {

/// Parameters of the synthetic KPI generator. Amplitudes are fractions of `baseline`.
struct GeneratorSpec {
  std::size_t length = 96;
  std::uint64_t seed = 0;
  double baseline = 100.0;
  double noise_sigma = 0.05;
  double season_amp = 0.3;
  std::size_t season_period = 24;
  std::pair<double, double> changepoint_frac_range{0.25, 0.75};

  /// Throws Error(BadSpec) when any field is out of range.
  void validate() const;
};

/// Everything drawn for one generated series. `level` is the class envelope
/// (1 = baseline) before seasonality and noise; `series` is the final trace.
struct GeneratedSeries {
  KpiSeries series;
  std::vector<double> level;
  std::size_t changepoint = 0;
  double factor = 1.0;  // step/ramp end factor; 1 for classes without one
  std::vector<std::pair<std::size_t, std::size_t>> outages;  // FaultySite [begin, end)
};

/// Deterministic in (label, spec). Every class shape is documented in the README.
GeneratedSeries generate_detailed(ClassLabel label, const GeneratorSpec& spec);

inline KpiSeries generate_example(ClassLabel label, const GeneratorSpec& spec) {
  return generate_detailed(label, spec).series;
}

/// Seed of the instance-th example of a class: derive_seed(template_seed, class, instance).
std::uint64_t example_seed(std::uint64_t template_seed, ClassLabel label, std::size_t instance);

struct Dataset {
  std::vector<LabeledExample> examples;
  std::array<std::size_t, kNumClasses> class_counts{};

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  void push_back(LabeledExample example);
  /// Recomputes class_counts from the labels.
  void recount();
  /// Every example's feature length, or 0 when empty. Throws ShapeMismatch if ragged.
  std::size_t feature_length() const;
};

/// per_class examples of every class, in class-major order, each prepared to `input_length`.
Dataset generate_corpus(std::size_t per_class, const GeneratorSpec& spec_template,
                        std::size_t input_length);

struct Split {
  Dataset train;
  Dataset test;
};

/// Stratified split: each class sends round(test_fraction * count) examples to test.
Split split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

/// A live-format export of `cells` synthetic cells whose classes cycle through
/// all eight in order; cell ids are "cell-<index>" zero-padded to 7 digits.
struct SyntheticCell {
  KpiSeries series;
  ClassLabel label;
};
std::vector<SyntheticCell> generate_cells(std::size_t cells, const GeneratorSpec& spec_template);

}  // namespace kpiscan
