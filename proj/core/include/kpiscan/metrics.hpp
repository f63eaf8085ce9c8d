#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kpiscan/kpi.hpp"
#include "kpiscan/model.hpp"
#include "kpiscan/synth.hpp"

namespace kpiscan {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  void add(ClassLabel truth, ClassLabel predicted);
  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_sum(std::size_t truth) const;
  std::size_t col_sum(std::size_t predicted) const;
};

struct MetricsReport {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  // nullopt marks a class absent from the truth (recall) or never predicted (precision).
  std::array<std::optional<double>, kNumClasses> precision{};
  std::array<std::optional<double>, kNumClasses> recall{};
  ConfusionMatrix confusion;

  /// Unweighted mean over the classes that have a recall value.
  double macro_recall() const;
};

/// Builds a report from (truth, predicted) pairs and the summed per-example loss.
MetricsReport metrics_from_predictions(std::span<const ClassLabel> truth,
                                       std::span<const ClassLabel> predicted, double mean_loss);

/// Eval-mode metrics of `model` on `data`. Throws EmptyDataset.
MetricsReport evaluate(const Model& model, const Dataset& data);

struct ComparisonRow {
  std::string name;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  double macro_recall = 0.0;
  // Recall minus the first row's recall; nullopt where either side is not applicable.
  std::array<std::optional<double>, kNumClasses> recall_delta{};
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  std::string to_text() const;
};

/// Rows in the given order; the first report is the delta reference.
ComparisonTable compare(std::span<const std::pair<std::string, MetricsReport>> reports);

/// `class,precision,recall,support`; not-applicable cells are written as "NA".
std::string metrics_csv(const MetricsReport& report);
/// JSON document holding one or more named reports and the comparison table.
std::string comparison_json(std::span<const std::pair<std::string, MetricsReport>> reports,
                            const ComparisonTable& table);

}  // namespace kpiscan
