#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kpiscan/kpi.hpp"
#include "kpiscan/model.hpp"

namespace kpiscan {

/// Reads the long-format `cell_id,t,value` export. Rows of different cells may
/// interleave, but each cell's t must strictly increase. Any malformed row
/// throws MalformedData with its 1-based line number. Cells come back in
/// first-appearance order.
std::vector<KpiSeries> read_kpi_csv(std::istream& in);
std::vector<KpiSeries> read_kpi_csv_file(const std::string& path);

void write_kpi_csv(std::span<const KpiSeries> cells, std::ostream& out);

enum class ScanStatus { ok, skipped_too_short };

struct ScanRow {
  std::string cell_id;
  ScanStatus status = ScanStatus::ok;
  Prediction prediction;

  bool flagged() const {
    return status == ScanStatus::ok && prediction.label != ClassLabel::Normal;
  }
};

struct ScanSummary {
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t total = 0;
  std::size_t skipped = 0;
  std::size_t flagged = 0;
  double seconds = 0.0;
  double cells_per_second = 0.0;
};

struct ScanReport {
  std::vector<ScanRow> rows;  // sorted by cell_id
  ScanSummary summary;
};

struct ScanOptions {
  std::size_t min_length = kMinSeriesLength;
  std::size_t threads = 1;
  std::size_t batch = 64;  // cells per inference call
};

/// Classifies every cell; rows are independent of thread count and batching.
ScanReport scan_cells(const Model& model, std::span<const KpiSeries> cells,
                      const ScanOptions& options);

inline constexpr const char* kScanReportHeader =
    "cell_id,label,flagged,p0,p1,p2,p3,p4,p5,p6,p7,status";

/// Report CSV. Skipped cells leave label, flagged and probabilities empty.
void write_scan_report(const ScanReport& report, std::ostream& out);

std::string summary_text(const ScanSummary& summary);

}  // namespace kpiscan
