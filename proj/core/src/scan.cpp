#include "kpiscan/scan.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "kpiscan/error.hpp"
#include "kpiscan/format.hpp"

namespace kpiscan {

namespace {

constexpr std::string_view kKpiHeader = "cell_id,t,value";

std::vector<KpiSeries> parse_kpi_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<KpiSeries> cells;
  std::vector<std::uint64_t> last_t;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t prev = static_cast<std::size_t>(-1);

  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    auto bad = [&](const std::string& what) {
      throw Error(ErrorCode::MalformedData, "line " + std::to_string(line_no) + ": " + what);
    };
    if (!header_seen) {
      if (line != kKpiHeader) bad("header must be exactly 'cell_id,t,value'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;

    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      bad("expected 3 comma-separated fields");
    }
    const std::string_view id = line.substr(0, c1);
    const std::string_view t_text = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string_view v_text = line.substr(c2 + 1);
    if (id.empty()) bad("empty cell_id");

    std::uint64_t t = 0;
    auto [tp, tec] = std::from_chars(t_text.data(), t_text.data() + t_text.size(), t);
    if (tec != std::errc() || tp != t_text.data() + t_text.size()) bad("t is not a non-negative integer");

    double value = 0.0;
    auto [vp, vec] = std::from_chars(v_text.data(), v_text.data() + v_text.size(), value);
    if (vec != std::errc() || vp != v_text.data() + v_text.size()) bad("value is not a number");
    if (!std::isfinite(value)) bad("value is not finite");
    if (value < 0.0) bad("value is negative");

    std::size_t cell;
    if (prev != static_cast<std::size_t>(-1) && cells[prev].cell_id == id) {
      cell = prev;
    } else {
      auto [it, inserted] = index.try_emplace(std::string(id), cells.size());
      if (inserted) {
        cells.push_back({std::string(id), {}, Interval::hourly});
        last_t.push_back(0);
      }
      cell = it->second;
    }
    if (!cells[cell].values.empty() && t <= last_t[cell]) {
      bad("t does not increase for cell '" + std::string(id) + "'");
    }
    last_t[cell] = t;
    cells[cell].values.push_back(value);
    prev = cell;
  }
  if (!header_seen) throw Error(ErrorCode::MalformedData, "line 1: missing header");
  return cells;
}

}  // namespace

std::vector<KpiSeries> read_kpi_csv(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_kpi_csv(text);
}

std::vector<KpiSeries> read_kpi_csv_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path);
  std::string text;
  char buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
  const bool failed = std::ferror(f) != 0;
  std::fclose(f);
  if (failed) throw Error(ErrorCode::Io, "failed reading " + path);
  return parse_kpi_csv(text);
}

void write_kpi_csv(std::span<const KpiSeries> cells, std::ostream& out) {
  std::string text(kKpiHeader);
  text += '\n';
  for (const auto& cell : cells) {
    for (std::size_t t = 0; t < cell.values.size(); ++t) {
      text += cell.cell_id;
      text += ',';
      text += std::to_string(t);
      text += ',';
      append_double(text, cell.values[t]);
      text += '\n';
    }
    if (text.size() > (1u << 22)) {
      out << text;
      text.clear();
    }
  }
  out << text;
}

ScanReport scan_cells(const Model& model, std::span<const KpiSeries> cells,
                      const ScanOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t len = model.config().input_length;
  const std::size_t min_len = std::max(options.min_length, kMinSeriesLength);
  const std::size_t batch = std::max<std::size_t>(options.batch, 1);
  const std::size_t threads = std::max<std::size_t>(options.threads, 1);

  ScanReport report;
  report.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    std::vector<double> features;
    std::vector<std::size_t> ok;
    for (;;) {
      const std::size_t begin = next.fetch_add(batch);
      if (begin >= cells.size()) return;
      const std::size_t end = std::min(cells.size(), begin + batch);
      features.clear();
      ok.clear();
      for (std::size_t i = begin; i < end; ++i) {
        ScanRow& row = report.rows[i];
        row.cell_id = cells[i].cell_id;
        if (cells[i].values.size() < min_len) {
          row.status = ScanStatus::skipped_too_short;
          continue;
        }
        const auto f = prepare_example(cells[i].values, len);
        features.insert(features.end(), f.begin(), f.end());
        ok.push_back(i);
      }
      const auto preds = model.predict_batch(features, ok.size());
      for (std::size_t k = 0; k < ok.size(); ++k) report.rows[ok[k]].prediction = preds[k];
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::sort(report.rows.begin(), report.rows.end(),
            [](const ScanRow& a, const ScanRow& b) { return a.cell_id < b.cell_id; });

  ScanSummary& s = report.summary;
  s.total = report.rows.size();
  for (const ScanRow& row : report.rows) {
    if (row.status != ScanStatus::ok) {
      ++s.skipped;
      continue;
    }
    ++s.class_counts[static_cast<std::size_t>(row.prediction.label)];
    if (row.flagged()) ++s.flagged;
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  s.cells_per_second = s.seconds > 0.0 ? static_cast<double>(s.total) / s.seconds : 0.0;
  return report;
}

void write_scan_report(const ScanReport& report, std::ostream& out) {
  std::string text(kScanReportHeader);
  text += '\n';
  for (const ScanRow& row : report.rows) {
    text += row.cell_id;
    if (row.status == ScanStatus::ok) {
      text += ',';
      text += class_name(row.prediction.label);
      text += row.flagged() ? ",true" : ",false";
      for (double p : row.prediction.probabilities) {
        text += ',';
        append_double(text, p);
      }
      text += ",ok\n";
    } else {
      text += ",,,,,,,,,,,skipped:too_short\n";
    }
    if (text.size() > (1u << 22)) {
      out << text;
      text.clear();
    }
  }
  out << text;
}

std::string summary_text(const ScanSummary& s) {
  std::ostringstream out;
  out << "cells: " << s.total << " (classified " << s.total - s.skipped << ", skipped "
      << s.skipped << ", flagged " << s.flagged << ")\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << "  " << class_name(static_cast<ClassLabel>(c)) << ": " << s.class_counts[c] << "\n";
  }
  out << "wall_clock_seconds: " << format_fixed(s.seconds, 3) << "\n";
  out << "cells_per_second: " << format_fixed(s.cells_per_second, 1) << "\n";
  return out.str();
}

}  // namespace kpiscan
