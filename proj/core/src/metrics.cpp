#include "kpiscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "kpiscan/error.hpp"
#include "kpiscan/format.hpp"

namespace kpiscan {

void ConfusionMatrix::add(ClassLabel truth, ClassLabel predicted) {
  ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) n += counts[c][c];
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  return std::accumulate(counts[truth].begin(), counts[truth].end(), std::size_t{0});
}

std::size_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::size_t n = 0;
  for (const auto& row : counts) n += row[predicted];
  return n;
}

double MetricsReport::macro_recall() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : recall) {
    if (r) {
      sum += *r;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

MetricsReport metrics_from_predictions(std::span<const ClassLabel> truth,
                                       std::span<const ClassLabel> predicted, double mean_loss) {
  if (truth.empty()) throw Error(ErrorCode::EmptyDataset, "no predictions to score");
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::ShapeMismatch, "truth and prediction counts differ");
  }
  MetricsReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) r.confusion.add(truth[i], predicted[i]);
  r.mean_loss = mean_loss;
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double diag = static_cast<double>(r.confusion.counts[c][c]);
    if (const std::size_t rows = r.confusion.row_sum(c)) r.recall[c] = diag / static_cast<double>(rows);
    if (const std::size_t cols = r.confusion.col_sum(c)) r.precision[c] = diag / static_cast<double>(cols);
  }
  return r;
}

MetricsReport evaluate(const Model& model, const Dataset& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "cannot evaluate on an empty dataset");
  const std::size_t len = model.config().input_length;
  if (data.feature_length() != len) {
    throw Error(ErrorCode::ShapeMismatch, "dataset features have length " +
                                              std::to_string(data.feature_length()) +
                                              ", model expects " + std::to_string(len));
  }
  constexpr std::size_t kBatch = 256;
  std::vector<ClassLabel> truth;
  std::vector<ClassLabel> predicted;
  truth.reserve(data.size());
  predicted.reserve(data.size());
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t start = 0; start < data.size(); start += kBatch) {
    const std::size_t end = std::min(data.size(), start + kBatch);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    labels.clear();
    for (std::size_t i : rows) labels.push_back(class_index(data.examples[i].label));
    const nn::LossResult lr =
        nn::softmax_cross_entropy(model.logits(features_tensor(data, rows)), labels);
    loss_sum += lr.loss * static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      truth.push_back(data.examples[rows[r]].label);
      predicted.push_back(argmax_label(lr.probabilities.data().subspan(r * kNumClasses, kNumClasses)));
    }
  }
  return metrics_from_predictions(truth, predicted, loss_sum / static_cast<double>(data.size()));
}

ComparisonTable compare(std::span<const std::pair<std::string, MetricsReport>> reports) {
  ComparisonTable table;
  for (const auto& [name, report] : reports) {
    ComparisonRow row{name, report.accuracy, report.mean_loss, report.macro_recall(), {}};
    const MetricsReport& ref = reports.front().second;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (report.recall[c] && ref.recall[c]) row.recall_delta[c] = *report.recall[c] - *ref.recall[c];
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ComparisonTable::to_text() const {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  auto pad_to = [](const std::string& s, std::size_t w) {
    return s + std::string(std::max(w, s.size()) - s.size() + 2, ' ');
  };
  auto pad = [&](const std::string& s) { return pad_to(s, width); };
  out << pad("Method") << "Accuracy  Loss      MacroRecall\n";
  for (const auto& r : rows) {
    out << pad(r.name) << format_fixed(r.accuracy, 4) << "    " << format_fixed(r.mean_loss, 4)
        << "    " << format_fixed(r.macro_recall, 4) << "\n";
  }
  if (rows.size() > 1) {
    out << "\nRecall delta vs " << rows.front().name << ":\n";
    std::size_t class_width = 5;
    for (ClassLabel label : kAllClasses) class_width = std::max(class_width, class_name(label).size());
    out << pad_to("Class", class_width);
    for (std::size_t i = 1; i < rows.size(); ++i) out << pad(rows[i].name);
    out << "\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out << pad_to(std::string(class_name(static_cast<ClassLabel>(c))), class_width);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& d = rows[i].recall_delta[c];
        out << pad(d ? format_fixed(*d, 4) : "NA");
      }
      out << "\n";
    }
  }
  return out.str();
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "class,precision,recall,support\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out += class_name(static_cast<ClassLabel>(c));
    out += ',';
    if (report.precision[c]) append_double(out, *report.precision[c]); else out += "NA";
    out += ',';
    if (report.recall[c]) append_double(out, *report.recall[c]); else out += "NA";
    out += ',';
    out += std::to_string(report.confusion.row_sum(c));
    out += '\n';
  }
  return out;
}

namespace {

using json = nlohmann::ordered_json;

json optional_array(const std::array<std::optional<double>, kNumClasses>& values) {
  json a = json::array();
  for (const auto& v : values) a.push_back(v ? json(*v) : json(nullptr));
  return a;
}

}  // namespace

std::string comparison_json(std::span<const std::pair<std::string, MetricsReport>> reports,
                            const ComparisonTable& table) {
  json models = json::array();
  for (const auto& [name, r] : reports) {
    json confusion = json::array();
    for (const auto& row : r.confusion.counts) confusion.push_back(row);
    models.push_back({{"name", name},
                      {"accuracy", r.accuracy},
                      {"mean_loss", r.mean_loss},
                      {"macro_recall", r.macro_recall()},
                      {"precision", optional_array(r.precision)},
                      {"recall", optional_array(r.recall)},
                      {"confusion", confusion}});
  }
  json rows = json::array();
  for (const auto& row : table.rows) {
    rows.push_back({{"name", row.name},
                    {"accuracy", row.accuracy},
                    {"mean_loss", row.mean_loss},
                    {"recall_delta", optional_array(row.recall_delta)}});
  }
  json labels = json::array();
  for (ClassLabel c : kAllClasses) labels.push_back(class_name(c));
  json doc = {{"label_names", labels}, {"models", models}, {"comparison", rows}};
  return doc.dump(2) + "\n";
}

}  // namespace kpiscan
