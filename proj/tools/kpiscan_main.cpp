// kpiscan: generate synthetic KPI corpora, train the classifiers, compare them
// and scan live-format KPI exports.
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 malformed data, 5 checkpoint error.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "kpiscan/checkpoint.hpp"
#include "kpiscan/dataset_io.hpp"
#include "kpiscan/error.hpp"
#include "kpiscan/format.hpp"
#include "kpiscan/metrics.hpp"
#include "kpiscan/model.hpp"
#include "kpiscan/run_config.hpp"
#include "kpiscan/scan.hpp"
#include "kpiscan/synth.hpp"

namespace {

using namespace kpiscan;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitCheckpoint = 5;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return kExitIo;
    case ErrorCode::MalformedData:
    case ErrorCode::EmptyDataset:
    case ErrorCode::TooFewPerClass:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::EmptySeries:
    case ErrorCode::NonFinite: return kExitData;
    case ErrorCode::BadCheckpoint:
    case ErrorCode::UnsupportedVersion: return kExitCheckpoint;
    default: return kExitUsage;
  }
}

int fail(int code, const std::string& message) {
  std::cerr << "kpiscan: " << message << "\n";
  return code;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return fail(exit_code_for(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(kExitIo, e.what());
  }
}

// Loads a checkpoint; every failure (including a missing file) is a checkpoint error.
Model open_model(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnsupportedVersion) throw;
    throw Error(ErrorCode::BadCheckpoint, path + ": " + e.what());
  }
}

void print_class_counts(const Dataset& data) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::cout << "  " << class_name(static_cast<ClassLabel>(c)) << ": " << data.class_counts[c]
              << "\n";
  }
}

std::string model_label(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t per_class = 250;
  std::size_t length = 96;
  std::uint64_t seed = 7;
  std::string out;
  std::string config;
};

int run_gen(CLI::App& cmd, const GenArgs& a) {
  return guarded([&] {
    // Raw series are generated at the feature length unless the config sets gen.length.
    GeneratorSpec spec;
    std::size_t per_class = a.per_class;
    spec.length = a.length;
    spec.seed = a.seed;
    if (!a.config.empty()) {
      const RunConfig cfg = RunConfig::load(a.config);
      cfg.apply(spec);
      per_class = cfg.per_class(per_class);
    }
    // Explicit flags win over the config file.
    if (cmd.count("--per-class")) per_class = a.per_class;
    if (cmd.count("--seed")) spec.seed = a.seed;

    const Dataset data = generate_corpus(per_class, spec, a.length);
    write_dataset_jsonl(data, a.out);
    std::cout << "wrote " << data.size() << " examples (length " << a.length << ") to " << a.out
              << "\n";
    print_class_counts(data);
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

struct GenKpiArgs {
  std::size_t cells = 1000;
  std::size_t length = 100;
  std::uint64_t seed = 11;
  std::string out;
  std::string labels;
};

int run_gen_kpi(const GenKpiArgs& a) {
  return guarded([&] {
    GeneratorSpec spec;
    spec.length = a.length;
    spec.seed = a.seed;
    const auto cells = generate_cells(a.cells, spec);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + a.out);
    std::vector<KpiSeries> series;
    series.reserve(cells.size());
    for (const auto& c : cells) series.push_back(c.series);
    write_kpi_csv(series, out);
    if (!out) throw Error(ErrorCode::Io, "failed writing " + a.out);
    if (!a.labels.empty()) {
      std::ofstream lab(a.labels, std::ios::binary);
      if (!lab) throw Error(ErrorCode::Io, "cannot write " + a.labels);
      lab << "cell_id,label\n";
      for (const auto& c : cells) lab << c.series.cell_id << ',' << class_name(c.label) << '\n';
    }
    std::cout << "wrote " << cells.size() << " cells x " << a.length << " samples to " << a.out
              << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string arch = "rcnn";
  std::size_t epochs = 30;
  double lr = 0.01;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::string out;
  std::string history;
  std::string config;
};

void print_report(const MetricsReport& r) {
  std::cout << "  accuracy " << format_fixed(r.accuracy, 4) << "  mean_loss "
            << format_fixed(r.mean_loss, 4) << "  macro_recall " << format_fixed(r.macro_recall(), 4)
            << "\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::cout << "    " << class_name(static_cast<ClassLabel>(c)) << " recall "
              << (r.recall[c] ? format_fixed(*r.recall[c], 4) : "NA") << "\n";
  }
}

int run_train(CLI::App& cmd, const TrainArgs& a) {
  Dataset data;
  try {
    data = read_dataset_jsonl(a.data);
  } catch (const Error& e) {
    return fail(e.code() == ErrorCode::Io ? kExitIo : kExitData, e.what());
  }
  if (data.empty()) return fail(kExitData, a.data + " holds no examples");
  return guarded([&] {
    ModelConfig mc;
    TrainConfig tc;
    mc.input_length = data.feature_length();
    if (!a.config.empty()) {
      const RunConfig cfg = RunConfig::load(a.config);
      cfg.apply(mc);
      cfg.apply(tc);
      if (mc.input_length != data.feature_length()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "model.input_length " + std::to_string(mc.input_length) + " but " + a.data +
                        " has length " + std::to_string(data.feature_length()));
      }
    }
    if (cmd.count("--arch") || a.config.empty()) mc.arch = architecture_from_name(a.arch);
    if (cmd.count("--epochs") || a.config.empty()) tc.epochs = a.epochs;
    if (cmd.count("--lr") || a.config.empty()) tc.lr = a.lr;
    if (cmd.count("--batch") || a.config.empty()) tc.batch_size = a.batch;
    if (cmd.count("--seed") || a.config.empty()) tc.seed = a.seed;

    const Split parts = split(data, a.test_fraction, tc.seed);

    Model model = build_model(mc, tc.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train(model, parts.train, parts.test, tc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_checkpoint(model, a.out);
    if (!a.history.empty()) write_history_csv(result.history, a.history);

    std::cout << architecture_name(mc.arch) << ": " << result.steps << " SGD steps over "
              << tc.epochs << " epochs in " << format_fixed(secs, 1) << " s ("
              << parts.train.size() << " train / " << parts.test.size() << " test)\n";
    std::cout << "final train loss " << format_fixed(model.meta().train_loss, 4) << "  acc "
              << format_fixed(model.meta().train_acc, 4) << "\n";
    std::cout << "test:\n";
    print_report(evaluate(model, parts.test));
    std::cout << "test_accuracy " << format_double(model.meta().test_acc) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> models;
  std::string data;
  std::string report;
};

int run_eval(const EvalArgs& a) {
  std::vector<std::pair<std::string, Model>> models;
  try {
    for (const auto& path : a.models) models.emplace_back(model_label(path), open_model(path));
  } catch (const Error& e) {
    return fail(kExitCheckpoint, e.what());
  }
  Dataset data;
  try {
    data = read_dataset_jsonl(a.data);
  } catch (const Error& e) {
    return fail(e.code() == ErrorCode::Io ? kExitIo : kExitData, e.what());
  }
  if (data.empty()) return fail(kExitData, a.data + " holds no examples");
  const std::size_t len = data.feature_length();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::size_t ml = models[i].second.config().input_length;
    if (ml != len) {
      return fail(kExitCheckpoint, a.models[i] + " expects input length " + std::to_string(ml) +
                                       " but " + a.data + " has length " + std::to_string(len));
    }
  }
  return guarded([&] {
    std::map<std::string, int> seen;
    std::vector<std::pair<std::string, MetricsReport>> reports;
    for (auto& [name, model] : models) {
      std::string unique = name;
      if (int n = seen[name]++; n > 0) unique += "#" + std::to_string(n + 1);
      reports.emplace_back(unique, evaluate(model, data));
    }
    const ComparisonTable table = compare(reports);
    std::cout << table.to_text();

    std::ofstream out(a.report, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + a.report);
    out << comparison_json(reports, table);
    const std::filesystem::path base(a.report);
    for (const auto& [name, r] : reports) {
      auto csv_path = base;
      csv_path.replace_filename(base.stem().string() + "." + name + ".metrics.csv");
      std::ofstream csv(csv_path, std::ios::binary);
      if (!csv) throw Error(ErrorCode::Io, "cannot write " + csv_path.string());
      csv << metrics_csv(r);
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::string model;
  std::string input;
  std::string out;
  std::size_t min_len = kMinSeriesLength;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::size_t batch = 64;
};

int run_scan(const ScanArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Model model = [&] {
    try {
      return open_model(a.model);
    } catch (const Error& e) {
      std::exit(fail(kExitCheckpoint, e.what()));
    }
  }();
  return guarded([&] {
    const auto cells = read_kpi_csv_file(a.input);
    const ScanReport report =
        scan_cells(model, cells, {.min_length = a.min_len, .threads = a.threads, .batch = a.batch});
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + a.out);
    write_scan_report(report, out);
    out.close();
    if (!out) throw Error(ErrorCode::Io, "failed writing " + a.out);

    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << summary_text(report.summary);
    std::cout << "total_seconds_including_io: " << format_fixed(total, 3) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string series;
};

int run_predict(const PredictArgs& a) {
  std::vector<double> values;
  std::string_view rest = a.series;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view item = rest.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || !std::isfinite(v)) {
      return fail(kExitUsage, "cannot parse series value '" + std::string(item) + "'");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (values.size() < kMinSeriesLength) {
    return fail(kExitUsage, "TooShort: need at least " + std::to_string(kMinSeriesLength) +
                                " values, got " + std::to_string(values.size()));
  }
  Model model = [&] {
    try {
      return open_model(a.model);
    } catch (const Error& e) {
      std::exit(fail(kExitCheckpoint, e.what()));
    }
  }();
  return guarded([&] {
    const Prediction p = model.predict(prepare_example(values, model.config().input_length));
    std::cout << class_name(p.label) << "\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      std::cout << "  p" << c << " " << class_name(static_cast<ClassLabel>(c)) << " "
                << format_double(p.probabilities[c]) << "\n";
    }
    return kExitOk;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kpiscan: cellular KPI traffic-behaviour classifier"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a labelled synthetic corpus (JSON lines)");
  gen_cmd->add_option("--per-class", gen.per_class, "Examples per class")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--len", gen.length, "Feature length L")->check(CLI::Range(4, 1 << 20));
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
  gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();
  gen_cmd->add_option("--config", gen.config, "key = value override file")->check(CLI::ExistingFile);

  GenKpiArgs gk;
  auto* gk_cmd = app.add_subcommand("gen-kpi", "Generate a synthetic live-format KPI export (cell_id,t,value)");
  gk_cmd->add_option("--cells", gk.cells, "Number of cells")->check(CLI::PositiveNumber);
  gk_cmd->add_option("--len", gk.length, "Samples per cell")->check(CLI::Range(8, 1 << 20));
  gk_cmd->add_option("--seed", gk.seed, "Generator seed");
  gk_cmd->add_option("--out", gk.out, "Output CSV path")->required();
  gk_cmd->add_option("--labels", gk.labels, "Optional ground-truth CSV (cell_id,label)");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a classifier on a corpus (stratified split)");
  tr_cmd->add_option("--data", tr.data, "Dataset (JSON lines)")->required();
  tr_cmd->add_option("--arch", tr.arch, "rcnn or cnn")->check(CLI::IsMember({"rcnn", "cnn"}));
  tr_cmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--lr", tr.lr, "SGD learning rate")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--batch", tr.batch, "Minibatch size")->check(CLI::Range(2, 1 << 20));
  tr_cmd->add_option("--seed", tr.seed, "Init / shuffle / split seed");
  tr_cmd->add_option("--test-fraction", tr.test_fraction, "Held-out fraction")
      ->check(CLI::Range(0.01, 0.99));
  tr_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  tr_cmd->add_option("--history", tr.history, "Per-epoch history CSV");
  tr_cmd->add_option("--config", tr.config, "key = value override file")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate and compare checkpoints on a dataset");
  ev_cmd->add_option("--model", ev.models, "Checkpoint (repeatable)")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset (JSON lines)")->required();
  ev_cmd->add_option("--report", ev.report, "Comparison report (JSON)")->required();

  ScanArgs sc;
  auto* sc_cmd = app.add_subcommand("scan", "Classify every cell of a cell_id,t,value export");
  sc_cmd->add_option("--model", sc.model, "Checkpoint")->required();
  sc_cmd->add_option("--input", sc.input, "KPI CSV")->required();
  sc_cmd->add_option("--out", sc.out, "Report CSV")->required();
  sc_cmd->add_option("--min-len", sc.min_len, "Shorter cells are reported as skipped");
  sc_cmd->add_option("--threads", sc.threads, "Worker threads")->check(CLI::PositiveNumber);
  sc_cmd->add_option("--batch", sc.batch, "Cells per inference call")->check(CLI::PositiveNumber);

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "Classify one comma-separated series");
  pr_cmd->add_option("--model", pr.model, "Checkpoint")->required();
  pr_cmd->add_option("--series", pr.series, "Comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*gen_cmd) return run_gen(*gen_cmd, gen);
  if (*gk_cmd) return run_gen_kpi(gk);
  if (*tr_cmd) return run_train(*tr_cmd, tr);
  if (*ev_cmd) return run_eval(ev);
  if (*sc_cmd) return run_scan(sc);
  if (*pr_cmd) return run_predict(pr);
  return kExitUsage;
}
