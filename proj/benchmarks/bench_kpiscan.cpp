#include <benchmark/benchmark.h>

#include <sstream>

#include "kpiscan/model.hpp"
#include "kpiscan/nn/ops.hpp"
#include "kpiscan/rng.hpp"
#include "kpiscan/scan.hpp"
#include "kpiscan/synth.hpp"

using namespace kpiscan;

namespace {

Tensor random_tensor(Rng& rng, Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<KpiSeries> cells(std::size_t n) {
  GeneratorSpec spec;
  spec.length = 100;
  std::vector<KpiSeries> out;
  for (auto& c : generate_cells(n, spec)) out.push_back(std::move(c.series));
  return out;
}

void BM_Conv1dForward(benchmark::State& state) {
  Rng rng(1);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const nn::Conv1dParams p{random_tensor(rng, {32, 16, 5}), random_tensor(rng, {32}), 1};
  const Tensor x = random_tensor(rng, {batch, 16, 46});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv1d_forward(p, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(64);

void BM_LstmLastHidden(benchmark::State& state) {
  Rng rng(2);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  nn::LstmParams p;
  for (Tensor* w : {&p.w_f, &p.w_i, &p.w_c, &p.w_o}) *w = random_tensor(rng, {64, 96});
  for (Tensor* b : {&p.b_f, &p.b_i, &p.b_c, &p.b_o}) *b = random_tensor(rng, {64});
  const Tensor x = random_tensor(rng, {batch, 21, 32});
  for (auto _ : state) benchmark::DoNotOptimize(nn::lstm_last_hidden(p, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LstmLastHidden)->Arg(1)->Arg(64);

void BM_PredictBatch(benchmark::State& state) {
  ModelConfig c;
  c.arch = state.range(0) == 0 ? Architecture::rcnn : Architecture::cnn;
  const Model m = build_model(c, 3);
  Rng rng(3);
  std::vector<double> features(64 * c.input_length);
  for (double& v : features) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(m.predict_batch(features, 64));
  state.SetItemsProcessed(state.iterations() * 64);
  state.SetLabel(std::string(architecture_name(c.arch)));
}
BENCHMARK(BM_PredictBatch)->Arg(0)->Arg(1);

void BM_ScanCells(benchmark::State& state) {
  const Model m = build_model(ModelConfig{}, 4);
  const auto data = cells(2000);
  const ScanOptions options{kMinSeriesLength, static_cast<std::size_t>(state.range(0)), 64};
  for (auto _ : state) benchmark::DoNotOptimize(scan_cells(m, data, options));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_ScanCells)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_ReadKpiCsv(benchmark::State& state) {
  std::ostringstream out;
  write_kpi_csv(cells(5000), out);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(read_kpi_csv(in));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ReadKpiCsv)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
