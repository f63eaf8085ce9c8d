#include "kpiscan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "kpiscan/error.hpp"
#include "kpiscan/rng.hpp"

namespace kpiscan {

namespace {

constexpr double kUpLow = 1.5;
constexpr double kUpHigh = 3.0;
constexpr double kDownLow = 1.0 / 3.0;
constexpr double kDownHigh = 2.0 / 3.0;

constexpr std::size_t kMinOutages = 3;
constexpr std::size_t kMaxOutages = 5;
constexpr std::size_t kMinOutageWidth = 2;
constexpr std::size_t kMaxOutageWidth = 6;
// Outage samples sit at [0, kOutageCeiling) of baseline.
constexpr double kOutageCeiling = 0.05;

// Non-overlapping, non-adjacent windows; every window and gap is drawn from rng.
std::vector<std::pair<std::size_t, std::size_t>> place_outages(std::size_t length, Rng& rng) {
  std::size_t count = static_cast<std::size_t>(rng.between(kMinOutages, kMaxOutages));
  std::vector<std::size_t> widths(count);
  for (auto& w : widths) w = static_cast<std::size_t>(rng.between(kMinOutageWidth, kMaxOutageWidth));

  auto needed = [&] {
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    return total + widths.size() - 1;
  };
  while (needed() > length) {
    auto widest = std::max_element(widths.begin(), widths.end());
    if (*widest > kMinOutageWidth) {
      --*widest;
    } else {
      widths.pop_back();  // length >= 8 always leaves room for three 2-sample windows
    }
  }

  // Distribute the slack over count+1 gaps (stars and bars).
  const std::size_t slack = length - needed();
  std::vector<std::size_t> cuts(widths.size());
  for (auto& c : cuts) c = static_cast<std::size_t>(rng.below(slack + 1));
  std::sort(cuts.begin(), cuts.end());

  std::vector<std::pair<std::size_t, std::size_t>> windows;
  std::size_t pos = 0;
  std::size_t prev_cut = 0;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    pos += cuts[k] - prev_cut;
    prev_cut = cuts[k];
    windows.emplace_back(pos, pos + widths[k]);
    pos += widths[k] + 1;
  }
  return windows;
}

}  // namespace

void GeneratorSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadSpec, what); };
  if (length < 8) bad("length must be at least 8");
  if (!(baseline > 0.0) || !std::isfinite(baseline)) bad("baseline must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma must be >= 0");
  if (!(season_amp >= 0.0) || !std::isfinite(season_amp)) bad("season_amp must be >= 0");
  if (season_period == 0) bad("season_period must be positive");
  const auto [lo, hi] = changepoint_frac_range;
  if (!(lo > 0.0 && lo < hi && hi < 1.0)) bad("changepoint range must satisfy 0 < low < high < 1");
}

GeneratedSeries generate_detailed(ClassLabel label, const GeneratorSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(class_index(label))));

  const std::size_t n = spec.length;
  GeneratedSeries out;
  out.series.values.resize(n);
  out.level.assign(n, 1.0);

  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cp_frac = rng.uniform(spec.changepoint_frac_range.first,
                                     spec.changepoint_frac_range.second);
  out.changepoint = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(cp_frac * static_cast<double>(n))), 1, n - 2);
  const std::size_t cp = out.changepoint;

  switch (label) {
    case ClassLabel::SuddenlyIncreasing:
    case ClassLabel::GraduallyIncreasing:
      out.factor = rng.uniform(kUpLow, kUpHigh);
      break;
    case ClassLabel::SuddenlyDecreasing:
    case ClassLabel::GraduallyDecreasing:
      out.factor = rng.uniform(kDownLow, kDownHigh);
      break;
    default:
      break;
  }

  switch (label) {
    case ClassLabel::Normal:
      break;
    case ClassLabel::SuddenlyIncreasing:
    case ClassLabel::SuddenlyDecreasing:
      for (std::size_t t = cp; t < n; ++t) out.level[t] = out.factor;
      break;
    case ClassLabel::GraduallyIncreasing:
    case ClassLabel::GraduallyDecreasing: {
      const double span = static_cast<double>(n - 1 - cp);
      for (std::size_t t = cp; t < n; ++t) {
        out.level[t] = 1.0 + (out.factor - 1.0) * static_cast<double>(t - cp) / span;
      }
      out.level[n - 1] = out.factor;
      break;
    }
    case ClassLabel::FaultySite:
      out.outages = place_outages(n, rng);
      for (const auto& [begin, end] : out.outages) {
        for (std::size_t t = begin; t < end; ++t) out.level[t] = rng.uniform(0.0, kOutageCeiling);
      }
      break;
    case ClassLabel::NewSite:
      std::fill(out.level.begin(), out.level.begin() + static_cast<std::ptrdiff_t>(cp), 0.0);
      break;
    case ClassLabel::DownSite:
      std::fill(out.level.begin() + static_cast<std::ptrdiff_t>(cp), out.level.end(), 0.0);
      break;
  }

  // Seasonality and noise only ride on the live (non-outage, non-dead) samples.
  auto live = [&](std::size_t t) {
    switch (label) {
      case ClassLabel::NewSite: return t >= cp;
      case ClassLabel::DownSite: return t < cp;
      case ClassLabel::FaultySite:
        return std::none_of(out.outages.begin(), out.outages.end(),
                            [t](const auto& w) { return t >= w.first && t < w.second; });
      default: return true;
    }
  };

  const double omega = 2.0 * std::numbers::pi / static_cast<double>(spec.season_period);
  for (std::size_t t = 0; t < n; ++t) {
    const double noise = rng.normal();
    if (!live(t)) {
      out.series.values[t] = spec.baseline * out.level[t];
      continue;
    }
    const double season = 1.0 + spec.season_amp * std::sin(omega * static_cast<double>(t) + phase);
    const double v = spec.baseline * out.level[t] * season + spec.baseline * spec.noise_sigma * noise;
    out.series.values[t] = std::max(0.0, v);
  }
  return out;
}

std::uint64_t example_seed(std::uint64_t template_seed, ClassLabel label, std::size_t instance) {
  return derive_seed(template_seed, static_cast<std::uint64_t>(class_index(label)), instance);
}

void Dataset::push_back(LabeledExample example) {
  ++class_counts[static_cast<std::size_t>(example.label)];
  examples.push_back(std::move(example));
}

void Dataset::recount() {
  class_counts.fill(0);
  for (const auto& e : examples) ++class_counts[static_cast<std::size_t>(e.label)];
}

std::size_t Dataset::feature_length() const {
  if (examples.empty()) return 0;
  const std::size_t len = examples.front().features.size();
  for (const auto& e : examples) {
    if (e.features.size() != len) {
      throw Error(ErrorCode::ShapeMismatch, "example '" + e.source_id + "' has " +
                                                std::to_string(e.features.size()) +
                                                " features, expected " + std::to_string(len));
    }
  }
  return len;
}

Dataset generate_corpus(std::size_t per_class, const GeneratorSpec& spec_template,
                        std::size_t input_length) {
  if (per_class == 0) throw Error(ErrorCode::BadSpec, "per_class must be at least 1");
  spec_template.validate();
  Dataset data;
  data.examples.reserve(per_class * kNumClasses);
  char id[64];
  for (ClassLabel label : kAllClasses) {
    for (std::size_t i = 0; i < per_class; ++i) {
      GeneratorSpec spec = spec_template;
      spec.seed = example_seed(spec_template.seed, label, i);
      const KpiSeries series = generate_example(label, spec);
      std::snprintf(id, sizeof(id), "%s-%05zu", class_name(label).data(), i);
      data.push_back({prepare_example(series, input_length), label, id});
    }
  }
  return data;
}

Split split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::BadSpec, "test_fraction must lie in (0,1)");
  }
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.examples[i].label)].push_back(i);
  }

  Split out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw Error(ErrorCode::TooFewPerClass,
                  std::string(class_name(static_cast<ClassLabel>(c))) + " has a single example");
    }
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = rows.size() - 1; i > 0; --i) {
      std::swap(rows[i], rows[rng.below(i + 1)]);
    }
    const auto n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(rows.size())));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      (k < n_test ? out.test : out.train).push_back(dataset.examples[rows[k]]);
    }
  }
  return out;
}

std::vector<SyntheticCell> generate_cells(std::size_t cells, const GeneratorSpec& spec_template) {
  spec_template.validate();
  std::vector<SyntheticCell> out;
  out.reserve(cells);
  char id[32];
  for (std::size_t i = 0; i < cells; ++i) {
    const ClassLabel label = kAllClasses[i % kNumClasses];
    GeneratorSpec spec = spec_template;
    spec.seed = derive_seed(spec_template.seed, 0xCE11, i);
    KpiSeries series = generate_example(label, spec);
    std::snprintf(id, sizeof(id), "cell-%07zu", i);
    series.cell_id = id;
    out.push_back({std::move(series), label});
  }
  return out;
}

}  // namespace kpiscan
