#include "tessa/synthetic.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/random.hpp"
#include "tessa/text_util.hpp"

#include <cmath>
#include <numbers>

namespace tessa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(TrendKind k) {
  switch (k) {
    case TrendKind::up: return "up";
    case TrendKind::down: return "down";
    case TrendKind::mixed: return "mixed";
    case TrendKind::none: return "none";
  }
  return "none";
}

std::string canonical_phrase(Component c, const SyntheticSpec& spec) {
  switch (c) {
    case Component::upward_trend: return "upward trend";
    case Component::downward_trend: return "downward trend";
    case Component::mixed_trend: return "mixed trend";
    case Component::seasonal:
      return "seasonal pattern with period " + std::to_string(spec.seasonality ? spec.seasonality->period : 0);
    case Component::fourier: return "periodic Fourier components";
    case Component::noise: return "random fluctuations (noise)";
  }
  return {};
}

void validate_spec(const SyntheticSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidSpec, msg); };
  if (spec.length < 8) fail("length must be >= 8");
  if (!std::isfinite(spec.trend.slope)) fail("trend slope must be finite");
  if (spec.trend.kind != TrendKind::none && spec.trend.slope < 0) fail("trend slope is a magnitude and must be >= 0");
  if (spec.trend.breakpoint && (*spec.trend.breakpoint < 1 || *spec.trend.breakpoint >= spec.length)) {
    fail("mixed-trend breakpoint must lie inside the series");
  }
  if (spec.seasonality) {
    if (spec.seasonality->period < 2) fail("seasonal period must be >= 2");
    if (spec.seasonality->period * 2 > spec.length) fail("seasonal period must be <= length / 2");
    if (!std::isfinite(spec.seasonality->amplitude) || spec.seasonality->amplitude < 0) {
      fail("seasonal amplitude must be finite and >= 0");
    }
  }
  for (const auto& term : spec.fourier) {
    if (!std::isfinite(term.frequency) || !(term.frequency > 0) || term.frequency > 0.5) {
      fail("fourier frequency must be in (0, 0.5]");
    }
    if (!std::isfinite(term.sine_amp) || !std::isfinite(term.cosine_amp)) fail("fourier amplitudes must be finite");
  }
  if (!std::isfinite(spec.noise_sigma) || spec.noise_sigma < 0) fail("noise_sigma must be finite and >= 0");
}

std::vector<Component> present_components(const SyntheticSpec& spec) {
  std::vector<Component> out;
  switch (spec.trend.kind) {
    case TrendKind::up: out.push_back(Component::upward_trend); break;
    case TrendKind::down: out.push_back(Component::downward_trend); break;
    case TrendKind::mixed: out.push_back(Component::mixed_trend); break;
    case TrendKind::none: break;
  }
  if (spec.seasonality) out.push_back(Component::seasonal);
  if (!spec.fourier.empty()) out.push_back(Component::fourier);
  if (spec.noise_sigma > 0) out.push_back(Component::noise);
  return out;
}

double deterministic_term(const SyntheticSpec& spec, int t) {
  const double pi2 = 2.0 * std::numbers::pi;
  double v = 0.0;
  switch (spec.trend.kind) {
    case TrendKind::up: v += spec.trend.slope * t; break;
    case TrendKind::down: v -= spec.trend.slope * t; break;
    case TrendKind::mixed: {
      const int bp = spec.trend.breakpoint.value_or(spec.length / 2);
      v += t <= bp ? spec.trend.slope * t : spec.trend.slope * (2.0 * bp - t);
      break;
    }
    case TrendKind::none: break;
  }
  if (spec.seasonality) v += spec.seasonality->amplitude * std::sin(pi2 * t / spec.seasonality->period);
  for (const auto& term : spec.fourier) {
    v += term.sine_amp * std::sin(pi2 * term.frequency * t) + term.cosine_amp * std::cos(pi2 * term.frequency * t);
  }
  return v;
}

std::string render_ground_truth(const SyntheticSpec& spec) {
  std::vector<std::string> sentences;
  switch (spec.trend.kind) {
    case TrendKind::up:
      sentences.push_back("The series shows an upward trend (slope " + format_fixed(spec.trend.slope, 3) + " per step).");
      break;
    case TrendKind::down:
      sentences.push_back("The series shows a downward trend (slope -" + format_fixed(spec.trend.slope, 3) + " per step).");
      break;
    case TrendKind::mixed:
      sentences.push_back("The series shows a mixed trend, rising until step " +
                          std::to_string(spec.trend.breakpoint.value_or(spec.length / 2)) + " and falling afterwards.");
      break;
    case TrendKind::none:
      sentences.push_back(std::string("The series is ") + kStablePhrase + " with no overall direction.");
      break;
  }
  if (spec.seasonality) {
    sentences.push_back("It exhibits a seasonal pattern with period " + std::to_string(spec.seasonality->period) +
                        " (amplitude " + format_fixed(spec.seasonality->amplitude, 2) + ").");
  }
  if (!spec.fourier.empty()) {
    std::vector<std::string> freqs;
    for (const auto& term : spec.fourier) freqs.push_back(format_fixed(term.frequency, 3));
    sentences.push_back("It contains periodic Fourier components (frequencies " + join(freqs, ", ") + " cycles per step).");
  }
  if (spec.noise_sigma > 0) {
    sentences.push_back("It includes random fluctuations (noise) with standard deviation " +
                        format_fixed(spec.noise_sigma, 2) + ".");
  }
  return join(sentences, " ");
}

SyntheticItem generate_series(const SyntheticSpec& spec, const std::string& id) {
  validate_spec(spec);
  SyntheticItem item;
  item.spec = spec;
  item.series.id = id;
  item.series.domain = "synthetic";
  item.series.frequency = Frequency::other;
  item.series.channels = {"value"};
  item.series.values.resize(spec.length, 1);
  Rng rng(spec.seed);
  for (int t = 0; t < spec.length; ++t) {
    double v = deterministic_term(spec, t);
    if (spec.noise_sigma > 0) v += rng.normal(0.0, spec.noise_sigma);
    item.series.values(t, 0) = v;
  }
  item.truth.components = present_components(spec);
  item.truth.text = render_ground_truth(spec);
  return item;
}

SyntheticSpec draw_spec(std::uint64_t seed) {
  Rng rng(seed);
  SyntheticSpec spec;
  spec.length = 120;
  spec.seed = derive_seed(seed, 0xA015E);
  constexpr double kPresence = 0.7;
  if (rng.bernoulli(kPresence)) {
    static constexpr TrendKind kinds[] = {TrendKind::up, TrendKind::down, TrendKind::mixed};
    spec.trend.kind = kinds[rng.below(3)];
    spec.trend.slope = rng.uniform(0.01, 0.2);
    if (spec.trend.kind == TrendKind::mixed) {
      spec.trend.breakpoint = spec.length / 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.length / 2 + 1)));
    }
  }
  if (rng.bernoulli(kPresence)) {
    static constexpr int periods[] = {4, 6, 12, 24};
    spec.seasonality = SeasonalitySpec{periods[rng.below(4)], rng.uniform(0.5, 3.0)};
  }
  if (rng.bernoulli(kPresence)) {
    const int terms = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < terms; ++i) {
      FourierTerm term;
      term.frequency = rng.uniform(0.01, 0.49);
      term.sine_amp = rng.uniform(0.2, 2.0);
      term.cosine_amp = rng.uniform(0.2, 2.0);
      spec.fourier.push_back(term);
    }
  }
  if (rng.bernoulli(kPresence)) spec.noise_sigma = rng.uniform(0.01, 1.0);
  return spec;
}

std::vector<SyntheticItem> generate_dataset(int n, std::uint64_t master_seed) {
  if (n < 1) throw Error(Errc::InvalidSpec, "n must be >= 1");
  std::vector<SyntheticItem> items;
  items.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synthetic-%04d", i);
    items.push_back(generate_series(draw_spec(derive_seed(master_seed, static_cast<std::uint64_t>(i))), id));
  }
  return items;
}

json spec_to_json(const SyntheticSpec& spec) {
  json trend = {{"kind", to_string(spec.trend.kind)}, {"slope", spec.trend.slope}};
  if (spec.trend.breakpoint) trend["breakpoint"] = *spec.trend.breakpoint;
  json fourier = json::array();
  for (const auto& term : spec.fourier) {
    fourier.push_back({{"frequency", term.frequency}, {"sine_amp", term.sine_amp}, {"cosine_amp", term.cosine_amp}});
  }
  json j = {{"length", spec.length},
            {"trend", trend},
            {"seasonality", nullptr},
            {"fourier", fourier},
            {"noise_sigma", spec.noise_sigma},
            {"seed", spec.seed},
            {"prng", Rng::kAlgorithm}};
  if (spec.seasonality) j["seasonality"] = {{"period", spec.seasonality->period}, {"amplitude", spec.seasonality->amplitude}};
  return j;
}

DatasetManifest write_synthetic_corpus(const fs::path& dir, const std::vector<SyntheticItem>& items,
                                       std::uint64_t master_seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::IoError, "cannot create output directory '" + dir.string() + "'");

  std::vector<TimeSeries> series;
  std::vector<AnnotationRecord> notes;
  json specs = json::array();
  long long rows = 0;
  for (const auto& item : items) {
    series.push_back(item.series);
    rows += item.series.length();
    notes.push_back({item.series.id + "-gt", item.series.id, "synthetic", AnnotationKind::ground_truth, item.truth.text,
                     Provenance::synthetic, std::nullopt});
    specs.push_back({{"series_id", item.series.id}, {"spec", spec_to_json(item.spec)}});
  }
  write_series(dir / "series.jsonl", series);
  write_annotations(dir / "annotations.jsonl", notes);
  write_json(dir / "specs.json", {{"master_seed", master_seed}, {"items", specs}});

  DatasetManifest m;
  m.name = "synthetic";
  m.domain = "synthetic";
  m.frequency = "other";
  m.channel_count = 1;
  m.timestamp_count = rows;
  m.sample_count = static_cast<long long>(items.size());
  const auto abs_dir = std::filesystem::absolute(dir);
  m.series_path = abs_dir / "series.jsonl";
  m.annotations_path = abs_dir / "annotations.jsonl";
  write_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace tessa
