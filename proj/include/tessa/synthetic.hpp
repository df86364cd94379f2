#pragma once

#include "tessa/dataset_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tessa {

enum class TrendKind { up, down, mixed, none };

std::string to_string(TrendKind k);

struct TrendSpec {
  TrendKind kind = TrendKind::none;
  double slope = 0.0;  // magnitude per step; the sign comes from `kind`
  /// Mixed trends flip direction here (rising first, then falling).
  /// Defaults to length / 2 when unset.
  std::optional<int> breakpoint;
};

struct SeasonalitySpec {
  int period = 12;
  double amplitude = 1.0;
};

struct FourierTerm {
  double frequency = 0.1;  // cycles per step
  double sine_amp = 0.0;
  double cosine_amp = 0.0;
};

struct SyntheticSpec {
  int length = 120;
  TrendSpec trend;
  std::optional<SeasonalitySpec> seasonality;
  std::vector<FourierTerm> fourier;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

enum class Component { upward_trend, downward_trend, mixed_trend, seasonal, fourier, noise };

struct GroundTruth {
  std::vector<Component> components;
  std::string text;
};

/// Canonical phrase used in ground-truth text for a component.
std::string canonical_phrase(Component c, const SyntheticSpec& spec);
/// Phrase used when no trend is present.
inline constexpr const char* kStablePhrase = "stable";

/// Throws InvalidSpec naming the first violated invariant.
void validate_spec(const SyntheticSpec& spec);

/// Components actually present in the spec, in rendering order.
std::vector<Component> present_components(const SyntheticSpec& spec);

/// Noise-free signal value at step t.
double deterministic_term(const SyntheticSpec& spec, int t);

std::string render_ground_truth(const SyntheticSpec& spec);

struct SyntheticItem {
  SyntheticSpec spec;
  TimeSeries series;
  GroundTruth truth;
};

SyntheticItem generate_series(const SyntheticSpec& spec, const std::string& id = "synthetic-0");

/// Draws one spec from the documented parameter ranges.
SyntheticSpec draw_spec(std::uint64_t seed);

/// n items with per-item seeds derive_seed(master_seed, i).
std::vector<SyntheticItem> generate_dataset(int n, std::uint64_t master_seed);

nlohmann::json spec_to_json(const SyntheticSpec& spec);

/// Writes series.jsonl, annotations.jsonl (kind ground_truth), specs.json
/// and manifest.json into `dir`. Throws IoError.
DatasetManifest write_synthetic_corpus(const std::filesystem::path& dir, const std::vector<SyntheticItem>& items,
                                       std::uint64_t master_seed);

}  // namespace tessa
