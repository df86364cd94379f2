#include "fixtures.hpp"

#include "tessa/json_codec.hpp"
#include "tessa/synthetic.hpp"
#include "tessa/text_util.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace tessa::testing {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("tessa-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    out[fs::relative(entry.path(), root).string()] = bytes.str();
  }
  return out;
}

namespace {

nlohmann::json entry(const std::string& match, const std::string& response) {
  return {{"match", match}, {"response", response}};
}

const char* kDecon = "Task: domain decontextualization.";
const char* kTextFeatures = "Task: text feature extraction.";
const char* kScoreTs = "Task: feature importance scoring (time-series features).";
const char* kScoreText = "Task: feature importance scoring (text features).";
const char* kGeneral = "Task: general annotation.";
const char* kExtract = "Task: domain term extraction.";
const char* kSpecialize = "Task: domain-specific annotation.";
const char* kReview = "Task: annotation review.";

const std::vector<std::string> kSourceTexts = {
    "Grid load climbs every evening as demand peaks, then eases overnight.",
    "Baseload generation holds flat while the weekly demand cycle repeats.",
    "A sudden drop in load follows the plant outage on day 12.",
    "Peak demand shows an upward trend across the month.",
    "Weekend load sits well below weekday demand, a clear weekly cycle.",
    "Demand response events cause a sudden drop, then load recovers.",
};

const std::vector<std::string> kNeutralTexts = {
    "The level climbs every evening, peaks, then eases overnight.",
    "The level holds flat while a weekly cycle repeats.",
    "A sudden drop follows an event on day 12.",
    "The peaks show an upward trend across the month.",
    "Values at the end of each week sit below the rest, a clear weekly cycle.",
    "An event causes a sudden drop, then the level recovers.",
};

}  // namespace

PipelineFixture write_pipeline_fixture(const fs::path& root, const PipelineFixtureOptions& options) {
  PipelineFixture fx;
  fx.root = root;
  fs::create_directories(root / "source");

  std::vector<TimeSeries> source_series;
  for (int i = 0; i < 2; ++i) {
    TimeSeries s;
    s.id = "grid-" + std::to_string(i);
    s.domain = "energy";
    s.frequency = Frequency::daily;
    s.channels = {"load"};
    s.values.resize(28, 1);
    for (int t = 0; t < 28; ++t) s.values(t, 0) = 100.0 + 10.0 * ((t + i) % 7) + t;
    source_series.push_back(s);
  }
  std::vector<AnnotationRecord> source_notes;
  for (std::size_t i = 0; i < kSourceTexts.size(); ++i) {
    source_notes.push_back({"energy-" + std::to_string(i), "grid-" + std::to_string(i % 2), "energy",
                            AnnotationKind::source_specific, kSourceTexts[i], Provenance::human, std::nullopt});
  }
  write_series(root / "source" / "series.jsonl", source_series);
  write_annotations(root / "source" / "annotations.jsonl", source_notes);
  DatasetManifest source{"grid", "energy", "daily", 1, 56, 2, "series.jsonl", fs::path("annotations.jsonl")};
  write_manifest(root / "source" / "manifest.json", source);
  fx.source_annotations = source_notes.size();

  const auto items = generate_dataset(options.series, 2024);
  DatasetManifest target = write_synthetic_corpus(root / "target", items, 2024);
  auto target_notes = load_annotations(root / "target" / "annotations.jsonl");
  const std::vector<std::string> exemplars = {
      "The series breaks above its resistance level and the seasonal cycle keeps repeating.",
      "A support level near the lows holds through each seasonal trough.",
      "Seasonal peaks line up with the resistance level while the trend channel widens.",
      "After the breakout the trend channel turns upward.",
      "Noise dominates; no support level or resistance level is visible.",
  };
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    target_notes.push_back({"exemplar-" + std::to_string(i), std::nullopt, "synthetic", AnnotationKind::target_specific,
                            exemplars[i], Provenance::human, std::nullopt});
  }
  write_annotations(root / "target" / "annotations.jsonl", target_notes);
  target.series_path = "series.jsonl";
  target.annotations_path = fs::path("annotations.jsonl");
  write_manifest(root / "target" / "manifest.json", target);
  for (const auto& item : items) fx.series_ids.push_back(item.series.id);

  std::vector<nlohmann::json> script;
  for (const auto& text : kNeutralTexts) script.push_back(entry(kDecon, text));
  script.push_back(entry(kTextFeatures, R"(["upward trend", "weekly cycle", "sudden drop"])"));
  script.push_back(entry(
      kScoreTs,
      R"({"trend": 5, "seasonality": 4, "fourier_frequency": 3, "moving_average": 2, "residual": 1, "rolling_mean": 1, "lag": 0})"));
  script.push_back(entry(kScoreText, R"({"upward trend": 3, "weekly cycle": 2, "sudden drop": 1})"));
  for (const auto& sid : fx.series_ids) {
    script.push_back(entry(kGeneral, "General annotation for " + sid +
                                         ": a trend with a repeating seasonal cycle and mild fluctuations."));
  }
  for (std::size_t i = 0; i < fx.series_ids.size(); ++i) {
    const std::string& sid = fx.series_ids[i];
    const int revisions = i < options.revisions.size() ? options.revisions[i] : 0;
    const int rounds = std::min(revisions + 1, options.max_rounds);
    fx.rounds.push_back(rounds);
    for (int r = 1; r <= rounds; ++r) {
      std::string terms = R"([{"term": "Support Level", "gloss": "a floor the series bounces off"}, )"
                          R"({"term": "resistance level", "gloss": "a ceiling the series fails to break"}, )"
                          R"({"term": "support level"}])";
      if (r > 1) terms = R"([{"term": "support level"}, {"term": "trend channel"}])";
      script.push_back(entry(kExtract, terms));
      script.push_back(entry(kSpecialize, "Round " + std::to_string(r) + " for " + sid +
                                              ": price action respects the support level with a seasonal rhythm."));
      script.push_back(entry(kReview, r <= revisions ? "REVISE: mention the trend channel" : "APPROVE"));
    }
  }
  write_jsonl(root / "script.jsonl", script);
  fx.expected_calls = script.size();

  nlohmann::json config = {
      {"source_manifests", {"source/manifest.json"}},
      {"target_manifest", "target/manifest.json"},
      {"selection", {{"k", 3}, {"tau", 0.3}, {"mode", to_string(options.mode)}, {"episodes", options.episodes}}},
      {"extraction", {{"seasonal_period", 12}}},
      {"backend", {{"kind", "scripted"}, {"script", "script.jsonl"}, {"temperature", 0}}},
      {"output_dir", "out"},
      {"seed", options.seed},
      {"max_rounds", options.max_rounds},
  };
  fx.config = root / "config.json";
  write_json(fx.config, config);
  return fx;
}

std::map<std::string, double> TableBatchScorer::score(std::span<const std::string> features,
                                                      std::span<const AnnotationRecord> batch) {
  std::map<std::string, double> out;
  for (const auto& f : features) {
    auto it = table_.find(f);
    out[f] = it == table_.end() ? 0.0 : it->second * static_cast<double>(batch.size());
  }
  return out;
}

const std::vector<std::string>& rl_names() {
  static const std::vector<std::string> names = {
      "trend",        "seasonality",       "residual",           "moving_average",      "lag",
      "rolling_mean", "fourier_frequency", "pearson_correlation", "mutual_information", "canonical_correlation"};
  return names;
}

std::vector<AnnotationRecord> mention_corpus(const std::string& prefix, const std::vector<std::string>& mentioned, int n) {
  std::vector<std::string> words;
  for (const auto& m : mentioned) {
    std::string w = m;
    for (auto& ch : w) {
      if (ch == '_') ch = ' ';
    }
    words.push_back(w);
  }
  std::vector<AnnotationRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({prefix + "-" + std::to_string(i), std::nullopt, "test", AnnotationKind::decontextualized,
                   "The series shows " + join(words, " and ") + ".", Provenance::llm, prefix + "-src-" + std::to_string(i)});
  }
  return out;
}

}  // namespace tessa::testing
