#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/domain_agent.hpp"
#include "tessa/feature_select.hpp"
#include "tessa/general_agent.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/prompts.hpp"
#include "tessa/rl_selection.hpp"
#include "tessa/ts_features.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tessa {

enum class SelectionPath { offline, rl };

std::string to_string(SelectionPath p);
SelectionPath selection_path_from_string(const std::string& s);

struct BackendSettings {
  std::string kind = "scripted";  // scripted | echo | http-chat
  std::optional<std::filesystem::path> script;
  HttpChatConfig http;
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 2048;
  int concurrency = 4;
  int retries = 3;
};

/// Unset fields fall back to ExtractionConfig::defaults_for(series frequency).
struct ExtractionOverrides {
  std::optional<int> seasonal_period;
  std::optional<int> ma_window;
  std::optional<int> rolling_window;
  std::optional<int> lag;
  std::optional<int> fourier_top_m;
  std::optional<int> mi_bins;
  std::optional<int> cca_embed_dim;
  std::optional<bool> rolling_extrema;

  ExtractionConfig resolve(Frequency frequency) const;
};

struct RunConfig {
  std::vector<std::filesystem::path> source_manifests;
  std::optional<std::filesystem::path> target_manifest;
  int target_exemplars = 5;
  SelectionConfig selection;
  SelectionPath mode = SelectionPath::offline;
  int rl_episodes = 2000;
  ExtractionOverrides extraction;
  BackendSettings backend;
  std::optional<std::filesystem::path> templates_dir;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int max_rounds = kDefaultMaxRounds;
};

/// Relative paths resolve against `base_dir`. Throws InvalidConfig naming
/// the offending key.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

/// Throws InvalidConfig naming the field (e.g. "source_manifests").
void validate_run_config(const RunConfig& config, bool require_target = true);

/// Seeds of every random consumer, all derived from RunConfig::seed.
struct SeedTree {
  std::uint64_t backbone;
  std::uint64_t ts_policy_init;
  std::uint64_t ts_policy_episodes;
  std::uint64_t text_policy_init;
  std::uint64_t text_policy_episodes;

  static SeedTree from(std::uint64_t seed);
};

/// Gateway with one backend registered as "main". Throws InvalidConfig
/// (e.g. scripted without a script), AuthMissing.
std::unique_ptr<Gateway> make_gateway(const BackendSettings& settings);

TemplateStore load_templates(const std::optional<std::filesystem::path>& dir);

/// 0 success; 2 configuration / spec / pairing; 3 IO and data files;
/// 4 backend; 5 parse failures of backend output; 1 anything else.
int exit_code_for(Errc code);

/// <out>/run-<UTC yyyymmddTHHMMSSZ>, with -2, -3, ... appended on collision.
std::filesystem::path make_run_dir(const std::filesystem::path& out, std::chrono::system_clock::time_point now);

// Stages. Each is usable on its own on persisted artifacts.

/// Decontextualizes every source_specific record.
std::vector<AnnotationRecord> stage_decontextualize(const std::vector<AnnotationRecord>& source, Gateway& gateway,
                                                    const TemplateStore& templates);

std::map<std::string, FeatureSet> stage_extract_features(const std::vector<TimeSeries>& series,
                                                         const ExtractionOverrides& extraction);

/// Registered feature names that occur in at least one set, vocabulary order.
std::vector<std::string> ts_candidate_names(const std::map<std::string, FeatureSet>& sets);

struct SelectionOutcome {
  ImportanceScores scores;
  std::vector<std::string> selected;
  std::optional<nlohmann::json> checkpoint;  // rl only
  TrainingLog training;                      // rl only
};

struct SelectionRequest {
  SelectionConfig config;
  SelectionPath mode = SelectionPath::offline;
  int episodes = 2000;
  std::uint64_t backbone_seed = 7;
  std::uint64_t init_seed = 1;
  std::uint64_t episode_seed = 1;
};

SelectionOutcome stage_select(const std::vector<std::string>& candidates,
                              const std::vector<AnnotationRecord>& annotations, TemplateId scoring_template,
                              const SelectionRequest& request, Gateway& gateway, const TemplateStore& templates);

/// Features of `set` whose name is one of `selected`.
std::vector<TsFeature> filter_features(const FeatureSet& set, const std::vector<std::string>& selected);
std::vector<TextFeature> filter_text_features(const std::vector<TextFeature>& features,
                                              const std::vector<std::string>& selected);

nlohmann::json text_features_to_json(const std::vector<TextFeature>& features);
std::vector<TextFeature> text_features_from_json(const nlohmann::json& j);
nlohmann::json scores_to_json(const ImportanceScores& scores);

struct RunSummary {
  std::filesystem::path run_dir;
  std::size_t series = 0;
  std::size_t backend_calls = 0;
  std::map<std::string, int> refine_rounds;  // series id -> rounds
};

// Stages over a run directory: each reads the artifacts of the previous
// ones from `dir` and writes its own, so any of them can be rerun alone.

/// Source manifests -> decontextualized.jsonl, text_features.json.
std::size_t run_decontextualize_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                                      const std::filesystem::path& dir);
/// Target manifest -> features/<series>.json.
std::size_t run_feature_stage(const RunConfig& config, const std::filesystem::path& dir);
std::map<std::string, FeatureSet> read_feature_sets(const std::filesystem::path& dir);
/// -> scores/{ts,text}.json, selection.json, checkpoints/ (rl mode).
void run_selection_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                         const std::filesystem::path& dir);
/// -> general.jsonl, one record per target series.
std::size_t run_general_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                              const std::filesystem::path& dir);
/// -> rounds/<series>.jsonl, target_specific.jsonl, terms.json, refine.json.
/// Returns refine rounds per series.
std::map<std::string, int> run_domain_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                                            const std::filesystem::path& dir);

/// Full flow into `run_dir` (created if missing): decontextualize, ts and
/// text features, selection, general annotation, refine_loop per target
/// series. The transcript is written even when a stage fails.
RunSummary run_pipeline(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                        const std::filesystem::path& run_dir);

}  // namespace tessa
