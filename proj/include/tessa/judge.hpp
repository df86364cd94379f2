#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/prompts.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tessa {

enum class Metric { clarity, comprehensiveness, domain_relevance };

std::string to_string(Metric m);
/// "Clarity", "Comprehensiveness", "Domain-relevance".
std::string display_name(Metric m);
/// Accepts either spelling, any case, '-' / ' ' / '_' interchangeable.
/// Throws InvalidConfig.
Metric metric_from_string(const std::string& s);
/// Comma-separated list; throws InvalidConfig on an empty list.
std::vector<Metric> parse_metric_list(const std::string& s);

struct JudgeScore {
  std::string item_id;
  Metric metric = Metric::clarity;
  int value = 1;
  std::string judge_id;

  friend bool operator==(const JudgeScore&, const JudgeScore&) = default;
};

nlohmann::json judge_score_to_json(const JudgeScore& s, const std::string& method);
JudgeScore judge_score_from_json(const nlohmann::json& j);

/// One score per requested metric from "Metric: n" lines; other lines are
/// ignored. Throws ScoreOutOfRange or ParseFailure naming the metric.
std::vector<JudgeScore> parse_judge_response(const std::string& response, const std::vector<Metric>& metrics,
                                             const std::string& item_id, const std::string& judge_id);

std::vector<JudgeScore> judge(const AnnotationRecord& annotation, const std::vector<Metric>& metrics,
                              const std::string& context, Gateway& gateway, const TemplateStore& templates,
                              const std::string& judge_id, const std::string& backend_id = {});

struct MetricComparison {
  std::string label;  // display name, or "Overall"
  double mean_t = 0.0;
  double mean_d = 0.0;
  double p_t_gt_d = 0.0;
  double p_d_gt_t = 0.0;
  double p_tie = 0.0;
};

struct JudgeReport {
  std::string method_t;
  std::string method_d;
  std::vector<Metric> metrics;
  std::vector<MetricComparison> per_metric;
  MetricComparison overall;
  std::size_t items = 0;
};

/// Per (item, metric): mean over judges. Per item: overall = mean over
/// metrics. P(T>D) counts strict wins only. Throws UnpairedItem /
/// MetricMismatch / EmptyInput.
JudgeReport aggregate(const std::vector<JudgeScore>& scores_t, const std::vector<JudgeScore>& scores_d,
                      const std::string& method_t = "T", const std::string& method_d = "D");

nlohmann::json report_to_json(const JudgeReport& report);

/// Metric | Method | Mean | P(T>D) (%), two decimals, the P column on the
/// first row of each block.
std::string render_table(const JudgeReport& report);

struct JudgeSetup {
  int judge_count = 2;
  /// Backend per judge; judge i uses backends[i % size] (empty: default).
  std::vector<std::string> backends;
};

struct Comparison {
  std::vector<JudgeScore> scores_t;
  std::vector<JudgeScore> scores_d;
  JudgeReport report;
};

/// Items pair by series_id (falling back to id). Throws UnpairedItem before
/// any backend call when the item sets differ.
Comparison compare_methods(const std::vector<AnnotationRecord>& annotations_t,
                           const std::vector<AnnotationRecord>& annotations_d, const std::vector<Metric>& metrics,
                           const JudgeSetup& setup, Gateway& gateway, const TemplateStore& templates,
                           const std::string& method_t = "T", const std::string& method_d = "D");

/// Raw scores as JSONL rows {"method", "item_id", "metric", "value", "judge_id"}.
void write_raw_scores(const std::filesystem::path& path, const Comparison& comparison);
/// Reads raw scores back and splits them by method.
std::pair<std::vector<JudgeScore>, std::vector<JudgeScore>> read_raw_scores(const std::filesystem::path& path,
                                                                             const std::string& method_t,
                                                                             const std::string& method_d);

}  // namespace tessa
