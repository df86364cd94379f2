#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/prompts.hpp"
#include "tessa/random.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace tessa {

enum class ScoreSource { offline_llm, mock, rl_env };

std::string to_string(ScoreSource s);

struct ImportanceScores {
  std::map<std::string, double> scores;
  ScoreSource source = ScoreSource::offline_llm;

  friend bool operator==(const ImportanceScores&, const ImportanceScores&) = default;
};

struct SelectionConfig {
  int k = 3;
  double tau = 0.3;
  int batch_size = 8;
  bool normalize = true;
};

/// Scores every feature against one batch of annotations.
class BatchScorer {
public:
  virtual ~BatchScorer() = default;
  virtual std::map<std::string, double> score(std::span<const std::string> features,
                                              std::span<const AnnotationRecord> batch) = 0;
  virtual ScoreSource source() const = 0;
};

/// Renders p_score_ts / p_score_text and parses a JSON {name: number} reply.
class LlmBatchScorer : public BatchScorer {
public:
  LlmBatchScorer(Gateway& gateway, const TemplateStore& templates, TemplateId template_id);
  std::map<std::string, double> score(std::span<const std::string> features,
                                      std::span<const AnnotationRecord> batch) override;
  ScoreSource source() const override { return ScoreSource::offline_llm; }

private:
  Gateway& gateway_;
  const TemplateStore& templates_;
  TemplateId template_id_;
};

/// Mock scorer: number of annotations in the batch that mention the feature
/// (case-insensitive, '_' read as ' '). Additive over batch partitions.
class SubstringMentionScorer : public BatchScorer {
public:
  std::map<std::string, double> score(std::span<const std::string> features,
                                      std::span<const AnnotationRecord> batch) override;
  ScoreSource source() const override { return ScoreSource::mock; }
};

/// Parses a JSON object of feature -> nonnegative number. Names not in
/// `features` are ignored and missing ones count as 0. Throws ParseFailure
/// or NegativeScore.
std::map<std::string, double> parse_score_map(const std::string& response, std::span<const std::string> features);

/// Splits annotations into ceil(n / batch_size) consecutive batches, scores
/// each, sums per feature, optionally divides by the max. A ParseFailure is
/// retried once per batch before it becomes fatal.
ImportanceScores score_features_offline(const std::vector<std::string>& features,
                                        const std::vector<AnnotationRecord>& annotations, const SelectionConfig& config,
                                        BatchScorer& scorer);

/// Divides every score by the max (no-op when max is 0).
ImportanceScores normalized(ImportanceScores scores);

/// min(k, n) names, score descending, ties by ascending name.
std::vector<std::string> select_top_k(const ImportanceScores& scores, int k);

enum class SelectionMode { greedy, sample };

Eigen::VectorXd softmax(const Eigen::VectorXd& q);

/// Indices of min(k, n) features. Greedy: highest probability first, ties by
/// lower index. Sample: draws without replacement, renormalizing each time;
/// indices are returned in draw order.
std::vector<std::size_t> select_action(const Eigen::VectorXd& q, int k, SelectionMode mode, Rng& rng);

inline constexpr double kPenaltyReward = -0.5;

/// Sum of the scores if every score >= tau, else -0.5.
/// Throws EmptyScores / ScoreOutOfRange for scores outside [0, 1].
double compute_reward(std::span<const double> selected_scores, double tau);

}  // namespace tessa
