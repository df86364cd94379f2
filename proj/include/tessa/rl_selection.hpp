#pragma once

#include "tessa/feature_select.hpp"
#include "tessa/policy_network.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tessa {

/// Normalized [0, 1] scores for the features selected in one episode.
class EpisodeScorer {
public:
  virtual ~EpisodeScorer() = default;
  virtual std::vector<double> score(std::span<const std::string> selected) = 0;
};

/// Fixed lookup; names absent from the table score 0.
class TableScorer : public EpisodeScorer {
public:
  explicit TableScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
  std::vector<double> score(std::span<const std::string> selected) override;

private:
  std::map<std::string, double> table_;
};

struct ScorerCall {
  std::vector<std::string> features;
  std::vector<std::string> annotation_ids;
};

/// Environment backed by an annotation corpus: the first episode scores
/// every candidate once through the batched offline scorer (normalized by
/// the max); later episodes read the cache. Every backend batch is logged.
class CorpusScorer : public EpisodeScorer {
public:
  CorpusScorer(BatchScorer& scorer, std::vector<AnnotationRecord> annotations, std::vector<std::string> candidates,
               SelectionConfig config);
  std::vector<double> score(std::span<const std::string> selected) override;

  const ImportanceScores& scores();
  const std::vector<ScorerCall>& call_log() const { return calls_; }

private:
  BatchScorer& scorer_;
  std::vector<AnnotationRecord> annotations_;
  std::vector<std::string> candidates_;
  SelectionConfig config_;
  std::optional<ImportanceScores> cache_;
  std::vector<ScorerCall> calls_;
};

struct EpisodeRecord {
  int episode = 0;
  std::vector<std::string> selected;
  double reward = 0.0;
  std::optional<std::string> error;  // set when the scorer aborted the episode
};

struct TrainingLog {
  std::vector<EpisodeRecord> episodes;
  void write_jsonl(const std::filesystem::path& path) const;
};

/// d log P(action) / d q for an ordered draw without replacement:
/// sum over draws j of (onehot(a_j) - softmax over the remaining set).
Eigen::VectorXd selection_log_prob_gradient(const Eigen::VectorXd& q, std::span<const std::size_t> action);

/// d H(softmax(q)) / d q.
Eigen::VectorXd entropy_gradient(const Eigen::VectorXd& q);

/// REINFORCE on the attention head: per episode sample k names, score
/// them, reward, one ascent step along (r - baseline) * grad log P plus
/// entropy_weight * grad H.
/// Throws PreconditionFailed for episodes < 1, EmptyInput for no candidates.
TrainingLog train_policy(PolicyNetwork& net, std::span<const TokenizedFeatureName> candidates, EpisodeScorer& scorer,
                         const SelectionConfig& config, int episodes, Rng& rng);

/// Continues training over known_candidates() + new_candidates; `new_scorer`
/// must only consult new annotations. Zero episodes leaves `net` untouched.
TrainingLog incremental_update(PolicyNetwork& net, std::span<const TokenizedFeatureName> new_candidates,
                               EpisodeScorer& new_scorer, const SelectionConfig& config, int episodes, Rng& rng);

/// Greedy top-k names under the current policy.
std::vector<std::string> greedy_selection(const PolicyNetwork& net, std::span<const TokenizedFeatureName> candidates,
                                          int k);

std::vector<TokenizedFeatureName> tokenize_all(const Backbone& backbone, const std::vector<std::string>& names);

}  // namespace tessa
