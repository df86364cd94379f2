#include "tessa/rl_selection.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"

#include <algorithm>

namespace tessa {

namespace {

class LoggingScorer : public BatchScorer {
public:
  LoggingScorer(BatchScorer& inner, std::vector<ScorerCall>& log) : inner_(inner), log_(log) {}

  std::map<std::string, double> score(std::span<const std::string> features,
                                      std::span<const AnnotationRecord> batch) override {
    ScorerCall call;
    call.features.assign(features.begin(), features.end());
    for (const auto& a : batch) call.annotation_ids.push_back(a.id);
    log_.push_back(std::move(call));
    return inner_.score(features, batch);
  }
  ScoreSource source() const override { return inner_.source(); }

private:
  BatchScorer& inner_;
  std::vector<ScorerCall>& log_;
};

bool episode_level(Errc code) {
  return code == Errc::ParseFailure || code == Errc::NegativeScore || code == Errc::ScoreOutOfRange ||
         code == Errc::EmptyScores;
}

}  // namespace

std::vector<double> TableScorer::score(std::span<const std::string> selected) {
  std::vector<double> out;
  for (const auto& name : selected) {
    auto it = table_.find(name);
    out.push_back(it == table_.end() ? 0.0 : it->second);
  }
  return out;
}

CorpusScorer::CorpusScorer(BatchScorer& scorer, std::vector<AnnotationRecord> annotations,
                           std::vector<std::string> candidates, SelectionConfig config)
    : scorer_(scorer), annotations_(std::move(annotations)), candidates_(std::move(candidates)), config_(config) {
  config_.normalize = true;
}

const ImportanceScores& CorpusScorer::scores() {
  if (!cache_) {
    LoggingScorer logging(scorer_, calls_);
    cache_ = score_features_offline(candidates_, annotations_, config_, logging);
    cache_->source = ScoreSource::rl_env;
  }
  return *cache_;
}

std::vector<double> CorpusScorer::score(std::span<const std::string> selected) {
  const auto& table = scores().scores;
  std::vector<double> out;
  for (const auto& name : selected) {
    auto it = table.find(name);
    out.push_back(it == table.end() ? 0.0 : it->second);
  }
  return out;
}

void TrainingLog::write_jsonl(const std::filesystem::path& path) const {
  std::vector<nlohmann::json> rows;
  for (const auto& e : episodes) {
    nlohmann::json row = {{"episode", e.episode}, {"selected", e.selected}, {"reward", e.reward}};
    if (e.error) row["error"] = *e.error;
    rows.push_back(std::move(row));
  }
  tessa::write_jsonl(path, rows);
}

Eigen::VectorXd selection_log_prob_gradient(const Eigen::VectorXd& q, std::span<const std::size_t> action) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(q.size());
  std::vector<bool> remaining(static_cast<std::size_t>(q.size()), true);
  for (std::size_t pick : action) {
    double max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      if (remaining[static_cast<std::size_t>(i)]) max = std::max(max, q(i));
    }
    double total = 0.0;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      if (!remaining[static_cast<std::size_t>(i)]) continue;
      p(i) = std::exp(q(i) - max);
      total += p(i);
    }
    grad -= p / total;
    grad(static_cast<Eigen::Index>(pick)) += 1.0;
    remaining[pick] = false;
  }
  return grad;
}

Eigen::VectorXd entropy_gradient(const Eigen::VectorXd& q) {
  const Eigen::ArrayXd z = q.array() - q.maxCoeff();
  const Eigen::ArrayXd log_p = z - std::log(z.exp().sum());
  const Eigen::ArrayXd p = log_p.exp();
  const double h = -(p * log_p).sum();
  return (-p * (log_p + h)).matrix();
}

TrainingLog train_policy(PolicyNetwork& net, std::span<const TokenizedFeatureName> candidates, EpisodeScorer& scorer,
                         const SelectionConfig& config, int episodes, Rng& rng) {
  if (episodes < 1) throw Error(Errc::PreconditionFailed, "train_policy needs at least one episode");
  if (candidates.empty()) throw Error(Errc::EmptyInput, "no candidate features");
  if (config.k < 1) throw Error(Errc::InvalidConfig, "k must be >= 1");
  net.remember_candidates(candidates);

  TrainingLog log;
  std::vector<NameForward> forwards(candidates.size());
  Eigen::VectorXd q(static_cast<Eigen::Index>(candidates.size()));
  for (int episode = 0; episode < episodes; ++episode) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      forwards[i] = net.forward(candidates[i]);
      q(static_cast<Eigen::Index>(i)) = forwards[i].q_value;
    }
    const auto action = select_action(q, config.k, SelectionMode::sample, rng);
    EpisodeRecord record;
    record.episode = episode;
    for (std::size_t a : action) record.selected.push_back(candidates[a].name);

    try {
      const auto scores = scorer.score(record.selected);
      record.reward = compute_reward(scores, config.tau);
    } catch (const Error& e) {
      if (!episode_level(e.code())) throw;
      record.error = e.what();
      log.episodes.push_back(std::move(record));
      continue;
    }

    const double advantage = net.has_baseline() ? record.reward - net.baseline() : 0.0;
    net.update_baseline(record.reward);
    const Eigen::VectorXd dq =
        advantage * selection_log_prob_gradient(q, action) + net.config().entropy_weight * entropy_gradient(q);
    HeadParams grad = HeadParams::zeros(net.backbone().hidden_dim());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double w = dq(static_cast<Eigen::Index>(i));
      if (w == 0.0) continue;
      HeadParams g = net.backward(forwards[i]);
      g *= w;
      grad += g;
    }
    net.ascend(grad);
    log.episodes.push_back(std::move(record));
  }
  return log;
}

TrainingLog incremental_update(PolicyNetwork& net, std::span<const TokenizedFeatureName> new_candidates,
                               EpisodeScorer& new_scorer, const SelectionConfig& config, int episodes, Rng& rng) {
  if (episodes < 0) throw Error(Errc::PreconditionFailed, "episodes must be >= 0");
  if (episodes == 0) return {};
  std::vector<TokenizedFeatureName> all;
  for (const auto& name : net.known_candidates()) all.push_back(tokenize_feature_name(net.backbone(), name));
  for (const auto& c : new_candidates) {
    if (std::none_of(all.begin(), all.end(), [&](const auto& x) { return x.name == c.name; })) all.push_back(c);
  }
  return train_policy(net, all, new_scorer, config, episodes, rng);
}

std::vector<std::string> greedy_selection(const PolicyNetwork& net, std::span<const TokenizedFeatureName> candidates,
                                          int k) {
  Rng unused(0);
  const auto picks = select_action(net.q_values(candidates), k, SelectionMode::greedy, unused);
  std::vector<std::string> out;
  for (std::size_t i : picks) out.push_back(candidates[i].name);
  return out;
}

std::vector<TokenizedFeatureName> tokenize_all(const Backbone& backbone, const std::vector<std::string>& names) {
  std::vector<TokenizedFeatureName> out;
  for (const auto& n : names) out.push_back(tokenize_feature_name(backbone, n));
  return out;
}

}  // namespace tessa
