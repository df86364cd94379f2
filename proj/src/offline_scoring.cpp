#include "tessa/error.hpp"
#include "tessa/feature_select.hpp"
#include "tessa/text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tessa {

std::string to_string(ScoreSource s) {
  switch (s) {
    case ScoreSource::offline_llm: return "offline_llm";
    case ScoreSource::mock: return "mock";
    case ScoreSource::rl_env: return "rl_env";
  }
  return "offline_llm";
}

std::map<std::string, double> parse_score_map(const std::string& response, std::span<const std::string> features) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(trim(response));
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::ParseFailure, "score response is not a JSON object", response);
  }
  if (!j.is_object()) throw Error(Errc::ParseFailure, "score response is not a JSON object", response);
  std::map<std::string, double> out;
  for (const auto& f : features) out[f] = 0.0;
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number()) throw Error(Errc::ParseFailure, "score for '" + name + "' is not a number", response);
    const double v = value.get<double>();
    if (!std::isfinite(v)) throw Error(Errc::ParseFailure, "score for '" + name + "' is not finite", response);
    if (v < 0) throw Error(Errc::NegativeScore, "feature '" + name + "' scored " + format_number(v));
    if (auto it = out.find(name); it != out.end()) it->second = v;
  }
  return out;
}

LlmBatchScorer::LlmBatchScorer(Gateway& gateway, const TemplateStore& templates, TemplateId template_id)
    : gateway_(gateway), templates_(templates), template_id_(template_id) {}

std::map<std::string, double> LlmBatchScorer::score(std::span<const std::string> features,
                                                    std::span<const AnnotationRecord> batch) {
  std::string feature_lines;
  for (const auto& f : features) feature_lines += "- " + f + "\n";
  std::string annotation_lines;
  for (const auto& a : batch) annotation_lines += "- " + a.text + "\n";
  const std::string prompt = render_prompt(templates_.get(template_id_),
                                           {{"features", trim(feature_lines)}, {"annotations", trim(annotation_lines)}});
  return parse_score_map(gateway_.ask(prompt), features);
}

std::map<std::string, double> SubstringMentionScorer::score(std::span<const std::string> features,
                                                            std::span<const AnnotationRecord> batch) {
  std::map<std::string, double> out;
  for (const auto& f : features) {
    std::string needle = f;
    std::replace(needle.begin(), needle.end(), '_', ' ');
    double count = 0;
    for (const auto& a : batch) count += contains_ci(a.text, needle) ? 1.0 : 0.0;
    out[f] = count;
  }
  return out;
}

ImportanceScores normalized(ImportanceScores scores) {
  double max = 0.0;
  for (const auto& [name, s] : scores.scores) max = std::max(max, s);
  if (max > 0) {
    for (auto& [name, s] : scores.scores) s /= max;
  }
  return scores;
}

ImportanceScores score_features_offline(const std::vector<std::string>& features,
                                        const std::vector<AnnotationRecord>& annotations, const SelectionConfig& config,
                                        BatchScorer& scorer) {
  if (features.empty()) throw Error(Errc::EmptyInput, "no candidate features to score");
  if (annotations.empty()) throw Error(Errc::EmptyInput, "no annotations to score against");
  if (config.batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");

  ImportanceScores total;
  total.source = scorer.source();
  for (const auto& f : features) total.scores[f] = 0.0;

  const std::span<const AnnotationRecord> all(annotations);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0, index = 0; start < all.size(); start += batch, ++index) {
    const auto chunk = all.subspan(start, std::min(batch, all.size() - start));
    std::map<std::string, double> partial;
    try {
      partial = scorer.score(features, chunk);
    } catch (const Error& e) {
      if (e.code() != Errc::ParseFailure) throw;
      try {
        partial = scorer.score(features, chunk);
      } catch (const Error& again) {
        if (again.code() != Errc::ParseFailure) throw;
        throw Error(Errc::ParseFailure, "batch " + std::to_string(index) + ": " + again.message(), again.detail());
      }
    }
    for (const auto& [name, s] : partial) {
      if (s < 0) throw Error(Errc::NegativeScore, "feature '" + name + "' scored " + format_number(s));
      if (auto it = total.scores.find(name); it != total.scores.end()) it->second += s;
    }
  }
  return config.normalize ? normalized(std::move(total)) : total;
}

std::vector<std::string> select_top_k(const ImportanceScores& scores, int k) {
  if (scores.scores.empty()) throw Error(Errc::EmptyScores, "no scores to select from");
  if (k < 1) throw Error(Errc::InvalidConfig, "k must be >= 1");
  std::vector<std::pair<std::string, double>> ranked(scores.scores.begin(), scores.scores.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k); ++i) out.push_back(ranked[i].first);
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& q) {
  if (q.size() == 0) return q;
  const Eigen::VectorXd e = (q.array() - q.maxCoeff()).exp();
  return e / e.sum();
}

std::vector<std::size_t> select_action(const Eigen::VectorXd& q, int k, SelectionMode mode, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(q.size());
  const std::size_t count = std::min(n, static_cast<std::size_t>(std::max(k, 0)));
  const Eigen::VectorXd p = softmax(q);
  std::vector<std::size_t> out;
  if (mode == SelectionMode::greedy) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q(a) > q(b); });
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
  }
  std::vector<double> weights(p.data(), p.data() + n);
  for (std::size_t draw = 0; draw < count; ++draw) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] <= 0) continue;
      pick = i;  // last positive weight absorbs rounding
      if (u < weights[i]) break;
      u -= weights[i];
    }
    out.push_back(pick);
    weights[pick] = 0.0;
  }
  return out;
}

double compute_reward(std::span<const double> selected_scores, double tau) {
  if (selected_scores.empty()) throw Error(Errc::EmptyScores, "reward needs at least one selected score");
  bool all_meet = true;
  double sum = 0.0;
  for (double s : selected_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(Errc::ScoreOutOfRange, "score " + format_number(s) + " outside [0, 1]");
    all_meet = all_meet && s >= tau;
    sum += s;
  }
  return all_meet ? sum : kPenaltyReward;
}

}  // namespace tessa
