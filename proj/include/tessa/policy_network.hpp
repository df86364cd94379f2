#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tessa {

/// Frozen text encoder: token ids -> per-token hidden vectors (T x H).
/// Realizations must be deterministic; their parameters never change.
class Backbone {
public:
  virtual ~Backbone() = default;
  virtual std::string id() const = 0;
  virtual Eigen::Index hidden_dim() const = 0;
  virtual Eigen::Index vocab_size() const = 0;
  virtual std::vector<int> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const int> tokens) const = 0;
  /// Throws UnknownToken for ids outside [0, vocab_size).
  virtual Eigen::MatrixXd encode(std::span<const int> tokens) const = 0;
  /// Serialized parameters, for freeze checks.
  virtual std::string parameter_bytes() const = 0;
};

/// Frozen linear map from hidden vectors to per-token logits (V x H).
class VocabHead {
public:
  explicit VocabHead(Eigen::MatrixXd weights) : weights_(std::move(weights)) {}
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::Index vocab_size() const { return weights_.rows(); }
  std::string parameter_bytes() const;

private:
  Eigen::MatrixXd weights_;
};

/// Test backbone: seeded embedding table + sinusoidal positions, then
/// tanh of a fixed random projection. Vocabulary = 256 byte tokens plus a
/// fixed word list, so every string tokenizes and detokenizes exactly.
class HashBackbone : public Backbone {
public:
  explicit HashBackbone(std::uint64_t seed = 7, Eigen::Index hidden_dim = 32, double logit_scale = 2.0);

  std::string id() const override;
  Eigen::Index hidden_dim() const override { return hidden_; }
  Eigen::Index vocab_size() const override { return static_cast<Eigen::Index>(256 + words_.size()); }
  std::vector<int> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const int> tokens) const override;
  Eigen::MatrixXd encode(std::span<const int> tokens) const override;
  std::string parameter_bytes() const override;

  /// The matching frozen vocab head, seeded from the same seed. Rows have
  /// norm close to logit_scale / sqrt(H), so logits of layer-normed
  /// hidden vectors stay within about +-logit_scale.
  std::shared_ptr<const VocabHead> make_vocab_head() const;
  std::uint64_t seed() const { return seed_; }

  /// Rebuilds the backbone named by id(). Throws InvalidConfig.
  static std::shared_ptr<HashBackbone> from_id(const std::string& id);

private:
  std::uint64_t seed_;
  Eigen::Index hidden_;
  double logit_scale_;
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> word_ids_;
  Eigen::MatrixXd embedding_;   // V x H
  Eigen::MatrixXd projection_;  // H x H
};

struct TokenizedFeatureName {
  std::string name;
  std::vector<int> tokens;
};

/// Normalizes the name, tokenizes it and checks that detokenization
/// round-trips. Throws UnknownToken / InvalidConfig.
TokenizedFeatureName tokenize_feature_name(const Backbone& backbone, const std::string& name);

/// Trainable multi-head self-attention with output projection, followed by
/// a parameter-free layer norm:
/// O = LN(concat_h(softmax(Q_h K_h^T / sqrt(d)) V_h) Wo).
template <typename Scalar>
struct AttentionParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat wq, wk, wv, wo;  // each H x H; head h uses columns [h*d, (h+1)*d)

  static AttentionParams zeros(Eigen::Index hidden) {
    return {Mat::Zero(hidden, hidden), Mat::Zero(hidden, hidden), Mat::Zero(hidden, hidden), Mat::Zero(hidden, hidden)};
  }
  AttentionParams& operator+=(const AttentionParams& o) {
    wq += o.wq;
    wk += o.wk;
    wv += o.wv;
    wo += o.wo;
    return *this;
  }
  AttentionParams& operator*=(Scalar s) {
    wq *= s;
    wk *= s;
    wv *= s;
    wo *= s;
    return *this;
  }
  Scalar squared_norm() const { return wq.squaredNorm() + wk.squaredNorm() + wv.squaredNorm() + wo.squaredNorm(); }
};

using HeadParams = AttentionParams<double>;

/// Per-name forward state kept for backprop.
struct NameForward {
  Eigen::MatrixXd x;       // backbone output, T x H
  Eigen::MatrixXd u;       // vocab-head rows of the name's own tokens, T x H
  std::vector<Eigen::MatrixXd> q, k, v, attn;  // per head
  Eigen::MatrixXd concat;  // T x H
  Eigen::MatrixXd normed;  // O, T x H
  Eigen::VectorXd inv_std; // per row of the pre-norm output
  double q_value = 0.0;
};

struct PolicyConfig {
  int heads = 2;
  double learning_rate = 1e-2;
  double init_scale = 1.0;  // multiplies the default N(0, 1/H) init
  std::uint64_t init_seed = 1;
  double entropy_weight = 0.1;  // bonus on the entropy of softmax(q)
};

/// Frozen backbone -> trainable attention head -> frozen vocab head.
/// q(name) = mean over the name's tokens of that token's own logit.
class PolicyNetwork {
public:
  PolicyNetwork(std::shared_ptr<const Backbone> backbone, std::shared_ptr<const VocabHead> vocab_head,
                PolicyConfig config = {});

  const Backbone& backbone() const { return *backbone_; }
  const VocabHead& vocab_head() const { return *vocab_head_; }
  std::shared_ptr<const Backbone> backbone_ptr() const { return backbone_; }
  std::shared_ptr<const VocabHead> vocab_head_ptr() const { return vocab_head_; }
  const PolicyConfig& config() const { return config_; }

  NameForward forward(const TokenizedFeatureName& name) const;
  /// Gradient of forward(name).q_value with respect to the head parameters.
  HeadParams backward(const NameForward& fwd) const;

  /// Throws EmptyInput for an empty list, UnknownToken for bad ids.
  Eigen::VectorXd q_values(std::span<const TokenizedFeatureName> names) const;

  /// Plain gradient-ascent step: head += learning_rate * gradient.
  void ascend(const HeadParams& gradient);

  const HeadParams& head() const { return head_; }
  HeadParams& mutable_head() { return head_; }
  long long step_count() const { return steps_; }

  /// Mean of every reward seen so far (0 before the first).
  double baseline() const { return reward_count_ ? reward_sum_ / static_cast<double>(reward_count_) : 0.0; }
  bool has_baseline() const { return reward_count_ > 0; }
  void update_baseline(double reward);

  /// Candidate names this network has been trained on, in first-seen order.
  const std::vector<std::string>& known_candidates() const { return known_; }
  void remember_candidates(std::span<const TokenizedFeatureName> names);

  std::string head_parameter_bytes() const;

  nlohmann::json checkpoint() const;
  /// Throws InvalidConfig when the checkpoint names a different backbone.
  static PolicyNetwork from_checkpoint(const nlohmann::json& j, std::shared_ptr<const Backbone> backbone,
                                       std::shared_ptr<const VocabHead> vocab_head);

private:
  std::shared_ptr<const Backbone> backbone_;
  std::shared_ptr<const VocabHead> vocab_head_;
  PolicyConfig config_;
  HeadParams head_;
  long long steps_ = 0;
  double reward_sum_ = 0.0;
  long long reward_count_ = 0;
  std::vector<std::string> known_;
};

}  // namespace tessa
