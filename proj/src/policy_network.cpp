#include "tessa/policy_network.hpp"

#include "tessa/error.hpp"
#include "tessa/random.hpp"
#include "tessa/text_util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace tessa {

namespace {

const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words = {
      "trend",      "seasonality", "seasonal",  "residual",   "moving",     "average",   "lag",
      "rolling",    "mean",        "max",       "min",        "fourier",    "frequency", "pearson",
      "correlation", "mutual",     "information", "canonical", "support",    "resistance", "level",
      "reversal",   "spike",       "volatility", "cycle",     "peak",       "drop",      "growth",
      "decline",    "upward",      "downward",  "pattern",    "noise",      "stable",    "fluctuation",
      "fluctuations", "periodic",  "random",    "rise",       "fall",       "daily",     "weekly",
      "monthly",    "channel",     "breakout",  "momentum",   "plateau",    "shift",     "anomaly",
  };
  return words;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, sigma);
  }
  return m;
}

void append_bytes(std::string& out, const Eigen::MatrixXd& m) {
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(Errc::InvalidConfig, "checkpoint matrix has " + std::to_string(data.size()) + " values, expected " +
                                         std::to_string(rows * cols));
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

nlohmann::json params_to_json(const HeadParams& p) {
  return {{"wq", matrix_to_json(p.wq)}, {"wk", matrix_to_json(p.wk)}, {"wv", matrix_to_json(p.wv)}, {"wo", matrix_to_json(p.wo)}};
}

HeadParams params_from_json(const nlohmann::json& j) {
  return {matrix_from_json(j.at("wq")), matrix_from_json(j.at("wk")), matrix_from_json(j.at("wv")),
          matrix_from_json(j.at("wo"))};
}

constexpr double kNormEps = 1e-5;

void row_softmax(Eigen::MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s.row(i) = (s.row(i).array() - s.row(i).maxCoeff()).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

std::string VocabHead::parameter_bytes() const {
  std::string out;
  append_bytes(out, weights_);
  return out;
}

HashBackbone::HashBackbone(std::uint64_t seed, Eigen::Index hidden_dim, double logit_scale)
    : seed_(seed), hidden_(hidden_dim), logit_scale_(logit_scale) {
  if (hidden_dim < 2) throw Error(Errc::InvalidConfig, "hidden_dim must be >= 2");
  if (!(logit_scale > 0)) throw Error(Errc::InvalidConfig, "logit_scale must be positive");
  words_ = word_list();
  for (std::size_t i = 0; i < words_.size(); ++i) word_ids_.emplace(words_[i], static_cast<int>(256 + i));
  Rng embed_rng(derive_seed(seed, 1));
  embedding_ = gaussian(vocab_size(), hidden_, 1.0, embed_rng);
  Rng proj_rng(derive_seed(seed, 2));
  projection_ = gaussian(hidden_, hidden_, 1.0 / std::sqrt(static_cast<double>(hidden_)), proj_rng);
}

std::string HashBackbone::id() const {
  return "hash-backbone/v1/seed=" + std::to_string(seed_) + "/h=" + std::to_string(hidden_) +
         "/scale=" + format_number(logit_scale_);
}

std::shared_ptr<HashBackbone> HashBackbone::from_id(const std::string& id) {
  unsigned long long seed = 0;
  long hidden = 0;
  double scale = 0.0;
  if (std::sscanf(id.c_str(), "hash-backbone/v1/seed=%llu/h=%ld/scale=%lf", &seed, &hidden, &scale) == 3 && hidden > 0 &&
      scale > 0) {
    auto backbone = std::make_shared<HashBackbone>(seed, hidden, scale);
    if (backbone->id() == id) return backbone;
  }
  throw Error(Errc::InvalidConfig, "unknown backbone id '" + id + "'");
}

std::vector<int> HashBackbone::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (!std::isalnum(c)) {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view word = text.substr(i, j - i);
    if (auto it = word_ids_.find(word); it != word_ids_.end()) {
      out.push_back(it->second);
    } else {
      for (char ch : word) out.push_back(static_cast<unsigned char>(ch));
    }
    i = j;
  }
  return out;
}

std::string HashBackbone::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || t >= vocab_size()) throw Error(Errc::UnknownToken, "token id " + std::to_string(t));
    if (t < 256) {
      out.push_back(static_cast<char>(t));
    } else {
      out += words_[static_cast<std::size_t>(t - 256)];
    }
  }
  return out;
}

Eigen::MatrixXd HashBackbone::encode(std::span<const int> tokens) const {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  Eigen::MatrixXd x(T, hidden_);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= vocab_size()) throw Error(Errc::UnknownToken, "token id " + std::to_string(tok));
    x.row(t) = embedding_.row(tok);
    for (Eigen::Index i = 0; i < hidden_; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(hidden_));
      x(t, i) += i % 2 == 0 ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
    }
  }
  return (x * projection_).array().tanh();
}

std::string HashBackbone::parameter_bytes() const {
  std::string out = id();
  append_bytes(out, embedding_);
  append_bytes(out, projection_);
  return out;
}

std::shared_ptr<const VocabHead> HashBackbone::make_vocab_head() const {
  Rng rng(derive_seed(seed_, 3));
  return std::make_shared<const VocabHead>(
      gaussian(vocab_size(), hidden_, logit_scale_ / static_cast<double>(hidden_), rng));
}

TokenizedFeatureName tokenize_feature_name(const Backbone& backbone, const std::string& name) {
  const std::string normalized = normalize_name(name);
  if (normalized.empty()) throw Error(Errc::InvalidConfig, "feature name is empty");
  auto tokens = backbone.tokenize(normalized);
  if (tokens.empty()) throw Error(Errc::InvalidConfig, "feature name '" + normalized + "' produced no tokens");
  if (backbone.detokenize(tokens) != normalized) {
    throw Error(Errc::InvalidConfig, "feature name '" + normalized + "' does not round-trip through the tokenizer");
  }
  return {normalized, std::move(tokens)};
}

PolicyNetwork::PolicyNetwork(std::shared_ptr<const Backbone> backbone, std::shared_ptr<const VocabHead> vocab_head,
                             PolicyConfig config)
    : backbone_(std::move(backbone)), vocab_head_(std::move(vocab_head)), config_(config) {
  const Eigen::Index H = backbone_->hidden_dim();
  if (config_.heads < 1 || H % config_.heads != 0) {
    throw Error(Errc::InvalidConfig, "head count " + std::to_string(config_.heads) + " must divide hidden width " +
                                         std::to_string(H));
  }
  if (vocab_head_->weights().cols() != H || vocab_head_->vocab_size() != backbone_->vocab_size()) {
    throw Error(Errc::InvalidConfig, "vocab head shape does not match the backbone");
  }
  if (!(config_.learning_rate > 0)) throw Error(Errc::InvalidConfig, "learning rate must be positive");
  Rng rng(config_.init_seed);
  const double sigma = config_.init_scale / std::sqrt(static_cast<double>(H));
  head_.wq = gaussian(H, H, sigma, rng);
  head_.wk = gaussian(H, H, sigma, rng);
  head_.wv = gaussian(H, H, sigma, rng);
  head_.wo = gaussian(H, H, sigma, rng);
}

NameForward PolicyNetwork::forward(const TokenizedFeatureName& name) const {
  if (name.tokens.empty()) throw Error(Errc::InvalidConfig, "feature name '" + name.name + "' has no tokens");
  NameForward f;
  f.x = backbone_->encode(name.tokens);
  const Eigen::Index T = f.x.rows();
  const Eigen::Index H = f.x.cols();
  const Eigen::Index d = H / config_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  f.u.resize(T, H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int tok = name.tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= vocab_head_->vocab_size()) throw Error(Errc::UnknownToken, "token id " + std::to_string(tok));
    f.u.row(t) = vocab_head_->weights().row(tok);
  }

  f.concat.resize(T, H);
  for (int h = 0; h < config_.heads; ++h) {
    const Eigen::Index c0 = h * d;
    Eigen::MatrixXd q = f.x * head_.wq.middleCols(c0, d);
    Eigen::MatrixXd k = f.x * head_.wk.middleCols(c0, d);
    Eigen::MatrixXd v = f.x * head_.wv.middleCols(c0, d);
    Eigen::MatrixXd a = scale * q * k.transpose();
    row_softmax(a);
    f.concat.middleCols(c0, d) = a * v;
    f.q.push_back(std::move(q));
    f.k.push_back(std::move(k));
    f.v.push_back(std::move(v));
    f.attn.push_back(std::move(a));
  }
  const Eigen::MatrixXd pre = f.concat * head_.wo;
  f.normed.resize(T, H);
  f.inv_std.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mean = pre.row(t).mean();
    const double var = (pre.row(t).array() - mean).square().mean();
    f.inv_std(t) = 1.0 / std::sqrt(var + kNormEps);
    f.normed.row(t) = (pre.row(t).array() - mean) * f.inv_std(t);
  }
  f.q_value = f.u.cwiseProduct(f.normed).sum() / static_cast<double>(T);
  return f;
}

HeadParams PolicyNetwork::backward(const NameForward& f) const {
  const Eigen::Index T = f.x.rows();
  const Eigen::Index H = f.x.cols();
  const Eigen::Index d = H / config_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  HeadParams g = HeadParams::zeros(H);
  const Eigen::MatrixXd d_normed = f.u / static_cast<double>(T);
  Eigen::MatrixXd d_out(T, H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mean_d = d_normed.row(t).mean();
    const double mean_dy = d_normed.row(t).dot(f.normed.row(t)) / static_cast<double>(H);
    d_out.row(t) = f.inv_std(t) * (d_normed.row(t).array() - mean_d - f.normed.row(t).array() * mean_dy);
  }
  g.wo = f.concat.transpose() * d_out;
  const Eigen::MatrixXd d_concat = d_out * head_.wo.transpose();
  for (int h = 0; h < config_.heads; ++h) {
    const Eigen::Index c0 = h * d;
    const auto hi = static_cast<std::size_t>(h);
    const Eigen::MatrixXd d_head = d_concat.middleCols(c0, d);
    const Eigen::MatrixXd& a = f.attn[hi];
    const Eigen::MatrixXd d_a = d_head * f.v[hi].transpose();
    const Eigen::MatrixXd d_v = a.transpose() * d_head;
    const Eigen::VectorXd row_dot = d_a.cwiseProduct(a).rowwise().sum();
    const Eigen::MatrixXd d_s = a.cwiseProduct(d_a.colwise() - row_dot);
    const Eigen::MatrixXd d_q = scale * d_s * f.k[hi];
    const Eigen::MatrixXd d_k = scale * d_s.transpose() * f.q[hi];
    g.wq.middleCols(c0, d) = f.x.transpose() * d_q;
    g.wk.middleCols(c0, d) = f.x.transpose() * d_k;
    g.wv.middleCols(c0, d) = f.x.transpose() * d_v;
  }
  return g;
}

Eigen::VectorXd PolicyNetwork::q_values(std::span<const TokenizedFeatureName> names) const {
  if (names.empty()) throw Error(Errc::EmptyInput, "no feature names to score");
  Eigen::VectorXd q(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) q(static_cast<Eigen::Index>(i)) = forward(names[i]).q_value;
  return q;
}

void PolicyNetwork::ascend(const HeadParams& gradient) {
  HeadParams step = gradient;
  step *= config_.learning_rate;
  head_ += step;
  ++steps_;
}

void PolicyNetwork::update_baseline(double reward) {
  reward_sum_ += reward;
  ++reward_count_;
}

void PolicyNetwork::remember_candidates(std::span<const TokenizedFeatureName> names) {
  for (const auto& n : names) {
    if (std::find(known_.begin(), known_.end(), n.name) == known_.end()) known_.push_back(n.name);
  }
}

std::string PolicyNetwork::head_parameter_bytes() const {
  std::string out;
  append_bytes(out, head_.wq);
  append_bytes(out, head_.wk);
  append_bytes(out, head_.wv);
  append_bytes(out, head_.wo);
  return out;
}

nlohmann::json PolicyNetwork::checkpoint() const {
  return {
      {"version", 1},
      {"backbone", backbone_->id()},
      {"config",
       {{"heads", config_.heads},
        {"learning_rate", config_.learning_rate},
        {"init_scale", config_.init_scale},
        {"init_seed", config_.init_seed},
        {"entropy_weight", config_.entropy_weight}}},
      {"step_count", steps_},
      {"reward_sum", reward_sum_},
      {"reward_count", reward_count_},
      {"candidates", known_},
      {"head", params_to_json(head_)},
  };
}

PolicyNetwork PolicyNetwork::from_checkpoint(const nlohmann::json& j, std::shared_ptr<const Backbone> backbone,
                                             std::shared_ptr<const VocabHead> vocab_head) {
  try {
    if (j.at("version").get<int>() != 1) throw Error(Errc::InvalidConfig, "unsupported checkpoint version");
    if (j.at("backbone").get<std::string>() != backbone->id()) {
      throw Error(Errc::InvalidConfig, "checkpoint was trained on backbone '" + j.at("backbone").get<std::string>() +
                                           "', not '" + backbone->id() + "'");
    }
    const auto& c = j.at("config");
    PolicyConfig config;
    config.heads = c.at("heads").get<int>();
    config.learning_rate = c.at("learning_rate").get<double>();
    config.init_scale = c.at("init_scale").get<double>();
    config.init_seed = c.at("init_seed").get<std::uint64_t>();
    config.entropy_weight = c.at("entropy_weight").get<double>();
    PolicyNetwork net(std::move(backbone), std::move(vocab_head), config);
    net.steps_ = j.at("step_count").get<long long>();
    net.reward_sum_ = j.at("reward_sum").get<double>();
    net.reward_count_ = j.at("reward_count").get<long long>();
    net.known_ = j.at("candidates").get<std::vector<std::string>>();
    net.head_ = params_from_json(j.at("head"));
    const Eigen::Index H = net.backbone_->hidden_dim();
    for (const Eigen::MatrixXd* m : {&net.head_.wq, &net.head_.wk, &net.head_.wv, &net.head_.wo}) {
      if (m->rows() != H || m->cols() != H) throw Error(Errc::InvalidConfig, "checkpoint head shape mismatch");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace tessa
