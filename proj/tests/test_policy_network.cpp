#include "fixtures.hpp"

#include "tessa/policy_network.hpp"
#include "tessa/rl_selection.hpp"

#include <doctest.h>

#include <cmath>

using namespace tessa;
using testing::thrown_code;

namespace {

/// Two-wide hidden space, four tokens; encode returns fixed rows.
class StubBackbone : public Backbone {
public:
  std::string id() const override { return "stub"; }
  Eigen::Index hidden_dim() const override { return 2; }
  Eigen::Index vocab_size() const override { return 4; }
  std::vector<int> tokenize(std::string_view text) const override {
    std::vector<int> out;
    for (char c : text) out.push_back(c - 'a');
    return out;
  }
  std::string detokenize(std::span<const int> tokens) const override {
    std::string out;
    for (int t : tokens) out.push_back(static_cast<char>('a' + t));
    return out;
  }
  Eigen::MatrixXd encode(std::span<const int> tokens) const override {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(tokens.size()), 2);
    for (Eigen::Index t = 0; t < x.rows(); ++t) x.row(t) << 10.0, 0.0;
    return x;
  }
  std::string parameter_bytes() const override { return "stub"; }
};

/// Direct recomputation of q from the head parameters.
double oracle_q(const Backbone& backbone, const VocabHead& vocab, const HeadParams& p, int heads,
                const std::vector<int>& tokens) {
  const Eigen::MatrixXd x = backbone.encode(tokens);
  const int T = static_cast<int>(x.rows());
  const int H = static_cast<int>(x.cols());
  const int d = H / heads;
  Eigen::MatrixXd concat = Eigen::MatrixXd::Zero(T, H);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < T; ++i) {
      std::vector<double> score(T);
      double mx = -1e300;
      for (int j = 0; j < T; ++j) {
        double s = 0;
        for (int c = 0; c < d; ++c) s += x.row(i).dot(p.wq.col(h * d + c)) * x.row(j).dot(p.wk.col(h * d + c));
        score[j] = s / std::sqrt(double(d));
        mx = std::max(mx, score[j]);
      }
      double z = 0;
      for (double& s : score) z += (s = std::exp(s - mx));
      for (int j = 0; j < T; ++j) {
        for (int c = 0; c < d; ++c) concat(i, h * d + c) += score[j] / z * x.row(j).dot(p.wv.col(h * d + c));
      }
    }
  }
  double q = 0;
  for (int t = 0; t < T; ++t) {
    Eigen::RowVectorXd pre = concat.row(t) * p.wo;
    const double mean = pre.mean();
    double var = 0;
    for (int c = 0; c < H; ++c) var += (pre(c) - mean) * (pre(c) - mean) / H;
    for (int c = 0; c < H; ++c) q += (pre(c) - mean) / std::sqrt(var + 1e-5) * vocab.weights()(tokens[t], c);
  }
  return q / T;
}

PolicyNetwork hash_network(std::uint64_t init_seed = 3) {
  auto backbone = std::make_shared<HashBackbone>(7, 8, 2.0);
  PolicyConfig config;
  config.init_seed = init_seed;
  return PolicyNetwork(backbone, backbone->make_vocab_head(), config);
}

}  // namespace

TEST_CASE("q is the mean self-logit of the name's tokens") {
  auto backbone = std::make_shared<StubBackbone>();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(4, 2);
  u.row(0) << 1.0, 0.0;
  u.row(1) << 3.0, 0.0;
  u.row(2) << 0.7, 0.0;
  PolicyNetwork net(backbone, std::make_shared<VocabHead>(u), {.heads = 1});
  auto& head = net.mutable_head();
  head = HeadParams::zeros(2);
  head.wv = Eigen::MatrixXd::Identity(2, 2);
  head.wo = Eigen::MatrixXd::Identity(2, 2);

  const std::vector<TokenizedFeatureName> names = {{"ab", {0, 1}}, {"c", {2}}};
  const Eigen::VectorXd q = net.q_values(names);
  CHECK(q(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(q(1) == doctest::Approx(0.7).epsilon(1e-6));

  CHECK(thrown_code([&] { net.q_values(std::vector<TokenizedFeatureName>{}); }) == Errc::EmptyInput);
  CHECK(thrown_code([&] { net.forward({"bad", {9}}); }) == Errc::UnknownToken);
}

TEST_CASE("forward matches a direct recomputation") {
  const auto net = hash_network();
  for (const std::string name : {"trend", "moving average", "canonical_correlation", "xyz"}) {
    const auto tok = tokenize_feature_name(net.backbone(), name);
    const double expected = oracle_q(net.backbone(), net.vocab_head(), net.head(), net.config().heads, tok.tokens);
    CHECK(net.forward(tok).q_value == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("backward agrees with central differences") {
  auto net = hash_network(5);
  const auto tok = tokenize_feature_name(net.backbone(), "rolling mean");
  const HeadParams grad = net.backward(net.forward(tok));
  const double h = 1e-6;
  double worst = 0;
  auto probe = [&](Eigen::MatrixXd HeadParams::*member, const Eigen::MatrixXd& analytic) {
    for (Eigen::Index i = 0; i < analytic.size(); i += 7) {
      double& w = (net.mutable_head().*member).data()[i];
      const double saved = w;
      w = saved + h;
      const double up = net.forward(tok).q_value;
      w = saved - h;
      const double down = net.forward(tok).q_value;
      w = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic.data()[i]) / std::max(1.0, std::abs(numeric)));
    }
  };
  probe(&HeadParams::wq, grad.wq);
  probe(&HeadParams::wk, grad.wk);
  probe(&HeadParams::wv, grad.wv);
  probe(&HeadParams::wo, grad.wo);
  CHECK(worst < 1e-6);
}

TEST_CASE("tokenizer round-trips feature names") {
  HashBackbone backbone(7, 8, 2.0);
  for (const auto& name : feature_vocabulary()) {
    const auto tok = tokenize_feature_name(backbone, name);
    CHECK(backbone.detokenize(tok.tokens) == tok.name);
  }
  CHECK(tokenize_feature_name(backbone, "  Support   Level ").name == "support level");
  CHECK(thrown_code([&] { tokenize_feature_name(backbone, "   "); }) == Errc::InvalidConfig);
  const std::vector<int> bad = {static_cast<int>(backbone.vocab_size())};
  CHECK(thrown_code([&] { backbone.encode(bad); }) == Errc::UnknownToken);
}

TEST_CASE("backbone identity and determinism") {
  HashBackbone a(7, 8, 2.0);
  HashBackbone b(7, 8, 2.0);
  HashBackbone c(8, 8, 2.0);
  CHECK(a.parameter_bytes() == b.parameter_bytes());
  CHECK(a.parameter_bytes() != c.parameter_bytes());
  CHECK(a.make_vocab_head()->parameter_bytes() == b.make_vocab_head()->parameter_bytes());
  const auto rebuilt = HashBackbone::from_id(a.id());
  CHECK(rebuilt->id() == a.id());
  CHECK(rebuilt->parameter_bytes() == a.parameter_bytes());
  CHECK(thrown_code([] { HashBackbone::from_id("something-else"); }) == Errc::InvalidConfig);
  auto odd = std::make_shared<HashBackbone>(7, 7, 2.0);
  CHECK(thrown_code([&] { PolicyNetwork(odd, odd->make_vocab_head()); }) == Errc::InvalidConfig);
}

TEST_CASE("checkpoint round trip") {
  auto net = hash_network();
  const auto names = tokenize_all(net.backbone(), {"trend", "lag", "residual"});
  net.remember_candidates(names);
  net.update_baseline(1.0);
  net.update_baseline(0.5);
  HeadParams step = net.backward(net.forward(names[0]));
  net.ascend(step);

  const auto j = nlohmann::json::parse(net.checkpoint().dump());
  const auto back = PolicyNetwork::from_checkpoint(j, net.backbone_ptr(), net.vocab_head_ptr());
  CHECK(back.head_parameter_bytes() == net.head_parameter_bytes());
  CHECK(back.q_values(names) == net.q_values(names));
  CHECK(back.baseline() == doctest::Approx(0.75));
  CHECK(back.step_count() == 1);
  CHECK(back.known_candidates() == std::vector<std::string>{"trend", "lag", "residual"});

  auto other = std::make_shared<HashBackbone>(9, 8, 2.0);
  CHECK(thrown_code([&] { PolicyNetwork::from_checkpoint(j, other, other->make_vocab_head()); }) == Errc::InvalidConfig);
}

TEST_CASE("ascent moves only the head") {
  auto net = hash_network();
  const std::string frozen = net.backbone().parameter_bytes() + net.vocab_head().parameter_bytes();
  const std::string before = net.head_parameter_bytes();
  const auto tok = tokenize_feature_name(net.backbone(), "seasonality");
  const double q0 = net.forward(tok).q_value;
  net.ascend(net.backward(net.forward(tok)));
  CHECK(net.head_parameter_bytes() != before);
  CHECK(net.forward(tok).q_value > q0);
  CHECK(net.backbone().parameter_bytes() + net.vocab_head().parameter_bytes() == frozen);
}
