#include "oracles.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/random.hpp"
#include "tessa/ts_features.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tessa;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd sines(int L, std::vector<std::pair<double, double>> parts) {
  VectorXd x = VectorXd::Zero(L);
  for (int t = 0; t < L; ++t)
    for (auto [amp, period] : parts) x(t) += amp * std::sin(2.0 * std::numbers::pi * t / period);
  return x;
}

}  // namespace

TEST_CASE("decompose: constant series") {
  const VectorXd x = VectorXd::Constant(24, 5.0);
  const auto d = decompose(x, 4);
  CHECK((d.trend.array() - 5.0).abs().maxCoeff() < 1e-9);
  CHECK(d.seasonal.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(d.residual.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("decompose: repeating pattern") {
  VectorXd x(24);
  for (int t = 0; t < 24; ++t) x(t) = 1.0 + t % 4;
  const auto d = decompose(x, 4);
  const double pattern[] = {-1.5, -0.5, 0.5, 1.5};
  for (int t = 0; t < 24; ++t) {
    CHECK(d.seasonal(t) == doctest::Approx(pattern[t % 4]).epsilon(1e-9));
    CHECK(d.trend(t) == doctest::Approx(2.5).epsilon(1e-9));
  }
}

TEST_CASE("decompose: linear ramp") {
  VectorXd x(24);
  for (int t = 0; t < 24; ++t) x(t) = t;
  const auto d = decompose(x, 4);
  CHECK(d.seasonal.cwiseAbs().maxCoeff() < 0.2);
  CHECK(d.residual.cwiseAbs().maxCoeff() < 0.2);
  CHECK((x - d.trend - d.seasonal - d.residual).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decompose: preconditions and float instantiation") {
  CHECK_THROWS_AS(decompose(VectorXd::Ones(7), 4), Error);
  CHECK_THROWS_AS(decompose(VectorXd::Ones(8), 1), Error);
  try {
    decompose(VectorXd::Ones(7), 4);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SeriesTooShort);
  }
  try {
    decompose(VectorXd::Ones(8), 1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PeriodTooSmall);
  }
  Eigen::VectorXf xf(12);
  for (int t = 0; t < 12; ++t) xf(t) = static_cast<float>(t % 3);
  const auto df = decompose(xf, 3);
  CHECK((xf - df.trend - df.seasonal - df.residual).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("decompose: additivity on random series, odd and even periods") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int period = 2 + static_cast<int>(rng.below(11));
    const int L = 2 * period + static_cast<int>(rng.below(100));
    VectorXd x(L);
    for (int t = 0; t < L; ++t) x(t) = rng.normal(0.0, 10.0) + 0.3 * t;
    const auto d = decompose(x, period);
    CHECK((x - d.trend - d.seasonal - d.residual).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(d.seasonal.head(period).sum()) < 1e-6);
  }
}

TEST_CASE("moving_average, lag, rolling_stats") {
  CHECK(moving_average(vec({1, 2, 3, 4}), 3).isApprox(vec({2, 3})));
  CHECK(moving_average(vec({2, 4, 6}), 3).isApprox(vec({4})));
  const VectorXd x = vec({3, 1, 4, 1, 5});
  CHECK(moving_average(x, 1) == x);
  CHECK_THROWS_AS(moving_average(x, 6), Error);

  CHECK(lag(vec({1, 2, 3}), 1) == vec({1, 2}));
  CHECK(lag(vec({1, 2, 3}), 0) == vec({1, 2, 3}));
  try {
    lag(vec({7}), 1);
    FAIL("expected LagTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LagTooLarge);
  }

  const auto r = rolling_stats(vec({1, 3, 2, 5}), 2);
  CHECK(r.mean.isApprox(vec({2, 2.5, 3.5})));
  CHECK(r.max == vec({3, 3, 5}));
  CHECK(r.min == vec({1, 2, 2}));
  const auto one = rolling_stats(x, 1);
  CHECK(one.mean == x);
  CHECK(one.max == x);
  CHECK(one.min == x);
  const auto flat = rolling_stats(vec({4, 4, 4}), 3);
  CHECK(flat.mean(0) == 4);
  CHECK(flat.max(0) == 4);
  CHECK(flat.min(0) == 4);
}

TEST_CASE("fourier: agrees with direct DFT") {
  SUBCASE("single sine") {
    const VectorXd x = sines(120, {{1.0, 12.0}});
    const auto peaks = fourier_top_frequencies(x, 1);
    const auto ref = oracle::dft_top(to_std(x), 1);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0].frequency == ref[0].first);
    CHECK(peaks[0].frequency == doctest::Approx(1.0 / 12));
    CHECK(std::abs(peaks[0].amplitude - ref[0].second) < 1e-9);
    CHECK(std::abs(peaks[0].amplitude - 1.0) < 1e-9);
  }
  SUBCASE("two sines, amplitude order") {
    const VectorXd x = sines(120, {{2.0, 10.0}, {1.0, 4.0}});
    const auto peaks = fourier_top_frequencies(x, 2);
    const auto ref = oracle::dft_top(to_std(x), 2);
    REQUIRE(peaks.size() == 2);
    for (int i = 0; i < 2; ++i) {
      CHECK(peaks[i].frequency == ref[i].first);
      CHECK(std::abs(peaks[i].amplitude - ref[i].second) < 1e-9);
    }
    CHECK(peaks[0].frequency == doctest::Approx(0.1));
    CHECK(peaks[1].frequency == doctest::Approx(0.25));
  }
  SUBCASE("constant") { CHECK(fourier_top_frequencies(VectorXd::Constant(64, 3.0), 3).empty()); }
  SUBCASE("Nyquist bin") {
    VectorXd x(16);
    for (int t = 0; t < 16; ++t) x(t) = t % 2 ? -1.0 : 1.0;
    const auto peaks = fourier_top_frequencies(x, 1);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0].frequency == 0.5);
    CHECK(peaks[0].amplitude == doctest::Approx(1.0));
  }
  SUBCASE("random series: Parseval bound and every bin") {
    Rng rng(9);
    for (int L : {7, 16, 33, 100}) {
      VectorXd x(L);
      for (int t = 0; t < L; ++t) x(t) = rng.normal();
      const auto peaks = fourier_top_frequencies(x, L);
      const auto ref = oracle::dft_spectrum(to_std(x));
      double energy = 0;
      for (const auto& p : peaks) {
        energy += p.amplitude * p.amplitude * L / 2.0;
        const auto k = static_cast<std::size_t>(std::lround(p.frequency * L)) - 1;
        CHECK(std::abs(p.amplitude - ref[k].second) < 1e-9);
      }
      CHECK(energy <= (x.array() - x.mean()).square().sum() + 1e-6);
    }
  }
  CHECK_THROWS_AS(fourier_top_frequencies(vec({1, 2, 3}), 1), Error);
}

TEST_CASE("pearson") {
  CHECK(pearson(vec({1, 2, 3}), vec({2, 4, 6})) == doctest::Approx(1.0));
  CHECK(pearson(vec({1, 2, 3}), vec({6, 4, 2})) == doctest::Approx(-1.0));
  CHECK(pearson(vec({1, 2, 3, 4}), vec({1, 3, 2, 4})) == doctest::Approx(0.8));
  try {
    pearson(vec({1, 2}), vec({1, 2, 3}));
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LengthMismatch);
  }
  try {
    pearson(vec({1, 1, 1}), vec({1, 2, 3}));
    FAIL("expected ZeroVariance");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroVariance);
  }
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a(i) = rng.normal();
      b(i) = a(i) + rng.normal();
    }
    CHECK(std::abs(pearson(a, b) - oracle::pearson(to_std(a), to_std(b))) < 1e-12);
    CHECK(pearson(-2.0 * a, b) == doctest::Approx(-pearson(a, b)));
  }
}

TEST_CASE("mutual information") {
  CHECK(mutual_information(vec({0, 0, 1, 1}), vec({0, 0, 1, 1}), 2) == doctest::Approx(std::log(2.0)));
  CHECK(mutual_information(vec({0, 0, 1, 1}), vec({0, 1, 0, 1}), 2) == doctest::Approx(0.0));
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(100));
    const int bins = 2 + static_cast<int>(rng.below(8));
    VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.normal();
      b(i) = std::sin(a(i)) + 0.5 * rng.normal();
    }
    const double mi = mutual_information(a, b, bins);
    CHECK(std::abs(mi - oracle::mutual_information(to_std(a), to_std(b), bins)) < 1e-12);
    CHECK(std::abs(mi - mutual_information(b, a, bins)) < 1e-12);
    CHECK(std::abs(mutual_information(a, a, bins) - oracle::entropy(to_std(a), bins)) < 1e-9);
  }
  CHECK_THROWS_AS(mutual_information(vec({1, 2}), vec({1, 2, 3}), 2), Error);
}

TEST_CASE("canonical correlation") {
  CHECK(canonical_correlation(vec({1, 2, 3}), vec({6, 4, 2}), 1) == doctest::Approx(1.0));
  const VectorXd a = vec({1, 2, 3, 4, 5});
  CHECK(canonical_correlation(a, a, 1) == doctest::Approx(1.0));
  CHECK(std::abs(canonical_correlation(a, (3.0 * a.array() + 1.0).matrix(), 2) - 1.0) < 1e-9);
  try {
    canonical_correlation(a, a, 5);
    FAIL("expected EmbedDimTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmbedDimTooLarge);
  }
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x(40), y(40);
    for (int i = 0; i < 40; ++i) {
      x(i) = rng.normal();
      y(i) = (i ? 0.6 * x(i - 1) : 0.0) + rng.normal();
    }
    for (int d : {1, 2, 3}) {
      CHECK(std::abs(canonical_correlation(x, y, d) - oracle::canonical_correlation(to_std(x), to_std(y), d)) < 1e-9);
    }
  }
}

TEST_CASE("extract_all feature counts") {
  TimeSeries s;
  s.id = "uni";
  s.channels = {"x"};
  s.values = sines(120, {{1.0, 12.0}});
  ExtractionConfig cfg = ExtractionConfig::defaults_for(Frequency::monthly);
  FeatureSet fs = extract_all(s, cfg);
  CHECK(fs.features.size() == 7);
  CHECK(fs.skipped.empty());
  CHECK(extract_all(s, cfg) == fs);

  TimeSeries m;
  m.id = "stock";
  m.channels = {"open", "high", "low", "close"};
  m.values.resize(120, 4);
  Rng rng(2);
  for (int t = 0; t < 120; ++t)
    for (int c = 0; c < 4; ++c) m.values(t, c) = rng.normal() + 0.1 * t * c;
  fs = extract_all(m, ExtractionConfig::defaults_for(Frequency::daily));
  CHECK(fs.features.size() == 46);
  int inter = 0;
  for (const auto& f : fs.features) inter += is_inter_variable(f.name);
  CHECK(inter == 18);

  TimeSeries flat = m;
  flat.id = "flat";
  flat.values.col(1).setConstant(2.0);
  fs = extract_all(flat, ExtractionConfig::defaults_for(Frequency::daily));
  CHECK(fs.features.size() + fs.skipped.size() == 46);
  CHECK(fs.skipped.size() == 6);
  for (const auto& sk : fs.skipped) CHECK(sk.name != FeatureName::mutual_information);

  cfg.rolling_extrema = true;
  CHECK(extract_all(s, cfg).features.size() == 9);
  CHECK_THROWS_AS(ExtractionConfig::defaults_for(Frequency::other), Error);
}

TEST_CASE("feature set JSON round trip") {
  TimeSeries m;
  m.id = "pair";
  m.channels = {"a", "b"};
  m.values.resize(30, 2);
  for (int t = 0; t < 30; ++t) {
    m.values(t, 0) = std::sin(t * 0.3);
    m.values(t, 1) = std::cos(t * 0.2) + 0.01 * t;
  }
  const FeatureSet fs = extract_all(m, ExtractionConfig::defaults_for(Frequency::daily));
  const auto j = feature_set_to_json(fs);
  CHECK(feature_set_from_json(nlohmann::json::parse(j.dump())) == fs);
  CHECK(feature_name_from_string("trend") == FeatureName::trend);
  CHECK_THROWS_AS(feature_name_from_string("volatility"), Error);
}
