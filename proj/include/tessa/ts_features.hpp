#pragma once

// Time-series feature toolbox. The numeric kernels are templates over any
// Eigen vector expression and return plain column vectors of the same
// scalar; extract_all (below) instantiates them for double.

#include "tessa/dataset_io.hpp"
#include "tessa/error.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tessa {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Decomposition {
  Vec<Scalar> trend;
  Vec<Scalar> seasonal;
  Vec<Scalar> residual;
};

template <typename Scalar>
struct RollingStats {
  Vec<Scalar> mean;
  Vec<Scalar> max;
  Vec<Scalar> min;
};

template <typename Scalar>
struct SpectralPeak {
  Scalar frequency;  // cycles per step, k / L
  Scalar amplitude;

  friend bool operator==(const SpectralPeak&, const SpectralPeak&) = default;
};

namespace detail {

template <typename Derived>
Vec<typename Derived::Scalar> as_vec(const Eigen::MatrixBase<Derived>& x) {
  EIGEN_STATIC_ASSERT_VECTOR_ONLY(Derived);
  return x;
}

// Least-squares line through (index, value) pairs, evaluated at `at`.
template <typename Scalar>
Scalar line_fit_eval(const Vec<Scalar>& values, Eigen::Index first, Eigen::Index count, Scalar at) {
  if (count == 1) return values(first);
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (Eigen::Index i = first; i < first + count; ++i) {
    const Scalar x = static_cast<Scalar>(i);
    sx += x;
    sy += values(i);
    sxx += x * x;
    sxy += x * values(i);
  }
  const Scalar n = static_cast<Scalar>(count);
  const Scalar denom = n * sxx - sx * sx;
  const Scalar slope = (n * sxy - sx * sy) / denom;
  const Scalar intercept = (sy - slope * sx) / n;
  return intercept + slope * at;
}

// Centered sum of squares at or below rounding level of the raw values.
template <typename Scalar>
bool is_flat(Scalar centered_sum_sq, const Vec<Scalar>& raw) {
  const Scalar scale = raw.size() ? raw.cwiseAbs().maxCoeff() : Scalar(0);
  const Scalar noise = Scalar(16) * std::numeric_limits<Scalar>::epsilon() * scale;
  return centered_sum_sq <= static_cast<Scalar>(raw.size()) * noise * noise;
}

}  // namespace detail

/// Classical additive decomposition: centered moving-average trend (2xP
/// average for even P), per-phase means of the detrended series for the
/// seasonal part (centered to zero mean per period), residual = rest.
/// Trend values where the centered window does not fit are extrapolated
/// linearly from the nearest `period` computed values.
template <typename Derived>
Decomposition<typename Derived::Scalar> decompose(const Eigen::MatrixBase<Derived>& series, Eigen::Index period) {
  using Scalar = typename Derived::Scalar;
  const Vec<Scalar> x = detail::as_vec(series);
  const Eigen::Index L = x.size();
  if (period < 2) throw Error(Errc::PeriodTooSmall, "period must be >= 2, got " + std::to_string(period));
  if (L < 2 * period) {
    throw Error(Errc::SeriesTooShort,
                "decomposition needs length >= 2*period (" + std::to_string(2 * period) + "), got " + std::to_string(L));
  }

  Decomposition<Scalar> out;
  out.trend.setZero(L);
  const Eigen::Index half = period / 2;
  const bool even = period % 2 == 0;
  const Eigen::Index first = half;
  const Eigen::Index last = L - 1 - half;  // inclusive
  for (Eigen::Index t = first; t <= last; ++t) {
    Scalar sum;
    if (even) {
      sum = x.segment(t - half + 1, period - 1).sum() + Scalar(0.5) * (x(t - half) + x(t + half));
    } else {
      sum = x.segment(t - half, period).sum();
    }
    out.trend(t) = sum / static_cast<Scalar>(period);
  }
  const Eigen::Index interior = last - first + 1;
  const Eigen::Index fit = std::min(period, interior);
  for (Eigen::Index t = 0; t < first; ++t) {
    out.trend(t) = detail::line_fit_eval(out.trend, first, fit, static_cast<Scalar>(t));
  }
  for (Eigen::Index t = last + 1; t < L; ++t) {
    out.trend(t) = detail::line_fit_eval(out.trend, last - fit + 1, fit, static_cast<Scalar>(t));
  }

  const Vec<Scalar> detrended = x - out.trend;
  Vec<Scalar> phase_mean = Vec<Scalar>::Zero(period);
  Eigen::VectorXi phase_count = Eigen::VectorXi::Zero(period);
  for (Eigen::Index t = 0; t < L; ++t) {
    phase_mean(t % period) += detrended(t);
    ++phase_count(t % period);
  }
  for (Eigen::Index p = 0; p < period; ++p) phase_mean(p) /= static_cast<Scalar>(phase_count(p));
  phase_mean.array() -= phase_mean.mean();

  out.seasonal.resize(L);
  for (Eigen::Index t = 0; t < L; ++t) out.seasonal(t) = phase_mean(t % period);
  out.residual = x - out.trend - out.seasonal;
  return out;
}

/// Entry i is the mean of series[i .. i+window-1].
template <typename Derived>
Vec<typename Derived::Scalar> moving_average(const Eigen::MatrixBase<Derived>& series, Eigen::Index window) {
  using Scalar = typename Derived::Scalar;
  const Vec<Scalar> x = detail::as_vec(series);
  const Eigen::Index L = x.size();
  if (window < 1 || window > L) {
    throw Error(Errc::WindowTooLarge, "window " + std::to_string(window) + " not in [1, " + std::to_string(L) + "]");
  }
  Vec<Scalar> out(L - window + 1);
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = x.segment(i, window).mean();
  return out;
}

/// output[i] = series[i], i < L - lag: the predictor aligned with series[i + lag].
template <typename Derived>
Vec<typename Derived::Scalar> lag(const Eigen::MatrixBase<Derived>& series, Eigen::Index lag_steps) {
  const auto L = series.size();
  if (lag_steps < 0 || lag_steps >= L) {
    throw Error(Errc::LagTooLarge, "lag " + std::to_string(lag_steps) + " not in [0, " + std::to_string(L) + ")");
  }
  return detail::as_vec(series).head(L - lag_steps);
}

template <typename Derived>
RollingStats<typename Derived::Scalar> rolling_stats(const Eigen::MatrixBase<Derived>& series, Eigen::Index window) {
  using Scalar = typename Derived::Scalar;
  const Vec<Scalar> x = detail::as_vec(series);
  const Eigen::Index L = x.size();
  if (window < 1 || window > L) {
    throw Error(Errc::WindowTooLarge, "window " + std::to_string(window) + " not in [1, " + std::to_string(L) + "]");
  }
  const Eigen::Index n = L - window + 1;
  RollingStats<Scalar> out{Vec<Scalar>(n), Vec<Scalar>(n), Vec<Scalar>(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto w = x.segment(i, window);
    out.mean(i) = w.mean();
    out.max(i) = w.maxCoeff();
    out.min(i) = w.minCoeff();
  }
  return out;
}

/// Amplitudes below this are treated as numerical noise and not reported.
inline constexpr double kSpectralFloor = 1e-9;

/// Up to `m` strongest bins k = 1..floor(L/2), frequency k/L, amplitude
/// 2|X_k|/L (|X_k|/L for the Nyquist bin), by descending amplitude; ties
/// go to the lower frequency.
template <typename Derived>
std::vector<SpectralPeak<typename Derived::Scalar>> fourier_top_frequencies(const Eigen::MatrixBase<Derived>& series,
                                                                             Eigen::Index m) {
  using Scalar = typename Derived::Scalar;
  const Vec<Scalar> x = detail::as_vec(series);
  const Eigen::Index L = x.size();
  if (L < 4) throw Error(Errc::SeriesTooShort, "spectrum needs at least 4 points, got " + std::to_string(L));
  if (m < 1) throw Error(Errc::InvalidConfig, "fourier_top_m must be >= 1");

  std::vector<Scalar> input(x.data(), x.data() + L);
  std::vector<std::complex<Scalar>> spectrum;
  Eigen::FFT<Scalar> fft;
  fft.fwd(spectrum, input);

  std::vector<SpectralPeak<Scalar>> peaks;
  for (Eigen::Index k = 1; k <= L / 2; ++k) {
    const bool nyquist = 2 * k == L;
    const Scalar amp = (nyquist ? Scalar(1) : Scalar(2)) * std::abs(spectrum[static_cast<std::size_t>(k)]) / static_cast<Scalar>(L);
    if (amp <= static_cast<Scalar>(kSpectralFloor)) continue;
    peaks.push_back({static_cast<Scalar>(k) / static_cast<Scalar>(L), amp});
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const auto& a, const auto& b) { return a.amplitude > b.amplitude; });
  if (static_cast<Eigen::Index>(peaks.size()) > m) peaks.resize(static_cast<std::size_t>(m));
  return peaks;
}

/// Sample Pearson correlation, clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw Error(Errc::SeriesTooShort, "pearson needs at least 2 points");
  const Vec<Scalar> ca = detail::as_vec(a).array() - a.mean();
  const Vec<Scalar> cb = detail::as_vec(b).array() - b.mean();
  const Scalar saa = ca.squaredNorm();
  const Scalar sbb = cb.squaredNorm();
  if (detail::is_flat(saa, detail::as_vec(a))) {
    throw Error(Errc::ZeroVariance, "first sequence is constant");
  }
  if (detail::is_flat(sbb, detail::as_vec(b))) {
    throw Error(Errc::ZeroVariance, "second sequence is constant");
  }
  const Scalar r = ca.dot(cb) / std::sqrt(saa * sbb);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

/// Equal-width bin index per element over [min, max]; a constant sequence
/// lands entirely in bin 0.
template <typename Derived>
std::vector<int> equal_width_bins(const Eigen::MatrixBase<Derived>& x, int bins) {
  using Scalar = typename Derived::Scalar;
  const Scalar lo = x.minCoeff();
  const Scalar hi = x.maxCoeff();
  std::vector<int> out(static_cast<std::size_t>(x.size()), 0);
  if (!(hi > lo)) return out;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    int b = static_cast<int>(std::floor((x(i) - lo) / (hi - lo) * static_cast<Scalar>(bins)));
    out[static_cast<std::size_t>(i)] = std::clamp(b, 0, bins - 1);
  }
  return out;
}

/// Mutual information (nats) of the joint equal-width histogram.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mutual_information(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                                             int bins) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw Error(Errc::SeriesTooShort, "mutual information needs at least 2 points");
  if (bins < 2) throw Error(Errc::InvalidConfig, "bins must be >= 2");
  const auto ia = equal_width_bins(a, bins);
  const auto ib = equal_width_bins(b, bins);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> joint =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(bins, bins);
  for (std::size_t i = 0; i < ia.size(); ++i) joint(ia[i], ib[i]) += Scalar(1);
  joint /= static_cast<Scalar>(ia.size());
  const Vec<Scalar> pa = joint.rowwise().sum();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pb = joint.colwise().sum();
  Scalar mi = 0;
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) {
      const Scalar p = joint(i, j);
      if (p > 0) mi += p * std::log(p / (pa(i) * pb(j)));
    }
  }
  return std::max(mi, Scalar(0));
}

/// Rows t = [x_t, ..., x_{t+dim-1}], t = 0..L-dim.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> delay_embedding(
    const Eigen::MatrixBase<Derived>& x, Eigen::Index dim) {
  const Eigen::Index rows = x.size() - dim + 1;
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> E(rows, dim);
  for (Eigen::Index t = 0; t < rows; ++t) E.row(t) = x.segment(t, dim).transpose();
  return E;
}

namespace detail {

// Orthonormal basis of the column space of a centered matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> column_basis(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centered) {
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(centered, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const Scalar tol = std::max<Scalar>(sv.size() ? sv(0) : Scalar(0), Scalar(1)) *
                     static_cast<Scalar>(std::max(centered.rows(), centered.cols())) *
                     std::numeric_limits<Scalar>::epsilon() * Scalar(16);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace detail

/// First canonical correlation between the delay embeddings of a and b.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar canonical_correlation(const Eigen::MatrixBase<DerivedA>& a,
                                                const Eigen::MatrixBase<DerivedB>& b, Eigen::Index embed_dim) {
  using Scalar = typename DerivedA::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (embed_dim < 1 || a.size() - embed_dim + 1 < 2) {
    throw Error(Errc::EmbedDimTooLarge,
                "embed_dim " + std::to_string(embed_dim) + " leaves fewer than 2 rows for length " + std::to_string(a.size()));
  }
  if (embed_dim == 1) return std::abs(pearson(a, b));

  Mat ea = delay_embedding(a, embed_dim);
  Mat eb = delay_embedding(b, embed_dim);
  ea.rowwise() -= ea.colwise().mean();
  eb.rowwise() -= eb.colwise().mean();
  const Mat ua = detail::column_basis<Scalar>(ea);
  const Mat ub = detail::column_basis<Scalar>(eb);
  if (ua.cols() == 0) throw Error(Errc::ZeroVariance, "first sequence is constant");
  if (ub.cols() == 0) throw Error(Errc::ZeroVariance, "second sequence is constant");
  const Mat cross = ua.transpose() * ub;
  Eigen::JacobiSVD<Mat> svd(cross);
  return std::clamp(svd.singularValues()(0), Scalar(0), Scalar(1));
}

// ---------------------------------------------------------------------------
// Feature sets

enum class FeatureName {
  trend,
  seasonality,
  residual,
  moving_average,
  lag,
  rolling_mean,
  rolling_max,
  rolling_min,
  fourier_frequency,
  pearson_correlation,
  mutual_information,
  canonical_correlation,
};

std::string to_string(FeatureName n);
/// Throws InvalidConfig for names outside the registered vocabulary.
FeatureName feature_name_from_string(const std::string& s);
const std::vector<std::string>& feature_vocabulary();
bool is_inter_variable(FeatureName n);

using ChannelRef = std::variant<std::string, std::pair<std::string, std::string>>;

struct Spectrum {
  std::vector<SpectralPeak<double>> peaks;
  friend bool operator==(const Spectrum&, const Spectrum&) = default;
};

using FeaturePayload = std::variant<double, std::vector<double>, Spectrum>;

struct TsFeature {
  FeatureName name;
  ChannelRef channel;
  FeaturePayload payload;

  /// "trend[price]" / "pearson_correlation[price,volume]".
  std::string key() const;

  friend bool operator==(const TsFeature&, const TsFeature&) = default;
};

struct SkippedFeature {
  FeatureName name;
  ChannelRef channel;
  std::string reason;

  friend bool operator==(const SkippedFeature&, const SkippedFeature&) = default;
};

struct FeatureSet {
  std::string series_id;
  std::vector<TsFeature> features;
  std::vector<SkippedFeature> skipped;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

struct ExtractionConfig {
  int seasonal_period = 7;
  int ma_window = 7;
  int rolling_window = 7;
  int lag = 1;
  int fourier_top_m = 3;
  int mi_bins = 0;  // 0 selects ceil(sqrt(L))
  int cca_embed_dim = 2;
  bool rolling_extrema = false;  // also emit rolling_max / rolling_min

  /// Defaults keyed off the sampling frequency; `other` needs an explicit period.
  static ExtractionConfig defaults_for(Frequency f, std::optional<int> seasonal_period = std::nullopt);
};

/// Throws InvalidConfig when a field is out of range for a series of length L.
void validate_config(const ExtractionConfig& config, Eigen::Index length);

/// Intra-variable features per channel, then inter-variable features per
/// unordered channel pair (i < j). Features whose preconditions fail on
/// this data are listed in `skipped` instead of aborting the extraction.
FeatureSet extract_all(const TimeSeries& series, const ExtractionConfig& config);

}  // namespace tessa
