#include "tessa/ts_features.hpp"

#include <array>

namespace tessa {

namespace {

constexpr std::array<std::pair<FeatureName, const char*>, 12> kNames = {{
    {FeatureName::trend, "trend"},
    {FeatureName::seasonality, "seasonality"},
    {FeatureName::residual, "residual"},
    {FeatureName::moving_average, "moving_average"},
    {FeatureName::lag, "lag"},
    {FeatureName::rolling_mean, "rolling_mean"},
    {FeatureName::rolling_max, "rolling_max"},
    {FeatureName::rolling_min, "rolling_min"},
    {FeatureName::fourier_frequency, "fourier_frequency"},
    {FeatureName::pearson_correlation, "pearson_correlation"},
    {FeatureName::mutual_information, "mutual_information"},
    {FeatureName::canonical_correlation, "canonical_correlation"},
}};

}  // namespace

std::string to_string(FeatureName n) {
  for (const auto& [name, text] : kNames) {
    if (name == n) return text;
  }
  return "unknown";
}

FeatureName feature_name_from_string(const std::string& s) {
  for (const auto& [name, text] : kNames) {
    if (s == text) return name;
  }
  throw Error(Errc::InvalidConfig, "'" + s + "' is not a registered time-series feature");
}

const std::vector<std::string>& feature_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (const auto& entry : kNames) v.emplace_back(entry.second);
    return v;
  }();
  return vocab;
}

bool is_inter_variable(FeatureName n) {
  return n == FeatureName::pearson_correlation || n == FeatureName::mutual_information ||
         n == FeatureName::canonical_correlation;
}

std::string TsFeature::key() const {
  std::string k = to_string(name) + "[";
  if (const auto* single = std::get_if<std::string>(&channel)) {
    k += *single;
  } else {
    const auto& pair = std::get<std::pair<std::string, std::string>>(channel);
    k += pair.first + "," + pair.second;
  }
  return k + "]";
}

ExtractionConfig ExtractionConfig::defaults_for(Frequency f, std::optional<int> seasonal_period) {
  ExtractionConfig c;
  int period = 0;
  switch (f) {
    case Frequency::daily: period = 7; break;
    case Frequency::weekly: period = 52; break;
    case Frequency::monthly: period = 12; break;
    case Frequency::other: break;
  }
  if (seasonal_period) period = *seasonal_period;
  if (period == 0) throw Error(Errc::InvalidConfig, "frequency 'other' requires an explicit seasonal_period");
  c.seasonal_period = period;
  c.ma_window = period;
  c.rolling_window = period;
  return c;
}

void validate_config(const ExtractionConfig& c, Eigen::Index length) {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
  if (c.seasonal_period < 2) fail("seasonal_period must be >= 2");
  if (c.ma_window < 1 || c.rolling_window < 1 || c.lag < 1 || c.fourier_top_m < 1 || c.mi_bins < 0 ||
      c.cca_embed_dim < 1) {
    fail("extraction parameters must be >= 1");
  }
  if (c.ma_window > length) fail("ma_window exceeds series length");
  if (c.rolling_window > length) fail("rolling_window exceeds series length");
}

namespace {

template <typename Fn>
void try_add(FeatureSet& out, FeatureName name, const ChannelRef& channel, Fn&& compute) {
  try {
    out.features.push_back({name, channel, compute()});
  } catch (const Error& e) {
    out.skipped.push_back({name, channel, e.what()});
  }
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

FeatureSet extract_all(const TimeSeries& series, const ExtractionConfig& config) {
  if (auto report = validate_series(series); !report.empty()) {
    throw Error(Errc::InvariantViolation, "series '" + series.id + "': " + report.front().message);
  }
  const Eigen::Index L = series.length();
  validate_config(config, L);
  const int bins = config.mi_bins > 0 ? config.mi_bins : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(L))));

  FeatureSet out;
  out.series_id = series.id;
  for (Eigen::Index c = 0; c < series.channel_count(); ++c) {
    const Eigen::VectorXd x = series.values.col(c);
    const ChannelRef ch = series.channels[static_cast<std::size_t>(c)];

    std::optional<Decomposition<double>> parts;
    std::string decomposition_error;
    try {
      parts = decompose(x, config.seasonal_period);
    } catch (const Error& e) {
      decomposition_error = e.what();
    }
    for (FeatureName n : {FeatureName::trend, FeatureName::seasonality, FeatureName::residual}) {
      if (!parts) {
        out.skipped.push_back({n, ch, decomposition_error});
        continue;
      }
      const Eigen::VectorXd& v =
          n == FeatureName::trend ? parts->trend : (n == FeatureName::seasonality ? parts->seasonal : parts->residual);
      out.features.push_back({n, ch, to_std(v)});
    }
    try_add(out, FeatureName::moving_average, ch, [&] { return FeaturePayload(to_std(moving_average(x, config.ma_window))); });
    try_add(out, FeatureName::lag, ch, [&] { return FeaturePayload(to_std(lag(x, config.lag))); });

    std::optional<RollingStats<double>> rolling;
    try {
      rolling = rolling_stats(x, config.rolling_window);
      out.features.push_back({FeatureName::rolling_mean, ch, to_std(rolling->mean)});
      if (config.rolling_extrema) {
        out.features.push_back({FeatureName::rolling_max, ch, to_std(rolling->max)});
        out.features.push_back({FeatureName::rolling_min, ch, to_std(rolling->min)});
      }
    } catch (const Error& e) {
      out.skipped.push_back({FeatureName::rolling_mean, ch, e.what()});
    }
    try_add(out, FeatureName::fourier_frequency, ch,
            [&] { return FeaturePayload(Spectrum{fourier_top_frequencies(x, config.fourier_top_m)}); });
  }

  for (Eigen::Index i = 0; i < series.channel_count(); ++i) {
    for (Eigen::Index j = i + 1; j < series.channel_count(); ++j) {
      const ChannelRef pair = std::make_pair(series.channels[static_cast<std::size_t>(i)],
                                             series.channels[static_cast<std::size_t>(j)]);
      const auto a = series.values.col(i);
      const auto b = series.values.col(j);
      try_add(out, FeatureName::pearson_correlation, pair, [&] { return FeaturePayload(pearson(a, b)); });
      try_add(out, FeatureName::mutual_information, pair, [&] { return FeaturePayload(mutual_information(a, b, bins)); });
      try_add(out, FeatureName::canonical_correlation, pair,
              [&] { return FeaturePayload(canonical_correlation(a, b, config.cca_embed_dim)); });
    }
  }
  return out;
}

}  // namespace tessa
