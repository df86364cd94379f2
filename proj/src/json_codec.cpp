#include "tessa/json_codec.hpp"

#include "tessa/error.hpp"

namespace tessa {

using nlohmann::json;

namespace {

json channel_to_json(const ChannelRef& ch) {
  if (const auto* single = std::get_if<std::string>(&ch)) return *single;
  const auto& pair = std::get<std::pair<std::string, std::string>>(ch);
  return json::array({pair.first, pair.second});
}

ChannelRef channel_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array() && j.size() == 2 && j[0].is_string() && j[1].is_string()) {
    return std::make_pair(j[0].get<std::string>(), j[1].get<std::string>());
  }
  throw Error(Errc::SchemaViolation, "feature channel must be a string or a pair of strings");
}

json payload_to_json(const FeaturePayload& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return {{"scalar", v}};
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          return {{"sequence", v}};
        } else {
          json peaks = json::array();
          for (const auto& peak : v.peaks) peaks.push_back(json::array({peak.frequency, peak.amplitude}));
          return {{"spectrum", peaks}};
        }
      },
      p);
}

FeaturePayload payload_from_json(const json& j) {
  if (!j.is_object() || j.size() != 1) throw Error(Errc::SchemaViolation, "feature payload must have exactly one variant key");
  if (auto it = j.find("scalar"); it != j.end()) return it->get<double>();
  if (auto it = j.find("sequence"); it != j.end()) return it->get<std::vector<double>>();
  if (auto it = j.find("spectrum"); it != j.end()) {
    Spectrum s;
    for (const auto& pair : *it) s.peaks.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    return s;
  }
  throw Error(Errc::SchemaViolation, "unknown feature payload variant");
}

}  // namespace

json feature_set_to_json(const FeatureSet& set) {
  json features = json::array();
  for (const auto& f : set.features) {
    features.push_back({{"name", to_string(f.name)}, {"channel", channel_to_json(f.channel)}, {"payload", payload_to_json(f.payload)}});
  }
  json skipped = json::array();
  for (const auto& s : set.skipped) {
    skipped.push_back({{"name", to_string(s.name)}, {"channel", channel_to_json(s.channel)}, {"reason", s.reason}});
  }
  return {{"series_id", set.series_id}, {"features", features}, {"skipped", skipped}};
}

FeatureSet feature_set_from_json(const json& j) {
  FeatureSet set;
  try {
    set.series_id = j.at("series_id").get<std::string>();
    for (const auto& f : j.at("features")) {
      set.features.push_back({feature_name_from_string(f.at("name").get<std::string>()), channel_from_json(f.at("channel")),
                              payload_from_json(f.at("payload"))});
    }
    if (auto it = j.find("skipped"); it != j.end()) {
      for (const auto& s : *it) {
        set.skipped.push_back({feature_name_from_string(s.at("name").get<std::string>()), channel_from_json(s.at("channel")),
                               s.at("reason").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("feature set: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, std::string("feature set: ") + e.what());
  }
  return set;
}

}  // namespace tessa
