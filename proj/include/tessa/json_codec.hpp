#pragma once

// JSON wire formats shared by the CLI and the pipeline.

#include "tessa/dataset_io.hpp"
#include "tessa/ts_features.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tessa {

nlohmann::json series_to_json(const TimeSeries& series);
/// Throws Error(SchemaViolation | ChannelMismatch | NonFiniteValue); `where`
/// prefixes messages (e.g. "series.jsonl:12").
TimeSeries series_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json annotation_to_json(const AnnotationRecord& record);
AnnotationRecord annotation_from_json(const nlohmann::json& j, const std::string& where);

/// {"series_id", "features": [{"name", "channel", "payload"}], "skipped": [...]}
/// with payload one of {"scalar": x}, {"sequence": [..]}, {"spectrum": [[f, a], ..]}.
nlohmann::json feature_set_to_json(const FeatureSet& set);
FeatureSet feature_set_from_json(const nlohmann::json& j);

/// One compact JSON object per line, '\n' terminated. Throws IoError.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace tessa
