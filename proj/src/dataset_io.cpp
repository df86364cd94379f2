#include "tessa/dataset_io.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/text_util.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

namespace tessa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Frequency f) {
  switch (f) {
    case Frequency::daily: return "daily";
    case Frequency::weekly: return "weekly";
    case Frequency::monthly: return "monthly";
    case Frequency::other: return "other";
  }
  return "other";
}

Frequency frequency_from_string(const std::string& s) {
  const std::string v = to_lower(trim(s));
  if (v == "daily") return Frequency::daily;
  if (v == "weekly") return Frequency::weekly;
  if (v == "monthly") return Frequency::monthly;
  if (v == "other") return Frequency::other;
  throw Error(Errc::SchemaViolation, "unknown frequency '" + s + "'");
}

std::string to_string(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::source_specific: return "source_specific";
    case AnnotationKind::target_specific: return "target_specific";
    case AnnotationKind::decontextualized: return "decontextualized";
    case AnnotationKind::general: return "general";
    case AnnotationKind::feedback: return "feedback";
    case AnnotationKind::ground_truth: return "ground_truth";
  }
  return "general";
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::human: return "human";
    case Provenance::llm: return "llm";
    case Provenance::synthetic: return "synthetic";
  }
  return "human";
}

AnnotationKind annotation_kind_from_string(const std::string& s) {
  static const std::unordered_map<std::string, AnnotationKind> table = {
      {"source_specific", AnnotationKind::source_specific},
      {"target_specific", AnnotationKind::target_specific},
      {"decontextualized", AnnotationKind::decontextualized},
      {"general", AnnotationKind::general},
      {"feedback", AnnotationKind::feedback},
      {"ground_truth", AnnotationKind::ground_truth},
  };
  if (auto it = table.find(s); it != table.end()) return it->second;
  throw Error(Errc::SchemaViolation, "unknown annotation kind '" + s + "'");
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "human") return Provenance::human;
  if (s == "llm") return Provenance::llm;
  if (s == "synthetic") return Provenance::synthetic;
  throw Error(Errc::SchemaViolation, "unknown provenance '" + s + "'");
}

bool operator==(const TimeSeries& a, const TimeSeries& b) {
  return a.id == b.id && a.domain == b.domain && a.frequency == b.frequency && a.channels == b.channels &&
         a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() && a.values == b.values &&
         a.timestamps == b.timestamps;
}

const TimeSeries* Dataset::find_series(const std::string& id) const {
  for (const auto& s : series) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

ValidationReport validate_series(const TimeSeries& series) {
  ValidationReport report;
  const auto L = series.values.rows();
  const auto C = series.values.cols();
  if (series.id.empty()) report.push_back({"id", -1, -1, "id is empty"});
  if (series.channels.empty()) report.push_back({"channels", -1, -1, "at least one channel required"});
  if (static_cast<std::size_t>(C) != series.channels.size()) {
    report.push_back({"values", -1, -1,
                      "value rows have " + std::to_string(C) + " entries but " +
                          std::to_string(series.channels.size()) + " channels are declared"});
  }
  if (L < 1) report.push_back({"values", -1, -1, "series has no rows"});
  for (Eigen::Index t = 0; t < L; ++t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      if (!std::isfinite(series.values(t, c))) {
        report.push_back({"values", t, c,
                          "non-finite value at row " + std::to_string(t) + ", channel " + std::to_string(c)});
      }
    }
  }
  if (series.timestamps) {
    const auto& ts = *series.timestamps;
    if (static_cast<Eigen::Index>(ts.size()) != L) {
      report.push_back({"timestamps", -1, -1,
                        "expected " + std::to_string(L) + " timestamps, got " + std::to_string(ts.size())});
    }
    // ISO-8601 strings with a uniform format order lexicographically.
    for (std::size_t i = 1; i < ts.size(); ++i) {
      if (!(ts[i - 1] < ts[i])) {
        report.push_back({"timestamps", static_cast<long long>(i), -1,
                          "timestamp at index " + std::to_string(i) + " is not after its predecessor"});
        break;
      }
    }
  }
  return report;
}

ValidationReport validate_annotations(const std::vector<AnnotationRecord>& records) {
  ValidationReport report;
  std::unordered_map<std::string, const AnnotationRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto row = static_cast<long long>(i);
    if (r.id.empty()) report.push_back({"id", row, -1, "id is empty"});
    if (trim(r.text).empty()) report.push_back({"text", row, -1, "text is empty after trimming"});
    if (r.kind == AnnotationKind::decontextualized) {
      if (!r.parent_id || r.parent_id->empty()) {
        report.push_back({"parent_id", row, -1, "decontextualized record requires parent_id"});
      } else if (auto it = by_id.find(*r.parent_id);
                 it != by_id.end() && it->second->kind != AnnotationKind::source_specific) {
        report.push_back({"parent_id", row, -1, "parent of a decontextualized record must be source_specific"});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON codecs

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::SchemaViolation, where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_string()) throw Error(Errc::SchemaViolation, where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(Errc::SchemaViolation, where + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

json series_to_json(const TimeSeries& s) {
  json values = json::array();
  for (Eigen::Index t = 0; t < s.values.rows(); ++t) {
    json row = json::array();
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) row.push_back(s.values(t, c));
    values.push_back(std::move(row));
  }
  json j = {{"id", s.id}, {"domain", s.domain}, {"frequency", to_string(s.frequency)}, {"channels", s.channels}};
  if (s.timestamps) j["timestamps"] = *s.timestamps;
  j["values"] = std::move(values);
  return j;
}

TimeSeries series_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::SchemaViolation, where + ": expected a JSON object");
  TimeSeries s;
  s.id = require_string(j, "id", where);
  s.domain = require_string(j, "domain", where);
  try {
    s.frequency = frequency_from_string(require_string(j, "frequency", where));
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, where + ": " + e.what());
  }
  const json& channels = require(j, "channels", where);
  if (!channels.is_array() || channels.empty()) {
    throw Error(Errc::SchemaViolation, where + ": 'channels' must be a nonempty array of strings");
  }
  for (const auto& c : channels) {
    if (!c.is_string()) throw Error(Errc::SchemaViolation, where + ": channel names must be strings");
    s.channels.push_back(c.get<std::string>());
  }
  const json& values = require(j, "values", where);
  if (!values.is_array() || values.empty()) {
    throw Error(Errc::SchemaViolation, where + ": 'values' must be a nonempty array of rows");
  }
  const auto L = static_cast<Eigen::Index>(values.size());
  const auto C = static_cast<Eigen::Index>(s.channels.size());
  s.values.resize(L, C);
  for (Eigen::Index t = 0; t < L; ++t) {
    const json& row = values[static_cast<std::size_t>(t)];
    if (!row.is_array()) throw Error(Errc::SchemaViolation, where + ": value row " + std::to_string(t) + " is not an array");
    if (static_cast<Eigen::Index>(row.size()) != C) {
      throw Error(Errc::ChannelMismatch, where + ": value row " + std::to_string(t) + " has " +
                                             std::to_string(row.size()) + " entries, expected " + std::to_string(C));
    }
    for (Eigen::Index c = 0; c < C; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (v.is_null()) {
        throw Error(Errc::NonFiniteValue,
                    where + ": missing value at row " + std::to_string(t) + ", channel " + std::to_string(c));
      }
      if (!v.is_number()) throw Error(Errc::SchemaViolation, where + ": non-numeric value at row " + std::to_string(t));
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        throw Error(Errc::NonFiniteValue,
                    where + ": non-finite value at row " + std::to_string(t) + ", channel " + std::to_string(c));
      }
      s.values(t, c) = x;
    }
  }
  if (auto it = j.find("timestamps"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(Errc::SchemaViolation, where + ": 'timestamps' must be an array");
    std::vector<std::string> ts;
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(Errc::SchemaViolation, where + ": timestamps must be strings");
      ts.push_back(v.get<std::string>());
    }
    s.timestamps = std::move(ts);
  }
  if (auto report = validate_series(s); !report.empty()) {
    throw Error(Errc::SchemaViolation, where + ": " + report.front().message);
  }
  return s;
}

json annotation_to_json(const AnnotationRecord& r) {
  json j = {{"id", r.id}};
  if (r.series_id) j["series_id"] = *r.series_id;
  j["domain"] = r.domain;
  j["kind"] = to_string(r.kind);
  j["text"] = r.text;
  j["provenance"] = to_string(r.provenance);
  if (r.parent_id) j["parent_id"] = *r.parent_id;
  return j;
}

AnnotationRecord annotation_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::SchemaViolation, where + ": expected a JSON object");
  AnnotationRecord r;
  try {
    r.id = require_string(j, "id", where);
    r.series_id = optional_string(j, "series_id", where);
    r.domain = require_string(j, "domain", where);
    r.kind = annotation_kind_from_string(require_string(j, "kind", where));
    r.text = require_string(j, "text", where);
    r.provenance = provenance_from_string(require_string(j, "provenance", where));
    r.parent_id = optional_string(j, "parent_id", where);
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaViolation && std::string(e.what()).find(where) == std::string::npos) {
      throw Error(Errc::SchemaViolation, where + ": " + e.message());
    }
    throw;
  }
  if (trim(r.text).empty()) throw Error(Errc::SchemaViolation, where + ": annotation text is empty");
  if (r.kind == AnnotationKind::decontextualized && (!r.parent_id || r.parent_id->empty())) {
    throw Error(Errc::SchemaViolation, where + ": decontextualized record requires parent_id");
  }
  return r;
}

namespace {

void make_parent_dirs(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
}

}  // namespace

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  make_parent_dirs(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  for (const auto& row : rows) out << row.dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(fs::exists(path) ? Errc::IoError : Errc::MissingFile, "cannot open '" + path.string() + "'");
  }
  std::vector<json> rows;
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(Errc::SchemaViolation,
                  path.filename().string() + ":" + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
    }
  }
  return rows;
}

void write_json(const fs::path& path, const json& doc) {
  make_parent_dirs(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(fs::exists(path) ? Errc::IoError : Errc::MissingFile, "cannot open '" + path.string() + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaViolation, path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// Files

namespace {

// Streams a JSONL file, calling `fn(json, where)` per nonempty line.
template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(fs::exists(path) ? Errc::IoError : Errc::MissingFile, "cannot open '" + path.string() + "'");
  }
  std::string line;
  long long lineno = 0;
  const std::string name = path.filename().string();
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::SchemaViolation, where + ": invalid JSON (" + e.what() + ")");
    }
    fn(j, where);
  }
}

}  // namespace

std::vector<TimeSeries> load_series(const fs::path& path) {
  std::vector<TimeSeries> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) { out.push_back(series_from_json(j, where)); });
  return out;
}

std::vector<AnnotationRecord> load_annotations(const fs::path& path) {
  std::vector<AnnotationRecord> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) { out.push_back(annotation_from_json(j, where)); });
  return out;
}

void write_series(const fs::path& path, const std::vector<TimeSeries>& series) {
  for (const auto& s : series) {
    if (auto report = validate_series(s); !report.empty()) {
      throw Error(Errc::InvariantViolation, "series '" + s.id + "': " + report.front().message);
    }
  }
  std::vector<json> rows;
  rows.reserve(series.size());
  for (const auto& s : series) rows.push_back(series_to_json(s));
  write_jsonl(path, rows);
}

void write_annotations(const fs::path& path, const std::vector<AnnotationRecord>& records) {
  if (auto report = validate_annotations(records); !report.empty()) {
    const auto& v = report.front();
    throw Error(Errc::InvariantViolation, "record " + std::to_string(v.row) + ": " + v.message);
  }
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(annotation_to_json(r));
  write_jsonl(path, rows);
}

DatasetManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  const std::string where = path.filename().string();
  if (!j.is_object()) throw Error(Errc::SchemaViolation, where + ": manifest must be a JSON object");
  auto integer = [&](const char* key) -> long long {
    const json& v = require(j, key, where);
    if (!v.is_number_integer()) throw Error(Errc::SchemaViolation, where + ": '" + key + "' must be an integer");
    return v.get<long long>();
  };
  DatasetManifest m;
  m.name = require_string(j, "name", where);
  m.domain = require_string(j, "domain", where);
  m.frequency = require_string(j, "frequency", where);
  m.channel_count = integer("channel_count");
  m.timestamp_count = integer("timestamp_count");
  m.sample_count = integer("sample_count");
  const fs::path base = path.parent_path();
  m.series_path = base / require_string(j, "series_path", where);
  if (auto a = optional_string(j, "annotations_path", where)) m.annotations_path = base / *a;
  if (m.channel_count < 1) throw Error(Errc::SchemaViolation, where + ": channel_count must be >= 1");
  if (m.sample_count < 0) throw Error(Errc::SchemaViolation, where + ": sample_count must be >= 0");
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path base = path.parent_path();
  const fs::path abs_base = fs::absolute(base).lexically_normal();
  auto rel = [&](const fs::path& p) {
    if (p.is_relative()) return p.generic_string();
    return p.lexically_normal().lexically_relative(abs_base).generic_string();
  };
  json j = {{"name", m.name},
            {"domain", m.domain},
            {"frequency", m.frequency},
            {"channel_count", m.channel_count},
            {"timestamp_count", m.timestamp_count},
            {"sample_count", m.sample_count},
            {"series_path", rel(m.series_path)}};
  if (m.annotations_path) j["annotations_path"] = rel(*m.annotations_path);
  write_json(path, j);
}

Dataset load_dataset(const DatasetManifest& manifest, const LoadOptions& options) {
  if (!fs::exists(manifest.series_path)) {
    throw Error(Errc::MissingFile, "series file '" + manifest.series_path.string() + "' does not exist");
  }
  if (manifest.annotations_path && !fs::exists(*manifest.annotations_path)) {
    throw Error(Errc::MissingFile, "annotations file '" + manifest.annotations_path->string() + "' does not exist");
  }
  Dataset ds;
  const std::string name = manifest.series_path.filename().string();
  long long lineno = 0;
  long long total_rows = 0;
  std::set<std::string> ids;
  for_each_jsonl(manifest.series_path, [&](const json& j, const std::string& where) {
    ++lineno;
    TimeSeries s = series_from_json(j, where);
    if (s.channel_count() != manifest.channel_count) {
      throw Error(Errc::ChannelMismatch, where + ": series '" + s.id + "' has " + std::to_string(s.channel_count()) +
                                             " channels, manifest declares " + std::to_string(manifest.channel_count));
    }
    if (!ids.insert(s.id).second) throw Error(Errc::SchemaViolation, where + ": duplicate series id '" + s.id + "'");
    total_rows += s.length();
    ds.series.push_back(std::move(s));
  });
  if (options.verify_counts) {
    if (static_cast<long long>(ds.series.size()) != manifest.sample_count) {
      throw Error(Errc::SchemaViolation, name + ": " + std::to_string(ds.series.size()) + " series, manifest declares " +
                                             std::to_string(manifest.sample_count));
    }
    if (total_rows != manifest.timestamp_count) {
      throw Error(Errc::SchemaViolation, name + ": " + std::to_string(total_rows) + " timestamps, manifest declares " +
                                             std::to_string(manifest.timestamp_count));
    }
  }
  if (manifest.annotations_path) {
    const std::string aname = manifest.annotations_path->filename().string();
    for_each_jsonl(*manifest.annotations_path, [&](const json& j, const std::string& where) {
      AnnotationRecord r = annotation_from_json(j, where);
      if (r.series_id && !ids.count(*r.series_id)) {
        throw Error(Errc::SchemaViolation, where + ": series_id '" + *r.series_id + "' not present in " + name);
      }
      ds.annotations.push_back(std::move(r));
    });
  }
  return ds;
}

}  // namespace tessa
