#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tessa {

enum class Frequency { daily, weekly, monthly, other };

std::string to_string(Frequency f);
Frequency frequency_from_string(const std::string& s);

/// C-channel, L-timestamp observation matrix. Row t holds x_t.
struct TimeSeries {
  std::string id;
  std::string domain;
  Frequency frequency = Frequency::other;
  std::vector<std::string> channels;
  Eigen::MatrixXd values;  // L x C
  std::optional<std::vector<std::string>> timestamps;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index channel_count() const { return values.cols(); }

  friend bool operator==(const TimeSeries&, const TimeSeries&);
};

enum class AnnotationKind { source_specific, target_specific, decontextualized, general, feedback, ground_truth };
enum class Provenance { human, llm, synthetic };

std::string to_string(AnnotationKind k);
std::string to_string(Provenance p);
AnnotationKind annotation_kind_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

struct AnnotationRecord {
  std::string id;
  std::optional<std::string> series_id;
  std::string domain;
  AnnotationKind kind = AnnotationKind::general;
  std::string text;
  Provenance provenance = Provenance::human;
  std::optional<std::string> parent_id;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct DatasetManifest {
  std::string name;
  std::string domain;
  std::string frequency;
  long long channel_count = 1;
  long long timestamp_count = 0;
  long long sample_count = 0;
  std::filesystem::path series_path;
  std::optional<std::filesystem::path> annotations_path;
};

struct Dataset {
  std::vector<TimeSeries> series;
  std::vector<AnnotationRecord> annotations;

  const TimeSeries* find_series(const std::string& id) const;
};

struct Violation {
  std::string field;
  long long row = -1;      // -1 when not applicable
  long long channel = -1;  // -1 when not applicable
  std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Every TimeSeries invariant, reported as data.
ValidationReport validate_series(const TimeSeries& series);

/// Annotation invariants checked within one record list. A decontextualized
/// record's parent is only checked when the parent is in `records`.
ValidationReport validate_annotations(const std::vector<AnnotationRecord>& records);

/// Relative paths inside the manifest resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Absolute paths are stored relative to the manifest's directory; relative
/// ones are taken as already relative to it.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct LoadOptions {
  /// Also require sample_count == #series and timestamp_count == total rows.
  bool verify_counts = false;
};

Dataset load_dataset(const DatasetManifest& manifest, const LoadOptions& options = {});

std::vector<TimeSeries> load_series(const std::filesystem::path& path);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

void write_series(const std::filesystem::path& path, const std::vector<TimeSeries>& series);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

}  // namespace tessa
