#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/prompts.hpp"
#include "tessa/ts_features.hpp"

#include <string>
#include <vector>

namespace tessa {

struct TextFeature {
  std::string name;  // normalized: lowercase, trimmed
  int evidence_count = 1;

  friend bool operator==(const TextFeature&, const TextFeature&) = default;
};

/// Series longer than this are bucket-averaged down to it in prompts.
inline constexpr Eigen::Index kDigestPoints = 256;
/// Points kept when a sequence-valued feature is summarized.
inline constexpr Eigen::Index kFeatureShapePoints = 12;

/// Bucket averages: bucket i covers [floor(i*L/n), floor((i+1)*L/n)).
Eigen::VectorXd downsample_mean(const Eigen::VectorXd& x, Eigen::Index n);

/// Per channel: the values (downsampled past kDigestPoints) plus
/// first/last/min/max.
std::string series_digest(const TimeSeries& series);

/// Scalars verbatim; sequences as last/min/max plus a 12-point shape;
/// spectra as (frequency, amplitude) pairs.
std::string feature_summary(const TsFeature& feature);

AnnotationRecord decontextualize(const AnnotationRecord& annotation, Gateway& gateway, const TemplateStore& templates);

/// Parses `response` as a JSON array of strings; ParseFailure carries the raw text.
std::vector<std::string> parse_string_array(const std::string& response);

std::vector<TextFeature> extract_text_features(const std::vector<AnnotationRecord>& decontextualized, Gateway& gateway,
                                               const TemplateStore& templates);

/// Case-insensitive containment count over `texts`, at least 1.
int evidence_count(const std::string& name, const std::vector<AnnotationRecord>& annotations);

std::string render_general_prompt(const TimeSeries& series, const std::vector<TsFeature>& ts_selected,
                                  const std::vector<TextFeature>& text_selected, const TemplateStore& templates);

AnnotationRecord generate_general_annotation(const TimeSeries& series, const std::vector<TsFeature>& ts_selected,
                                             const std::vector<TextFeature>& text_selected, Gateway& gateway,
                                             const TemplateStore& templates);

}  // namespace tessa
