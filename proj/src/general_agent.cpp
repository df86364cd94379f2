#include "tessa/general_agent.hpp"

#include "tessa/error.hpp"
#include "tessa/text_util.hpp"

#include <json.hpp>

#include <cstdio>
#include <set>
#include <sstream>

namespace tessa {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string join_numbers(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += num(v(i));
  }
  return out;
}

}  // namespace

Eigen::VectorXd downsample_mean(const Eigen::VectorXd& x, Eigen::Index n) {
  const Eigen::Index L = x.size();
  if (n >= L || n < 1) return x;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = i * L / n;
    const Eigen::Index hi = (i + 1) * L / n;
    out(i) = x.segment(lo, hi - lo).mean();
  }
  return out;
}

std::string series_digest(const TimeSeries& series) {
  std::ostringstream out;
  out << "length " << series.length() << ", " << series.channel_count() << " channel(s), frequency "
      << to_string(series.frequency);
  for (Eigen::Index c = 0; c < series.channel_count(); ++c) {
    const Eigen::VectorXd x = series.values.col(c);
    out << "\n" << series.channels[static_cast<std::size_t>(c)];
    if (x.size() > kDigestPoints) out << " (averaged to " << kDigestPoints << " points)";
    out << ": " << join_numbers(downsample_mean(x, kDigestPoints));
    out << "\n  first=" << num(x(0)) << " last=" << num(x(x.size() - 1)) << " min=" << num(x.minCoeff())
        << " max=" << num(x.maxCoeff());
  }
  return out.str();
}

std::string feature_summary(const TsFeature& feature) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return "value=" + num(v);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          if (v.empty()) return "empty";
          const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
          return "last=" + num(x(x.size() - 1)) + " min=" + num(x.minCoeff()) + " max=" + num(x.maxCoeff()) +
                 " shape=[" + join_numbers(downsample_mean(x, kFeatureShapePoints)) + "]";
        } else {
          if (v.peaks.empty()) return "no periodic components";
          std::string out;
          for (std::size_t i = 0; i < v.peaks.size(); ++i) {
            if (i) out += ", ";
            out += "(frequency " + num(v.peaks[i].frequency) + ", amplitude " + num(v.peaks[i].amplitude) + ")";
          }
          return out;
        }
      },
      feature.payload);
}

AnnotationRecord decontextualize(const AnnotationRecord& annotation, Gateway& gateway, const TemplateStore& templates) {
  if (annotation.kind != AnnotationKind::source_specific) {
    throw Error(Errc::PreconditionFailed, "decontextualize expects a source_specific record, got " + to_string(annotation.kind));
  }
  if (trim(annotation.text).empty()) throw Error(Errc::EmptyAnnotation, "annotation '" + annotation.id + "' has no text");
  if (trim(annotation.domain).empty()) throw Error(Errc::PreconditionFailed, "annotation '" + annotation.id + "' has no domain");

  const std::string prompt =
      render_prompt(templates.get(TemplateId::p_de), {{"domain", annotation.domain}, {"text", annotation.text}});
  AnnotationRecord out;
  out.id = annotation.id + ":de";
  out.series_id = annotation.series_id;
  out.domain = annotation.domain;
  out.kind = AnnotationKind::decontextualized;
  out.text = trim(gateway.ask(prompt));
  out.provenance = Provenance::llm;
  out.parent_id = annotation.id;
  return out;
}

std::vector<std::string> parse_string_array(const std::string& response) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(trim(response));
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::ParseFailure, "response is not a JSON array of strings", response);
  }
  if (!j.is_array()) throw Error(Errc::ParseFailure, "response is not a JSON array of strings", response);
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw Error(Errc::ParseFailure, "response array contains a non-string", response);
    out.push_back(v.get<std::string>());
  }
  return out;
}

int evidence_count(const std::string& name, const std::vector<AnnotationRecord>& annotations) {
  int count = 0;
  for (const auto& a : annotations) count += contains_ci(a.text, name) ? 1 : 0;
  return std::max(count, 1);
}

std::vector<TextFeature> extract_text_features(const std::vector<AnnotationRecord>& decontextualized, Gateway& gateway,
                                               const TemplateStore& templates) {
  if (decontextualized.empty()) throw Error(Errc::EmptyInput, "no decontextualized annotations");
  std::string listing;
  for (const auto& a : decontextualized) {
    if (a.kind != AnnotationKind::decontextualized) {
      throw Error(Errc::PreconditionFailed, "record '" + a.id + "' is not decontextualized");
    }
    listing += "- " + a.text + "\n";
  }
  const std::string prompt = render_prompt(templates.get(TemplateId::p_l), {{"annotations", trim(listing)}});
  const auto names = parse_string_array(gateway.ask(prompt));

  std::vector<TextFeature> out;
  std::set<std::string> seen;
  for (const auto& raw : names) {
    std::string name = normalize_name(raw);
    if (name.empty() || !seen.insert(name).second) continue;
    out.push_back({name, evidence_count(name, decontextualized)});
  }
  return out;
}

std::string render_general_prompt(const TimeSeries& series, const std::vector<TsFeature>& ts_selected,
                                  const std::vector<TextFeature>& text_selected, const TemplateStore& templates) {
  if (ts_selected.empty() && text_selected.empty()) {
    throw Error(Errc::NoFeaturesSelected, "series '" + series.id + "' has no selected features");
  }
  std::string ts_lines;
  for (const auto& f : ts_selected) ts_lines += "- " + f.key() + ": " + feature_summary(f) + "\n";
  std::string text_lines;
  for (const auto& f : text_selected) text_lines += "- " + f.name + "\n";
  return render_prompt(templates.get(TemplateId::p_gen),
                       {{"series", series_digest(series)},
                        {"ts_features", ts_lines.empty() ? "(none)" : trim(ts_lines)},
                        {"text_features", text_lines.empty() ? "(none)" : trim(text_lines)}});
}

AnnotationRecord generate_general_annotation(const TimeSeries& series, const std::vector<TsFeature>& ts_selected,
                                             const std::vector<TextFeature>& text_selected, Gateway& gateway,
                                             const TemplateStore& templates) {
  const std::string prompt = render_general_prompt(series, ts_selected, text_selected, templates);
  AnnotationRecord out;
  out.id = series.id + ":general";
  out.series_id = series.id;
  out.domain = series.domain;
  out.kind = AnnotationKind::general;
  out.text = trim(gateway.ask(prompt));
  out.provenance = Provenance::llm;
  return out;
}

}  // namespace tessa
