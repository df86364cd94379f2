#include "tessa/judge.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/text_util.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace tessa {

namespace {

std::string metric_key(std::string s) {
  s = to_lower(trim(s));
  for (char& c : s) {
    if (c == '-' || c == ' ') c = '_';
  }
  return s;
}

std::string item_key(const AnnotationRecord& a) { return a.series_id.value_or(a.id); }

using ItemTable = std::map<std::string, std::map<Metric, double>>;

ItemTable average_over_judges(const std::vector<JudgeScore>& scores) {
  std::map<std::string, std::map<Metric, std::pair<double, int>>> sums;
  for (const auto& s : scores) {
    auto& cell = sums[s.item_id][s.metric];
    cell.first += s.value;
    cell.second += 1;
  }
  ItemTable out;
  for (const auto& [item, metrics] : sums) {
    for (const auto& [metric, cell] : metrics) out[item][metric] = cell.first / cell.second;
  }
  return out;
}

MetricComparison compare(const std::string& label, const std::vector<double>& t, const std::vector<double>& d) {
  MetricComparison c;
  c.label = label;
  const double n = static_cast<double>(t.size());
  int wins = 0;
  int losses = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    c.mean_t += t[i];
    c.mean_d += d[i];
    wins += t[i] > d[i] ? 1 : 0;
    losses += t[i] < d[i] ? 1 : 0;
  }
  c.mean_t /= n;
  c.mean_d /= n;
  c.p_t_gt_d = wins / n;
  c.p_d_gt_t = losses / n;
  c.p_tie = (static_cast<double>(t.size()) - wins - losses) / n;
  return c;
}

nlohmann::json comparison_to_json(const MetricComparison& c) {
  return {{"label", c.label}, {"mean_t", c.mean_t},     {"mean_d", c.mean_d},
          {"p_t_gt_d", c.p_t_gt_d}, {"p_d_gt_t", c.p_d_gt_t}, {"p_tie", c.p_tie}};
}

}  // namespace

std::string to_string(Metric m) {
  switch (m) {
    case Metric::clarity: return "clarity";
    case Metric::comprehensiveness: return "comprehensiveness";
    case Metric::domain_relevance: return "domain_relevance";
  }
  return "clarity";
}

std::string display_name(Metric m) {
  switch (m) {
    case Metric::clarity: return "Clarity";
    case Metric::comprehensiveness: return "Comprehensiveness";
    case Metric::domain_relevance: return "Domain-relevance";
  }
  return "Clarity";
}

Metric metric_from_string(const std::string& s) {
  const std::string key = metric_key(s);
  for (Metric m : {Metric::clarity, Metric::comprehensiveness, Metric::domain_relevance}) {
    if (key == to_string(m)) return m;
  }
  throw Error(Errc::InvalidConfig, "unknown metric '" + s + "'");
}

std::vector<Metric> parse_metric_list(const std::string& s) {
  std::vector<Metric> out;
  for (const auto& part : split(s, ',')) {
    if (trim(part).empty()) continue;
    const Metric m = metric_from_string(part);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw Error(Errc::InvalidConfig, "metric list is empty");
  return out;
}

nlohmann::json judge_score_to_json(const JudgeScore& s, const std::string& method) {
  return {{"method", method}, {"item_id", s.item_id}, {"metric", to_string(s.metric)}, {"value", s.value}, {"judge_id", s.judge_id}};
}

JudgeScore judge_score_from_json(const nlohmann::json& j) {
  try {
    return {j.at("item_id").get<std::string>(), metric_from_string(j.at("metric").get<std::string>()),
            j.at("value").get<int>(), j.at("judge_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("judge score: ") + e.what());
  }
}

std::vector<JudgeScore> parse_judge_response(const std::string& response, const std::vector<Metric>& metrics,
                                             const std::string& item_id, const std::string& judge_id) {
  std::map<Metric, int> found;
  for (const auto& raw : split(response, '\n')) {
    const std::string line = trim(raw);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    Metric metric;
    try {
      metric = metric_from_string(line.substr(0, colon));
    } catch (const Error&) {
      continue;
    }
    if (found.count(metric)) continue;
    std::istringstream rest(line.substr(colon + 1));
    double value = 0;
    if (!(rest >> value)) continue;
    if (value != static_cast<int>(value) || value < 1 || value > 5) {
      throw Error(Errc::ScoreOutOfRange, display_name(metric) + " score " + format_number(value) + " is not an integer in [1, 5]",
                  response);
    }
    found[metric] = static_cast<int>(value);
  }
  std::vector<JudgeScore> out;
  for (Metric m : metrics) {
    auto it = found.find(m);
    if (it == found.end()) throw Error(Errc::ParseFailure, "judge response has no score for " + display_name(m), response);
    out.push_back({item_id, m, it->second, judge_id});
  }
  return out;
}

std::vector<JudgeScore> judge(const AnnotationRecord& annotation, const std::vector<Metric>& metrics,
                              const std::string& context, Gateway& gateway, const TemplateStore& templates,
                              const std::string& judge_id, const std::string& backend_id) {
  if (metrics.empty()) throw Error(Errc::InvalidConfig, "no metrics requested");
  if (trim(annotation.text).empty()) throw Error(Errc::EmptyAnnotation, "annotation '" + annotation.id + "' is empty");
  std::string metric_lines;
  for (Metric m : metrics) metric_lines += "- " + display_name(m) + "\n";
  const std::string prompt = render_prompt(
      templates.get(TemplateId::p_judge),
      {{"metrics", trim(metric_lines)}, {"context", context.empty() ? "(none)" : context}, {"annotation", annotation.text}});
  return parse_judge_response(gateway.ask(prompt, backend_id), metrics, item_key(annotation), judge_id);
}

JudgeReport aggregate(const std::vector<JudgeScore>& scores_t, const std::vector<JudgeScore>& scores_d,
                      const std::string& method_t, const std::string& method_d) {
  const ItemTable t = average_over_judges(scores_t);
  const ItemTable d = average_over_judges(scores_d);
  if (t.empty() && d.empty()) throw Error(Errc::EmptyInput, "no judge scores");
  for (const auto& [item, _] : t) {
    if (!d.count(item)) throw Error(Errc::UnpairedItem, "item '" + item + "' has no " + method_d + " scores");
  }
  for (const auto& [item, _] : d) {
    if (!t.count(item)) throw Error(Errc::UnpairedItem, "item '" + item + "' has no " + method_t + " scores");
  }

  JudgeReport report;
  report.method_t = method_t;
  report.method_d = method_d;
  report.items = t.size();
  for (const auto& [metric, _] : t.begin()->second) report.metrics.push_back(metric);
  for (const auto& [item, metrics] : t) {
    const auto& other = d.at(item);
    auto same_keys = [&](const std::map<Metric, double>& m) {
      if (m.size() != report.metrics.size()) return false;
      return std::all_of(report.metrics.begin(), report.metrics.end(), [&](Metric x) { return m.count(x) > 0; });
    };
    if (!same_keys(metrics) || !same_keys(other)) {
      throw Error(Errc::MetricMismatch, "item '" + item + "' is not scored on the same metrics by both methods");
    }
  }

  std::vector<double> overall_t;
  std::vector<double> overall_d;
  for (const auto& [item, metrics] : t) {
    double st = 0;
    double sd = 0;
    for (Metric m : report.metrics) {
      st += metrics.at(m);
      sd += d.at(item).at(m);
    }
    overall_t.push_back(st / static_cast<double>(report.metrics.size()));
    overall_d.push_back(sd / static_cast<double>(report.metrics.size()));
  }
  for (Metric m : report.metrics) {
    std::vector<double> vt;
    std::vector<double> vd;
    for (const auto& [item, metrics] : t) {
      vt.push_back(metrics.at(m));
      vd.push_back(d.at(item).at(m));
    }
    report.per_metric.push_back(compare(display_name(m), vt, vd));
  }
  report.overall = compare("Overall", overall_t, overall_d);
  return report;
}

nlohmann::json report_to_json(const JudgeReport& report) {
  nlohmann::json metrics = nlohmann::json::array();
  for (Metric m : report.metrics) metrics.push_back(to_string(m));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : report.per_metric) rows.push_back(comparison_to_json(c));
  return {{"method_t", report.method_t}, {"method_d", report.method_d}, {"items", report.items},
          {"metrics", metrics},         {"per_metric", rows},           {"overall", comparison_to_json(report.overall)}};
}

std::string render_table(const JudgeReport& report) {
  std::vector<const MetricComparison*> blocks;
  for (const auto& c : report.per_metric) blocks.push_back(&c);
  blocks.push_back(&report.overall);

  std::size_t w_metric = 6;
  for (const auto* c : blocks) w_metric = std::max(w_metric, c->label.size());
  const std::size_t w_method = std::max({std::size_t{6}, report.method_t.size(), report.method_d.size()});
  const std::string p_header = "P(T>D) (%)";

  auto pad = [](const std::string& s, std::size_t w, bool right) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return right ? fill + s : s + fill;
  };
  std::ostringstream out;
  auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    std::string line = pad(a, w_metric, false) + "  " + pad(b, w_method, false) + "  " + pad(c, 5, true) + "  " +
                       pad(d, p_header.size(), true);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << "\n";
  };
  row("Metric", "Method", "Mean", p_header);
  for (const auto* c : blocks) {
    row(c->label, report.method_t, format_fixed(c->mean_t, 2), format_fixed(100.0 * c->p_t_gt_d, 2));
    row("", report.method_d, format_fixed(c->mean_d, 2), "");
  }
  return out.str();
}

Comparison compare_methods(const std::vector<AnnotationRecord>& annotations_t,
                           const std::vector<AnnotationRecord>& annotations_d, const std::vector<Metric>& metrics,
                           const JudgeSetup& setup, Gateway& gateway, const TemplateStore& templates,
                           const std::string& method_t, const std::string& method_d) {
  if (setup.judge_count < 1) throw Error(Errc::InvalidConfig, "judge_count must be >= 1");
  if (metrics.empty()) throw Error(Errc::InvalidConfig, "no metrics requested");
  std::set<std::string> keys_t;
  std::set<std::string> keys_d;
  for (const auto& a : annotations_t) keys_t.insert(item_key(a));
  for (const auto& a : annotations_d) keys_d.insert(item_key(a));
  for (const auto& k : keys_t) {
    if (!keys_d.count(k)) throw Error(Errc::UnpairedItem, "item '" + k + "' has no " + method_d + " annotation");
  }
  for (const auto& k : keys_d) {
    if (!keys_t.count(k)) throw Error(Errc::UnpairedItem, "item '" + k + "' has no " + method_t + " annotation");
  }

  Comparison out;
  auto run = [&](const std::vector<AnnotationRecord>& records, std::vector<JudgeScore>& sink) {
    for (const auto& a : records) {
      const std::string context = "domain: " + (a.domain.empty() ? std::string("(unspecified)") : a.domain);
      for (int j = 0; j < setup.judge_count; ++j) {
        const std::string backend =
            setup.backends.empty() ? std::string() : setup.backends[static_cast<std::size_t>(j) % setup.backends.size()];
        auto scores = judge(a, metrics, context, gateway, templates, "judge-" + std::to_string(j + 1), backend);
        sink.insert(sink.end(), scores.begin(), scores.end());
      }
    }
  };
  run(annotations_t, out.scores_t);
  run(annotations_d, out.scores_d);
  out.report = aggregate(out.scores_t, out.scores_d, method_t, method_d);
  return out;
}

void write_raw_scores(const std::filesystem::path& path, const Comparison& comparison) {
  std::vector<nlohmann::json> rows;
  for (const auto& s : comparison.scores_t) rows.push_back(judge_score_to_json(s, comparison.report.method_t));
  for (const auto& s : comparison.scores_d) rows.push_back(judge_score_to_json(s, comparison.report.method_d));
  write_jsonl(path, rows);
}

std::pair<std::vector<JudgeScore>, std::vector<JudgeScore>> read_raw_scores(const std::filesystem::path& path,
                                                                             const std::string& method_t,
                                                                             const std::string& method_d) {
  std::pair<std::vector<JudgeScore>, std::vector<JudgeScore>> out;
  for (const auto& row : read_jsonl(path)) {
    const std::string method = row.value("method", "");
    if (method == method_t) {
      out.first.push_back(judge_score_from_json(row));
    } else if (method == method_d) {
      out.second.push_back(judge_score_from_json(row));
    }
  }
  return out;
}

}  // namespace tessa
