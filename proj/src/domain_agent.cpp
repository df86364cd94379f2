#include "tessa/domain_agent.hpp"

#include "tessa/json_codec.hpp"
#include "tessa/text_util.hpp"

#include <set>

namespace tessa {

nlohmann::json term_set_to_json(const TermSet& terms) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : terms.terms) {
    nlohmann::json row = {{"term", t.term}};
    if (t.gloss) row["gloss"] = *t.gloss;
    list.push_back(std::move(row));
  }
  return {{"domain", terms.domain}, {"terms", std::move(list)}};
}

TermSet term_set_from_json(const nlohmann::json& j) {
  try {
    TermSet out;
    out.domain = j.at("domain").get<std::string>();
    for (const auto& row : j.at("terms")) {
      DomainTerm t{row.at("term").get<std::string>(), std::nullopt};
      if (row.contains("gloss") && !row["gloss"].is_null()) t.gloss = row["gloss"].get<std::string>();
      out.terms.push_back(std::move(t));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("term set: ") + e.what());
  }
}

std::string render_terms(const TermSet& terms) {
  std::string out;
  for (const auto& t : terms.terms) {
    if (!out.empty()) out += "\n";
    out += "- " + t.term;
    if (t.gloss && !t.gloss->empty()) out += ": " + *t.gloss;
  }
  return out;
}

TermSet parse_terms(const std::string& response, const std::string& domain) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(trim(response));
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::ParseFailure, "term response is not a JSON array", response);
  }
  if (!j.is_array()) throw Error(Errc::ParseFailure, "term response is not a JSON array", response);
  TermSet out;
  out.domain = domain;
  std::set<std::string> seen;
  for (const auto& row : j) {
    if (!row.is_object() || !row.contains("term") || !row["term"].is_string()) {
      throw Error(Errc::ParseFailure, "term entries must be objects with a string \"term\"", response);
    }
    const std::string term = normalize_name(row["term"].get<std::string>());
    if (term.empty() || !seen.insert(term).second) continue;
    DomainTerm t{term, std::nullopt};
    if (row.contains("gloss") && row["gloss"].is_string()) t.gloss = trim(row["gloss"].get<std::string>());
    out.terms.push_back(std::move(t));
  }
  if (out.terms.empty()) throw Error(Errc::EmptyTermSet, "term extraction returned no terms", response);
  return out;
}

TermSet extract_terms(const std::vector<AnnotationRecord>& target_annotations, Gateway& gateway,
                      const TemplateStore& templates, const std::string& feedback) {
  if (target_annotations.empty()) throw Error(Errc::EmptyInput, "no target-domain annotations");
  const std::string& domain = target_annotations.front().domain;
  std::string listing;
  for (const auto& a : target_annotations) {
    if (a.kind != AnnotationKind::target_specific) {
      throw Error(Errc::PreconditionFailed, "record '" + a.id + "' is " + to_string(a.kind) + ", not target_specific");
    }
    if (a.domain != domain) {
      throw Error(Errc::PreconditionFailed, "target annotations mix domains '" + domain + "' and '" + a.domain + "'");
    }
    listing += "- " + a.text + "\n";
  }
  const std::string prompt = render_prompt(
      templates.get(TemplateId::p_ext),
      {{"domain", domain}, {"annotations", trim(listing)}, {"feedback", feedback.empty() ? "(none)" : feedback}});
  return parse_terms(gateway.ask(prompt), domain);
}

AnnotationRecord specialize(const AnnotationRecord& general, const TermSet& terms, Gateway& gateway,
                            const TemplateStore& templates) {
  if (terms.terms.empty()) throw Error(Errc::EmptyTermSet, "cannot specialize with an empty term set");
  if (trim(general.text).empty()) throw Error(Errc::EmptyAnnotation, "general annotation '" + general.id + "' is empty");
  const std::string prompt = render_prompt(templates.get(TemplateId::p_spe),
                                           {{"domain", terms.domain}, {"general", general.text}, {"terms", render_terms(terms)}});
  AnnotationRecord out;
  out.id = general.series_id.value_or(general.id) + ":target";
  out.series_id = general.series_id;
  out.domain = terms.domain;
  out.kind = AnnotationKind::target_specific;
  out.text = trim(gateway.ask(prompt));
  out.provenance = Provenance::llm;
  out.parent_id = general.id;
  return out;
}

ReviewOutcome parse_review(const std::string& response, int round) {
  for (const auto& raw : split(response, '\n')) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::string lower = to_lower(line);
    if (lower == "approve" || lower == "approve." || lower == "approved") return {Verdict::approve, "", round};
    if (lower.rfind("revise:", 0) == 0) {
      const std::string feedback = trim(line.substr(7));
      if (feedback.empty()) throw Error(Errc::ParseFailure, "REVISE verdict without feedback", response);
      return {Verdict::revise, feedback, round};
    }
    break;
  }
  throw Error(Errc::ParseFailure, "no APPROVE / REVISE: verdict line", response);
}

ReviewOutcome review(const AnnotationRecord& general, const AnnotationRecord& specialized, const TermSet& terms,
                     Gateway& gateway, const TemplateStore& templates, int round) {
  if (trim(general.text).empty() || trim(specialized.text).empty()) {
    throw Error(Errc::EmptyAnnotation, "review needs both annotations");
  }
  if (terms.terms.empty()) throw Error(Errc::EmptyTermSet, "review needs a term set");
  const std::string prompt = render_prompt(
      templates.get(TemplateId::p_rev),
      {{"general", general.text}, {"specialized", specialized.text}, {"terms", render_terms(terms)}});
  return parse_review(gateway.ask(prompt), round);
}

nlohmann::json round_log_to_json(const RoundLog& log) {
  return {{"round", log.round},
          {"terms", term_set_to_json(log.terms)},
          {"specialized", annotation_to_json(log.specialized)},
          {"verdict", log.outcome.verdict == Verdict::approve ? "approve" : "revise"},
          {"feedback", log.outcome.feedback}};
}

RefineResult refine_loop(const AnnotationRecord& general, const std::vector<AnnotationRecord>& target_annotations,
                         int max_rounds, Gateway& gateway, const TemplateStore& templates) {
  if (max_rounds < 1) throw Error(Errc::PreconditionFailed, "max_rounds must be >= 1");
  RefineResult result;
  std::string feedback;
  for (int round = 1; round <= max_rounds; ++round) {
    try {
      RoundLog log;
      log.round = round;
      log.terms = extract_terms(target_annotations, gateway, templates, feedback);
      log.specialized = specialize(general, log.terms, gateway, templates);
      log.outcome = review(general, log.specialized, log.terms, gateway, templates, round);
      result.terms = log.terms;
      result.final_record = log.specialized;
      result.outcomes.push_back(log.outcome);
      result.rounds.push_back(log);
      if (log.outcome.verdict == Verdict::approve) {
        result.approved = true;
        break;
      }
      feedback = log.outcome.feedback;
    } catch (const Error& e) {
      result.aborted = e;
      break;
    }
  }
  return result;
}

}  // namespace tessa
