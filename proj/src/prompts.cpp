#include "tessa/prompts.hpp"

#include "tessa/error.hpp"
#include "tessa/text_util.hpp"

#include <fstream>
#include <sstream>

namespace tessa {

namespace fs = std::filesystem;

std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::p_de: return "p_de";
    case TemplateId::p_l: return "p_l";
    case TemplateId::p_score_ts: return "p_score_ts";
    case TemplateId::p_score_text: return "p_score_text";
    case TemplateId::p_gen: return "p_gen";
    case TemplateId::p_ext: return "p_ext";
    case TemplateId::p_spe: return "p_spe";
    case TemplateId::p_rev: return "p_rev";
    case TemplateId::p_judge: return "p_judge";
  }
  return "p_unknown";
}

const std::vector<TemplateId>& all_template_ids() {
  static const std::vector<TemplateId> ids = {TemplateId::p_de,  TemplateId::p_l,   TemplateId::p_score_ts,
                                              TemplateId::p_score_text, TemplateId::p_gen, TemplateId::p_ext,
                                              TemplateId::p_spe, TemplateId::p_rev, TemplateId::p_judge};
  return ids;
}

std::vector<std::string> slots_in(const std::string& body) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string::npos) {
    const std::size_t end = body.find("}}", pos + 2);
    if (end == std::string::npos) break;
    std::string name = trim(std::string_view(body).substr(pos + 2, end - pos - 2));
    bool seen = false;
    for (const auto& s : out) seen = seen || s == name;
    if (!seen) out.push_back(std::move(name));
    pos = end + 2;
  }
  return out;
}

PromptTemplate PromptTemplate::parse(TemplateId id, const std::string& text) {
  PromptTemplate t{id, {}, {}};
  std::istringstream in(text);
  std::string line;
  bool in_header = true;
  std::ostringstream body;
  bool first = true;
  while (std::getline(in, line)) {
    if (in_header && line.rfind("##", 0) == 0) continue;
    in_header = false;
    if (!first) body << '\n';
    body << line;
    first = false;
  }
  t.body = trim(body.str());
  for (auto& s : slots_in(t.body)) {
    if (s.empty()) throw Error(Errc::InvalidConfig, to_string(id) + ": empty slot name");
    t.required_slots.insert(std::move(s));
  }
  return t;
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& slot : tmpl.required_slots) {
    if (!bindings.count(slot)) throw Error(Errc::MissingSlot, slot);
  }
  for (const auto& [name, value] : bindings) {
    if (!tmpl.required_slots.count(name)) throw Error(Errc::UnknownSlot, name);
  }
  // Single left-to-right pass so slot-like text inside values is not re-expanded.
  std::string out;
  out.reserve(tmpl.body.size());
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tmpl.body.find("{{", pos);
    if (open == std::string::npos) break;
    const std::size_t close = tmpl.body.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(tmpl.body, pos, open - pos);
    out.append(bindings.at(trim(std::string_view(tmpl.body).substr(open + 2, close - open - 2))));
    pos = close + 2;
  }
  out.append(tmpl.body, pos, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------
// Default bodies. Reconstructed from the role each prompt plays in the
// pipeline; edit the files under templates/ to change them.

namespace {

const std::map<TemplateId, std::string>& default_texts() {
  static const std::map<TemplateId, std::string> texts = {
      {TemplateId::p_de, R"(## p_de: domain decontextualization. Slots: domain, text.
## Response: plain text, the rewritten annotation only.
Task: domain decontextualization.
The following time-series annotation comes from the {{domain}} domain.
Rewrite it so that every {{domain}}-specific term is replaced by a domain-neutral description of the underlying time-series pattern (trend, seasonality, level, volatility, reversal, and so on). Keep all numeric facts.

Annotation:
{{text}})"},
      {TemplateId::p_l, R"(## p_l: text-wise feature extraction. Slots: annotations.
## Response schema: a JSON array of strings, e.g. ["support level", "trend reversal"].
Task: text feature extraction.
Below are domain-neutral time-series annotations, one per line.
List the general time-series patterns or concepts they mention, explicitly or implicitly.
Respond with a JSON array of short lowercase names and nothing else.

Annotations:
{{annotations}})"},
      {TemplateId::p_score_ts, R"(## p_score_ts: time-series feature importance scoring. Slots: features, annotations.
## Response schema: a JSON object mapping every feature name to a nonnegative number.
Task: feature importance scoring (time-series features).
Candidate time-series features:
{{features}}

Annotations:
{{annotations}}

Score how often each candidate feature is referenced in the annotations, explicitly or implicitly.
Assign greater weight to features that are explicitly referenced.
Respond with a JSON object {"feature name": score, ...} covering every candidate and nothing else.)"},
      {TemplateId::p_score_text, R"(## p_score_text: text feature importance scoring. Slots: features, annotations.
## Response schema: a JSON object mapping every feature name to a nonnegative number.
Task: feature importance scoring (text features).
Candidate text features:
{{features}}

Annotations:
{{annotations}}

Score how often each candidate feature is referenced in the annotations, explicitly or implicitly.
Assign greater weight to features that are explicitly referenced.
Respond with a JSON object {"feature name": score, ...} covering every candidate and nothing else.)"},
      {TemplateId::p_gen, R"(## p_gen: general annotation. Slots: series, ts_features, text_features.
## Response: one paragraph of plain text.
Task: general annotation.
Describe the time series below in one paragraph of domain-neutral language. Focus on the listed features.

Series:
{{series}}

Time-series features:
{{ts_features}}

Text features:
{{text_features}})"},
      {TemplateId::p_ext, R"(## p_ext: domain term extraction. Slots: domain, annotations, feedback.
## Response schema: a JSON array of objects {"term": str, "gloss": str (optional)}.
Task: domain term extraction.
The annotations below come from the {{domain}} domain.
Extract the domain-specific terminology used to describe time-series patterns.

Annotations:
{{annotations}}

Reviewer feedback from the previous round:
{{feedback}}

Respond with a JSON array of {"term": ..., "gloss": ...} objects and nothing else.)"},
      {TemplateId::p_spe, R"(## p_spe: domain-specific annotation. Slots: domain, general, terms.
## Response: one paragraph of plain text.
Task: domain-specific annotation.
Rewrite the general annotation for a {{domain}} audience, using the domain terms where they fit the described patterns.

General annotation:
{{general}}

Domain terms:
{{terms}})"},
      {TemplateId::p_rev, R"(## p_rev: annotation review. Slots: general, specialized, terms.
## Response protocol: first line "APPROVE", or "REVISE: <feedback>".
Task: annotation review.
Check that the domain-specific annotation is faithful to the general annotation and uses the domain terms correctly.

General annotation:
{{general}}

Domain-specific annotation:
{{specialized}}

Domain terms:
{{terms}}

Answer with a first line "APPROVE", or "REVISE: " followed by concrete feedback.)"},
      {TemplateId::p_judge, R"(## p_judge: LLM-as-judge. Slots: metrics, context, annotation.
## Response protocol: one "Metric: n" line per requested metric, n an integer 1-5.
Task: annotation evaluation.
Rate the time-series annotation below on a scale of 1 to 5 for each metric:
{{metrics}}

Context:
{{context}}

Annotation:
{{annotation}}

Respond with one line per metric in the form "Metric: n". You may add a justification after the score lines.)"},
  };
  return texts;
}

}  // namespace

const std::string& default_template_text(TemplateId id) { return default_texts().at(id); }

TemplateStore TemplateStore::defaults() {
  TemplateStore store;
  for (const auto& [id, text] : default_texts()) {
    store.templates_.emplace(id, PromptTemplate::parse(id, text));
    store.sources_.emplace(id, text);
  }
  return store;
}

TemplateStore TemplateStore::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::MissingFile, "templates directory '" + dir.string() + "' not found");
  TemplateStore store = defaults();
  for (TemplateId id : all_template_ids()) {
    const fs::path file = dir / (to_string(id) + ".txt");
    if (!fs::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read '" + file.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    store.templates_.insert_or_assign(id, PromptTemplate::parse(id, buf.str()));
    store.sources_.insert_or_assign(id, buf.str());
  }
  return store;
}

const PromptTemplate& TemplateStore::get(TemplateId id) const { return templates_.at(id); }

void TemplateStore::set(PromptTemplate tmpl) {
  sources_.insert_or_assign(tmpl.id, tmpl.body);
  templates_.insert_or_assign(tmpl.id, std::move(tmpl));
}

void TemplateStore::write(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (const auto& [id, text] : sources_) {
    std::ofstream out(dir / (to_string(id) + ".txt"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write template " + to_string(id));
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
  }
}

}  // namespace tessa
