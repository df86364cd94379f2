#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/error.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/prompts.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tessa {

struct DomainTerm {
  std::string term;  // normalized
  std::optional<std::string> gloss;

  friend bool operator==(const DomainTerm&, const DomainTerm&) = default;
};

struct TermSet {
  std::string domain;
  std::vector<DomainTerm> terms;

  std::size_t size() const { return terms.size(); }
  friend bool operator==(const TermSet&, const TermSet&) = default;
};

nlohmann::json term_set_to_json(const TermSet& terms);
TermSet term_set_from_json(const nlohmann::json& j);

/// "- term: gloss" lines.
std::string render_terms(const TermSet& terms);

/// Parses a JSON array of {"term", "gloss"?}; terms are normalized and
/// deduplicated case-insensitively (first gloss wins). Throws ParseFailure
/// or EmptyTermSet.
TermSet parse_terms(const std::string& response, const std::string& domain);

/// Throws EmptyInput / PreconditionFailed (mixed domains or wrong kind)
/// before calling the backend.
TermSet extract_terms(const std::vector<AnnotationRecord>& target_annotations, Gateway& gateway,
                      const TemplateStore& templates, const std::string& feedback = {});

/// Output: kind target_specific, parent_id = general.id, domain = terms.domain.
AnnotationRecord specialize(const AnnotationRecord& general, const TermSet& terms, Gateway& gateway,
                            const TemplateStore& templates);

enum class Verdict { approve, revise };

struct ReviewOutcome {
  Verdict verdict = Verdict::approve;
  std::string feedback;
  int round = 1;

  friend bool operator==(const ReviewOutcome&, const ReviewOutcome&) = default;
};

/// First non-empty line must be "APPROVE" or "REVISE: <feedback>" (case-
/// insensitive keyword). Throws ParseFailure with the raw response.
ReviewOutcome parse_review(const std::string& response, int round = 1);

ReviewOutcome review(const AnnotationRecord& general, const AnnotationRecord& specialized, const TermSet& terms,
                     Gateway& gateway, const TemplateStore& templates, int round = 1);

struct RoundLog {
  int round = 1;
  TermSet terms;
  AnnotationRecord specialized;
  ReviewOutcome outcome;
};

nlohmann::json round_log_to_json(const RoundLog& log);

struct RefineResult {
  std::optional<AnnotationRecord> final_record;
  std::vector<ReviewOutcome> outcomes;
  std::optional<TermSet> terms;
  bool approved = false;
  std::vector<RoundLog> rounds;
  std::optional<Error> aborted;  // set when a round failed; rounds holds the partial log
};

inline constexpr int kDefaultMaxRounds = 3;

/// Round r: extract terms (feedback from round r-1 appended for r > 1),
/// specialize, review. Stops on approve or after max_rounds.
/// Throws PreconditionFailed for max_rounds < 1; later errors end the loop
/// early and are returned in `aborted`.
RefineResult refine_loop(const AnnotationRecord& general, const std::vector<AnnotationRecord>& target_annotations,
                         int max_rounds, Gateway& gateway, const TemplateStore& templates);

}  // namespace tessa
