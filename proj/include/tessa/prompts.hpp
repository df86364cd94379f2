#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tessa {

enum class TemplateId { p_de, p_l, p_score_ts, p_score_text, p_gen, p_ext, p_spe, p_rev, p_judge };

std::string to_string(TemplateId id);
const std::vector<TemplateId>& all_template_ids();

using Bindings = std::map<std::string, std::string>;

/// A prompt body with {{slot}} placeholders. Lines starting with "##" form
/// a file header (documentation) and are stripped from `body`.
struct PromptTemplate {
  TemplateId id;
  std::string body;
  std::set<std::string> required_slots;

  /// Parses slots out of `text`; every slot in the body is required.
  static PromptTemplate parse(TemplateId id, const std::string& text);
};

/// Slot names occurring in `body`, in order of first appearance.
std::vector<std::string> slots_in(const std::string& body);

/// Substitutes every slot. Throws MissingSlot / UnknownSlot naming the slot.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

/// One template per id. Defaults are compiled in and can be overridden
/// by <dir>/<id>.txt files.
class TemplateStore {
public:
  static TemplateStore defaults();
  /// Missing files fall back to the compiled-in default.
  static TemplateStore load(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;
  void set(PromptTemplate tmpl);

  /// Writes every template as <dir>/<id>.txt (with its header).
  void write(const std::filesystem::path& dir) const;

private:
  std::map<TemplateId, PromptTemplate> templates_;
  std::map<TemplateId, std::string> sources_;
};

/// Compiled-in default text for a template id, including its header.
const std::string& default_template_text(TemplateId id);

}  // namespace tessa
