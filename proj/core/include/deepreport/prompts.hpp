#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport {

/// The eleven workflow prompts plus the knowledge-merging prompt used when
/// several memory entries share one source.
enum class TemplateId {
  intent_clarification,
  outline_generation,
  search_query_expanding,
  information_distillation,
  evaluation_judgment,
  integrity_evaluation,
  freshness_evaluation,
  plurality_evaluation,
  knowledge_enrichment,
  content_generation_system,
  content_generation_user,
  knowledge_merging,
};

inline constexpr std::size_t kTemplateCount = 12;

struct PromptTemplate {
  TemplateId id;
  std::string_view name;
  std::string_view text;
  /// Placeholders in order of first appearance, e.g. {"now", "chapter_outline"}.
  std::vector<std::string> slot_names;
};

using Bindings = std::map<std::string, std::string>;

const PromptTemplate& prompt_template(TemplateId id);
const std::vector<TemplateId>& all_templates();
std::string_view to_string(TemplateId id);
std::optional<TemplateId> template_from_name(std::string_view name);

/// Substitutes every `{slot}` of the template in a single pass; bound values
/// are inserted verbatim and never re-scanned. Throws MissingSlot.
std::string render_prompt(TemplateId id, const Bindings& bindings);

}  // namespace deepreport
