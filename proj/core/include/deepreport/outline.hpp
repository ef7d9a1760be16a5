#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/io.hpp"

namespace deepreport {

/// Position-derived chapter class used to enforce section limits: the first
/// root supports, the last root summarizes, interior roots carry the core
/// analysis. A single-root tree is core.
enum class NodeRole { supporting, core, summary, section };

std::string_view to_string(NodeRole role);

struct ChapterNode {
  std::string node_id;  // "2", "2.1"
  std::string title;
  std::string summary;
  std::string thinking;
  NodeRole role = NodeRole::section;
  std::vector<ChapterNode> children;
  std::vector<std::string> knowledge_ids;

  bool is_leaf() const noexcept { return children.empty(); }
};

struct ChapterTree {
  std::string title;
  std::vector<ChapterNode> roots;

  /// Leaves in writing order.
  std::vector<const ChapterNode*> leaves() const;
  std::vector<const ChapterNode*> nodes() const;  // pre-order
  const ChapterNode* find(std::string_view node_id) const;
  ChapterNode* find(std::string_view node_id);
  /// Chain of ancestors ending with the node itself.
  std::vector<const ChapterNode*> path_to(std::string_view node_id) const;

  json to_json() const;
  static ChapterTree from_json(const json& value);

  /// Markdown outline: title, chapter headings and their summaries.
  std::string render_outline() const;
  /// The text a chapter's prompts receive as {chapter_outline}: the
  /// ancestor titles for context, then the chapter's title, summary and
  /// writing logic.
  std::string chapter_brief(std::string_view node_id) const;
};

/// Reads the outline markdown: "# " title, "## " chapters, "### "
/// subsections, each followed by <summary> and <thinking> blocks. Assigns
/// node ids and roles. A parent without its own <thinking> gets one derived
/// from its subsection titles. Throws MalformedOutline for unparseable text.
ChapterTree parse_outline(std::string_view markdown, std::string_view fallback_title);

/// First violated structural rule, if any: empty tree, missing summary or
/// thinking, depth beyond subsections, section-control limits, duplicate
/// ids.
std::optional<std::string> outline_violation(const ChapterTree& tree);

/// Assigns ids "1", "2", "2.1", … and roles by position.
void number_tree(ChapterTree& tree);

}  // namespace deepreport
