#include "deepreport/outline.hpp"

#include <functional>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/tagged.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

struct Draft {
  std::string title;
  std::string body;
  std::vector<Draft> children;
};

std::string clean_title(std::string_view raw) {
  std::string t = text::trim(raw);
  text::replace_all(t, "**", "");
  t = text::trim(t);
  while (!t.empty() && (t.back() == ':' || t.back() == '#')) t.pop_back();
  return text::trim(t);
}

std::string tag_body(const std::string& body, std::string_view tag) {
  std::vector<TaggedBlock> blocks;
  try {
    blocks = parse_tagged(body, tag);
  } catch (const UnbalancedTag& e) {
    throw MalformedOutline(e.what());
  }
  std::vector<std::string> parts;
  for (const auto& b : blocks) {
    auto t = text::collapse_whitespace(b.body);
    if (!t.empty()) parts.push_back(t);
  }
  return text::join(parts, " ");
}

std::string untagged_text(std::string body) {
  for (auto tag : {"summary", "thinking"}) {
    std::string open = std::string("<") + tag + ">";
    std::string close = std::string("</") + tag + ">";
    while (true) {
      auto a = body.find(open);
      if (a == std::string::npos) break;
      auto b = body.find(close, a);
      body.erase(a, b == std::string::npos ? std::string::npos : b + close.size() - a);
    }
  }
  return text::collapse_whitespace(body);
}

ChapterNode finish(const Draft& d) {
  ChapterNode node;
  node.title = d.title;
  node.summary = tag_body(d.body, "summary");
  node.thinking = tag_body(d.body, "thinking");
  if (node.summary.empty()) node.summary = untagged_text(d.body);
  for (const auto& c : d.children) node.children.push_back(finish(c));
  if (node.thinking.empty() && !node.children.empty()) {
    std::vector<std::string> titles;
    for (const auto& c : node.children) titles.push_back(c.title);
    node.thinking = "Develops the chapter through its subsections: " + text::join(titles, "; ") + ".";
  }
  return node;
}

json node_json(const ChapterNode& n) {
  json children = json::array();
  for (const auto& c : n.children) children.push_back(node_json(c));
  return json{{"node_id", n.node_id},
              {"title", n.title},
              {"summary", n.summary},
              {"thinking", n.thinking},
              {"role", std::string(to_string(n.role))},
              {"knowledge_ids", n.knowledge_ids},
              {"children", children}};
}

ChapterNode node_from_json(const json& v) {
  ChapterNode n;
  n.node_id = v.at("node_id").get<std::string>();
  n.title = v.at("title").get<std::string>();
  n.summary = v.value("summary", "");
  n.thinking = v.value("thinking", "");
  auto role = v.value("role", "section");
  n.role = role == "supporting" ? NodeRole::supporting
           : role == "core"     ? NodeRole::core
           : role == "summary"  ? NodeRole::summary
                                : NodeRole::section;
  n.knowledge_ids = v.value("knowledge_ids", std::vector<std::string>{});
  for (const auto& c : v.value("children", json::array())) n.children.push_back(node_from_json(c));
  return n;
}

template <typename Node, typename Fn>
void walk(Node& node, Fn&& fn) {
  fn(node);
  for (auto& c : node.children) walk(c, fn);
}

}  // namespace

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::supporting: return "supporting";
    case NodeRole::core: return "core";
    case NodeRole::summary: return "summary";
    case NodeRole::section: return "section";
  }
  return "section";
}

std::vector<const ChapterNode*> ChapterTree::leaves() const {
  std::vector<const ChapterNode*> out;
  for (const auto& r : roots) {
    walk(r, [&](const ChapterNode& n) {
      if (n.is_leaf()) out.push_back(&n);
    });
  }
  return out;
}

std::vector<const ChapterNode*> ChapterTree::nodes() const {
  std::vector<const ChapterNode*> out;
  for (const auto& r : roots) walk(r, [&](const ChapterNode& n) { out.push_back(&n); });
  return out;
}

const ChapterNode* ChapterTree::find(std::string_view node_id) const {
  for (const auto* n : nodes()) {
    if (n->node_id == node_id) return n;
  }
  return nullptr;
}

ChapterNode* ChapterTree::find(std::string_view node_id) {
  return const_cast<ChapterNode*>(static_cast<const ChapterTree*>(this)->find(node_id));
}

std::vector<const ChapterNode*> ChapterTree::path_to(std::string_view node_id) const {
  std::vector<const ChapterNode*> path;
  std::function<bool(const ChapterNode&)> visit = [&](const ChapterNode& n) {
    path.push_back(&n);
    if (n.node_id == node_id) return true;
    for (const auto& c : n.children) {
      if (visit(c)) return true;
    }
    path.pop_back();
    return false;
  };
  for (const auto& r : roots) {
    if (visit(r)) return path;
  }
  return {};
}

json ChapterTree::to_json() const {
  json list = json::array();
  for (const auto& r : roots) list.push_back(node_json(r));
  return json{{"title", title}, {"roots", list}};
}

ChapterTree ChapterTree::from_json(const json& value) {
  ChapterTree tree;
  tree.title = value.at("title").get<std::string>();
  for (const auto& r : value.at("roots")) tree.roots.push_back(node_from_json(r));
  return tree;
}

std::string ChapterTree::render_outline() const {
  std::string out = "# " + title + "\n";
  for (const auto* n : nodes()) {
    out += n->node_id.find('.') == std::string::npos ? "## " : "### ";
    out += n->title + "\n" + n->summary + "\n";
  }
  return out;
}

std::string ChapterTree::chapter_brief(std::string_view node_id) const {
  auto path = path_to(node_id);
  if (path.empty()) throw PreconditionError("unknown chapter " + std::string(node_id));
  const auto* node = path.back();
  std::string out = "Report: " + title + "\n";
  if (path.size() > 1) {
    std::vector<std::string> parents;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) parents.push_back(path[i]->title);
    out += "Part of: " + text::join(parents, " > ") + "\n";
  }
  out += "Chapter: " + node->title + "\n";
  out += "Summary: " + node->summary + "\n";
  out += "Writing logic: " + node->thinking;
  return out;
}

void number_tree(ChapterTree& tree) {
  for (std::size_t i = 0; i < tree.roots.size(); ++i) {
    auto& root = tree.roots[i];
    root.node_id = std::to_string(i + 1);
    if (tree.roots.size() == 1) root.role = NodeRole::core;
    else if (i == 0) root.role = NodeRole::supporting;
    else if (i + 1 == tree.roots.size()) root.role = NodeRole::summary;
    else root.role = NodeRole::core;
    std::function<void(ChapterNode&)> number_children = [&](ChapterNode& parent) {
      for (std::size_t j = 0; j < parent.children.size(); ++j) {
        auto& child = parent.children[j];
        child.node_id = parent.node_id + "." + std::to_string(j + 1);
        child.role = NodeRole::section;
        number_children(child);
      }
    };
    number_children(root);
  }
}

ChapterTree parse_outline(std::string_view markdown, std::string_view fallback_title) {
  std::string title;
  std::vector<Draft> roots;
  std::string preamble;
  Draft* current = nullptr;
  std::string normalized(markdown);
  text::replace_all(normalized, "\r\n", "\n");
  for (const auto& line : text::split(normalized, '\n')) {
    auto trimmed = text::trim(line);
    std::size_t hashes = 0;
    while (hashes < trimmed.size() && trimmed[hashes] == '#') ++hashes;
    bool heading = hashes > 0 && hashes < trimmed.size() && trimmed[hashes] == ' ';
    if (!heading) {
      if (current) current->body += line + "\n";
      else preamble += line + "\n";
      continue;
    }
    auto name = clean_title(trimmed.substr(hashes + 1));
    if (hashes == 1 && title.empty() && roots.empty()) {
      title = name;
      continue;
    }
    Draft d;
    d.title = name;
    if (hashes <= 2 || roots.empty()) {
      roots.push_back(std::move(d));
      current = &roots.back();
    } else if (hashes == 3 || roots.back().children.empty()) {
      roots.back().children.push_back(std::move(d));
      current = &roots.back().children.back();
    } else {
      auto& parent = roots.back().children.back();
      parent.children.push_back(std::move(d));
      current = &parent.children.back();
    }
  }
  if (roots.empty()) throw MalformedOutline("outline contains no chapter headings");
  ChapterTree tree;
  tree.title = title.empty() ? std::string(fallback_title) : title;
  for (const auto& r : roots) tree.roots.push_back(finish(r));
  number_tree(tree);
  return tree;
}

std::optional<std::string> outline_violation(const ChapterTree& tree) {
  if (tree.roots.empty()) return "outline has no chapters";
  std::set<std::string> ids;
  for (const auto* n : tree.nodes()) {
    if (!ids.insert(n->node_id).second) return "duplicate node id " + n->node_id;
    if (n->title.empty()) return "chapter " + n->node_id + " has no title";
    if (n->summary.empty()) return "chapter \"" + n->title + "\" has no <summary>";
    if (n->thinking.empty()) return "chapter \"" + n->title + "\" has no <thinking>";
  }
  for (const auto& root : tree.roots) {
    for (const auto& child : root.children) {
      if (!child.children.empty()) {
        return "subsection \"" + child.title + "\" has nested subsections; only two heading levels are allowed";
      }
    }
    std::size_t limit = root.role == NodeRole::supporting ? 2 : root.role == NodeRole::summary ? 0 : 3;
    if (root.children.size() > limit) {
      return std::string(to_string(root.role)) + " chapter \"" + root.title + "\" has " +
             std::to_string(root.children.size()) + " subsections; the limit is " +
             std::to_string(limit);
    }
  }
  return std::nullopt;
}

}  // namespace deepreport
