#include "deepreport/synthesizer.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/structured.hpp"
#include "deepreport/text.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace {

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> set{
      "e.g", "i.e", "etc", "vs", "mr", "mrs", "ms", "dr", "prof", "inc", "ltd", "co", "corp", "jr", "sr", "st",
      "no", "nos", "fig", "approx", "est", "al", "u.s", "u.k", "e.u", "jan", "feb", "mar", "apr", "jun", "jul",
      "aug", "sep", "sept", "oct", "nov", "dec", "mt", "bn", "mn"};
  return set;
}

bool is_abbreviation(std::string_view s, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0 && s[start - 1] != ' ' && s[start - 1] != '(') --start;
  std::string word = text::casefold(s.substr(start, dot - start));
  if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) return true;
  return abbreviations().count(word) > 0;
}

/// Length of a "[^n]" marker starting at i, 0 if none.
std::size_t marker_at(std::string_view s, std::size_t i) {
  if (i + 3 >= s.size() || s[i] != '[' || s[i + 1] != '^') return 0;
  std::size_t j = i + 2;
  while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  if (j == i + 2 || j >= s.size() || s[j] != ']') return 0;
  return j + 1 - i;
}

std::string strip_markers(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (auto len = marker_at(s, i)) {
      i += len;
      continue;
    }
    out += s[i++];
  }
  return out;
}

std::string clean_statement(std::string_view s) {
  std::string t = strip_markers(s);
  text::replace_all(t, "**", "");
  text::replace_all(t, "__", "");
  text::replace_all(t, "`", "");
  t = text::collapse_whitespace(t);
  // A marker removed before the final period leaves "word ." behind.
  for (std::string_view p : {" .", " ,", " ;", " !", " ?"}) text::replace_all(t, p, p.substr(1));
  return t;
}

/// Removes tagged blocks; `keep` returns replacement text for each block body.
template <typename Keep>
std::string replace_blocks(std::string_view s, std::string_view tag, Keep keep) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto a = s.find(open, pos);
    if (a == std::string_view::npos) break;
    auto b = s.find(close, a);
    if (b == std::string_view::npos) break;
    out.append(s.substr(pos, a - pos));
    out += keep(s.substr(a + open.size(), b - a - open.size()));
    pos = b + close.size();
  }
  out.append(s.substr(pos));
  return out;
}

std::string inner(std::string_view body, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  auto a = body.find(open);
  if (a == std::string_view::npos) return {};
  auto b = body.find(close, a);
  if (b == std::string_view::npos) return {};
  return text::trim(body.substr(a + open.size(), b - a - open.size()));
}

bool is_list_item(std::string_view line) {
  if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0 || line.rfind("+ ", 0) == 0) return true;
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  return i > 0 && i + 1 < line.size() && (line[i] == '.' || line[i] == ')') && line[i + 1] == ' ';
}

std::string strip_list_marker(std::string_view line) {
  if (!is_list_item(line)) return std::string(line);
  return text::trim(line.substr(line.find(' ') + 1));
}

/// Prose paragraphs of a segment: headings and markdown table rows dropped,
/// list items kept as separate paragraphs, chart descriptions as their own
/// paragraph, <table> blocks removed.
std::vector<std::string> prose_paragraphs(std::string_view markdown) {
  auto without_tables = replace_blocks(markdown, "table", [](std::string_view) { return std::string("\n\n"); });
  auto with_charts = replace_blocks(without_tables, "chart", [](std::string_view body) {
    return "\n\n" + inner(body, "description") + "\n\n";
  });
  std::vector<std::string> paragraphs;
  for (const auto& block : text::split_paragraphs(with_charts)) {
    std::string current;
    auto flush = [&] {
      auto t = text::collapse_whitespace(current);
      if (!t.empty()) paragraphs.push_back(t);
      current.clear();
    };
    for (const auto& raw_line : text::split(block, '\n')) {
      auto line = text::trim(raw_line);
      if (line.empty() || line[0] == '#' || line[0] == '|') {
        flush();
        continue;
      }
      if (is_list_item(line)) {
        flush();
        current = strip_list_marker(line);
        flush();
        continue;
      }
      current += " " + line;
    }
    flush();
  }
  return paragraphs;
}

std::string strip_headings(std::string_view raw) {
  std::vector<std::string> kept;
  std::string normalized(raw);
  text::replace_all(normalized, "\r\n", "\n");
  for (auto& line : text::split(normalized, '\n')) {
    auto t = text::trim(line);
    if (!t.empty() && t[0] == '#') continue;
    kept.push_back(line);
  }
  return text::trim(text::join(kept, "\n"));
}

std::string heading_for(const ChapterNode& node, std::size_t depth) {
  std::string hashes(depth + 2, '#');
  bool root = node.node_id.find('.') == std::string::npos;
  return hashes + " " + node.node_id + (root ? ". " : " ") + node.title;
}

std::string keep_tail(const std::string& s, std::size_t max_chars) {
  if (s.size() <= max_chars) return s;
  auto cut = s.size() - max_chars;
  while (cut < s.size() && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) ++cut;
  auto nl = s.find('\n', cut);
  return nl != std::string::npos && nl + 1 < s.size() ? s.substr(nl + 1) : s.substr(cut);
}

}  // namespace

json ClaimSourcePair::to_json() const {
  return json{{"position", position},
              {"statement", statement},
              {"marker", marker ? json(*marker) : json(nullptr)},
              {"source_url", source_url ? json(*source_url) : json(nullptr)},
              {"entry_id", entry_id ? json(*entry_id) : json(nullptr)}};
}

ClaimSourcePair ClaimSourcePair::from_json(const json& v) {
  ClaimSourcePair p;
  p.position = v.at("position").get<std::size_t>();
  p.statement = v.at("statement").get<std::string>();
  if (v.contains("marker") && v["marker"].is_number_integer()) p.marker = v["marker"].get<int>();
  if (v.contains("source_url") && v["source_url"].is_string()) p.source_url = v["source_url"].get<std::string>();
  if (v.contains("entry_id") && v["entry_id"].is_string()) p.entry_id = v["entry_id"].get<std::string>();
  return p;
}

std::vector<MergedClaimGroup> group_by_source(const std::vector<KnowledgeEntry>& entries) {
  std::vector<MergedClaimGroup> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& e : entries) {
    auto [it, inserted] = index.emplace(e.source_url, groups.size());
    if (inserted) {
      groups.push_back(MergedClaimGroup{e.source_url, e.source_title, e.publish_time, {}, {}});
    }
    auto& g = groups[it->second];
    g.entry_ids.push_back(e.entry_id);
    g.merged_text += (g.merged_text.empty() ? "" : " ") + e.insight;
  }
  return groups;
}

std::vector<std::string> split_sentences(std::string_view block) {
  const std::string s = text::collapse_whitespace(block);
  const std::size_t n = s.size();
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n;) {
    char c = s[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
    while (j < n && (s[j] == ')' || s[j] == '"' || s[j] == '\'' || s[j] == '*')) ++j;
    std::size_t k = j;
    while (k < n && s[k] == ' ') ++k;
    bool any_marker = false;
    while (auto len = marker_at(s, k)) {
      any_marker = true;
      k += len;
    }
    if (any_marker) j = k;
    if (j < n && s[j] != ' ') {
      i = j;
      continue;
    }
    if (c == '.' && j == i + 1 && is_abbreviation(s, i) && !any_marker) {
      i = j;
      continue;
    }
    auto sentence = text::trim(s.substr(start, j - start));
    if (!sentence.empty()) out.push_back(sentence);
    start = j;
    i = j;
  }
  auto tail = text::trim(s.substr(std::min(start, n)));
  if (!tail.empty()) out.push_back(tail);
  return out;
}

std::vector<int> find_markers(std::string_view s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (auto len = marker_at(s, i)) {
      out.push_back(std::stoi(std::string(s.substr(i + 2, len - 3))));
      i += len - 1;
    }
  }
  return out;
}

std::vector<ClaimSourcePair> match_references(const ReportSegment& segment) {
  std::vector<ClaimSourcePair> pairs;
  auto bind = [&](const std::string& statement, std::optional<int> marker) {
    ClaimSourcePair p;
    p.position = pairs.size();
    p.statement = statement;
    p.marker = marker;
    if (marker) {
      if (auto it = segment.local_sources.find(*marker); it != segment.local_sources.end()) p.source_url = it->second;
      if (auto it = segment.local_citations.find(*marker); it != segment.local_citations.end()) p.entry_id = it->second;
    }
    pairs.push_back(std::move(p));
  };
  for (const auto& paragraph : prose_paragraphs(segment.markdown_text)) {
    std::vector<std::string> pending;
    for (const auto& sentence : split_sentences(paragraph)) {
      auto statement = clean_statement(sentence);
      std::vector<int> markers;
      for (int m : find_markers(sentence)) {
        if (std::find(markers.begin(), markers.end(), m) == markers.end()) markers.push_back(m);
      }
      if (markers.empty()) {
        if (!statement.empty()) pending.push_back(statement);
        continue;
      }
      for (const auto& p : pending) bind(p, markers.back());
      pending.clear();
      if (statement.empty()) continue;
      for (int m : markers) bind(statement, m);
    }
    for (const auto& p : pending) bind(p, std::nullopt);
  }
  return pairs;
}

std::size_t sanitize_tool_blocks(std::string& markdown) {
  std::size_t removed = 0;
  markdown = replace_blocks(markdown, "chart", [&](std::string_view body) {
    if (inner(body, "description").empty()) {
      ++removed;
      return std::string();
    }
    return "<chart>" + std::string(body) + "</chart>";
  });
  markdown = replace_blocks(markdown, "table", [&](std::string_view body) {
    if (inner(body, "title").empty() || inner(body, "markdown").empty()) {
      ++removed;
      return std::string();
    }
    return "<table>" + std::string(body) + "</table>";
  });
  return removed;
}

std::string summarize_segment(std::string_view markdown, std::size_t max_chars) {
  std::vector<std::string> firsts;
  for (const auto& p : prose_paragraphs(markdown)) {
    auto sentences = split_sentences(p);
    if (!sentences.empty()) firsts.push_back(clean_statement(sentences.front()));
  }
  std::string out;
  for (const auto& f : firsts) {
    if (out.size() + f.size() + 1 > max_chars) break;
    out += (out.empty() ? "" : " ") + f;
  }
  if (out.empty() && !firsts.empty()) out = text::truncate_utf8(firsts.front(), max_chars);
  return out;
}

Report assemble_report(const ChapterTree& tree, std::vector<ReportSegment> segments,
                       const TokenEstimator& estimator, double wall_time_seconds) {
  Report report;
  report.title = tree.title;
  std::map<std::string, int> by_url;
  std::string body = "# " + tree.title + "\n";
  std::set<std::string> emitted;
  for (auto& seg : segments) {
    std::map<int, int> to_global;
    for (int local : find_markers(seg.markdown_text)) {
      if (to_global.count(local)) continue;
      auto url = seg.local_sources.count(local) ? seg.local_sources.at(local) : std::string();
      if (url.empty()) continue;
      auto [it, inserted] = by_url.emplace(url, static_cast<int>(report.references.size()) + 1);
      if (inserted) {
        report.references.push_back(
            Reference{it->second, url, seg.local_citations[local], seg.local_titles[local]});
      }
      to_global[local] = it->second;
    }
    std::string rewritten;
    const auto& text = seg.markdown_text;
    for (std::size_t i = 0; i < text.size();) {
      if (auto len = marker_at(text, i)) {
        int local = std::stoi(text.substr(i + 2, len - 3));
        if (auto g = to_global.find(local); g != to_global.end()) rewritten += "[^" + std::to_string(g->second) + "]";
        i += len;
        continue;
      }
      rewritten += text[i++];
    }
    std::map<int, std::string> citations, sources, titles;
    for (const auto& [local, global] : to_global) {
      citations[global] = seg.local_citations[local];
      sources[global] = seg.local_sources[local];
      titles[global] = seg.local_titles[local];
    }
    seg.markdown_text = rewritten;
    seg.local_citations = std::move(citations);
    seg.local_sources = std::move(sources);
    seg.local_titles = std::move(titles);

    auto path = tree.path_to(seg.chapter_id);
    for (std::size_t d = 0; d < path.size(); ++d) {
      if (emitted.insert(path[d]->node_id).second) body += "\n" + heading_for(*path[d], d) + "\n";
    }
    body += "\n" + seg.markdown_text + "\n";

    for (auto pair : match_references(seg)) {
      pair.position = report.claim_source_pairs.size();
      report.claim_source_pairs.push_back(std::move(pair));
    }
  }
  if (!report.references.empty()) {
    body += "\n## References\n\n";
    for (const auto& r : report.references) {
      body += "[^" + std::to_string(r.number) + "]: " + (r.title.empty() ? r.source_url : r.title + ", " + r.source_url) + "\n";
    }
  }
  report.markdown = body;
  report.segments = std::move(segments);
  report.profile.length_ktokens = static_cast<double>(estimator(report.markdown)) / 1000.0;
  report.profile.wall_time_seconds = wall_time_seconds;
  return report;
}

std::string sidecar_ndjson(const Report& report) {
  std::string out;
  for (const auto& p : report.claim_source_pairs) {
    out += to_line(p.to_json());
    out += '\n';
  }
  return out;
}

std::vector<ClaimSourcePair> read_sidecar(const std::filesystem::path& path) {
  std::vector<ClaimSourcePair> pairs;
  read_ndjson(path, [&](std::size_t line, const json& v) {
    try {
      pairs.push_back(ClaimSourcePair::from_json(v));
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad sidecar record: ") + e.what(), line);
    }
  });
  return pairs;
}

std::vector<std::string> citation_problems(const Report& report) {
  static const std::regex def_re(R"(^\[\^(\d+)\]:\s*(.*)$)");
  std::map<int, std::string> defs;
  std::string body;
  for (const auto& line : text::split(report.markdown, '\n')) {
    std::smatch m;
    if (std::regex_match(line, m, def_re)) {
      defs[std::stoi(m[1].str())] = m[2].str();
    } else {
      body += line + "\n";
    }
  }
  std::vector<std::string> problems;
  std::set<int> used;
  for (int n : find_markers(body)) {
    used.insert(n);
    if (!defs.count(n)) problems.push_back("[^" + std::to_string(n) + "] has no reference");
  }
  int expected = 1;
  for (const auto& [n, def] : defs) {
    if (n != expected++) problems.push_back("reference numbers are not dense at " + std::to_string(n));
    if (!used.count(n)) problems.push_back("reference " + std::to_string(n) + " is never cited");
  }
  for (const auto& r : report.references) {
    try {
      if (canonicalize(r.source_url) != r.source_url) problems.push_back("reference URL is not canonical: " + r.source_url);
    } catch (const Error&) {
      problems.push_back("reference URL is invalid: " + r.source_url);
    }
    if (r.entry_id.empty()) problems.push_back("reference " + std::to_string(r.number) + " has no memory entry");
  }
  return problems;
}

Synthesizer::Synthesizer(std::shared_ptr<Gateway> gateway, std::shared_ptr<Clock> clock, SynthesizerConfig config)
    : gateway_(std::move(gateway)), clock_(clock ? std::move(clock) : default_clock()), config_(std::move(config)) {
  if (!gateway_) throw ConfigError("synthesizer needs a gateway");
}

std::vector<MergedClaimGroup> Synthesizer::merge_knowledge(const ChapterTree& tree, const ChapterNode& chapter,
                                                           const std::vector<KnowledgeEntry>& entries) {
  if (entries.empty()) throw PreconditionError("merge_knowledge needs at least one entry");
  auto groups = group_by_source(entries);
  std::map<std::string, const KnowledgeEntry*> by_id;
  for (const auto& e : entries) by_id[e.entry_id] = &e;
  for (auto& g : groups) {
    if (g.entry_ids.size() == 1) continue;
    std::string points;
    std::string originals;
    for (const auto& id : g.entry_ids) {
      points += "- " + by_id[id]->insight + "\n";
      originals += by_id[id]->insight + "\n";
    }
    auto call = gateway_->prompt_call(
        TemplateId::knowledge_merging,
        {{"chapter_outline", tree.chapter_brief(chapter.node_id)},
         {"source", g.source_title.empty() ? g.source_url : g.source_title + " (" + g.source_url + ")"},
         {"knowledge", points}});
    const auto ids = g.entry_ids;
    std::function<std::string(const std::string&)> parse = [ids, originals](const std::string& raw) {
      auto merged = text::collapse_whitespace(parse_structured(raw, SchemaId::merged_passage).value.at("merged").get<std::string>());
      if (merged.empty()) throw MalformedOutput("merged passage is empty", raw);
      for (const auto& id : ids) {
        if (merged.find(id) != std::string::npos && originals.find(id) == std::string::npos) {
          throw MalformedOutput("merged passage mentions knowledge id " + id, raw);
        }
      }
      return merged;
    };
    g.merged_text = gateway_->complete_parsed(call, parse, 1);
  }
  return groups;
}

ReportSegment Synthesizer::synthesize_segment(const ChapterTree& tree, const ChapterNode& chapter,
                                              const std::vector<MergedClaimGroup>& groups,
                                              const std::string& previous_summary, const std::string& query,
                                              const std::string& enrichment, EventSink& events) {
  const bool closing = chapter.role == NodeRole::summary;
  if (groups.empty() && !closing) {
    throw PreconditionError("chapter " + chapter.node_id + " has no knowledge to write from");
  }
  std::string reference;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    reference += "[" + std::to_string(i + 1) + "] " + (g.source_title.empty() ? g.source_url : g.source_title);
    reference += " (" + g.source_url;
    if (g.publish_time) reference += ", published " + format_date(to_date(*g.publish_time));
    reference += ")\n" + g.merged_text + "\n\n";
  }
  if (groups.empty()) {
    reference = "(No new reference material for this chapter: draw only on the previous chapters' content.)";
  }
  std::string brief = tree.chapter_brief(chapter.node_id);
  if (!enrichment.empty()) brief += "\nKey findings: " + enrichment;
  auto call = gateway_->prompt_call(TemplateId::content_generation_user,
                                    {{"domain", config_.domain},
                                     {"now", format_date(to_date(clock_->now_seconds()))},
                                     {"query", query},
                                     {"chapter_outline", brief},
                                     {"above", previous_summary.empty() ? std::string("(start of report)") : previous_summary},
                                     {"outline", tree.render_outline()},
                                     {"reference", reference}},
                                    TemplateId::content_generation_system);
  bool unbound = false;
  std::string unbound_detail;
  const std::size_t group_count = groups.size();
  std::function<std::string(const std::string&)> parse = [&](const std::string& raw) {
    auto body = strip_headings(raw);
    if (body.empty()) throw MalformedOutput("chapter text is empty", raw);
    for (int m : find_markers(body)) {
      if (m < 1 || static_cast<std::size_t>(m) > group_count) {
        unbound = true;
        unbound_detail = "[^" + std::to_string(m) + "] does not match any of the " + std::to_string(group_count) +
                         " numbered references";
        throw CitationUnbound(unbound_detail);
      }
    }
    unbound = false;
    return body;
  };
  std::string body;
  try {
    body = gateway_->complete_parsed(call, parse, 1);
  } catch (const MalformedOutput&) {
    if (unbound) throw CitationUnbound("chapter " + chapter.node_id + ": " + unbound_detail);
    throw;
  }
  if (auto removed = sanitize_tool_blocks(body)) {
    events.warn("incomplete chart or table blocks removed", json{{"chapter_id", chapter.node_id}, {"removed", removed}});
  }
  ReportSegment seg;
  seg.chapter_id = chapter.node_id;
  seg.markdown_text = body;
  seg.summary_node = closing;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    int n = static_cast<int>(i) + 1;
    seg.local_citations[n] = groups[i].entry_ids.front();
    seg.local_sources[n] = groups[i].source_url;
    seg.local_titles[n] = groups[i].source_title;
  }
  seg.summary_of_segment = summarize_segment(body, config_.summary_chars);
  if (!closing) {
    auto paragraphs = prose_paragraphs(body).size();
    auto markers = find_markers(body).size();
    if (markers < paragraphs) {
      events.warn("fewer citations than paragraphs",
                  json{{"chapter_id", chapter.node_id}, {"paragraphs", paragraphs}, {"citations", markers}});
    }
  }
  return seg;
}

Report Synthesizer::write_report(const ChapterTree& tree, const MemoryStore& memory, const std::string& query,
                                 const std::map<std::string, std::string>& enrichments, EventSink& events,
                                 Timestamp started_at) {
  std::vector<ReportSegment> segments;
  std::string above;
  for (const auto* leaf : tree.leaves()) {
    const bool closing = leaf->role == NodeRole::summary && leaf->node_id.find('.') == std::string::npos;
    std::vector<MergedClaimGroup> groups;
    if (!closing) {
      std::optional<std::set<std::string>> only;
      if (!leaf->knowledge_ids.empty()) only = std::set<std::string>(leaf->knowledge_ids.begin(), leaf->knowledge_ids.end());
      auto view = memory.view_for_writing(leaf->node_id, config_.token_budget, only);
      if (view.entries.empty()) {
        events.warn("chapter has no recorded knowledge; left out of the report",
                    json{{"chapter_id", leaf->node_id}, {"title", leaf->title}});
        continue;
      }
      try {
        groups = merge_knowledge(tree, *leaf, view.entries);
      } catch (const MalformedOutput& e) {
        groups = group_by_source(view.entries);
        events.warn("knowledge merge failed; same-source insights concatenated",
                    json{{"chapter_id", leaf->node_id}, {"error", e.what()}});
      }
    }
    auto enrichment = enrichments.count(leaf->node_id) ? enrichments.at(leaf->node_id) : std::string();
    auto context = keep_tail(above, closing ? config_.closing_above_chars : config_.above_chars);
    auto seg = synthesize_segment(tree, *leaf, groups, context, query, enrichment, events);
    events.emit(EventKind::segment_written, json{{"chapter_id", leaf->node_id},
                                                  {"chars", text::utf8_length(seg.markdown_text)},
                                                  {"citations", find_markers(seg.markdown_text).size()}});
    above += leaf->title + ": " + seg.summary_of_segment + "\n";
    segments.push_back(std::move(seg));
  }
  auto elapsed = std::chrono::duration<double>(clock_->now_seconds() - started_at).count();
  return assemble_report(tree, std::move(segments), [&memory](std::string_view s) { return memory.estimate(s); }, elapsed);
}

}  // namespace deepreport
