#include "offline_model.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/evaluator.hpp"
#include "deepreport/synthesizer.hpp"
#include "deepreport/text.hpp"

namespace deepreport::testkit {

namespace {

const std::set<std::string>& filler() {
  static const std::set<std::string> words{"strategic", "impact",    "analysis", "study",  "covering", "involving",
                                           "plus",      "versus",    "report",   "key",    "figures",  "chapter",
                                           "implications", "interactions", "alignment", "map"};
  return words;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<std::string> take(const std::vector<std::string>& v, std::size_t from, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = from; i < v.size() && out.size() < count; ++i) out.push_back(v[i]);
  return out;
}

std::vector<std::string> years_in(std::string_view s) {
  std::vector<std::string> out;
  static const std::regex year(R"(\b(19|20)\d{2}\b)");
  std::string str(s);
  for (std::sregex_iterator it(str.begin(), str.end(), year), end; it != end; ++it) out.push_back(it->str());
  return out;
}

// "Key: value" line of a chapter brief.
std::string brief_field(std::string_view brief, std::string_view key) {
  for (const auto& line : text::split(brief, '\n')) {
    if (line.rfind(std::string(key) + ": ", 0) == 0) return text::trim(line.substr(key.size() + 2));
  }
  return {};
}

std::string sq_block(const std::vector<std::string>& words) {
  return "<sq>" + text::join(words, " ") + "</sq>";
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  for (const auto& w : b) {
    if (std::find(a.begin(), a.end(), w) == a.end()) a.push_back(w);
  }
  return a;
}

std::string strip_markers(std::string s) {
  static const std::regex marker(R"(\s*\[\^\d+\])");
  return std::regex_replace(s, marker, "");
}

std::string with_marker(std::string sentence, int n) {
  sentence = text::trim(sentence);
  if (sentence.empty()) return sentence;
  char last = sentence.back();
  if (last != '.' && last != '!' && last != '?') sentence += '.';
  return sentence + "[^" + std::to_string(n) + "]";
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string reply_intent(const Bindings& b) {
  const auto& query = b.at("query");
  static const std::regex arithmetic(R"(\d+\s*[-+*/x]\s*\d+)");
  auto kw = ordered_keywords(query);
  auto lead = text::casefold(text::trim(query));
  bool invalid = std::regex_search(query, arithmetic) || kw.size() < 2 || lead.rfind("solve", 0) == 0 ||
                 lead.rfind("calculate", 0) == 0 || lead.rfind("polish", 0) == 0 || lead.rfind("translate", 0) == 0;
  if (invalid) return "<reject>This is a calculation or editing request, not a research question.</reject>";
  if (text::words(query).size() >= 24) return "<query>" + text::trim(query) + "</query>";
  return "<confirm>To narrow the scope, please tell me: "
         "1. Which horizon should the report weight most, such as the most recent quarter, the full period named "
         "or the following two years? "
         "2. Which lens should lead the analysis, such as market structure, pricing or policy? "
         "3. Should the report include regional comparisons?</confirm>";
}

std::string reply_outline(const Bindings& b) {
  auto query = b.at("query");
  if (auto cut = query.find(" Scope:"); cut != std::string::npos) query = query.substr(0, cut);
  query = text::trim(query);
  while (!query.empty() && (query.back() == '.' || query.back() == '?')) query.pop_back();
  if (!query.empty()) query[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(query[0])));
  auto kw = ordered_keywords(query);
  auto topic = text::join(take(kw, 0, 5), " ");

  auto chapter = [](std::string_view level, const std::string& title, const std::string& summary,
                    const std::string& thinking) {
    return std::string(level) + " " + title + "\n<summary>" + summary + "</summary>\n<thinking>" + thinking +
           "</thinking>\n\n";
  };
  std::string out = "# " + query + "\n\n";
  out += chapter("##", "Background and Baseline",
                 "Sets the scope and the latest baseline figures for " + topic + ".",
                 "Define the subject and period first, then give the current figures later chapters build on.");
  out += chapter("###", "Market Baseline and Current Figures", "Latest size, share and price figures for " + topic + ".",
                 "Lead with the most recent sourced numbers and compare them with the previous year.");
  out += chapter("###", "Policy and Regulatory Setting", "Rules, incentives and targets that shape " + topic + ".",
                 "State each binding rule with its date, then the actors it affects.");
  out += chapter("##", "Drivers and Competitive Dynamics", "What moves prices, costs and market positions.",
                 "Explain the causal drivers, then show how competitors and regions respond.");
  out += chapter("###", "Price and Cost Drivers", "Price, cost and margin movements for " + topic + ".",
                 "Quantify each driver with dated figures before explaining its mechanism.");
  out += chapter("###", "Competitive and Regional Dynamics", "Market share, competitors and regional differences.",
                 "Compare competitors and regions side by side with sourced shares and volumes.");
  out += chapter("##", "Outlook and Risks", "Expected development and the main risks to it.",
                 "Move from the adoption outlook to the risks that could derail it.");
  out += chapter("###", "Adoption and Growth Outlook", "Forecasts and adoption signals for " + topic + ".",
                 "Use forecasts and survey data with their dates and sources.");
  out += chapter("###", "Risks and Constraints", "Regulatory, market and operational risks for " + topic + ".",
                 "List the constraints with evidence of their size and timing.");
  out += chapter("##", "Conclusions and Recommendations",
                 "Synthesizes the findings into implications and recommendations.",
                 "Restate the main findings of the earlier chapters and turn them into recommendations without "
                 "new data.");
  return out;
}

std::string reply_expand(const Bindings& b) {
  const auto& brief = b.at("chapter_outline");
  auto topic = ordered_keywords(brief_field(brief, "Report"));
  auto chapter = ordered_keywords(brief_field(brief, "Chapter"));
  auto summary = ordered_keywords(brief_field(brief, "Summary"));
  auto years = years_in(brief_field(brief, "Report"));
  bool gaps = brief.find("Gaps found") != std::string::npos;
  std::vector<std::vector<std::string>> queries;
  if (!gaps) {
    queries.push_back(concat(take(topic, 0, 6), take(chapter, 0, 3)));
    queries.push_back(concat(take(topic, 0, 4), take(summary, 0, 3)));
    auto third = take(topic, 0, 5);
    if (!years.empty()) third.insert(third.begin(), years.back());
    queries.push_back(third);
  } else {
    auto first = concat(take(topic, 0, 4), take(chapter, 0, 2));
    first.insert(first.begin(), "latest");
    queries.push_back(first);
    queries.push_back(concat(take(chapter, 0, 3), take(topic, 3, 5)));
    queries.push_back(concat(take(summary, 0, 3), take(topic, 1, 4)));
  }
  std::string out = "Searching for the chapter's figures and their sources.\n";
  for (const auto& q : queries) out += sq_block(q) + "\n";
  return out;
}

struct SegmentLine {
  std::string id;
  std::string text;
};

std::string reply_distill(const Bindings& b) {
  std::vector<SegmentLine> segments;
  static const std::regex line_re(R"(^\[(\d+)\] (.*)$)");
  for (const auto& line : text::split(b.at("search"), '\n')) {
    std::smatch m;
    if (std::regex_match(line, m, line_re)) segments.push_back({m[1], m[2]});
  }
  const auto& brief = b.at("chapter_outline");
  // Chapter words weigh three times the report words.
  auto report = text::content_words(brief_field(brief, "Report"));
  auto chapter = text::content_words(brief_field(brief, "Chapter") + " " + brief_field(brief, "Summary"));
  struct Scored {
    std::size_t score;
    std::size_t index;
  };
  std::vector<Scored> scored;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    bool has_figure = std::any_of(s.text.begin(), s.text.end(), [](unsigned char c) { return std::isdigit(c); });
    bool sentence = !s.text.empty() && s.text.back() == '.' && text::words(s.text).size() >= 8;
    if (!has_figure || !sentence) continue;
    std::size_t score = 0;
    for (const auto& w : text::content_words(s.text)) {
      if (all_digits(w)) continue;
      score += 3 * chapter.count(w) + report.count(w);
    }
    if (score > 0) scored.push_back({score, i});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  if (scored.size() > 3) scored.resize(3);
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.index < b.index; });
  json list = json::array();
  for (const auto& s : scored) {
    list.push_back(json{{"insight", segments[s.index].text}, {"snippets", {segments[s.index].id}}});
  }
  return json{{"knowledge", list}}.dump();
}

std::string reply_profile(const Bindings& b) {
  const auto& brief = b.at("chapter_outline");
  auto lower = text::casefold(brief);
  bool freshness = !years_in(brief).empty() || lower.find("latest") != std::string::npos ||
                   lower.find("current") != std::string::npos;
  auto title = text::casefold(brief_field(brief, "Chapter"));
  bool plurality = title.find("drivers") != std::string::npos || title.find("risks") != std::string::npos ||
                   title.find("dynamics") != std::string::npos;
  bool completeness = title.find(" and ") != std::string::npos;
  return "{ \"freshness\": " + bool_text(freshness) + ", \"plurality\": " + bool_text(plurality) +
         ", \"completeness\": " + bool_text(completeness) + " }";
}

struct DraftFacts {
  std::size_t insights = 0;
  std::set<std::string> sources;
  std::vector<int> years;
};

DraftFacts read_draft(const std::string& draft) {
  DraftFacts f;
  static const std::regex source_re(R"(^Source: (\S+)(?: \(published (\d{4})-\d{2}-\d{2}\))?)");
  for (const auto& line : text::split(draft, '\n')) {
    std::smatch m;
    if (std::regex_search(line, m, source_re)) {
      f.sources.insert(m[1]);
      if (m[2].matched) f.years.push_back(std::stoi(m[2]));
    } else if (line.rfind("- ", 0) == 0) {
      ++f.insights;
    }
  }
  return f;
}

std::string reply_integrity(const Bindings& b) {
  auto f = read_draft(b.at("draft"));
  bool pass = f.insights >= 3 && f.sources.size() >= 2;
  std::string think = "I count " + std::to_string(f.insights) + " sourced points from " +
                      std::to_string(f.sources.size()) + " sources; " +
                      (pass ? "that covers the chapter's figures." : "that is too thin to write the chapter.");
  return json{{"analysis", json{{"think", think}, {"pass", pass}}}}.dump();
}

std::string reply_freshness(const Bindings& b) {
  auto f = read_draft(b.at("draft"));
  auto years = years_in(brief_field(b.at("chapter_outline"), "Report"));
  int required = years.empty() ? 0 : std::stoi(years.back()) - 1;
  if (years.empty()) {
    auto now_years = years_in(b.count("now") ? b.at("now") : std::string());
    required = now_years.empty() ? 0 : std::stoi(now_years.front()) - 1;
  }
  bool pass = std::any_of(f.years.begin(), f.years.end(), [&](int y) { return y >= required; });
  std::string think = pass ? "At least one source is dated " + std::to_string(required) + " or later."
                           : "No source is dated " + std::to_string(required) + " or later.";
  return json{{"analysis", json{{"think", think}, {"type", "time-specific"}, {"pass", pass}}}}.dump();
}

std::string reply_plurality(const Bindings& b) {
  auto f = read_draft(b.at("draft"));
  bool pass = f.sources.size() >= 2;
  std::string think = pass ? "Several independent sources back the points." : "Only one source backs the points.";
  return json{{"analysis", json{{"think", think}, {"pass", pass}}}}.dump();
}

std::string reply_enrichment(const Bindings& b) {
  static const std::regex entry_re(R"(^\[([0-9]+)\] (.*) \(source: )");
  std::vector<std::string> ids;
  std::vector<std::string> insights;
  for (const auto& line : text::split(b.at("knowledge"), '\n')) {
    std::smatch m;
    if (std::regex_search(line, m, entry_re)) {
      ids.push_back(m[1]);
      insights.push_back(m[2]);
    }
  }
  // Quote the five entries closest to the chapter, in memory order.
  const auto& brief = b.at("chapter_outline");
  auto chapter = text::content_words(brief_field(brief, "Chapter") + " " + brief_field(brief, "Summary"));
  std::vector<std::pair<std::size_t, std::size_t>> scored;  // (score, index)
  for (std::size_t i = 0; i < insights.size(); ++i) {
    std::size_t n = 0;
    for (const auto& w : text::content_words(insights[i])) n += chapter.count(w) && !all_digits(w);
    scored.emplace_back(n, i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  if (scored.size() > 5) scored.resize(5);
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
  std::vector<std::string> quoted;
  for (const auto& [score, i] : scored) quoted.push_back(ids[i]);
  std::string answer = scored.empty() ? std::string("No knowledge was provided.") : insights[scored.front().second];
  return json{{"answer", answer}, {"quote_ids", quoted}}.dump();
}

std::string reply_merge(const Bindings& b) {
  std::vector<std::string> points;
  for (const auto& line : text::split(b.at("knowledge"), '\n')) {
    if (line.rfind("- ", 0) == 0) points.push_back(text::trim(line.substr(2)));
  }
  return json{{"merged", text::join(points, " ")}}.dump();
}

std::string reply_content(const Bindings& b) {
  const auto& reference = b.at("reference");
  struct Group {
    int n;
    std::string text;
  };
  std::vector<Group> groups;
  static const std::regex head_re(R"(^\[(\d+)\] .*\(.*\)$)");
  bool in_body = false;
  for (const auto& line : text::split(reference, '\n')) {
    std::smatch m;
    if (std::regex_match(line, m, head_re)) {
      groups.push_back({std::stoi(m[1]), ""});
      in_body = true;
    } else if (in_body && !text::trim(line).empty()) {
      groups.back().text += (groups.back().text.empty() ? "" : " ") + text::trim(line);
    } else {
      in_body = false;
    }
  }
  if (groups.empty()) {
    auto above = strip_markers(b.at("above"));
    auto sentences = split_sentences(above);
    std::string body = "Taken together, the evidence supports a small set of conclusions.";
    for (std::size_t i = 0; i < sentences.size() && i < 4; ++i) body += " " + text::trim(sentences[i]);
    body += "\n\nDecision makers should track these indicators through the end of the period and revisit the "
            "assumptions as new data is published.";
    return body;
  }
  // Groups and sentences are chosen by overlap with the chapter, at most
  // three groups and two sentences each.
  const auto& brief = b.at("chapter_outline");
  auto chapter = text::content_words(brief_field(brief, "Chapter") + " " + brief_field(brief, "Summary"));
  auto overlap = [&](const std::string& s) {
    std::size_t n = 0;
    for (const auto& w : text::content_words(s)) n += chapter.count(w) && !all_digits(w);
    return n;
  };
  struct Picked {
    std::size_t score;
    std::size_t group;
    std::vector<std::string> sentences;
  };
  std::vector<Picked> picked;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto sentences = split_sentences(groups[g].text);
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return overlap(sentences[x]) > overlap(sentences[y]); });
    if (order.size() > 2) order.resize(2);
    std::sort(order.begin(), order.end());
    Picked p{0, g, {}};
    for (auto i : order) {
      p.score += overlap(sentences[i]);
      p.sentences.push_back(sentences[i]);
    }
    picked.push_back(std::move(p));
  }
  std::stable_sort(picked.begin(), picked.end(), [](const Picked& x, const Picked& y) { return x.score > y.score; });
  if (picked.size() > 3) picked.resize(3);
  std::sort(picked.begin(), picked.end(), [](const Picked& x, const Picked& y) { return x.group < y.group; });
  std::string body;
  for (std::size_t i = 0; i < picked.size(); i += 2) {
    std::string paragraph;
    for (std::size_t j = i; j < picked.size() && j < i + 2; ++j) {
      for (const auto& s : picked[j].sentences) {
        auto sentence = with_marker(s, groups[picked[j].group].n);
        if (!sentence.empty()) paragraph += (paragraph.empty() ? "" : " ") + sentence;
      }
    }
    if (!paragraph.empty()) body += (body.empty() ? "" : "\n\n") + paragraph;
  }
  return body;
}

std::string after(const std::string& s, std::string_view key) {
  auto pos = s.find(key);
  return pos == std::string::npos ? std::string() : s.substr(pos + key.size());
}

std::string reply_judge(const ChatCall& call) {
  LexicalJudge judge;
  const auto& u = call.user_text;
  if (call.purpose == "eval_keypoint") {
    auto keypoint = text::trim(u.substr(0, u.find("\n\nReport:\n")).substr(std::string("Keypoint: ").size()));
    return json{{"covered", judge.keypoint_covered(after(u, "\n\nReport:\n"), keypoint)}}.dump();
  }
  if (call.purpose == "eval_structure") {
    auto scale_text = after(call.system_text, "from 0 to ");
    double scale = scale_text.empty() ? 100.0 : std::stod(scale_text);
    return json{{"score", judge.structure_score(after(u, "Heading outline:\n"), scale)}}.dump();
  }
  if (call.purpose == "eval_verify") {
    auto statement = text::trim(u.substr(0, u.find("\n\nDocument:\n")).substr(std::string("Statement: ").size()));
    return json{{"supported", judge.supports(statement, after(u, "\n\nDocument:\n"))}}.dump();
  }
  if (call.purpose == "eval_consistency") {
    auto a = text::trim(u.substr(0, u.find("\nStatement B: ")).substr(std::string("Statement A: ").size()));
    auto label = judge.label_pair(a, after(u, "\nStatement B: "));
    return json{{"similar", label.similar}, {"contradictory", label.contradictory}}.dump();
  }
  throw EndpointError("offline model has no rule for " + call.purpose);
}

}  // namespace

std::vector<std::string> ordered_keywords(std::string_view s) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& w : text::words(s)) {
    if (w.size() < 2 || all_digits(w) || text::is_stopword(w) || filler().count(w)) continue;
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

Bindings recover_bindings(TemplateId id, std::string_view rendered) {
  if (auto cut = rendered.rfind("\n\nCORRECTION\n"); cut != std::string_view::npos) rendered = rendered.substr(0, cut);
  const auto& tpl = prompt_template(id);
  std::set<std::string> slots(tpl.slot_names.begin(), tpl.slot_names.end());
  // Template split into literal text and slot names.
  std::vector<std::pair<bool, std::string>> pieces;
  std::string_view t = tpl.text;
  std::string literal;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '{') {
      auto close = t.find('}', i);
      if (close != std::string_view::npos && slots.count(std::string(t.substr(i + 1, close - i - 1)))) {
        pieces.emplace_back(false, literal);
        literal.clear();
        pieces.emplace_back(true, std::string(t.substr(i + 1, close - i - 1)));
        i = close;
        continue;
      }
    }
    literal += t[i];
  }
  pieces.emplace_back(false, literal);

  Bindings out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& [is_slot, value] = pieces[i];
    if (!is_slot || out.count(value)) {
      const auto& lit = is_slot ? out[value] : value;
      if (rendered.substr(pos, lit.size()) != lit) {
        throw MalformedOutput("prompt text does not match template " + std::string(tpl.name), std::string(rendered));
      }
      pos += lit.size();
      continue;
    }
    std::size_t end = rendered.size();
    if (i + 1 < pieces.size() && !pieces[i + 1].first && !pieces[i + 1].second.empty()) {
      end = rendered.find(pieces[i + 1].second, pos);
      if (end == std::string_view::npos) {
        throw MalformedOutput("prompt text does not match template " + std::string(tpl.name), std::string(rendered));
      }
    }
    out[value] = std::string(rendered.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::map<std::string, std::size_t> OfflineModel::calls_by_purpose() const {
  std::lock_guard lock(mutex_);
  return by_purpose_;
}

std::string OfflineModel::complete(const ChatCall& call) {
  ++calls_;
  {
    std::lock_guard lock(mutex_);
    ++by_purpose_[call.purpose];
  }
  auto id = template_from_name(call.purpose);
  if (!id) return reply_judge(call);
  auto b = recover_bindings(*id, call.user_text);
  switch (*id) {
    case TemplateId::intent_clarification:
      return reply_intent(b);
    case TemplateId::outline_generation:
      return reply_outline(b);
    case TemplateId::search_query_expanding:
      return reply_expand(b);
    case TemplateId::information_distillation:
      return reply_distill(b);
    case TemplateId::evaluation_judgment:
      return reply_profile(b);
    case TemplateId::integrity_evaluation:
      return reply_integrity(b);
    case TemplateId::freshness_evaluation:
      return reply_freshness(b);
    case TemplateId::plurality_evaluation:
      return reply_plurality(b);
    case TemplateId::knowledge_enrichment:
      return reply_enrichment(b);
    case TemplateId::content_generation_user:
      return reply_content(b);
    case TemplateId::knowledge_merging:
      return reply_merge(b);
    case TemplateId::content_generation_system:
      break;
  }
  throw EndpointError("offline model has no rule for " + call.purpose);
}

std::string ScriptedModel::complete(const ChatCall& call) {
  {
    std::lock_guard lock(mutex_);
    calls_.push_back(call);
  }
  if (auto reply = rule_(call)) return *reply;
  return fallback_->complete(call);
}

std::vector<ChatCall> ScriptedModel::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

void ScriptedModel::clear() {
  std::lock_guard lock(mutex_);
  calls_.clear();
}

}  // namespace deepreport::testkit
