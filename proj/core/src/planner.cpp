#include "deepreport/planner.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/tagged.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

constexpr std::string_view kEmDash = "\xE2\x80\x94";

std::string strip_punct(std::string s) {
  s = text::trim(s);
  while (!s.empty() && std::string_view(".,;:?!").find(s.back()) != std::string_view::npos) {
    s.pop_back();
  }
  while (!s.empty() && std::string_view(".,;:").find(s.front()) != std::string_view::npos) {
    s.erase(s.begin());
  }
  return text::trim(s);
}

std::string strip_leading_conjunction(std::string s) {
  s = text::trim(s);
  for (std::string_view c : {"or ", "and ", "Or ", "And "}) {
    if (s.rfind(c, 0) == 0) return text::trim(s.substr(c.size()));
  }
  return s;
}

/// Comma split that ignores commas inside parentheses.
std::vector<std::string> split_top_level(std::string_view s) {
  std::vector<std::string> parts;
  std::string current;
  int depth = 0;
  for (char c : s) {
    if (c == '(' || c == '[') ++depth;
    if ((c == ')' || c == ']') && depth > 0) --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

std::size_t find_ci(std::string_view haystack, std::string_view needle) {
  auto lower = text::casefold(haystack);
  return lower.find(text::casefold(needle));
}

std::vector<std::string> word_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : text::split(text::collapse_whitespace(s), ' ')) {
    if (!w.empty()) out.push_back(w);
  }
  return out;
}

bool is_article(std::string_view w) {
  auto l = text::casefold(w);
  return l == "the" || l == "a" || l == "an";
}

/// Last `k` words of `s`, extended by a preceding article.
std::string tail_words(std::string_view s, std::size_t k) {
  auto words = word_list(s);
  if (words.size() <= k) return text::join(words, " ");
  std::size_t start = words.size() - k;
  if (start > 0 && is_article(words[start - 1])) --start;
  return text::join(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(start), words.end()), " ");
}

std::vector<std::string> ordered_content_words(std::string_view s) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& w : text::words(s)) {
    if (w.size() < 2 || text::is_stopword(w)) continue;
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

std::string first_n(const std::vector<std::string>& words, std::size_t n) {
  return text::join(std::vector<std::string>(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(std::min(n, words.size()))), " ");
}

}  // namespace

std::string_view to_string(IntentKind kind) {
  switch (kind) {
    case IntentKind::confirm: return "confirm";
    case IntentKind::query: return "query";
    case IntentKind::reject: return "reject";
  }
  return "query";
}

json IntentDecision::to_json() const {
  json qs = json::array();
  for (const auto& q : questions) qs.push_back(json{{"text", q.text}, {"options", q.options}});
  json out{{"kind", std::string(to_string(kind))}, {"questions", qs}};
  if (reject_reason) out["reject_reason"] = *reject_reason;
  return out;
}

json ClarifiedIntent::to_json() const {
  json ex = json::array();
  for (const auto& e : exchanges) ex.push_back(json{{"question", e.question}, {"answer", e.answer}});
  return json{{"original_query", original_query},
              {"exchanges", ex},
              {"resolved_query", resolved_query},
              {"auto_expanded", auto_expanded}};
}

std::vector<std::string> extract_options(std::string_view question_in) {
  std::string q = strip_punct(std::string(question_in));
  std::vector<std::string> items;
  bool trim_first = false;

  if (auto a = q.find(kEmDash); a != std::string::npos) {
    auto b = q.find(kEmDash, a + kEmDash.size());
    items = split_top_level(q.substr(a + kEmDash.size(),
                                     b == std::string::npos ? std::string::npos : b - a - kEmDash.size()));
  } else {
    std::size_t cue_end = std::string::npos;
    for (std::string_view cue : {" like ", " such as ", " e.g. ", " e.g., ", " including ", " between "}) {
      auto at = find_ci(q, cue);
      if (at != std::string::npos && (cue_end == std::string::npos || at + cue.size() < cue_end)) {
        cue_end = at + cue.size();
      }
    }
    if (cue_end != std::string::npos) {
      items = split_top_level(q.substr(cue_end));
    } else if (find_ci(q, " or ") != std::string::npos) {
      items = split_top_level(q);
      trim_first = true;
    }
  }

  // "A or B" / "A and B" inside a single item.
  if (items.size() == 1 || (trim_first && items.size() == 1)) {
    std::string only = items.empty() ? std::string() : items[0];
    for (std::string_view sep : {" or ", " and "}) {
      auto at = find_ci(only, sep);
      if (at != std::string::npos) {
        items = {only.substr(0, at), only.substr(at + sep.size())};
        break;
      }
    }
  } else if (!items.empty()) {
    // The last comma item may still hold "X or Y" when no Oxford comma.
    auto& last = items.back();
    auto at = find_ci(last, " or ");
    if (at != std::string::npos && text::trim(last.substr(0, at)).size() > 0 &&
        text::trim(last).rfind("or ", 0) != 0) {
      std::string right = last.substr(at + 4);
      last = last.substr(0, at);
      items.push_back(right);
    }
  }

  std::vector<std::string> options;
  for (auto& item : items) {
    auto cleaned = strip_punct(strip_leading_conjunction(item));
    if (!cleaned.empty()) options.push_back(cleaned);
  }
  if (trim_first && options.size() >= 2) {
    std::size_t k = 1;
    for (std::size_t i = 1; i < options.size(); ++i) k = std::max(k, word_list(options[i]).size());
    options[0] = tail_words(options[0], k);
  }
  std::vector<std::string> distinct;
  std::set<std::string> seen;
  for (auto& o : options) {
    if (seen.insert(text::casefold(o)).second) distinct.push_back(o);
  }
  if (distinct.size() < 2) return {"Yes", "No"};
  if (distinct.size() > 3) distinct.resize(3);
  return distinct;
}

std::vector<ClarifyQuestion> extract_questions(std::string_view body_in) {
  std::string body = text::collapse_whitespace(body_in);
  std::vector<std::pair<std::size_t, std::size_t>> markers;  // (marker start, text start)
  std::size_t pos = 0;
  for (int n = 1; n <= 9; ++n) {
    std::regex re("(^|\\s)" + std::to_string(n) + "[.)]\\s");
    std::smatch m;
    std::string rest = body.substr(pos);
    if (!std::regex_search(rest, m, re)) break;
    std::size_t start = pos + static_cast<std::size_t>(m.position(0)) + m[1].length();
    std::size_t text_start = pos + static_cast<std::size_t>(m.position(0) + m.length(0));
    markers.emplace_back(start, text_start);
    pos = text_start;
  }
  std::vector<std::string> texts;
  if (!markers.empty()) {
    for (std::size_t i = 0; i < markers.size(); ++i) {
      std::size_t end = i + 1 < markers.size() ? markers[i + 1].first : body.size();
      texts.push_back(text::trim(body.substr(markers[i].second, end - markers[i].second)));
    }
  } else {
    std::size_t start = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] != '?') continue;
      std::string piece = body.substr(start, i + 1 - start);
      // Drop a lead-in such as "To keep it focused, could you specify:".
      auto colon = piece.rfind(':');
      if (colon != std::string::npos && colon + 1 < piece.size()) piece = piece.substr(colon + 1);
      texts.push_back(text::trim(piece));
      start = i + 1;
    }
    if (texts.empty() && !text::trim(body).empty()) texts.push_back(text::trim(body));
  }
  std::vector<ClarifyQuestion> questions;
  for (auto& t : texts) {
    if (t.empty()) continue;
    questions.push_back(ClarifyQuestion{t, extract_options(t)});
    if (questions.size() == 3) break;
  }
  return questions;
}

IntentDecision parse_intent(std::string_view reply) {
  struct Candidate {
    IntentKind kind;
    std::string_view tag;
    std::size_t at;
  };
  std::vector<Candidate> found;
  for (auto [kind, tag] : {std::pair{IntentKind::confirm, std::string_view("confirm")},
                           std::pair{IntentKind::query, std::string_view("query")},
                           std::pair{IntentKind::reject, std::string_view("reject")}}) {
    auto at = reply.find("<" + std::string(tag) + ">");
    if (at != std::string_view::npos) found.push_back({kind, tag, at});
  }
  if (found.empty()) {
    throw MalformedOutput("clarification reply has no <confirm>, <query> or <reject> tag",
                          std::string(reply));
  }
  auto first = *std::min_element(found.begin(), found.end(),
                                 [](const Candidate& a, const Candidate& b) { return a.at < b.at; });
  std::vector<TaggedBlock> blocks;
  try {
    blocks = parse_tagged(reply, first.tag);
  } catch (const UnbalancedTag& e) {
    throw MalformedOutput(e.what(), std::string(reply));
  }
  IntentDecision decision;
  decision.kind = first.kind;
  const std::string body = blocks.empty() ? std::string() : blocks.front().body;
  if (first.kind == IntentKind::reject) {
    decision.reject_reason = text::collapse_whitespace(body);
  } else if (first.kind == IntentKind::confirm) {
    decision.questions = extract_questions(body);
    if (decision.questions.empty()) {
      throw MalformedOutput("<confirm> block holds no question", std::string(reply));
    }
    auto collapsed = text::collapse_whitespace(body);
    auto marker = collapsed.find(decision.questions.front().text);
    if (marker != std::string::npos) {
      auto pre = text::trim(collapsed.substr(0, marker));
      if (pre.size() >= 2 && pre.substr(pre.size() - 2) == "1.") pre = text::trim(pre.substr(0, pre.size() - 2));
      decision.preamble = pre;
    }
  }
  return decision;
}

ClarifiedIntent resolve_intent(std::string_view original_query, const IntentDecision& decision,
                               const std::optional<std::vector<std::string>>& answers) {
  if (decision.kind == IntentKind::reject) {
    throw RejectedQuery("query rejected: " + decision.reject_reason.value_or("invalid request"));
  }
  ClarifiedIntent intent;
  intent.original_query = text::trim(original_query);
  if (intent.original_query.empty()) throw PreconditionError("query must not be empty");
  intent.resolved_query = intent.original_query;
  if (decision.kind == IntentKind::query || decision.questions.empty()) return intent;

  std::vector<std::string> constraints;
  if (answers) {
    if (answers->size() != decision.questions.size()) {
      throw AnswerCountMismatch("expected " + std::to_string(decision.questions.size()) +
                                " answers, got " + std::to_string(answers->size()));
    }
    for (std::size_t i = 0; i < answers->size(); ++i) {
      auto answer = text::collapse_whitespace((*answers)[i]);
      intent.exchanges.push_back({decision.questions[i].text, answer});
      if (!answer.empty()) constraints.push_back(answer);
    }
  } else {
    intent.auto_expanded = true;
    for (const auto& q : decision.questions) {
      intent.exchanges.push_back({q.text, "Cover all options: " + text::join(q.options, "; ")});
      bool yes_no = q.options == std::vector<std::string>{"Yes", "No"};
      constraints.push_back(yes_no ? strip_punct(q.text) : text::join(q.options, ", "));
    }
  }
  if (!constraints.empty()) {
    intent.resolved_query += " Scope: " + text::join(constraints, "; ") + ".";
  }
  return intent;
}

std::size_t ReferenceBundle::chars() const {
  std::size_t total = 0;
  for (const auto& e : excerpts) total += text::utf8_length(e.text);
  return total;
}

std::string ReferenceBundle::render() const {
  if (excerpts.empty()) return "(no reference material was retrieved)";
  std::string out;
  for (std::size_t i = 0; i < excerpts.size(); ++i) {
    const auto& e = excerpts[i];
    out += "[" + std::to_string(i + 1) + "] " + (e.title.empty() ? e.url : e.title) + "\n";
    out += "URL: " + e.url + "\n";
    if (e.publish_time) out += "Published: " + format_date(to_date(*e.publish_time)) + "\n";
    out += e.text + "\n\n";
  }
  return out;
}

std::vector<std::string> preliminary_queries(const ClarifiedIntent& intent) {
  std::vector<std::string> queries{intent.resolved_query};
  auto base = ordered_content_words(intent.original_query);
  std::vector<std::string> answer_words;
  for (const auto& e : intent.exchanges) {
    for (auto& w : ordered_content_words(e.answer)) {
      if (w == "cover" || w == "options" || w == "yes") continue;
      if (std::find(base.begin(), base.end(), w) == base.end() &&
          std::find(answer_words.begin(), answer_words.end(), w) == answer_words.end()) {
        answer_words.push_back(w);
      }
    }
  }
  std::vector<std::string> variants{first_n(base, 8)};
  if (!answer_words.empty()) variants.push_back(first_n(base, 4) + " " + first_n(answer_words, 4));
  for (auto& v : variants) {
    v = text::trim(v);
    if (v.empty()) continue;
    if (std::find(queries.begin(), queries.end(), v) == queries.end()) queries.push_back(v);
    if (queries.size() == 3) break;
  }
  return queries;
}

std::string excerpt_text(std::string_view input, std::size_t max_chars) {
  if (text::utf8_length(input) <= max_chars) return std::string(input);
  std::string out;
  std::size_t used = 0;
  for (const auto& para : text::split_paragraphs(input)) {
    std::size_t len = text::utf8_length(para) + (out.empty() ? 0 : 2);
    if (used + len > max_chars) {
      if (out.empty()) {
        // First paragraph alone is too long: cut at a sentence end.
        auto cut = text::truncate_utf8(para, max_chars);
        auto end = cut.find_last_of(".!?");
        out = end != std::string::npos && end > cut.size() / 3 ? cut.substr(0, end + 1) : cut;
      }
      break;
    }
    if (!out.empty()) out += "\n\n";
    out += para;
    used += len;
  }
  return out;
}

Planner::Planner(std::shared_ptr<Gateway> gateway, std::shared_ptr<Retriever> retriever,
                 std::shared_ptr<Clock> clock, PlannerConfig config)
    : gateway_(std::move(gateway)),
      retriever_(std::move(retriever)),
      clock_(clock ? std::move(clock) : default_clock()),
      config_(config) {
  if (!gateway_) throw ConfigError("planner needs a gateway");
}

IntentDecision Planner::classify_intent(const std::string& query, EventSink&) {
  if (text::trim(query).empty()) throw PreconditionError("query must not be empty");
  auto call = gateway_->prompt_call(TemplateId::intent_clarification, {{"query", query}});
  std::function<IntentDecision(const std::string&)> parse = [](const std::string& raw) {
    return parse_intent(raw);
  };
  return gateway_->complete_parsed(call, parse);
}

ReferenceBundle Planner::preliminary_search(const ClarifiedIntent& intent, EventSink& events) {
  if (text::trim(intent.resolved_query).empty()) throw PreconditionError("resolved query is empty");
  ReferenceBundle bundle;
  bundle.queries = preliminary_queries(intent);
  if (!retriever_) {
    events.warn("no retriever configured; outline relies on model knowledge");
    return bundle;
  }
  std::vector<SearchHit> hits;
  std::set<std::string> seen;
  for (const auto& q : bundle.queries) {
    try {
      for (auto& hit : retriever_->search(q)) {
        if (hits.size() >= config_.max_documents) break;
        if (seen.insert(hit.url).second) hits.push_back(std::move(hit));
      }
    } catch (const std::exception& e) {
      events.warn("preliminary search failed", json{{"query", q}, {"error", e.what()}});
    }
  }
  for (auto& outcome : retriever_->fetch_many(hits)) {
    if (!outcome.document) {
      events.warn("preliminary fetch failed", json{{"url", outcome.url}, {"error", outcome.error}});
      continue;
    }
    const auto& doc = *outcome.document;
    auto excerpt = excerpt_text(doc.extracted_text, config_.excerpt_chars);
    if (text::trim(excerpt).empty()) continue;
    if (bundle.chars() + text::utf8_length(excerpt) > config_.reference_budget_chars) break;
    bundle.excerpts.push_back({doc.url, doc.title, excerpt, doc.publish_time});
  }
  if (bundle.excerpts.empty()) {
    events.warn("preliminary search produced no reference material; outline relies on model knowledge");
  }
  return bundle;
}

ChapterTree Planner::generate_outline(const ClarifiedIntent& intent, const ReferenceBundle& bundle,
                                      const std::string& domain, EventSink&) {
  if (text::trim(intent.resolved_query).empty()) throw PreconditionError("intent is not resolved");
  const auto& cfg = gateway_->config();
  Bindings bindings{{"domain", domain.empty() ? std::string("business analysis") : domain},
                    {"now", format_date(to_date(clock_->now_seconds()))},
                    {"reasoning", cfg.reasoning_framework},
                    {"thinking", cfg.writing_framework},
                    {"reference", bundle.render()},
                    {"query", intent.resolved_query}};
  auto call = gateway_->prompt_call(TemplateId::outline_generation, bindings);
  std::string fallback = intent.original_query;
  std::function<ChapterTree(const std::string&)> parse = [fallback](const std::string& raw) {
    auto tree = parse_outline(raw, fallback);
    if (auto violation = outline_violation(tree)) throw MalformedOutline(*violation);
    return tree;
  };
  try {
    return gateway_->complete_parsed(call, parse, config_.outline_retries);
  } catch (const MalformedOutput& e) {
    throw MalformedOutline(e.what());
  }
}

}  // namespace deepreport
