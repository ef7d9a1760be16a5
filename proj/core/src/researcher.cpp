#include "deepreport/researcher.hpp"

#include <atomic>
#include <regex>
#include <set>
#include <thread>

#include "deepreport/error.hpp"
#include "deepreport/structured.hpp"
#include "deepreport/tagged.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

const std::regex& time_token() {
  static const std::regex re(
      "^((19|20)[0-9]{2}(s|(-|\xE2\x80\x93)((19|20)?[0-9]{2}))?|q[1-4]|h[12]|fy[0-9]{2,4}|latest|recent|current|"
      "jan(uary)?|feb(ruary)?|mar(ch)?|apr(il)?|may|june?|july?|aug(ust)?|sep(tember)?|oct(ober)?|"
      "nov(ember)?|dec(ember)?)$",
      std::regex::icase);
  return re;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

CheckResult failed_check(std::string think) { return CheckResult{std::move(think), false, {}}; }

}  // namespace

SearchQueryItem SearchQueryItem::parse(std::string_view sq) {
  SearchQueryItem item;
  item.rendered = text::collapse_whitespace(sq);
  std::vector<std::string> tokens;
  for (auto& t : text::split(item.rendered, ' ')) {
    if (!t.empty()) tokens.push_back(t);
  }
  std::size_t lead = 0;
  while (lead < tokens.size() && lead < 3 && tokens.size() - lead > 1 &&
         std::regex_match(tokens[lead], time_token())) {
    ++lead;
  }
  if (lead > 0) {
    item.time_qualifier =
        text::join(std::vector<std::string>(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(lead)), " ");
  }
  std::vector<std::string> rest(tokens.begin() + static_cast<std::ptrdiff_t>(lead), tokens.end());
  if (rest.size() >= 2) {
    item.dimension_word = rest.back();
    rest.pop_back();
  }
  item.topic_entity = text::join(rest, " ");
  return item;
}

json SearchQueryItem::to_json() const {
  return json{{"time_qualifier", time_qualifier ? json(*time_qualifier) : json(nullptr)},
              {"topic_entity", topic_entity},
              {"dimension_word", dimension_word},
              {"rendered", rendered}};
}

QueryBatch parse_query_batch(std::string_view reply) {
  std::vector<TaggedBlock> blocks;
  try {
    blocks = parse_tagged(reply, "sq");
  } catch (const UnbalancedTag& e) {
    throw MalformedOutput(e.what(), std::string(reply));
  }
  QueryBatch batch;
  std::set<std::string> seen;
  for (const auto& b : blocks) {
    auto item = SearchQueryItem::parse(b.body);
    if (item.rendered.empty() || !seen.insert(text::casefold(item.rendered)).second) continue;
    if (batch.items.size() == kMaxQueriesPerBatch) {
      ++batch.dropped;
      continue;
    }
    batch.items.push_back(std::move(item));
  }
  if (batch.items.empty()) throw MalformedOutput("reply holds no <sq> search query", std::string(reply));
  batch.thinking = text::collapse_whitespace(reply.substr(0, blocks.front().span.begin));
  return batch;
}

Segmentation segment_document(std::string_view extracted_text) {
  Segmentation out;
  auto paragraphs = text::split_paragraphs(extracted_text);
  for (auto& p : paragraphs) {
    auto t = text::collapse_whitespace(p);
    if (t.empty()) continue;
    if (out.segments.size() == kMaxSegments) {
      out.truncated = true;
      break;
    }
    out.segments.push_back(Segment{std::to_string(out.segments.size()), std::move(t)});
  }
  return out;
}

std::string render_segments(const SourceDocument& doc, const Segmentation& seg) {
  std::string out = "Source URL: " + doc.url + "\n";
  if (!doc.title.empty()) out += "Title: " + doc.title + "\n";
  out += "Published: " + (doc.publish_time ? format_date(to_date(*doc.publish_time)) : std::string("unknown")) + "\n";
  for (const auto& s : seg.segments) out += "[" + s.id + "] " + s.text + "\n";
  if (seg.truncated) {
    out += "(The document continues; only its first " + std::to_string(kMaxSegments) + " segments are shown.)\n";
  }
  return out;
}

DistillParse parse_distillation(std::string_view reply, const SourceDocument& doc, const Segmentation& seg) {
  auto payload = parse_structured(reply, SchemaId::knowledge_list);
  DistillParse out;
  for (const auto& item : payload.value.at("knowledge")) {
    auto insight = text::collapse_whitespace(item.at("insight").get<std::string>());
    if (insight.empty()) continue;
    std::vector<std::string> ids;
    bool dangling = false;
    for (const auto& s : item.at("snippets")) {
      auto id = text::trim(s.get<std::string>());
      if (!all_digits(id) || id.size() > 4 || static_cast<std::size_t>(std::stoul(id)) >= seg.segments.size()) {
        dangling = true;
        break;
      }
      id = std::to_string(std::stoul(id));
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    if (dangling || ids.empty()) {
      out.dangling.push_back(insight);
      continue;
    }
    out.candidates.push_back(KnowledgeCandidate{insight, ids, doc.url, doc.publish_time, doc.title});
  }
  return out;
}

ReflectionProfile parse_profile(std::string_view reply) {
  auto v = parse_structured(reply, SchemaId::reflection_profile).value;
  return ReflectionProfile{v.at("freshness").get<bool>(), v.at("plurality").get<bool>(),
                           v.at("completeness").get<bool>()};
}

CheckResult parse_check(std::string_view reply, SchemaId schema) {
  auto v = parse_structured(reply, schema).value.at("analysis");
  CheckResult r;
  r.think = v.at("think").get<std::string>();
  r.pass = v.at("pass").get<bool>();
  if (v.contains("type") && v["type"].is_string()) r.type = v["type"].get<std::string>();
  return r;
}

std::string build_draft(const std::vector<KnowledgeCandidate>& candidates, std::size_t max_chars) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const KnowledgeCandidate*>> groups;
  for (const auto& c : candidates) {
    if (!groups.count(c.source_url)) order.push_back(c.source_url);
    groups[c.source_url].push_back(&c);
  }
  std::string out;
  std::size_t used = 0;
  auto add = [&](const std::string& line) {
    std::size_t len = text::utf8_length(line) + 1;
    if (used + len > max_chars) return false;
    out += line + "\n";
    used += len;
    return true;
  };
  for (const auto& url : order) {
    const auto& first = *groups[url].front();
    std::string header = (used == 0 ? "" : "\n") + std::string("Source: ") + url;
    if (first.publish_time) header += " (published " + format_date(to_date(*first.publish_time)) + ")";
    if (!add(header)) return out;
    for (const auto* c : groups[url]) {
      if (!add("- " + c->insight)) return out;
    }
  }
  return out;
}

std::size_t merge_candidates(std::vector<KnowledgeCandidate>& into, const std::vector<KnowledgeCandidate>& more) {
  std::set<std::string> keys;
  for (const auto& c : into) keys.insert(candidate_key(c.source_url, c.insight));
  std::size_t added = 0;
  for (const auto& c : more) {
    if (keys.insert(candidate_key(c.source_url, c.insight)).second) {
      into.push_back(c);
      ++added;
    }
  }
  return added;
}

Researcher::Researcher(std::shared_ptr<Gateway> gateway, std::shared_ptr<Retriever> retriever,
                       std::shared_ptr<Clock> clock, ResearcherConfig config)
    : gateway_(std::move(gateway)),
      retriever_(std::move(retriever)),
      clock_(clock ? std::move(clock) : default_clock()),
      config_(config) {
  if (!gateway_) throw ConfigError("researcher needs a gateway");
  if (config_.step_budget < 1) throw ConfigError("step budget must be at least 1");
  if (config_.chapter_concurrency < 1) throw ConfigError("chapter concurrency must be at least 1");
}

std::string Researcher::now_text() const { return format_date(to_date(clock_->now_seconds())); }

QueryBatch Researcher::expand_queries(const ChapterTree& tree, const ChapterNode& chapter,
                                      const ChapterResearchState* prior, EventSink& events) {
  if (chapter.summary.empty() || chapter.thinking.empty()) {
    throw PreconditionError("chapter " + chapter.node_id + " lacks a summary or writing logic");
  }
  std::string brief = tree.chapter_brief(chapter.node_id);
  if (prior && !prior->verdicts.empty()) {
    const auto& last = prior->verdicts.back();
    std::vector<std::string> gaps;
    if (!last.integrity.pass) gaps.push_back("Integrity: " + last.integrity.think);
    if (last.freshness && !last.freshness->pass) gaps.push_back("Freshness: " + last.freshness->think);
    if (last.plurality && !last.plurality->pass) gaps.push_back("Plurality: " + last.plurality->think);
    if (!gaps.empty()) brief += "\nGaps found after the previous search round:\n" + text::join(gaps, "\n");
  }
  auto call = gateway_->prompt_call(TemplateId::search_query_expanding,
                                    {{"now", now_text()}, {"chapter_outline", brief}});
  std::function<QueryBatch(const std::string&)> parse = [](const std::string& raw) {
    return parse_query_batch(raw);
  };
  auto batch = gateway_->complete_parsed(call, parse);
  if (batch.dropped > 0) {
    events.warn("search query batch exceeded the cap; extra queries dropped",
                json{{"chapter_id", chapter.node_id}, {"dropped", batch.dropped}});
  }
  return batch;
}

std::vector<KnowledgeCandidate> Researcher::distill(const ChapterTree& tree, const ChapterNode& chapter,
                                                    const std::vector<SourceDocument>& docs, EventSink& events) {
  if (docs.empty()) throw PreconditionError("distill needs at least one document");
  const std::string brief = tree.chapter_brief(chapter.node_id);
  std::vector<KnowledgeCandidate> out;
  for (const auto& doc : docs) {
    auto seg = segment_document(doc.extracted_text);
    if (seg.segments.empty()) continue;
    auto call = gateway_->prompt_call(TemplateId::information_distillation,
                                      {{"search", render_segments(doc, seg)}, {"chapter_outline", brief}});
    std::function<DistillParse(const std::string&)> parse = [&doc, &seg](const std::string& raw) {
      return parse_distillation(raw, doc, seg);
    };
    DistillParse result;
    try {
      result = gateway_->complete_parsed(call, parse);
    } catch (const Error& e) {
      events.warn("distillation failed; source skipped",
                  json{{"chapter_id", chapter.node_id}, {"url", doc.url}, {"error", e.what()}});
      continue;
    }
    if (!result.dangling.empty()) {
      events.warn("distilled insight cites a segment the source does not have; dropped",
                  json{{"chapter_id", chapter.node_id}, {"url", doc.url}, {"insights", result.dangling}});
    }
    events.emit(EventKind::source_distilled, json{{"chapter_id", chapter.node_id},
                                                   {"url", doc.url},
                                                   {"segments", seg.segments.size()},
                                                   {"candidates", result.candidates.size()}});
    merge_candidates(out, result.candidates);
  }
  return out;
}

ReflectionProfile Researcher::judge_profile(const ChapterTree& tree, const ChapterNode& chapter) {
  auto call = gateway_->prompt_call(TemplateId::evaluation_judgment,
                                    {{"now", now_text()}, {"chapter_outline", tree.chapter_brief(chapter.node_id)}});
  std::function<ReflectionProfile(const std::string&)> parse = [](const std::string& raw) {
    return parse_profile(raw);
  };
  return gateway_->complete_parsed(call, parse);
}

ReflectionVerdict Researcher::reflect(const ChapterTree& tree, const ChapterNode& chapter, const std::string& draft,
                                      const ReflectionProfile& profile) {
  if (text::trim(draft).empty()) throw PreconditionError("reflection needs a nonempty draft");
  const Bindings bindings{{"now", now_text()}, {"chapter_outline", tree.chapter_brief(chapter.node_id)}, {"draft", draft}};
  auto check = [&](TemplateId id, SchemaId schema) {
    std::function<CheckResult(const std::string&)> parse = [schema](const std::string& raw) {
      return parse_check(raw, schema);
    };
    return gateway_->complete_parsed(gateway_->prompt_call(id, bindings), parse);
  };
  ReflectionVerdict v;
  v.integrity = check(TemplateId::integrity_evaluation, SchemaId::integrity_verdict);
  if (profile.freshness) v.freshness = check(TemplateId::freshness_evaluation, SchemaId::freshness_verdict);
  if (profile.plurality) v.plurality = check(TemplateId::plurality_evaluation, SchemaId::plurality_verdict);
  v.accepted = ReflectionVerdict::gate(v.integrity, v.freshness, v.plurality);
  return v;
}

ChapterResearch Researcher::research_chapter(const ChapterTree& tree, const ChapterNode& chapter, EventSink& events) {
  if (!retriever_) throw ConfigError("researcher needs a retriever");
  const auto& id = chapter.node_id;
  events.emit(EventKind::chapter_started, json{{"chapter_id", id}, {"title", chapter.title}});

  ChapterResearchState state;
  state.chapter_id = id;

  ReflectionProfile profile;
  try {
    profile = judge_profile(tree, chapter);
  } catch (const Error& e) {
    // Without a profile every optional check runs.
    profile = ReflectionProfile{true, true, false};
    events.warn("reflection profile unavailable; all checks enabled", json{{"chapter_id", id}, {"error", e.what()}});
  }

  std::set<std::string> seen_urls;
  for (int round = 1; round <= config_.step_budget; ++round) {
    state.step_count = round;
    QueryBatch batch;
    try {
      batch = expand_queries(tree, chapter, round > 1 ? &state : nullptr, events);
    } catch (const Error& e) {
      batch.items = {SearchQueryItem::parse(chapter.title)};
      events.warn("query expansion failed; searching the chapter title",
                  json{{"chapter_id", id}, {"error", e.what()}});
    }
    json queries = json::array();
    for (const auto& q : batch.items) queries.push_back(q.rendered);
    events.emit(EventKind::sq_issued, json{{"chapter_id", id}, {"round", round}, {"queries", queries}});

    std::vector<SearchHit> hits;
    for (const auto& q : batch.items) {
      try {
        for (auto& hit : retriever_->search(q.rendered, config_.top_k)) {
          if (seen_urls.insert(hit.url).second) hits.push_back(std::move(hit));
        }
      } catch (const std::exception& e) {
        events.warn("search failed", json{{"chapter_id", id}, {"query", q.rendered}, {"error", e.what()}});
      }
    }
    std::vector<SourceDocument> docs;
    for (auto& outcome : retriever_->fetch_many(hits)) {
      if (outcome.document) {
        docs.push_back(std::move(*outcome.document));
      } else {
        events.warn("fetch failed; source skipped",
                    json{{"chapter_id", id}, {"url", outcome.url}, {"error", outcome.error}});
      }
    }
    state.documents_fetched += docs.size();
    if (!docs.empty()) merge_candidates(state.candidates, distill(tree, chapter, docs, events));

    ReflectionVerdict verdict;
    if (state.candidates.empty()) {
      verdict.integrity = failed_check("No knowledge has been gathered for this chapter yet.");
    } else {
      try {
        verdict = reflect(tree, chapter, build_draft(state.candidates, config_.draft_chars), profile);
      } catch (const Error& e) {
        verdict = ReflectionVerdict{};
        verdict.integrity = failed_check(std::string("Reflection failed: ") + e.what());
        events.warn("reflection failed; round counted as rejected", json{{"chapter_id", id}, {"error", e.what()}});
      }
    }
    verdict.steps_used = round;
    state.verdicts.push_back(verdict);
    events.emit(EventKind::reflection_verdict, json{{"chapter_id", id}, {"round", round}, {"verdict", verdict.to_json()}});
    if (verdict.accepted) {
      state.status = ResearchStatus::accepted;
      break;
    }
  }
  if (state.status == ResearchStatus::searching) state.status = ResearchStatus::budget_exhausted;
  events.emit(EventKind::chapter_done, json{{"chapter_id", id},
                                            {"status", std::string(to_string(state.status))},
                                            {"steps", state.step_count},
                                            {"candidates", state.candidates.size()},
                                            {"documents", state.documents_fetched}});
  if (state.documents_fetched == 0) {
    throw ResearchFailed("no source could be fetched for chapter " + id + " (" + chapter.title + ")");
  }
  return ChapterResearch{state.candidates, state};
}

std::vector<ChapterResearch> Researcher::research_all(const ChapterTree& tree,
                                                      const std::vector<const ChapterNode*>& chapters,
                                                      EventSink& events) {
  std::vector<ChapterResearch> results(chapters.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < chapters.size(); i = next++) {
      const auto* chapter = chapters[i];
      try {
        results[i] = research_chapter(tree, *chapter, events);
      } catch (const std::exception& e) {
        results[i].state.chapter_id = chapter->node_id;
        results[i].state.status = ResearchStatus::budget_exhausted;
        events.emit(EventKind::error, json{{"chapter_id", chapter->node_id}, {"error", e.what()}});
        events.warn("chapter research failed", json{{"chapter_id", chapter->node_id}, {"error", e.what()}});
      }
    }
  };
  std::size_t n = std::min(config_.chapter_concurrency, chapters.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return results;
}

std::vector<const ChapterNode*> research_targets(const ChapterTree& tree) {
  std::vector<const ChapterNode*> out;
  for (const auto* leaf : tree.leaves()) {
    bool closing_summary = leaf->role == NodeRole::summary && leaf->node_id.find('.') == std::string::npos;
    if (!closing_summary) out.push_back(leaf);
  }
  return out;
}

}  // namespace deepreport
