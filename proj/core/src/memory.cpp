#include "deepreport/memory.hpp"

#include <algorithm>
#include <cstdio>

#include "deepreport/error.hpp"
#include "deepreport/structured.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

std::vector<std::string> unknown_ids(const std::vector<std::string>& ids, const MemoryStore& store,
                                     const std::string& chapter_id) {
  std::vector<std::string> bad;
  for (const auto& id : ids) {
    if (!store.chapter_has(chapter_id, id)) bad.push_back(id);
  }
  return bad;
}

EnrichedAnswer to_answer(const StructuredPayload& payload, const std::string& chapter_id) {
  EnrichedAnswer a;
  a.chapter_id = chapter_id;
  a.answer = payload.value.at("answer").get<std::string>();
  for (const auto& q : payload.value.at("quote_ids")) {
    auto id = text::trim(q.get<std::string>());
    if (!id.empty() && std::find(a.quote_ids.begin(), a.quote_ids.end(), id) == a.quote_ids.end()) {
      a.quote_ids.push_back(id);
    }
  }
  return a;
}

}  // namespace

json KnowledgeEntry::to_json() const {
  return json{{"entry_id", entry_id},
              {"chapter_id", chapter_id},
              {"insight", insight},
              {"source_url", source_url},
              {"snippet_ids", snippet_ids},
              {"publish_time", publish_time ? json(format_timestamp(*publish_time)) : json(nullptr)},
              {"recorded_at", format_timestamp(recorded_at)},
              {"source_title", source_title}};
}

KnowledgeEntry KnowledgeEntry::from_json(const json& v) {
  KnowledgeEntry e;
  e.entry_id = v.at("entry_id").get<std::string>();
  e.chapter_id = v.at("chapter_id").get<std::string>();
  e.insight = v.at("insight").get<std::string>();
  e.source_url = v.at("source_url").get<std::string>();
  e.snippet_ids = v.value("snippet_ids", std::vector<std::string>{});
  if (v.contains("publish_time") && v["publish_time"].is_string()) {
    e.publish_time = parse_timestamp(v["publish_time"].get<std::string>());
  }
  if (auto t = parse_timestamp(v.value("recorded_at", ""))) e.recorded_at = *t;
  e.source_title = v.value("source_title", "");
  return e;
}

std::string KnowledgeEntry::content_hash() const { return sha256_hex(to_line(to_json())); }

json EnrichedAnswer::to_json() const {
  return json{{"chapter_id", chapter_id}, {"answer", answer}, {"quote_ids", quote_ids}};
}

std::size_t estimate_tokens(std::string_view text) { return (text::utf8_length(text) + 3) / 4; }

json MemoryStats::to_json() const {
  return json{{"entry_count", entry_count},
              {"unique_sources", unique_sources},
              {"per_chapter_counts", per_chapter_counts},
              {"total_estimated_tokens", total_estimated_tokens}};
}

std::string render_entry(const KnowledgeEntry& e) {
  std::string line = "[" + e.entry_id + "] " + e.insight + " (source: " + e.source_url;
  if (e.publish_time) line += ", published " + format_date(to_date(*e.publish_time));
  return line + ")\n";
}

MemoryStore::MemoryStore(std::shared_ptr<Clock> clock, TokenEstimator estimator, int id_width)
    : clock_(clock ? std::move(clock) : default_clock()), estimator_(std::move(estimator)), id_width_(id_width) {
  if (!estimator_) throw ConfigError("memory store needs a token estimator");
  if (id_width_ < 1 || id_width_ > 12) throw ConfigError("entry id width must be within 1..12");
}

std::vector<std::string> MemoryStore::record(const std::string& chapter_id,
                                             const std::vector<KnowledgeCandidate>& candidates,
                                             const GateToken& token) {
  if (token.chapter_id() != chapter_id) {
    throw PreconditionError("gate token belongs to chapter " + token.chapter_id() + ", not " + chapter_id);
  }
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  auto& chapter_index = by_chapter_[chapter_id];
  for (const auto& c : candidates) {
    if (text::trim(c.insight).empty() || c.source_url.empty()) {
      throw PreconditionError("knowledge candidate needs an insight and a source URL");
    }
    auto key = candidate_key(c.source_url, c.insight);
    if (auto it = by_key_.find(key); it != by_key_.end()) {
      if (std::find(chapter_index.begin(), chapter_index.end(), it->second) == chapter_index.end()) {
        chapter_index.push_back(it->second);
      }
      ids.push_back(entries_[it->second].entry_id);
      continue;
    }
    KnowledgeEntry e;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", id_width_, entries_.size() + 1);
    e.entry_id = buf;
    e.chapter_id = chapter_id;
    e.insight = text::collapse_whitespace(c.insight);
    e.source_url = c.source_url;
    e.snippet_ids = c.snippet_ids;
    e.publish_time = c.publish_time;
    e.recorded_at = clock_->now_seconds();
    e.source_title = c.source_title;
    hashes_.push_back(e.content_hash());
    token_ledger_[chapter_id] += estimator_(e.insight);
    by_key_[key] = entries_.size();
    chapter_index.push_back(entries_.size());
    ids.push_back(e.entry_id);
    entries_.push_back(std::move(e));
  }
  return ids;
}

std::optional<KnowledgeEntry> MemoryStore::entry(const std::string& entry_id) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.entry_id == entry_id) return e;
  }
  return std::nullopt;
}

std::vector<KnowledgeEntry> MemoryStore::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::vector<KnowledgeEntry> MemoryStore::chapter_entries(const std::string& chapter_id) const {
  std::lock_guard lock(mutex_);
  std::vector<KnowledgeEntry> out;
  auto it = by_chapter_.find(chapter_id);
  if (it == by_chapter_.end()) return out;
  auto idx = it->second;
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) out.push_back(entries_[i]);
  return out;
}

bool MemoryStore::chapter_has(const std::string& chapter_id, const std::string& entry_id) const {
  std::lock_guard lock(mutex_);
  auto it = by_chapter_.find(chapter_id);
  if (it == by_chapter_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](std::size_t i) { return entries_[i].entry_id == entry_id; });
}

std::size_t MemoryStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

WritingView MemoryStore::view_for_writing(const std::string& chapter_id, std::size_t token_budget,
                                          const std::optional<std::set<std::string>>& only) const {
  if (token_budget == 0) throw PreconditionError("token budget must be positive");
  auto list = chapter_entries(chapter_id);
  if (only) {
    std::erase_if(list, [&](const KnowledgeEntry& e) { return !only->count(e.entry_id); });
  }
  std::stable_sort(list.begin(), list.end(), [](const KnowledgeEntry& a, const KnowledgeEntry& b) {
    if (a.publish_time.has_value() != b.publish_time.has_value()) return a.publish_time.has_value();
    if (a.publish_time && *a.publish_time != *b.publish_time) return *a.publish_time > *b.publish_time;
    return a.entry_id < b.entry_id;
  });
  WritingView view;
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto candidate = view.text + render_entry(list[i]);
    auto tokens = estimator_(candidate);
    if (tokens > token_budget) {
      view.omitted = list.size() - i;
      break;
    }
    view.text = std::move(candidate);
    view.estimated_tokens = tokens;
    view.entries.push_back(list[i]);
  }
  return view;
}

MemoryStats MemoryStore::stats() const {
  std::lock_guard lock(mutex_);
  MemoryStats s;
  s.entry_count = entries_.size();
  std::set<std::string> sources;
  for (const auto& e : entries_) {
    sources.insert(e.source_url);
    ++s.per_chapter_counts[e.chapter_id];
  }
  s.unique_sources = sources.size();
  for (const auto& [chapter, tokens] : token_ledger_) s.total_estimated_tokens += tokens;
  return s;
}

std::string MemoryStore::dump_ndjson() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& e : entries_) {
    out += to_line(e.to_json());
    out += '\n';
  }
  return out;
}

std::vector<std::string> MemoryStore::audit() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].content_hash() != hashes_[i]) bad.push_back(entries_[i].entry_id);
  }
  return bad;
}

std::vector<std::string> MemoryStore::audit_dump(const std::filesystem::path& path) const {
  std::map<std::string, std::string> dumped;
  read_ndjson(path, [&](std::size_t, const json& v) {
    auto e = KnowledgeEntry::from_json(v);
    dumped[e.entry_id] = e.content_hash();
  });
  std::lock_guard lock(mutex_);
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto it = dumped.find(entries_[i].entry_id);
    if (it == dumped.end() || it->second != hashes_[i]) bad.push_back(entries_[i].entry_id);
  }
  return bad;
}

EnrichedAnswer enrich_chapter(Gateway& gateway, const ChapterTree& tree, ChapterNode& chapter,
                              const MemoryStore& store, EventSink& events, EnrichmentConfig config) {
  auto view = store.view_for_writing(chapter.node_id, config.token_budget);
  if (view.entries.empty()) throw EmptyChapter("chapter " + chapter.node_id + " has no recorded knowledge");
  auto call = gateway.prompt_call(TemplateId::knowledge_enrichment,
                                  {{"chapter_outline", tree.chapter_brief(chapter.node_id)}, {"knowledge", view.text}});
  auto answer = to_answer(gateway.complete_structured(call, SchemaId::enrichment_answer), chapter.node_id);
  if (auto bad = unknown_ids(answer.quote_ids, store, chapter.node_id); !bad.empty()) {
    auto retry = with_correction(call, "quote_ids " + text::join(bad, ", ") +
                                           " are not among the knowledge ids given; cite only the bracketed ids");
    answer = to_answer(gateway.complete_structured(retry, SchemaId::enrichment_answer), chapter.node_id);
    bad = unknown_ids(answer.quote_ids, store, chapter.node_id);
    if (!bad.empty()) {
      std::erase_if(answer.quote_ids, [&](const std::string& id) {
        return std::find(bad.begin(), bad.end(), id) != bad.end();
      });
      events.warn("enrichment cited unknown knowledge ids; filtered",
                  json{{"chapter_id", chapter.node_id}, {"ids", bad}});
    }
  }
  if (answer.quote_ids.empty()) {
    for (const auto& e : view.entries) answer.quote_ids.push_back(e.entry_id);
    events.warn("enrichment quoted no valid knowledge; the whole chapter view is kept",
                json{{"chapter_id", chapter.node_id}});
  }
  chapter.knowledge_ids = answer.quote_ids;
  return answer;
}

}  // namespace deepreport
