#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deepreport/events.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/knowledge.hpp"
#include "deepreport/outline.hpp"

namespace deepreport {

struct KnowledgeEntry {
  std::string entry_id;  // zero-padded decimal
  std::string chapter_id;
  std::string insight;
  std::string source_url;
  std::vector<std::string> snippet_ids;
  std::optional<Timestamp> publish_time;
  Timestamp recorded_at{};
  std::string source_title;

  json to_json() const;
  static KnowledgeEntry from_json(const json& value);
  /// sha256 of the entry's sorted JSON line.
  std::string content_hash() const;
};

struct EnrichedAnswer {
  std::string chapter_id;
  std::string answer;
  std::vector<std::string> quote_ids;

  json to_json() const;
};

using TokenEstimator = std::function<std::size_t(std::string_view)>;

/// Characters / 4, rounded up.
std::size_t estimate_tokens(std::string_view text);

struct MemoryStats {
  std::size_t entry_count = 0;
  std::size_t unique_sources = 0;
  std::map<std::string, std::size_t> per_chapter_counts;
  std::size_t total_estimated_tokens = 0;

  json to_json() const;
};

struct WritingView {
  std::vector<KnowledgeEntry> entries;
  std::string text;
  std::size_t estimated_tokens = 0;
  std::size_t omitted = 0;
};

/// One line of a writing or enrichment view.
std::string render_entry(const KnowledgeEntry& entry);

/// Append-only, thread-safe store of the run's validated knowledge.
class MemoryStore {
 public:
  explicit MemoryStore(std::shared_ptr<Clock> clock = nullptr, TokenEstimator estimator = estimate_tokens,
                       int id_width = 4);

  /// One entry per new (url, normalized insight); a duplicate returns the
  /// id already stored and links it to this chapter. Ids are gap-free.
  std::vector<std::string> record(const std::string& chapter_id, const std::vector<KnowledgeCandidate>& candidates,
                                  const GateToken& token);

  std::optional<KnowledgeEntry> entry(const std::string& entry_id) const;
  std::vector<KnowledgeEntry> entries() const;
  /// Entries linked to the chapter, in id order.
  std::vector<KnowledgeEntry> chapter_entries(const std::string& chapter_id) const;
  bool chapter_has(const std::string& chapter_id, const std::string& entry_id) const;
  std::size_t size() const;

  /// Newest publish time first (undated last), ties by entry id, cut so the
  /// rendered view's estimated tokens stay within `token_budget`. When
  /// `only` is given, entries outside it are skipped.
  WritingView view_for_writing(const std::string& chapter_id, std::size_t token_budget,
                               const std::optional<std::set<std::string>>& only = std::nullopt) const;

  MemoryStats stats() const;

  /// One KnowledgeEntry record per line in id order.
  std::string dump_ndjson() const;
  /// Ids whose current content no longer matches the hash taken at record
  /// time.
  std::vector<std::string> audit() const;
  /// Same check against a dump file; also reports ids missing from the file.
  std::vector<std::string> audit_dump(const std::filesystem::path& path) const;

  std::size_t estimate(std::string_view text) const { return estimator_(text); }

 private:
  std::shared_ptr<Clock> clock_;
  TokenEstimator estimator_;
  int id_width_;
  mutable std::mutex mutex_;
  std::vector<KnowledgeEntry> entries_;
  std::vector<std::string> hashes_;
  std::map<std::string, std::size_t> by_key_;
  std::map<std::string, std::vector<std::size_t>> by_chapter_;
  std::map<std::string, std::size_t> token_ledger_;
};

struct EnrichmentConfig {
  std::size_t token_budget = 12000;
};

/// Asks the judge for a sourced answer over the chapter's entries and sets
/// chapter.knowledge_ids to its quote ids. Unknown ids get one re-ask and are
/// then filtered with a warning. Throws EmptyChapter.
EnrichedAnswer enrich_chapter(Gateway& gateway, const ChapterTree& tree, ChapterNode& chapter,
                              const MemoryStore& store, EventSink& events, EnrichmentConfig config = {});

}  // namespace deepreport
