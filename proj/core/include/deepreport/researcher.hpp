#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/events.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/knowledge.hpp"
#include "deepreport/outline.hpp"
#include "deepreport/retrieval.hpp"

namespace deepreport {

inline constexpr std::size_t kMaxQueriesPerBatch = 3;
inline constexpr std::size_t kMaxSegments = 40;

struct SearchQueryItem {
  std::optional<std::string> time_qualifier;
  std::string topic_entity;
  std::string dimension_word;
  std::string rendered;

  /// Splits "[Time] [Core Topic + Entity] [Dimension Word]". `rendered`
  /// keeps the whitespace-collapsed text and equals the parts joined by
  /// single spaces.
  static SearchQueryItem parse(std::string_view sq);
  json to_json() const;
};

struct QueryBatch {
  std::vector<SearchQueryItem> items;  // 1..3
  std::size_t dropped = 0;             // tags beyond the cap
  std::string thinking;                // text outside the tags
};

/// Reads every <sq> block. Throws MalformedOutput when there is none.
QueryBatch parse_query_batch(std::string_view reply);

struct Segment {
  std::string id;  // "0", "1", …
  std::string text;
};

struct Segmentation {
  std::vector<Segment> segments;
  bool truncated = false;
};

/// Paragraph-level split of the extracted text, at most kMaxSegments.
Segmentation segment_document(std::string_view extracted_text);

/// The {search} block for one document: header lines, then "[id] text".
std::string render_segments(const SourceDocument& doc, const Segmentation& seg);

/// Parses the distillation reply against the document's segments. Candidates
/// citing unknown segment ids are dropped and reported in `dangling`.
struct DistillParse {
  std::vector<KnowledgeCandidate> candidates;
  std::vector<std::string> dangling;
};
DistillParse parse_distillation(std::string_view reply, const SourceDocument& doc,
                                const Segmentation& seg);

ReflectionProfile parse_profile(std::string_view reply);
CheckResult parse_check(std::string_view reply, SchemaId schema);

/// Candidate insights grouped by source in first-appearance order, cut at
/// whole lines to stay within `max_chars`.
std::string build_draft(const std::vector<KnowledgeCandidate>& candidates, std::size_t max_chars = 6000);

/// Appends candidates whose (url, normalized insight) is new. Returns the
/// number added.
std::size_t merge_candidates(std::vector<KnowledgeCandidate>& into, const std::vector<KnowledgeCandidate>& more);

struct ResearcherConfig {
  int step_budget = 3;
  std::size_t chapter_concurrency = 3;
  int top_k = 5;
  std::size_t draft_chars = 6000;
};

struct ChapterResearch {
  std::vector<KnowledgeCandidate> candidates;
  ChapterResearchState state;
};

class Researcher {
 public:
  Researcher(std::shared_ptr<Gateway> gateway, std::shared_ptr<Retriever> retriever,
             std::shared_ptr<Clock> clock, ResearcherConfig config = {});

  const ResearcherConfig& config() const noexcept { return config_; }

  /// On re-expansion the prompt also carries the last verdict's reasoning.
  QueryBatch expand_queries(const ChapterTree& tree, const ChapterNode& chapter,
                            const ChapterResearchState* prior, EventSink& events);
  std::vector<KnowledgeCandidate> distill(const ChapterTree& tree, const ChapterNode& chapter,
                                          const std::vector<SourceDocument>& docs, EventSink& events);
  ReflectionProfile judge_profile(const ChapterTree& tree, const ChapterNode& chapter);
  ReflectionVerdict reflect(const ChapterTree& tree, const ChapterNode& chapter, const std::string& draft,
                            const ReflectionProfile& profile);

  /// Expand, search, fetch, distill and reflect until accepted or the
  /// budget is spent. Throws ResearchFailed only when no document was ever
  /// fetched.
  ChapterResearch research_chapter(const ChapterTree& tree, const ChapterNode& chapter, EventSink& events);

  /// Researches chapters concurrently under the configured cap. Results are
  /// in input order; a failed chapter holds an empty candidate list and a
  /// warning is emitted.
  std::vector<ChapterResearch> research_all(const ChapterTree& tree,
                                            const std::vector<const ChapterNode*>& chapters,
                                            EventSink& events);

 private:
  std::string now_text() const;

  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<Retriever> retriever_;
  std::shared_ptr<Clock> clock_;
  ResearcherConfig config_;
};

/// Leaves that need their own research: every leaf except a childless
/// closing summary chapter, which is written from the chapters before it.
std::vector<const ChapterNode*> research_targets(const ChapterTree& tree);

}  // namespace deepreport
