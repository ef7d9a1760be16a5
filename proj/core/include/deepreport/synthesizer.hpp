#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/events.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/memory.hpp"
#include "deepreport/outline.hpp"

namespace deepreport {

struct MergedClaimGroup {
  std::string source_url;
  std::string source_title;
  std::optional<Timestamp> publish_time;
  std::vector<std::string> entry_ids;  // ≥ 1, same source
  std::string merged_text;
};

/// Partition by source in first-appearance order; texts are the insights
/// joined by spaces.
std::vector<MergedClaimGroup> group_by_source(const std::vector<KnowledgeEntry>& entries);

struct ReportSegment {
  std::string chapter_id;
  std::string markdown_text;
  /// Local marker n → group n-1's representative entry and URL.
  std::map<int, std::string> local_citations;
  std::map<int, std::string> local_sources;
  std::map<int, std::string> local_titles;
  std::string summary_of_segment;
  bool summary_node = false;
};

struct ClaimSourcePair {
  std::size_t position = 0;
  std::string statement;
  std::optional<int> marker;
  std::optional<std::string> source_url;
  std::optional<std::string> entry_id;

  json to_json() const;
  static ClaimSourcePair from_json(const json& value);
};

struct Reference {
  int number = 0;
  std::string source_url;
  std::string entry_id;
  std::string title;
};

struct ReportProfile {
  double length_ktokens = 0;
  double wall_time_seconds = 0;
  std::string estimator = "chars/4";
};

struct Report {
  std::string title;
  std::vector<ReportSegment> segments;  // markers renumbered globally
  std::vector<Reference> references;    // dense 1..K
  std::vector<ClaimSourcePair> claim_source_pairs;
  ReportProfile profile;
  std::string markdown;
};

/// Sentences of a plain-text block, split at terminal punctuation. Citation
/// markers right after the punctuation stay with their sentence; common
/// abbreviations and initials do not end a sentence.
std::vector<std::string> split_sentences(std::string_view block);

/// Numbers n of every [^n] in order of appearance (repeats kept).
std::vector<int> find_markers(std::string_view text);

/// Sentence-level claims of a segment. Uncited sentences attach to the next
/// cited sentence of the same paragraph; those left at a paragraph end get
/// no source. Chart descriptions count as sentences, tables are skipped.
/// Markers and sources are the segment's local ones.
std::vector<ClaimSourcePair> match_references(const ReportSegment& segment);

/// Drops <chart>/<table> blocks lacking their required parts. Returns the
/// number removed.
std::size_t sanitize_tool_blocks(std::string& markdown);

/// Global first-use renumbering, dense reference list, markdown with
/// headings and footnote definitions, claim pairs in reading order.
Report assemble_report(const ChapterTree& tree, std::vector<ReportSegment> segments,
                       const TokenEstimator& estimator, double wall_time_seconds);

/// One record per claim pair: position, statement, marker, source_url,
/// entry_id.
std::string sidecar_ndjson(const Report& report);
std::vector<ClaimSourcePair> read_sidecar(const std::filesystem::path& path);

/// Markers without a footnote definition, or definitions without a URL.
std::vector<std::string> citation_problems(const Report& report);

struct SynthesizerConfig {
  std::string domain = "business analysis";
  std::size_t token_budget = 12000;
  std::size_t above_chars = 1500;
  std::size_t closing_above_chars = 6000;
  std::size_t summary_chars = 600;
};

class Synthesizer {
 public:
  Synthesizer(std::shared_ptr<Gateway> gateway, std::shared_ptr<Clock> clock, SynthesizerConfig config = {});

  const SynthesizerConfig& config() const noexcept { return config_; }

  /// Groups by source in first-appearance order. Single entries pass
  /// through verbatim, larger groups are merged by the judge with one
  /// re-ask. Throws PreconditionError on an empty list.
  std::vector<MergedClaimGroup> merge_knowledge(const ChapterTree& tree, const ChapterNode& chapter,
                                                const std::vector<KnowledgeEntry>& entries);

  /// Throws CitationUnbound when a marker still has no group after one
  /// re-ask.
  ReportSegment synthesize_segment(const ChapterTree& tree, const ChapterNode& chapter,
                                   const std::vector<MergedClaimGroup>& groups, const std::string& previous_summary,
                                   const std::string& query, const std::string& enrichment, EventSink& events);

  /// Writes every leaf in order from the memory view and assembles the
  /// report. `enrichments` maps chapter id → enrichment answer.
  Report write_report(const ChapterTree& tree, const MemoryStore& memory, const std::string& query,
                      const std::map<std::string, std::string>& enrichments, EventSink& events,
                      Timestamp started_at);

 private:
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<Clock> clock_;
  SynthesizerConfig config_;
};

/// Extractive summary carried forward as the next segment's context.
std::string summarize_segment(std::string_view markdown, std::size_t max_chars);

}  // namespace deepreport
