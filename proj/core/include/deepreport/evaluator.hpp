#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/gateway.hpp"
#include "deepreport/retrieval.hpp"
#include "deepreport/synthesizer.hpp"

namespace deepreport {

enum class Domain {
  frontier_technology,
  green_economy,
  global_retail,
  biomedical_science,
  supply_chain,
  financial_service,
};

std::string_view to_string(Domain d);
std::optional<Domain> domain_from_name(std::string_view name);

enum class TemporalKind { historical, current, forecast };

std::string_view to_string(TemporalKind k);
std::optional<TemporalKind> temporal_kind_from_name(std::string_view name);

struct EvalTask {
  std::string task_id;
  std::string query;
  Domain domain = Domain::frontier_technology;
  std::vector<std::string> keypoints;
  Date start{};
  Date end{};
  TemporalKind kind = TemporalKind::current;

  json to_json() const;
};

/// Throws SchemaError carrying the 1-based line number.
EvalTask parse_task(const json& value, std::size_t line);
std::vector<EvalTask> parse_dataset(std::string_view ndjson);
std::vector<EvalTask> load_dataset(const std::filesystem::path& path);

struct EvalConfig {
  double beta = 1.0;
  double epsilon = 1e-9;
  double log_base = 2.718281828459045;
  double judge_scale = 100.0;
  double similarity_threshold = 0.35;
  /// Adds .docx/.pptx/.xls to the file-type set of the depth metric.
  bool extended_suffixes = true;
  /// Breadth distribution over claims instead of unique sources.
  bool breadth_per_claim = false;
};

enum class EvalMode { full, restricted };

std::string_view to_string(EvalMode m);
std::optional<EvalMode> eval_mode_from_name(std::string_view name);

struct MetricReport {
  double rel = 0;
  double str = 0;
  std::optional<double> hall;
  double temp = 0;
  double cons = 0;
  std::optional<double> brd;
  std::optional<double> dep;
  std::optional<double> len_ktokens;
  std::optional<double> time_seconds;
  bool restricted = false;
  std::vector<std::string> warnings;

  json to_json() const;
  static MetricReport from_json(const json& value);
};

/// Field-wise mean; optional fields average over reports that have them.
MetricReport average_reports(const std::vector<MetricReport>& runs);

struct Heading {
  int level = 1;
  std::string title;
};

/// ATX headings outside fenced code; a closing "References" heading is
/// excluded.
std::vector<Heading> extract_headings(std::string_view markdown);
std::string render_headings(const std::vector<Heading>& headings);

struct PairLabel {
  bool similar = false;
  bool contradictory = false;
};

class EvalJudge {
 public:
  virtual ~EvalJudge() = default;
  virtual bool keypoint_covered(const std::string& report_text, const std::string& keypoint) = 0;
  /// Score on [0, scale] for the heading outline.
  virtual double structure_score(const std::string& headings, double scale) = 0;
  virtual bool supports(const std::string& statement, const std::string& document) = 0;
  virtual PairLabel label_pair(const std::string& a, const std::string& b) = 0;
};

/// Judge-free scoring for CI: content-word recall for keypoints, heading
/// tree well-formedness for structure, word and figure overlap for support,
/// and figure or negation disagreement for contradictions.
class LexicalJudge final : public EvalJudge {
 public:
  explicit LexicalJudge(double similarity_threshold = 0.35) : threshold_(similarity_threshold) {}
  bool keypoint_covered(const std::string& report_text, const std::string& keypoint) override;
  double structure_score(const std::string& headings, double scale) override;
  bool supports(const std::string& statement, const std::string& document) override;
  PairLabel label_pair(const std::string& a, const std::string& b) override;

 private:
  double threshold_;
};

/// Model-backed judge; replies are small JSON objects. Throws JudgeError
/// when the reply stays unusable.
class LlmJudge final : public EvalJudge {
 public:
  explicit LlmJudge(std::shared_ptr<Gateway> gateway) : gateway_(std::move(gateway)) {}
  bool keypoint_covered(const std::string& report_text, const std::string& keypoint) override;
  double structure_score(const std::string& headings, double scale) override;
  bool supports(const std::string& statement, const std::string& document) override;
  PairLabel label_pair(const std::string& a, const std::string& b) override;

 private:
  json ask(const std::string& purpose, const std::string& system, const std::string& user,
           const std::vector<std::string>& required);
  std::shared_ptr<Gateway> gateway_;
};

struct SourceView {
  bool accessible = false;
  std::string text;
  std::optional<Timestamp> publish_time;
};

class SourceLookup {
 public:
  virtual ~SourceLookup() = default;
  virtual SourceView lookup(const std::string& url) = 0;
};

/// Looks sources up through a retriever, caching by URL.
class RetrieverLookup final : public SourceLookup {
 public:
  explicit RetrieverLookup(std::shared_ptr<Retriever> retriever) : retriever_(std::move(retriever)) {}
  SourceView lookup(const std::string& url) override;

 private:
  std::shared_ptr<Retriever> retriever_;
  std::mutex mutex_;
  std::map<std::string, SourceView> cache_;
};

double relevance(const std::string& report_text, const std::vector<std::string>& keypoints, EvalJudge& judge);
double structure(std::string_view markdown, EvalJudge& judge, const EvalConfig& config);
double hallucination(const std::vector<ClaimSourcePair>& pairs, SourceLookup& sources, EvalJudge& judge,
                     std::vector<std::string>* warnings = nullptr);
double temporality(const std::vector<ClaimSourcePair>& pairs, const EvalTask& task, SourceLookup& sources);
/// Last ISO date written inside a parenthetical of the statement, e.g.
/// "(Reuters, published 2025-03-18)".
std::optional<Date> inline_evidence_date(std::string_view statement);
/// Temporality over inline dates when no claim carries a source. Empty when
/// no claim has a date.
std::optional<double> inline_temporality(const std::vector<ClaimSourcePair>& claims, const EvalTask& task);
double consistency(const std::vector<ClaimSourcePair>& pairs, EvalJudge& judge, const EvalConfig& config);
double breadth(const std::vector<ClaimSourcePair>& pairs, const EvalConfig& config);
double depth(const std::vector<ClaimSourcePair>& pairs, const EvalConfig& config);

/// File-type indicator of the depth metric.
bool is_file_url(const std::string& url, const EvalConfig& config);

struct EvalInput {
  std::string markdown;
  std::vector<ClaimSourcePair> pairs;
  std::optional<double> len_ktokens;
  std::optional<double> time_seconds;
};

/// Full mode needs at least one sourced pair. Restricted mode computes
/// relevance, structure, temporality and consistency only; a report
/// without pairs is split into sentences for consistency, and a report
/// without sources takes temporality from inline evidence dates.
MetricReport evaluate(const EvalInput& input, const EvalTask& task, EvalJudge& judge, SourceLookup& sources,
                      const EvalConfig& config, EvalMode mode);

/// Mean ranks, rank 1 for the largest value when `higher_is_better`.
std::vector<double> mean_ranks(const std::vector<double>& values, bool higher_is_better = true);

struct RankRow {
  std::string system;
  std::map<std::string, double> normalized;  // metric → percentage
  std::map<std::string, double> ranks;
  double avg_rank = 0;
  std::optional<double> len_ktokens;
  std::optional<double> time_seconds;
};

struct RankTable {
  std::vector<std::string> metrics;  // column order
  std::vector<RankRow> rows;

  std::string render() const;
  json to_json() const;
};

/// Per-metric min-max normalization (hallucination inverted), mean-rank
/// ties, average rank over the ranked metrics. Throws DimensionMismatch when
/// systems carry different metric sets.
RankTable normalize_and_rank(const std::vector<std::pair<std::string, MetricReport>>& systems);

/// Throws LengthMismatch for unequal lengths and DegenerateData for N < 2.
double spearman(const std::vector<double>& ranks_x, const std::vector<double>& ranks_y);

/// ratings[rater][item], absent when the rater skipped the item. Ordinal
/// distance over the coincidence matrix. Throws DegenerateData when no
/// item has two ratings.
double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings);

}  // namespace deepreport
