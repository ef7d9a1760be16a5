#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deepreport/io.hpp"
#include "deepreport/timeutil.hpp"

namespace deepreport {

struct KnowledgeCandidate {
  std::string insight;
  std::vector<std::string> snippet_ids;
  std::string source_url;  // canonical
  std::optional<Timestamp> publish_time;
  std::string source_title;

  json to_json() const;
  static KnowledgeCandidate from_json(const json& value);
};

/// Identity used for deduplication: canonical URL plus normalized insight.
std::string candidate_key(std::string_view source_url, std::string_view insight);

struct ReflectionProfile {
  bool freshness = false;
  bool plurality = false;
  bool completeness = false;

  json to_json() const;
};

struct CheckResult {
  std::string think;
  bool pass = false;
  std::string type;  // freshness only
};

struct ReflectionVerdict {
  CheckResult integrity;
  std::optional<CheckResult> freshness;
  std::optional<CheckResult> plurality;
  int steps_used = 0;
  bool accepted = false;

  /// integrity ∧ enabled freshness ∧ enabled plurality.
  static bool gate(const CheckResult& integrity, const std::optional<CheckResult>& freshness,
                   const std::optional<CheckResult>& plurality);
  json to_json() const;
};

enum class ResearchStatus { searching, accepted, budget_exhausted };

std::string_view to_string(ResearchStatus status);

struct ChapterResearchState {
  std::string chapter_id;
  int step_count = 0;
  std::vector<KnowledgeCandidate> candidates;
  ResearchStatus status = ResearchStatus::searching;
  std::vector<ReflectionVerdict> verdicts;
  std::size_t documents_fetched = 0;

  json to_json() const;
};

/// Proof that a chapter's research loop finished. Memory only records
/// candidates presented together with a token for the same chapter.
class GateToken {
 public:
  /// Throws PreconditionError while the state is still searching.
  static GateToken issue(const ChapterResearchState& state);

  const std::string& chapter_id() const noexcept { return chapter_id_; }
  ResearchStatus status() const noexcept { return status_; }

 private:
  GateToken(std::string chapter_id, ResearchStatus status)
      : chapter_id_(std::move(chapter_id)), status_(status) {}

  std::string chapter_id_;
  ResearchStatus status_;
};

}  // namespace deepreport
