#include "deepreport/error.hpp"

namespace deepreport {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::missing_slot: return "MissingSlot";
    case ErrorCode::endpoint_error: return "EndpointError";
    case ErrorCode::transcript_miss: return "TranscriptMiss";
    case ErrorCode::unbalanced_tag: return "UnbalancedTag";
    case ErrorCode::malformed_output: return "MalformedOutput";
    case ErrorCode::provider_error: return "ProviderError";
    case ErrorCode::replay_miss: return "ReplayMiss";
    case ErrorCode::fetch_error: return "FetchError";
    case ErrorCode::extract_error: return "ExtractError";
    case ErrorCode::bad_url: return "BadUrl";
    case ErrorCode::answer_count_mismatch: return "AnswerCountMismatch";
    case ErrorCode::rejected_query: return "RejectedQuery";
    case ErrorCode::malformed_outline: return "MalformedOutline";
    case ErrorCode::empty_chapter: return "EmptyChapter";
    case ErrorCode::citation_unbound: return "CitationUnbound";
    case ErrorCode::schema_error: return "SchemaError";
    case ErrorCode::judge_error: return "JudgeError";
    case ErrorCode::no_headings: return "NoHeadings";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::degenerate_data: return "DegenerateData";
    case ErrorCode::wrong_stage: return "WrongStage";
    case ErrorCode::unknown_run: return "UnknownRun";
    case ErrorCode::corrupt_corpus: return "CorruptCorpus";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::research_failed: return "ResearchFailed";
    case ErrorCode::precondition: return "PreconditionError";
  }
  return "Unknown";
}

namespace {

std::string corrupt_message(const std::vector<std::string>& urls) {
  std::string msg = "snapshot corpus corrupt (" + std::to_string(urls.size()) +
                    " mismatched bodies)";
  for (const auto& u : urls) msg += "\n  " + u;
  return msg;
}

}  // namespace

CorruptCorpus::CorruptCorpus(std::vector<std::string> urls)
    : Error(ErrorCode::corrupt_corpus, corrupt_message(urls)),
      urls_(std::move(urls)) {}

}  // namespace deepreport
