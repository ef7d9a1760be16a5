#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport {

enum class ErrorCode {
  missing_slot,
  endpoint_error,
  transcript_miss,
  unbalanced_tag,
  malformed_output,
  provider_error,
  replay_miss,
  fetch_error,
  extract_error,
  bad_url,
  answer_count_mismatch,
  rejected_query,
  malformed_outline,
  empty_chapter,
  citation_unbound,
  schema_error,
  judge_error,
  no_headings,
  dimension_mismatch,
  length_mismatch,
  degenerate_data,
  wrong_stage,
  unknown_run,
  corrupt_corpus,
  config_error,
  research_failed,
  precondition,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base of every error the library throws. The code is stable and is what
/// the HTTP layer and the event log report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode Code>
class SimpleError : public Error {
 public:
  explicit SimpleError(const std::string& message) : Error(Code, message) {}
};

using EndpointError = SimpleError<ErrorCode::endpoint_error>;
using TranscriptMiss = SimpleError<ErrorCode::transcript_miss>;
using UnbalancedTag = SimpleError<ErrorCode::unbalanced_tag>;
using ReplayMiss = SimpleError<ErrorCode::replay_miss>;
using ExtractError = SimpleError<ErrorCode::extract_error>;
using BadUrl = SimpleError<ErrorCode::bad_url>;
using AnswerCountMismatch = SimpleError<ErrorCode::answer_count_mismatch>;
using RejectedQuery = SimpleError<ErrorCode::rejected_query>;
using MalformedOutline = SimpleError<ErrorCode::malformed_outline>;
using EmptyChapter = SimpleError<ErrorCode::empty_chapter>;
using CitationUnbound = SimpleError<ErrorCode::citation_unbound>;
using JudgeError = SimpleError<ErrorCode::judge_error>;
using NoHeadings = SimpleError<ErrorCode::no_headings>;
using DimensionMismatch = SimpleError<ErrorCode::dimension_mismatch>;
using LengthMismatch = SimpleError<ErrorCode::length_mismatch>;
using DegenerateData = SimpleError<ErrorCode::degenerate_data>;
using WrongStage = SimpleError<ErrorCode::wrong_stage>;
using UnknownRun = SimpleError<ErrorCode::unknown_run>;
using ConfigError = SimpleError<ErrorCode::config_error>;
using ResearchFailed = SimpleError<ErrorCode::research_failed>;
using PreconditionError = SimpleError<ErrorCode::precondition>;

class MissingSlot : public Error {
 public:
  explicit MissingSlot(std::string slot)
      : Error(ErrorCode::missing_slot, "unbound prompt slot: " + slot),
        slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

/// Every attempt produced unparseable or schema-invalid output. Keeps the
/// last raw model text for audit.
class MalformedOutput : public Error {
 public:
  MalformedOutput(const std::string& message, std::string raw)
      : Error(ErrorCode::malformed_output, message), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, int status,
                std::optional<int> retry_after_seconds = std::nullopt)
      : Error(ErrorCode::provider_error, message),
        status_(status),
        retry_after_(retry_after_seconds) {}
  int status() const noexcept { return status_; }
  std::optional<int> retry_after() const noexcept { return retry_after_; }

 private:
  int status_;
  std::optional<int> retry_after_;
};

class FetchError : public Error {
 public:
  FetchError(const std::string& url, int status)
      : Error(ErrorCode::fetch_error,
              "fetch failed with status " + std::to_string(status) + ": " + url),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& message, std::size_t line)
      : Error(ErrorCode::schema_error,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CorruptCorpus : public Error {
 public:
  explicit CorruptCorpus(std::vector<std::string> urls);
  const std::vector<std::string>& urls() const noexcept { return urls_; }

 private:
  std::vector<std::string> urls_;
};

}  // namespace deepreport
