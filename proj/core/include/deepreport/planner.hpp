#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/events.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/outline.hpp"
#include "deepreport/retrieval.hpp"

namespace deepreport {

enum class IntentKind { confirm, query, reject };

std::string_view to_string(IntentKind kind);

struct ClarifyQuestion {
  std::string text;
  std::vector<std::string> options;  // 2–3, distinct
};

struct IntentDecision {
  IntentKind kind = IntentKind::query;
  std::vector<ClarifyQuestion> questions;  // non-empty iff confirm
  std::optional<std::string> reject_reason;
  std::string preamble;  // text before the first question

  json to_json() const;
};

struct ClarifyExchange {
  std::string question;
  std::string answer;
};

struct ClarifiedIntent {
  std::string original_query;
  std::vector<ClarifyExchange> exchanges;
  std::string resolved_query;
  bool auto_expanded = false;

  json to_json() const;
};

/// Parses the clarification reply. The earliest of <confirm>, <query>,
/// <reject> decides the kind. Throws MalformedOutput when none is present
/// or a confirm block holds no question.
IntentDecision parse_intent(std::string_view reply);

/// Splits a confirm body into at most three questions ("1. … 2. …" or one
/// per '?'), each with 2–3 options read from its wording.
std::vector<ClarifyQuestion> extract_questions(std::string_view confirm_body);
std::vector<std::string> extract_options(std::string_view question);

/// Interactive when `answers` is set, auto-expanded otherwise. Throws
/// RejectedQuery and AnswerCountMismatch.
ClarifiedIntent resolve_intent(std::string_view original_query, const IntentDecision& decision,
                               const std::optional<std::vector<std::string>>& answers);

struct ReferenceExcerpt {
  std::string url;
  std::string title;
  std::string text;
  std::optional<Timestamp> publish_time;
};

struct ReferenceBundle {
  std::vector<std::string> queries;
  std::vector<ReferenceExcerpt> excerpts;

  std::size_t chars() const;
  /// Text for the outline prompt's {reference} slot.
  std::string render() const;
};

/// The resolved query verbatim plus up to two keyword variants.
std::vector<std::string> preliminary_queries(const ClarifiedIntent& intent);

/// Cuts at the last paragraph or sentence boundary that keeps the text
/// within `max_chars` UTF-8 characters.
std::string excerpt_text(std::string_view text, std::size_t max_chars);

struct PlannerConfig {
  std::size_t reference_budget_chars = 8000;
  std::size_t excerpt_chars = 2400;
  std::size_t max_documents = 5;
  int outline_retries = 1;
};

class Planner {
 public:
  Planner(std::shared_ptr<Gateway> gateway, std::shared_ptr<Retriever> retriever,
          std::shared_ptr<Clock> clock, PlannerConfig config = {});

  IntentDecision classify_intent(const std::string& query, EventSink& events);

  /// Never throws for provider outages; an empty bundle comes back with a
  /// warning event instead.
  ReferenceBundle preliminary_search(const ClarifiedIntent& intent, EventSink& events);

  /// One corrective re-ask on a structural violation, then MalformedOutline.
  ChapterTree generate_outline(const ClarifiedIntent& intent, const ReferenceBundle& bundle,
                               const std::string& domain, EventSink& events);

 private:
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<Retriever> retriever_;
  std::shared_ptr<Clock> clock_;
  PlannerConfig config_;
};

}  // namespace deepreport
