#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/io.hpp"
#include "deepreport/timeutil.hpp"

namespace deepreport {

enum class EventKind {
  stage_changed,
  clarification_needed,
  clarification_answered,
  intent_resolved,
  outline_ready,
  chapter_started,
  sq_issued,
  source_distilled,
  reflection_verdict,
  chapter_done,
  memory_recorded,
  segment_written,
  report_ready,
  warning,
  error,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_name(std::string_view name);

struct RunEvent {
  std::string run_id;
  std::uint64_t seq = 0;  // 1-based, gap-free per run
  EventKind kind = EventKind::warning;
  json payload = json::object();
  std::string at;  // ISO timestamp

  json to_json() const;
  static RunEvent from_json(const json& value);
};

class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void emit(EventKind kind, json payload) = 0;

  void warn(const std::string& message, json detail = json::object());
};

/// Discards everything.
class NullSink final : public EventSink {
 public:
  void emit(EventKind, json) override {}
};

/// Ordered, append-only event history of one run with blocking tail reads.
/// Events are immutable once appended.
class EventLog final : public EventSink {
 public:
  explicit EventLog(std::string run_id, std::shared_ptr<Clock> clock = nullptr);

  void emit(EventKind kind, json payload) override;
  RunEvent append(EventKind kind, json payload);

  /// Events with seq > after_seq.
  std::vector<RunEvent> since(std::uint64_t after_seq) const;
  /// Blocks until an event with seq > after_seq exists, the log is closed,
  /// or the timeout passes. Returns what is available.
  std::vector<RunEvent> wait_since(std::uint64_t after_seq, std::chrono::milliseconds timeout) const;

  /// No more events will arrive; wakes all tailers.
  void close();
  bool closed() const;
  std::uint64_t last_seq() const;
  const std::string& run_id() const noexcept { return run_id_; }

  /// One JSON record per line.
  std::string to_ndjson() const;

 private:
  std::string run_id_;
  std::shared_ptr<Clock> clock_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::vector<RunEvent> events_;
  bool closed_ = false;
};

}  // namespace deepreport
