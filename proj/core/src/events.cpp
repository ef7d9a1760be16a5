#include "deepreport/events.hpp"

#include <array>

#include "deepreport/error.hpp"

namespace deepreport {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 15> kNames = {{
    {EventKind::stage_changed, "stage_changed"},
    {EventKind::clarification_needed, "clarification_needed"},
    {EventKind::clarification_answered, "clarification_answered"},
    {EventKind::intent_resolved, "intent_resolved"},
    {EventKind::outline_ready, "outline_ready"},
    {EventKind::chapter_started, "chapter_started"},
    {EventKind::sq_issued, "sq_issued"},
    {EventKind::source_distilled, "source_distilled"},
    {EventKind::reflection_verdict, "reflection_verdict"},
    {EventKind::chapter_done, "chapter_done"},
    {EventKind::memory_recorded, "memory_recorded"},
    {EventKind::segment_written, "segment_written"},
    {EventKind::report_ready, "report_ready"},
    {EventKind::warning, "warning"},
    {EventKind::error, "error"},
}};

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "warning";
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

json RunEvent::to_json() const {
  return json{{"run_id", run_id},
              {"seq", seq},
              {"kind", std::string(deepreport::to_string(kind))},
              {"payload", payload},
              {"at", at}};
}

RunEvent RunEvent::from_json(const json& value) {
  RunEvent e;
  e.run_id = value.at("run_id").get<std::string>();
  e.seq = value.at("seq").get<std::uint64_t>();
  auto kind = event_kind_from_name(value.at("kind").get<std::string>());
  if (!kind) throw PreconditionError("unknown event kind");
  e.kind = *kind;
  e.payload = value.value("payload", json::object());
  e.at = value.value("at", "");
  return e;
}

void EventSink::warn(const std::string& message, json detail) {
  detail["message"] = message;
  emit(EventKind::warning, std::move(detail));
}

EventLog::EventLog(std::string run_id, std::shared_ptr<Clock> clock)
    : run_id_(std::move(run_id)), clock_(clock ? std::move(clock) : default_clock()) {}

void EventLog::emit(EventKind kind, json payload) { append(kind, std::move(payload)); }

RunEvent EventLog::append(EventKind kind, json payload) {
  std::lock_guard lock(mutex_);
  if (closed_) throw PreconditionError("event log of run " + run_id_ + " is closed");
  RunEvent e;
  e.run_id = run_id_;
  e.seq = events_.size() + 1;
  e.kind = kind;
  e.payload = std::move(payload);
  e.at = format_timestamp(clock_->now_seconds());
  events_.push_back(std::move(e));
  cv_.notify_all();
  return events_.back();
}

std::vector<RunEvent> EventLog::since(std::uint64_t after_seq) const {
  std::lock_guard lock(mutex_);
  if (after_seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(after_seq), events_.end()};
}

std::vector<RunEvent> EventLog::wait_since(std::uint64_t after_seq,
                                           std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > after_seq; });
  if (after_seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(after_seq), events_.end()};
}

void EventLog::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::string EventLog::to_ndjson() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& e : events_) {
    out += to_line(e.to_json());
    out += '\n';
  }
  return out;
}

}  // namespace deepreport
