#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace deepreport {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

/// Accepts ISO-8601 dates and date-times (with optional fraction and zone
/// offset), "YYYY/MM/DD", RFC 1123 HTTP dates, and English month-name forms
/// such as "June 10, 2024" or "10 Jun 2024". Returns nullopt otherwise.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// "YYYY", "YYYY-MM" or "YYYY-MM-DD". A partial date resolves to the first
/// day of the period, or the last day when `end_of_period` is set.
std::optional<Date> parse_date(std::string_view text, bool end_of_period = false);

std::string format_timestamp(Timestamp t);  // 2024-06-10T08:00:00Z
std::string format_date(Date d);            // 2024-06-10
Date to_date(Timestamp t);

/// Injectable time source. Replay runs use a fixed clock so recorded_at
/// fields and profile timings are reproducible.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::sys_time<std::chrono::milliseconds> now() const = 0;

  Timestamp now_seconds() const {
    return std::chrono::floor<std::chrono::seconds>(now());
  }
};

class SystemClock final : public Clock {
 public:
  std::chrono::sys_time<std::chrono::milliseconds> now() const override;
};

class FixedClock final : public Clock {
 public:
  explicit FixedClock(Timestamp at) : at_(at) {}
  std::chrono::sys_time<std::chrono::milliseconds> now() const override {
    return at_;
  }

 private:
  Timestamp at_;
};

std::shared_ptr<Clock> default_clock();

}  // namespace deepreport
