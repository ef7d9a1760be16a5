#include "deepreport/timeutil.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <regex>

namespace deepreport {

using namespace std::chrono;

namespace {

constexpr std::array<std::string_view, 12> kMonths = {
    "jan", "feb", "mar", "apr", "may", "jun",
    "jul", "aug", "sep", "oct", "nov", "dec"};

std::optional<unsigned> month_from_name(std::string_view name) {
  if (name.size() < 3) return std::nullopt;
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (unsigned i = 0; i < kMonths.size(); ++i) {
    if (lower.compare(0, 3, kMonths[i]) == 0) return i + 1;
  }
  return std::nullopt;
}

std::optional<sys_days> make_day(int y, unsigned m, unsigned d) {
  year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

int to_int(const std::ssub_match& m) { return std::stoi(m.str()); }

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view input) {
  std::string text(input);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.erase(text.begin());
  if (text.empty()) return std::nullopt;

  static const std::regex iso(
      R"(^(\d{4})-(\d{2})-(\d{2})(?:[T ](\d{2}):(\d{2})(?::(\d{2})(?:\.\d+)?)?\s*(Z|[+-]\d{2}:?\d{2})?)?$)",
      std::regex::icase);
  static const std::regex slashed(R"(^(\d{4})/(\d{1,2})/(\d{1,2})$)");
  static const std::regex rfc1123(
      R"(^(?:[A-Za-z]{3},\s*)?(\d{1,2})\s+([A-Za-z]{3,9})\s+(\d{4})\s+(\d{2}):(\d{2}):(\d{2})\s*(?:GMT|UTC|Z)?$)");
  static const std::regex month_first(R"(^([A-Za-z]{3,9})\.?\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})$)");
  static const std::regex day_first(R"(^(\d{1,2})(?:st|nd|rd|th)?\s+([A-Za-z]{3,9})\.?,?\s+(\d{4})$)");

  std::smatch m;
  if (std::regex_match(text, m, iso)) {
    auto d = make_day(to_int(m[1]), to_int(m[2]), to_int(m[3]));
    if (!d) return std::nullopt;
    seconds tod{0};
    if (m[4].matched) {
      int h = to_int(m[4]), mi = to_int(m[5]), s = m[6].matched ? to_int(m[6]) : 0;
      if (h > 23 || mi > 59 || s > 60) return std::nullopt;
      tod = hours{h} + minutes{mi} + seconds{s};
    }
    Timestamp t = *d + tod;
    if (m[7].matched && m[7].str() != "Z" && m[7].str() != "z") {
      std::string off = m[7].str();
      int sign = off[0] == '-' ? -1 : 1;
      std::string digits;
      for (char c : off) if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
      int oh = std::stoi(digits.substr(0, 2));
      int om = std::stoi(digits.substr(2, 2));
      t -= sign * (hours{oh} + minutes{om});
    }
    return t;
  }
  if (std::regex_match(text, m, slashed)) {
    auto d = make_day(to_int(m[1]), to_int(m[2]), to_int(m[3]));
    if (!d) return std::nullopt;
    return Timestamp{*d};
  }
  if (std::regex_match(text, m, rfc1123)) {
    auto mon = month_from_name(m[2].str());
    if (!mon) return std::nullopt;
    auto d = make_day(to_int(m[3]), *mon, to_int(m[1]));
    if (!d) return std::nullopt;
    return Timestamp{*d} + hours{to_int(m[4])} + minutes{to_int(m[5])} + seconds{to_int(m[6])};
  }
  if (std::regex_match(text, m, month_first)) {
    auto mon = month_from_name(m[1].str());
    if (!mon) return std::nullopt;
    auto d = make_day(to_int(m[3]), *mon, to_int(m[2]));
    if (!d) return std::nullopt;
    return Timestamp{*d};
  }
  if (std::regex_match(text, m, day_first)) {
    auto mon = month_from_name(m[2].str());
    if (!mon) return std::nullopt;
    auto d = make_day(to_int(m[3]), *mon, to_int(m[1]));
    if (!d) return std::nullopt;
    return Timestamp{*d};
  }
  return std::nullopt;
}

std::optional<Date> parse_date(std::string_view input, bool end_of_period) {
  static const std::regex re(R"(^\s*(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?\s*$)");
  std::string text(input);
  std::smatch m;
  if (!std::regex_match(text, m, re)) return std::nullopt;
  int y = to_int(m[1]);
  if (m[3].matched) return make_day(y, to_int(m[2]), to_int(m[3]));
  if (m[2].matched) {
    unsigned mo = static_cast<unsigned>(to_int(m[2]));
    if (mo < 1 || mo > 12) return std::nullopt;
    if (!end_of_period) return make_day(y, mo, 1);
    year_month_day_last last{year{y}, month_day_last{month{mo}}};
    return sys_days{last};
  }
  return end_of_period ? make_day(y, 12, 31) : make_day(y, 1, 1);
}

std::string format_timestamp(Timestamp t) {
  auto d = floor<days>(t);
  year_month_day ymd{d};
  hh_mm_ss hms{t - d};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::string format_date(Date d) {
  year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Date to_date(Timestamp t) { return floor<days>(t); }

sys_time<milliseconds> SystemClock::now() const {
  return floor<milliseconds>(system_clock::now());
}

std::shared_ptr<Clock> default_clock() {
  static auto clock = std::make_shared<SystemClock>();
  return clock;
}

}  // namespace deepreport
