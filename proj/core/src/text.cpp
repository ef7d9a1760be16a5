#include "deepreport/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace deepreport::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",     "about", "above", "after", "again",  "all",   "also",  "am",    "an",
      "and",   "any",   "are",   "as",    "at",     "be",    "been",  "being", "between",
      "both",  "but",   "by",    "can",   "could",  "did",   "do",    "does",  "doing",
      "during","each",  "few",   "for",   "from",   "further","had",  "has",   "have",
      "having","he",    "her",   "here",  "hers",   "him",   "his",   "how",   "i",
      "if",    "in",    "into",  "is",    "it",     "its",   "itself","just",  "me",
      "more",  "most",  "my",    "no",    "nor",    "not",   "now",   "of",    "off",
      "on",    "once",  "only",  "or",    "other",  "our",   "ours",  "out",   "over",
      "own",   "same",  "she",   "should","so",     "some",  "such",  "than",  "that",
      "the",   "their", "theirs","them",  "then",   "there", "these", "they",  "this",
      "those", "through","to",   "too",   "under",  "until", "up",    "very",  "was",
      "we",    "were",  "what",  "when",  "where",  "which", "while", "who",   "whom",
      "why",   "will",  "with",  "would", "you",    "your",  "yours", "via",   "per",
      "within","across","among", "whether","versus","vs",    "including", "covering",
      "involving"};
  return words;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string normalize(std::string_view s) { return casefold(collapse_whitespace(s)); }

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

bool is_stopword(std::string_view w) { return stopwords().count(w) > 0; }

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::set<std::string> content_words(std::string_view s) {
  std::set<std::string> out;
  for (auto& w : words(s)) {
    if (w.size() < 2 && !std::isdigit(static_cast<unsigned char>(w[0]))) continue;
    if (is_stopword(w)) continue;
    out.insert(std::move(w));
  }
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<std::string> split_paragraphs(std::string_view s) {
  std::vector<std::string> out;
  bool has_blank_line = false;
  {
    std::size_t pos = 0;
    while ((pos = s.find('\n', pos)) != std::string_view::npos) {
      std::size_t next = pos + 1;
      while (next < s.size() && (s[next] == ' ' || s[next] == '\t' || s[next] == '\r')) ++next;
      if (next < s.size() && s[next] == '\n') {
        has_blank_line = true;
        break;
      }
      pos = next;
    }
  }
  std::string cur;
  auto flush = [&] {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(collapse_whitespace(t));
    cur.clear();
  };
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = s.substr(start, end - start);
    bool blank = trim(line).empty();
    if (has_blank_line) {
      if (blank) flush();
      else {
        if (!cur.empty()) cur += ' ';
        cur += line;
      }
    } else {
      cur = std::string(line);
      flush();
    }
    start = end + 1;
  }
  flush();
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

}  // namespace deepreport::text
