#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport::text {

std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
/// ASCII lower-casing; non-ASCII bytes pass through unchanged.
std::string casefold(std::string_view s);
/// trim + collapse internal whitespace + casefold. Used for insight dedup.
std::string normalize(std::string_view s);

std::size_t utf8_length(std::string_view s);

bool is_stopword(std::string_view lowercase_word);
/// Lower-cased alphanumeric tokens in document order.
std::vector<std::string> words(std::string_view s);
/// Lower-cased tokens with stopwords and single letters removed.
std::set<std::string> content_words(std::string_view s);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Split on blank lines; single-newline text falls back to one paragraph
/// per line. Empty paragraphs are dropped.
std::vector<std::string> split_paragraphs(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
void replace_all(std::string& s, std::string_view from, std::string_view to);

/// Cuts at a UTF-8 boundary so that the result is at most `max_bytes`.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

}  // namespace deepreport::text
