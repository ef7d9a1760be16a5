#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport {

struct Url {
  std::string scheme;  // lower-case
  std::string userinfo;
  std::string host;    // lower-case
  std::optional<int> port;
  std::string path;    // as written, may be empty
  std::string query;   // without '?'
  std::string fragment;

  std::string str() const;
};

/// Absolute http(s) URLs only. Throws BadUrl.
Url parse_url(std::string_view text);

/// Lower-cased scheme and host, default port dropped, fragment dropped,
/// tracking parameters removed, dot segments resolved, percent escapes
/// upper-cased, trailing slash removed except for the root path.
/// Idempotent. Throws BadUrl.
std::string canonicalize(std::string_view url);

bool is_tracking_param(std::string_view name);

/// "news.bbc.co.uk" → "bbc.co.uk", "a.b.example.com" → "example.com".
/// Uses a small table of common two-level public suffixes; IP literals are
/// returned unchanged.
std::string registrable_domain(std::string_view host);

/// Non-empty path segments; the query string is ignored.
std::vector<std::string> path_segments(std::string_view url);

/// Lower-cased extension of the last path segment without the dot, or "".
std::string path_suffix(std::string_view url);

}  // namespace deepreport
