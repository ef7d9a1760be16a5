#include "deepreport/url.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

constexpr std::array<std::string_view, 10> kTrackingExact = {
    "gclid", "fbclid", "msclkid", "mc_cid", "mc_eid", "yclid", "igshid", "_hsenc", "_hsmi", "dclid"};

constexpr std::array<std::string_view, 24> kSecondLevel = {
    "co.uk", "org.uk", "ac.uk", "gov.uk", "com.cn", "net.cn", "org.cn", "gov.cn",
    "com.au", "net.au", "org.au", "edu.au", "gov.au", "co.jp", "ne.jp", "or.jp",
    "co.kr", "com.br", "com.hk", "com.sg", "com.tw", "co.in", "co.nz", "com.mx"};

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

std::string uppercase_escapes(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == '%' && i + 2 < out.size() && is_hex(out[i + 1]) && is_hex(out[i + 2])) {
      out[i + 1] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[i + 1])));
      out[i + 2] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[i + 2])));
      i += 2;
    }
  }
  return out;
}

std::string remove_dot_segments(std::string_view path) {
  if (path.empty()) return "/";
  std::vector<std::string> out;
  auto parts = text::split(path, '/');
  bool trailing = path.back() == '/';
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p == ".") {
      if (i + 1 == parts.size()) trailing = true;
      continue;
    }
    if (p == "..") {
      if (!out.empty()) out.pop_back();
      if (i + 1 == parts.size()) trailing = true;
      continue;
    }
    if (p.empty()) continue;
    out.push_back(p);
  }
  std::string result = "/" + text::join(out, "/");
  if (trailing && result.size() > 1) result += '/';
  return result;
}

}  // namespace

std::string Url::str() const {
  std::string out = scheme + "://";
  if (!userinfo.empty()) out += userinfo + "@";
  out += host;
  if (port) out += ":" + std::to_string(*port);
  out += path;
  if (!query.empty()) out += "?" + query;
  if (!fragment.empty()) out += "#" + fragment;
  return out;
}

Url parse_url(std::string_view input) {
  std::string text = text::trim(input);
  auto scheme_end = text.find("://");
  if (scheme_end == std::string::npos || scheme_end == 0) throw BadUrl("not an absolute URL: " + text);
  Url url;
  url.scheme = text::casefold(text.substr(0, scheme_end));
  if (url.scheme != "http" && url.scheme != "https") throw BadUrl("unsupported scheme: " + text);
  for (char c : url.scheme) {
    if (!std::isalpha(static_cast<unsigned char>(c))) throw BadUrl("bad scheme: " + text);
  }
  std::string rest = text.substr(scheme_end + 3);
  auto frag = rest.find('#');
  if (frag != std::string::npos) {
    url.fragment = rest.substr(frag + 1);
    rest.resize(frag);
  }
  auto q = rest.find('?');
  if (q != std::string::npos) {
    url.query = rest.substr(q + 1);
    rest.resize(q);
  }
  auto slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  url.path = slash == std::string::npos ? "" : rest.substr(slash);
  auto at = authority.rfind('@');
  if (at != std::string::npos) {
    url.userinfo = authority.substr(0, at);
    authority = authority.substr(at + 1);
  }
  std::string host = authority;
  auto colon = authority.rfind(':');
  bool ipv6 = !authority.empty() && authority.front() == '[';
  if (colon != std::string::npos && (!ipv6 || colon > authority.find(']'))) {
    std::string port = authority.substr(colon + 1);
    host = authority.substr(0, colon);
    if (!port.empty()) {
      if (port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) {
            return std::isdigit(static_cast<unsigned char>(c));
          })) {
        throw BadUrl("bad port: " + text);
      }
      int value = std::stoi(port);
      if (value <= 0 || value > 65535) throw BadUrl("bad port: " + text);
      url.port = value;
    }
  }
  if (host.empty()) throw BadUrl("missing host: " + text);
  for (char c : host) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '/' || c == '\\') {
      throw BadUrl("bad host: " + text);
    }
  }
  url.host = text::casefold(host);
  for (char c : url.path) {
    if (std::isspace(static_cast<unsigned char>(c))) throw BadUrl("whitespace in path: " + text);
  }
  return url;
}

bool is_tracking_param(std::string_view name) {
  auto lower = text::casefold(name);
  if (lower.rfind("utm_", 0) == 0) return true;
  return std::find(kTrackingExact.begin(), kTrackingExact.end(), lower) != kTrackingExact.end();
}

std::string canonicalize(std::string_view input) {
  Url url = parse_url(input);
  url.fragment.clear();
  if ((url.scheme == "http" && url.port == 80) || (url.scheme == "https" && url.port == 443)) {
    url.port.reset();
  }
  while (!url.host.empty() && url.host.back() == '.') url.host.pop_back();
  if (url.host.empty()) throw BadUrl("missing host: " + std::string(input));

  std::string path = remove_dot_segments(uppercase_escapes(url.path));
  if (path.size() > 1 && path.back() == '/') path.pop_back();
  url.path = path;

  std::vector<std::string> kept;
  if (!url.query.empty()) {
    for (auto& param : text::split(url.query, '&')) {
      if (param.empty()) continue;
      auto eq = param.find('=');
      if (is_tracking_param(param.substr(0, eq))) continue;
      kept.push_back(uppercase_escapes(param));
    }
  }
  url.query = text::join(kept, "&");
  return url.str();
}

std::string registrable_domain(std::string_view host_in) {
  std::string host = text::casefold(host_in);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty() || host.front() == '[') return host;
  bool numeric = std::all_of(host.begin(), host.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  });
  if (numeric) return host;
  auto labels = text::split(host, '.');
  if (labels.size() <= 2) return host;
  std::string last_two = labels[labels.size() - 2] + "." + labels.back();
  bool second_level =
      std::find(kSecondLevel.begin(), kSecondLevel.end(), last_two) != kSecondLevel.end();
  std::size_t keep = second_level ? 3 : 2;
  if (labels.size() <= keep) return host;
  std::vector<std::string> tail(labels.end() - static_cast<std::ptrdiff_t>(keep), labels.end());
  return text::join(tail, ".");
}

std::vector<std::string> path_segments(std::string_view input) {
  Url url = parse_url(input);
  std::vector<std::string> out;
  for (auto& part : text::split(url.path, '/')) {
    if (!part.empty()) out.push_back(std::move(part));
  }
  return out;
}

std::string path_suffix(std::string_view input) {
  auto segments = path_segments(input);
  if (segments.empty()) return "";
  const auto& last = segments.back();
  auto dot = last.rfind('.');
  if (dot == std::string::npos || dot + 1 == last.size()) return "";
  return text::casefold(last.substr(dot + 1));
}

}  // namespace deepreport
