#include "local_web.hpp"

#include <algorithm>

#include "deepreport/error.hpp"
#include "deepreport/io.hpp"
#include "deepreport/text.hpp"
#include "deepreport/url.hpp"
#include "offline_model.hpp"

namespace deepreport::testkit {

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t count_hits(const std::vector<std::string>& query_words, const std::string& text) {
  auto words = text::content_words(text);
  std::size_t hits = 0;
  for (const auto& w : query_words) hits += words.count(w);
  return hits;
}

}  // namespace

std::vector<FixturePage> load_pages(const std::filesystem::path& path) {
  std::vector<FixturePage> pages;
  read_ndjson(path, [&](std::size_t line, const json& v) {
    FixturePage p;
    try {
      p.url = v.at("url").get<std::string>();
      p.title = v.at("title").get<std::string>();
      if (v.contains("published") && v["published"].is_string()) p.published = v["published"].get<std::string>();
      p.paragraphs = v.at("paragraphs").get<std::vector<std::string>>();
      p.status = v.value("status", 200);
    } catch (const json::exception& e) {
      throw SchemaError(e.what(), line);
    }
    pages.push_back(std::move(p));
  });
  return pages;
}

std::string render_page(const FixturePage& page) {
  std::string html = "<!doctype html>\n<html><head><meta charset=\"utf-8\">\n<title>" + escape_html(page.title) +
                     "</title>\n";
  if (page.published) {
    html += "<meta property=\"article:published_time\" content=\"" + *page.published + "T08:00:00Z\">\n";
  }
  html += "</head><body>\n<nav><a href=\"/\">Home</a> <a href=\"/markets\">Markets</a></nav>\n<article>\n<h1>" +
          escape_html(page.title) + "</h1>\n";
  for (const auto& p : page.paragraphs) html += "<p>" + escape_html(p) + "</p>\n";
  html += "</article>\n<footer>Fixture site. All figures are synthetic.</footer>\n</body></html>\n";
  return html;
}

LocalWeb::LocalWeb(std::vector<FixturePage> pages) : pages_(std::move(pages)) {
  for (std::size_t i = 0; i < pages_.size(); ++i) {
    auto canonical = canonicalize(pages_[i].url);
    pages_[i].url = canonical;
    if (!by_url_.emplace(canonical, i).second) throw PreconditionError("duplicate fixture page " + canonical);
  }
}

std::vector<const FixturePage*> LocalWeb::rank(const std::string& query, int top_k) const {
  auto words = ordered_keywords(query);
  struct Scored {
    std::size_t score;
    const FixturePage* page;
  };
  std::vector<Scored> scored;
  for (const auto& p : pages_) {
    std::string body = text::join(p.paragraphs, " ");
    std::size_t score = 2 * count_hits(words, p.title) + count_hits(words, body);
    if (score > 0) scored.push_back({score, &p});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.page->url < b.page->url;
  });
  std::vector<const FixturePage*> out;
  for (const auto& s : scored) {
    if (static_cast<int>(out.size()) == top_k) break;
    out.push_back(s.page);
  }
  return out;
}

HttpResponse LocalWeb::search(const HttpRequest& request) const {
  ++searches_;
  auto body = json::parse(request.body, nullptr, false);
  if (body.is_discarded() || !body.contains("query")) return HttpResponse{400, {}, "{\"error\":\"bad request\"}"};
  int top_k = body.value("max_results", 5);
  json results = json::array();
  for (const auto* p : rank(body["query"].get<std::string>(), top_k)) {
    json r{{"title", p->title}, {"url", p->url}, {"content", p->paragraphs.empty() ? "" : p->paragraphs.front()}};
    if (p->published) r["published_date"] = *p->published;
    results.push_back(std::move(r));
  }
  return HttpResponse{200, {{"content-type", "application/json"}}, json{{"results", results}}.dump()};
}

HttpResponse LocalWeb::send(const HttpRequest& request) {
  ++requests_;
  if (request.url == kSearchEndpoint) return search(request);
  std::string canonical;
  try {
    canonical = canonicalize(request.url);
  } catch (const Error&) {
    return HttpResponse{400, {}, "bad url"};
  }
  auto it = by_url_.find(canonical);
  if (it == by_url_.end()) return HttpResponse{404, {{"content-type", "text/plain"}}, "not found"};
  const auto& page = pages_[it->second];
  if (page.status != 200) return HttpResponse{page.status, {{"content-type", "text/plain"}}, "forbidden"};
  return HttpResponse{200, {{"content-type", "text/html; charset=utf-8"}}, render_page(page)};
}

}  // namespace deepreport::testkit
