#include "deepreport/retrieval.hpp"

#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "deepreport/error.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace {

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::optional<Date> loose_date(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (auto d = parse_date(text.substr(0, 10))) return d;
  if (auto t = parse_timestamp(text)) return to_date(*t);
  return std::nullopt;
}

}  // namespace

HttpSearchProvider::HttpSearchProvider(Options options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (!transport_) throw ConfigError("search provider needs a transport");
}

std::vector<SearchHit> HttpSearchProvider::search(const std::string& query, int top_k) {
  HttpRequest request;
  request.method = "POST";
  request.url = options_.endpoint;
  request.headers["Content-Type"] = "application/json";
  if (!options_.api_key.empty()) request.headers["Authorization"] = "Bearer " + options_.api_key;
  request.body = json{{"api_key", options_.api_key},
                      {"query", query},
                      {"max_results", top_k},
                      {"search_depth", "basic"}}
                     .dump();
  request.timeout = options_.timeout;

  HttpResponse response;
  try {
    response = transport_->send(request);
  } catch (const TransportError& e) {
    throw ProviderError(e.what(), 0);
  }
  if (response.status == 429) {
    std::optional<int> retry_after;
    auto header = response.header("Retry-After");
    if (!header.empty()) retry_after = std::atoi(header.c_str());
    throw ProviderError("search provider rate limited", 429, retry_after);
  }
  if (response.status < 200 || response.status >= 300) {
    throw ProviderError("search provider returned " + std::to_string(response.status),
                        response.status);
  }
  std::vector<SearchHit> hits;
  try {
    auto body = json::parse(response.body);
    for (const auto& r : body.at("results")) {
      SearchHit hit;
      hit.title = r.value("title", "");
      hit.url = r.value("url", "");
      hit.snippet = r.value("content", r.value("snippet", ""));
      if (auto it = r.find("published_date"); it != r.end() && it->is_string()) {
        hit.provider_date = loose_date(it->get<std::string>());
      }
      hits.push_back(std::move(hit));
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unreadable search response: ") + e.what(), response.status);
  }
  return hits;
}

PageFetcher::PageFetcher(Options options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (!transport_) throw ConfigError("page fetcher needs a transport");
}

RawPage PageFetcher::fetch(const std::string& url) {
  HttpRequest request;
  request.method = "GET";
  request.timeout = options_.timeout;
  if (options_.crawler_base_url.empty()) {
    request.url = url;
    request.headers["User-Agent"] = options_.user_agent;
  } else {
    std::string base = options_.crawler_base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    request.url = base + "/" + url;
    if (!options_.crawler_api_key.empty()) {
      request.headers["Authorization"] = "Bearer " + options_.crawler_api_key;
    }
  }
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    try {
      auto response = transport_->send(request);
      if (response.status >= 500 && attempt < options_.retries) continue;
      return RawPage{response.status, std::move(response.body), response.header("Content-Type"),
                     response.header("Last-Modified")};
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  spdlog::debug("fetch failed for {}: {}", url, last_error);
  throw FetchError(url, 0);
}

Retriever::Retriever(RetrievalConfig config, std::shared_ptr<SearchProvider> provider,
                     std::shared_ptr<PageFetcher> fetcher, std::shared_ptr<SnapshotStore> store,
                     std::shared_ptr<Clock> clock)
    : config_(config),
      provider_(std::move(provider)),
      fetcher_(std::move(fetcher)),
      store_(std::move(store)),
      clock_(clock ? std::move(clock) : default_clock()) {
  if (config_.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (config_.parallelism < 1 || config_.per_host < 1) {
    throw ConfigError("fetch parallelism limits must be >= 1");
  }
  if (config_.mode != SnapshotMode::live && !store_) {
    throw ConfigError("record and replay modes need a snapshot store");
  }
  if (config_.mode != SnapshotMode::replay && (!provider_ || !fetcher_)) {
    throw ConfigError("live and record modes need a search provider and a fetcher");
  }
}

std::vector<SearchHit> Retriever::search(const std::string& query, std::optional<int> top_k) {
  int k = top_k.value_or(config_.top_k);
  if (k < 1) throw PreconditionError("top_k must be >= 1");
  if (store_ && config_.mode != SnapshotMode::live) {
    if (auto hits = store_->search_hits(query, k)) return *hits;
    if (config_.mode == SnapshotMode::replay) throw ReplayMiss("search not recorded: " + query);
  }
  auto raw = provider_->search(query, k);
  std::vector<SearchHit> hits;
  std::set<std::string> seen;
  for (auto& hit : raw) {
    if (static_cast<int>(hits.size()) >= k) break;
    try {
      hit.url = canonicalize(hit.url);
    } catch (const BadUrl&) {
      continue;
    }
    if (!seen.insert(hit.url).second) continue;
    hits.push_back(std::move(hit));
  }
  if (config_.mode == SnapshotMode::record) store_->put_search(query, k, hits);
  return hits;
}

std::pair<SourceDocument, std::string> Retriever::fetch_live(const std::string& url,
                                                             std::optional<Date> provider_date) {
  auto raw = fetcher_->fetch(url);
  SourceDocument doc;
  doc.url = url;
  doc.fetched_at = clock_->now_seconds();
  doc.http_status = raw.status;
  doc.content_type = raw.content_type;
  doc.content_hash = sha256_hex(raw.body);
  doc.media_kind = classify_media(url, raw.content_type);
  if (doc.ok()) {
    auto extraction = extract_document(raw.body, doc.media_kind);
    doc.title = extraction.title;
    doc.extracted_text = extraction.text;
    doc.publish_time = resolve_publish_time(extraction, raw.last_modified, provider_date);
  }
  return {std::move(doc), std::move(raw.body)};
}

SourceDocument Retriever::fetch(const std::string& url, std::optional<Date> provider_date) {
  auto canonical = canonicalize(url);
  std::optional<SourceDocument> doc;
  if (store_ && config_.mode != SnapshotMode::live) doc = store_->document(canonical);
  if (!doc) {
    if (config_.mode == SnapshotMode::replay) throw ReplayMiss("page not recorded: " + canonical);
    auto [live, body] = fetch_live(canonical, provider_date);
    if (config_.mode == SnapshotMode::record) store_->put_document(live, body);
    doc = std::move(live);
  }
  if (!doc->ok()) throw FetchError(canonical, doc->http_status);
  return *doc;
}

std::vector<FetchOutcome> Retriever::fetch_many(const std::vector<SearchHit>& hits) {
  std::vector<FetchOutcome> outcomes(hits.size());
  std::vector<std::string> hosts(hits.size());
  std::vector<bool> pending(hits.size(), false);
  std::size_t unstarted = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    outcomes[i].url = hits[i].url;
    try {
      outcomes[i].url = canonicalize(hits[i].url);
      hosts[i] = parse_url(outcomes[i].url).host;
      pending[i] = true;
      ++unstarted;
    } catch (const BadUrl& e) {
      outcomes[i].error = e.what();
    }
  }

  std::mutex mutex;
  std::condition_variable cv;
  std::map<std::string, int> in_flight;
  auto worker = [&] {
    while (true) {
      std::size_t pick = hits.size();
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] {
          if (unstarted == 0) return true;
          for (std::size_t i = 0; i < hits.size(); ++i) {
            if (pending[i] && in_flight[hosts[i]] < config_.per_host) {
              pick = i;
              return true;
            }
          }
          return false;
        });
        if (pick == hits.size()) return;
        pending[pick] = false;
        --unstarted;
        ++in_flight[hosts[pick]];
      }
      try {
        outcomes[pick].document = fetch(outcomes[pick].url, hits[pick].provider_date);
      } catch (const std::exception& e) {
        outcomes[pick].error = e.what();
      }
      {
        std::lock_guard lock(mutex);
        --in_flight[hosts[pick]];
      }
      cv.notify_all();
    }
  };

  std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism), unstarted);
  if (threads <= 1) {
    if (unstarted > 0) worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

bool Retriever::check_accessible(const std::string& url) {
  try {
    auto canonical = canonicalize(url);
    if (config_.mode == SnapshotMode::replay) {
      auto doc = store_->document(canonical);
      return doc && doc->ok();
    }
    fetch(canonical);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

std::shared_ptr<Retriever> retriever_from_env(std::shared_ptr<Transport> transport,
                                              std::optional<SnapshotMode> mode_override,
                                              std::optional<std::string> dir_override,
                                              std::shared_ptr<Clock> clock) {
  RetrievalConfig config;
  if (mode_override) {
    config.mode = *mode_override;
  } else if (auto name = env("SNAPSHOT_MODE"); !name.empty()) {
    auto mode = snapshot_mode_from_name(name);
    if (!mode) throw ConfigError("SNAPSHOT_MODE must be live, record or replay");
    config.mode = *mode;
  }
  std::string dir = dir_override.value_or(env("SNAPSHOT_DIR"));
  std::shared_ptr<SnapshotStore> store;
  if (!dir.empty()) store = std::make_shared<SnapshotStore>(dir);
  if (config.mode != SnapshotMode::live && !store) {
    throw ConfigError("SNAPSHOT_DIR is required for record and replay modes");
  }
  if (config.mode == SnapshotMode::replay) {
    return std::make_shared<Retriever>(config, nullptr, nullptr, store, clock);
  }
  HttpSearchProvider::Options search;
  search.api_key = env("SEARCH_API_KEY");
  if (auto endpoint = env("SEARCH_ENDPOINT"); !endpoint.empty()) search.endpoint = endpoint;
  if (search.api_key.empty() && env("SEARCH_ENDPOINT").empty()) {
    throw ConfigError("SEARCH_API_KEY is required for live and record modes");
  }
  PageFetcher::Options fetch;
  fetch.crawler_api_key = env("CRAWLER_API_KEY");
  fetch.crawler_base_url = env("CRAWLER_BASE_URL");
  return std::make_shared<Retriever>(
      config, std::make_shared<HttpSearchProvider>(search, transport),
      std::make_shared<PageFetcher>(fetch, transport), store, clock);
}

}  // namespace deepreport
