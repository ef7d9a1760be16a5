#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deepreport/snapshot.hpp"
#include "deepreport/timeutil.hpp"
#include "deepreport/transport.hpp"

namespace deepreport {

class SearchProvider {
 public:
  virtual ~SearchProvider() = default;
  /// Throws ProviderError.
  virtual std::vector<SearchHit> search(const std::string& query, int top_k) = 0;
};

/// Tavily-style search API: POST {endpoint} with {"api_key","query",
/// "max_results"}, answer {"results":[{"title","url","content",
/// "published_date"}]}.
class HttpSearchProvider final : public SearchProvider {
 public:
  struct Options {
    std::string endpoint = "https://api.tavily.com/search";
    std::string api_key;
    std::chrono::milliseconds timeout{10000};
  };

  HttpSearchProvider(Options options, std::shared_ptr<Transport> transport);
  std::vector<SearchHit> search(const std::string& query, int top_k) override;

 private:
  Options options_;
  std::shared_ptr<Transport> transport_;
};

/// Raw HTTP result of a page fetch.
struct RawPage {
  int status = 0;
  std::string body;
  std::string content_type;
  std::string last_modified;
};

class PageFetcher {
 public:
  struct Options {
    std::chrono::milliseconds timeout{20000};
    int retries = 1;
    /// When set, pages are fetched as GET {crawler_base_url}/{url} with the
    /// crawler key as a bearer token.
    std::string crawler_base_url;
    std::string crawler_api_key;
    std::string user_agent = "deepreport/0.3";
  };

  PageFetcher(Options options, std::shared_ptr<Transport> transport);
  /// Throws FetchError(0) when every attempt failed at the connection level.
  RawPage fetch(const std::string& url);

 private:
  Options options_;
  std::shared_ptr<Transport> transport_;
};

struct RetrievalConfig {
  SnapshotMode mode = SnapshotMode::live;
  int top_k = 5;
  int parallelism = 8;
  int per_host = 2;
};

struct FetchOutcome {
  std::string url;
  std::optional<SourceDocument> document;
  std::string error;  // set when document is empty
};

/// Search + fetch behind the snapshot protocol. In replay mode only the
/// snapshot store is consulted; in record mode live results are persisted
/// and a URL or query already in the store is served from it.
class Retriever {
 public:
  Retriever(RetrievalConfig config, std::shared_ptr<SearchProvider> provider,
            std::shared_ptr<PageFetcher> fetcher, std::shared_ptr<SnapshotStore> store,
            std::shared_ptr<Clock> clock = nullptr);

  const RetrievalConfig& config() const noexcept { return config_; }
  std::shared_ptr<SnapshotStore> store() const noexcept { return store_; }

  /// At most top_k hits with canonical URLs. Throws ProviderError or
  /// ReplayMiss.
  std::vector<SearchHit> search(const std::string& query, std::optional<int> top_k = std::nullopt);

  /// Throws FetchError for non-2xx, ExtractError for undecodable bodies,
  /// ReplayMiss for unrecorded URLs in replay mode.
  SourceDocument fetch(const std::string& url, std::optional<Date> provider_date = std::nullopt);

  /// Fetches concurrently under the parallelism cap and per-host limit.
  /// Results come back in input order; failures never throw.
  std::vector<FetchOutcome> fetch_many(const std::vector<SearchHit>& hits);

  /// True iff fetch would return a 2xx document.
  bool check_accessible(const std::string& url);

 private:
  /// Document plus raw body.
  std::pair<SourceDocument, std::string> fetch_live(const std::string& url,
                                                   std::optional<Date> provider_date);

  RetrievalConfig config_;
  std::shared_ptr<SearchProvider> provider_;
  std::shared_ptr<PageFetcher> fetcher_;
  std::shared_ptr<SnapshotStore> store_;
  std::shared_ptr<Clock> clock_;
};

/// Builds a retriever from SEARCH_API_KEY, CRAWLER_API_KEY,
/// CRAWLER_BASE_URL, SEARCH_ENDPOINT, SNAPSHOT_DIR and SNAPSHOT_MODE.
/// `mode_override` and `dir_override` take precedence over the environment.
std::shared_ptr<Retriever> retriever_from_env(std::shared_ptr<Transport> transport,
                                              std::optional<SnapshotMode> mode_override,
                                              std::optional<std::string> dir_override,
                                              std::shared_ptr<Clock> clock);

}  // namespace deepreport
