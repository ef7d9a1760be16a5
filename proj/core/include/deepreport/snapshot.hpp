#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "deepreport/extract.hpp"
#include "deepreport/io.hpp"
#include "deepreport/timeutil.hpp"

namespace deepreport {

struct SearchHit {
  std::string title;
  std::string url;  // canonical
  std::string snippet;
  std::optional<Date> provider_date;
};

json to_json(const SearchHit& hit);
SearchHit search_hit_from_json(const json& value);

struct SourceDocument {
  std::string url;  // canonical
  Timestamp fetched_at{};
  int http_status = 200;
  std::string title;
  std::string extracted_text;
  std::optional<Timestamp> publish_time;
  std::string content_hash;  // sha256 of body bytes
  MediaKind media_kind = MediaKind::other;
  std::string content_type;

  bool ok() const noexcept { return http_status >= 200 && http_status < 300; }
};

enum class SnapshotMode { live, record, replay };

std::string_view to_string(SnapshotMode mode);
std::optional<SnapshotMode> snapshot_mode_from_name(std::string_view name);

struct SnapshotStats {
  std::size_t documents = 0;
  std::size_t ok_documents = 0;
  std::size_t searches = 0;
  std::size_t domains = 0;
  std::size_t dated = 0;
  std::optional<Date> earliest;
  std::optional<Date> latest;
  std::map<std::string, std::size_t> by_media_kind;
  std::map<std::string, std::size_t> by_domain;
};

/// On-disk frozen corpus:
///   manifest.ndjson   one record per canonical URL, sorted by URL
///   searches.ndjson   one record per (query, top_k), sorted
///   bodies/<sha256>   raw body bytes, content addressed
///   texts/<sha256>    extracted text, content addressed
/// Readers may run concurrently; writers are serialized and last write
/// per URL wins.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::optional<SourceDocument> document(const std::string& canonical_url) const;
  std::optional<std::string> body(const std::string& canonical_url) const;
  std::optional<std::vector<SearchHit>> search_hits(const std::string& query, int top_k) const;

  void put_document(const SourceDocument& doc, std::string_view body);
  void put_search(const std::string& query, int top_k, const std::vector<SearchHit>& hits);

  /// Re-hashes every body and text file against the manifest. Throws
  /// CorruptCorpus listing every offending URL.
  void verify() const;
  SnapshotStats stats() const;
  std::size_t size() const;
  std::vector<std::string> urls() const;

 private:
  struct Entry {
    SourceDocument doc;
    std::string text_hash;
  };

  void load();
  void write_manifest() const;
  void write_searches() const;
  std::filesystem::path body_path(const std::string& hash) const;
  std::filesystem::path text_path(const std::string& hash) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::map<std::pair<std::string, int>, std::vector<SearchHit>> searches_;
};

}  // namespace deepreport
