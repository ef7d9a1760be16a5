#include "deepreport/snapshot.hpp"

#include <mutex>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.ndjson";
constexpr const char* kSearches = "searches.ndjson";

json optional_time(const std::optional<Timestamp>& t) {
  return t ? json(format_timestamp(*t)) : json(nullptr);
}

std::optional<Timestamp> time_field(const json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  auto t = parse_timestamp(it->get<std::string>());
  if (!t) throw SchemaError(std::string("bad timestamp in ") + key, line);
  return t;
}

}  // namespace

json to_json(const SearchHit& hit) {
  return json{{"title", hit.title},
              {"url", hit.url},
              {"snippet", hit.snippet},
              {"provider_date", hit.provider_date ? json(format_date(*hit.provider_date)) : json(nullptr)}};
}

SearchHit search_hit_from_json(const json& value) {
  SearchHit hit;
  hit.title = value.value("title", "");
  hit.url = value.at("url").get<std::string>();
  hit.snippet = value.value("snippet", "");
  if (auto it = value.find("provider_date"); it != value.end() && it->is_string()) {
    hit.provider_date = parse_date(it->get<std::string>());
  }
  return hit;
}

std::string_view to_string(SnapshotMode mode) {
  switch (mode) {
    case SnapshotMode::live: return "live";
    case SnapshotMode::record: return "record";
    case SnapshotMode::replay: return "replay";
  }
  return "live";
}

std::optional<SnapshotMode> snapshot_mode_from_name(std::string_view name) {
  if (name == "live") return SnapshotMode::live;
  if (name == "record") return SnapshotMode::record;
  if (name == "replay") return SnapshotMode::replay;
  return std::nullopt;
}

SnapshotStore::SnapshotStore(fs::path dir) : dir_(std::move(dir)) { load(); }

fs::path SnapshotStore::body_path(const std::string& hash) const { return dir_ / "bodies" / hash; }
fs::path SnapshotStore::text_path(const std::string& hash) const { return dir_ / "texts" / hash; }

void SnapshotStore::load() {
  if (fs::exists(dir_ / kManifest)) {
    read_ndjson(dir_ / kManifest, [this](std::size_t line, const json& r) {
      try {
        Entry e;
        e.doc.url = r.at("url").get<std::string>();
        e.doc.content_hash = r.at("content_hash").get<std::string>();
        e.doc.http_status = r.at("http_status").get<int>();
        e.doc.fetched_at = time_field(r, "fetched_at", line).value_or(Timestamp{});
        e.doc.publish_time = time_field(r, "publish_time", line);
        auto kind = media_kind_from_name(r.at("media_kind").get<std::string>());
        if (!kind) throw SchemaError("unknown media_kind", line);
        e.doc.media_kind = *kind;
        e.doc.content_type = r.value("content_type", "");
        e.doc.title = r.value("title", "");
        e.text_hash = r.value("text_hash", "");
        entries_[e.doc.url] = std::move(e);
      } catch (const json::exception& ex) {
        throw SchemaError(std::string("manifest record: ") + ex.what(), line);
      }
    });
  }
  if (fs::exists(dir_ / kSearches)) {
    read_ndjson(dir_ / kSearches, [this](std::size_t line, const json& r) {
      try {
        std::vector<SearchHit> hits;
        for (const auto& h : r.at("hits")) hits.push_back(search_hit_from_json(h));
        searches_[{r.at("query").get<std::string>(), r.at("top_k").get<int>()}] = std::move(hits);
      } catch (const json::exception& ex) {
        throw SchemaError(std::string("search record: ") + ex.what(), line);
      }
    });
  }
}

std::optional<SourceDocument> SnapshotStore::document(const std::string& canonical_url) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(canonical_url);
  if (it == entries_.end()) return std::nullopt;
  SourceDocument doc = it->second.doc;
  if (!it->second.text_hash.empty()) {
    auto path = text_path(it->second.text_hash);
    if (!fs::exists(path)) throw CorruptCorpus({canonical_url});
    doc.extracted_text = read_file(path);
  }
  return doc;
}

std::optional<std::string> SnapshotStore::body(const std::string& canonical_url) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(canonical_url);
  if (it == entries_.end()) return std::nullopt;
  auto path = body_path(it->second.doc.content_hash);
  if (!fs::exists(path)) return std::nullopt;
  return read_file(path);
}

std::optional<std::vector<SearchHit>> SnapshotStore::search_hits(const std::string& query,
                                                                 int top_k) const {
  std::shared_lock lock(mutex_);
  auto it = searches_.find({query, top_k});
  if (it == searches_.end()) return std::nullopt;
  return it->second;
}

void SnapshotStore::put_document(const SourceDocument& doc, std::string_view body) {
  std::unique_lock lock(mutex_);
  fs::create_directories(dir_ / "bodies");
  fs::create_directories(dir_ / "texts");
  Entry e;
  e.doc = doc;
  e.doc.extracted_text.clear();
  e.doc.content_hash = sha256_hex(body);
  if (!fs::exists(body_path(e.doc.content_hash))) write_file_atomic(body_path(e.doc.content_hash), body);
  e.text_hash = sha256_hex(doc.extracted_text);
  if (!fs::exists(text_path(e.text_hash))) write_file_atomic(text_path(e.text_hash), doc.extracted_text);
  entries_[doc.url] = std::move(e);
  write_manifest();
}

void SnapshotStore::put_search(const std::string& query, int top_k,
                               const std::vector<SearchHit>& hits) {
  std::unique_lock lock(mutex_);
  searches_[{query, top_k}] = hits;
  write_searches();
}

void SnapshotStore::write_manifest() const {
  std::string out;
  for (const auto& [url, e] : entries_) {
    const auto& d = e.doc;
    out += to_line(json{{"url", d.url},
                        {"content_hash", d.content_hash},
                        {"http_status", d.http_status},
                        {"fetched_at", format_timestamp(d.fetched_at)},
                        {"publish_time", optional_time(d.publish_time)},
                        {"media_kind", std::string(to_string(d.media_kind))},
                        {"content_type", d.content_type},
                        {"title", d.title},
                        {"body_path", "bodies/" + d.content_hash},
                        {"text_path", "texts/" + e.text_hash},
                        {"text_hash", e.text_hash}});
    out += '\n';
  }
  fs::create_directories(dir_);
  write_file_atomic(dir_ / kManifest, out);
}

void SnapshotStore::write_searches() const {
  std::string out;
  for (const auto& [key, hits] : searches_) {
    json list = json::array();
    for (const auto& h : hits) list.push_back(to_json(h));
    out += to_line(json{{"query", key.first}, {"top_k", key.second}, {"hits", list}});
    out += '\n';
  }
  fs::create_directories(dir_);
  write_file_atomic(dir_ / kSearches, out);
}

void SnapshotStore::verify() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> bad;
  for (const auto& [url, e] : entries_) {
    bool ok = true;
    auto body = body_path(e.doc.content_hash);
    ok = fs::exists(body) && sha256_hex(read_file(body)) == e.doc.content_hash;
    if (ok && !e.text_hash.empty()) {
      auto text = text_path(e.text_hash);
      ok = fs::exists(text) && sha256_hex(read_file(text)) == e.text_hash;
    }
    if (!ok) bad.push_back(url);
  }
  if (!bad.empty()) throw CorruptCorpus(bad);
}

SnapshotStats SnapshotStore::stats() const {
  std::shared_lock lock(mutex_);
  SnapshotStats s;
  s.documents = entries_.size();
  s.searches = searches_.size();
  for (const auto& [url, e] : entries_) {
    if (e.doc.ok()) ++s.ok_documents;
    ++s.by_media_kind[std::string(to_string(e.doc.media_kind))];
    try {
      ++s.by_domain[registrable_domain(parse_url(url).host)];
    } catch (const BadUrl&) {
      ++s.by_domain["(invalid)"];
    }
    if (e.doc.publish_time) {
      ++s.dated;
      auto d = to_date(*e.doc.publish_time);
      if (!s.earliest || d < *s.earliest) s.earliest = d;
      if (!s.latest || d > *s.latest) s.latest = d;
    }
  }
  s.domains = s.by_domain.size();
  return s;
}

std::size_t SnapshotStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<std::string> SnapshotStore::urls() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [url, _] : entries_) out.push_back(url);
  return out;
}

}  // namespace deepreport
