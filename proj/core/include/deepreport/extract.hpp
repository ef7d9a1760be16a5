#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "deepreport/timeutil.hpp"

namespace deepreport {

enum class MediaKind { html, pdf, spreadsheet, doc, slides, other };

std::string_view to_string(MediaKind kind);
std::optional<MediaKind> media_kind_from_name(std::string_view name);

/// URL suffix wins (pdf, xlsx/xls/csv, doc/docx, ppt/pptx, htm/html), then
/// the Content-Type header. Unknown types are `other`.
MediaKind classify_media(std::string_view url, std::string_view content_type);

struct Extraction {
  std::string title;
  /// Readable text; paragraphs separated by blank lines.
  std::string text;
  /// Date found in structured metadata (meta tags, JSON-LD, <time>, PDF or
  /// OOXML document properties).
  std::optional<Timestamp> metadata_date;
};

/// Dispatches on the body's magic bytes first (PDF, zip) and on `kind`
/// otherwise. Throws ExtractError for bodies that cannot be decoded.
Extraction extract_document(std::string_view body, MediaKind kind);

Extraction extract_html(std::string_view html);
Extraction extract_pdf(std::string_view body);
/// docx, xlsx and pptx containers.
Extraction extract_ooxml(std::string_view zip_body);

/// Entry name → uncompressed bytes for stored and deflated members.
/// Throws ExtractError on a malformed archive.
std::map<std::string, std::string> read_zip(std::string_view archive);

/// zlib-wrapped (`raw` = false) or raw deflate stream. Throws ExtractError.
std::string inflate(std::string_view data, bool raw = false);

/// First date-like dateline ("Published June 10, 2024", "2024-06-10") in
/// the opening part of the readable text.
std::optional<Timestamp> find_dateline(std::string_view text);

/// metadata → dateline → Last-Modified → provider date → absent.
std::optional<Timestamp> resolve_publish_time(const Extraction& extraction,
                                              std::string_view last_modified_header,
                                              std::optional<Date> provider_date);

std::string decode_html_entities(std::string_view s);

}  // namespace deepreport
