#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace deepreport {

using json = nlohmann::json;

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// Compact, key-sorted single-line JSON. Two equal values always serialize
/// to the same bytes.
std::string to_line(const json& value);

/// Calls `on_record(line_number, record)` for each non-blank line (1-based).
/// Parse failures throw SchemaError carrying the line number.
void read_ndjson(const std::filesystem::path& path,
                 const std::function<void(std::size_t, const json&)>& on_record);
std::vector<json> parse_ndjson(std::string_view content);
std::string to_ndjson(const std::vector<json>& records);
void append_ndjson(const std::filesystem::path& path, const json& record);

}  // namespace deepreport
