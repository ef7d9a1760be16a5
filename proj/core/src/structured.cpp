#include "deepreport/structured.hpp"

#include "deepreport/error.hpp"

namespace deepreport {

namespace {

std::optional<std::string> require(const json& obj, const char* key, json::value_t type) {
  if (!obj.is_object()) return std::string("expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) return std::string("missing field \"") + key + "\"";
  bool ok = it->type() == type ||
            (type == json::value_t::number_float && it->is_number());
  if (!ok) return std::string("field \"") + key + "\" has type " + it->type_name();
  return std::nullopt;
}

std::optional<std::string> require_string_array(const json& obj, const char* key) {
  if (auto err = require(obj, key, json::value_t::array)) return err;
  for (const auto& v : obj.at(key)) {
    if (!v.is_string()) return std::string("field \"") + key + "\" must hold strings";
  }
  return std::nullopt;
}

std::optional<std::string> analysis(const json& value, bool with_type) {
  if (auto err = require(value, "analysis", json::value_t::object)) return err;
  const auto& a = value.at("analysis");
  if (auto err = require(a, "think", json::value_t::string)) return err;
  if (with_type) {
    if (auto err = require(a, "type", json::value_t::string)) return err;
  }
  return require(a, "pass", json::value_t::boolean);
}

/// Returns [begin, end) of the first balanced {...} object, honouring
/// string literals, or npos when none closes.
std::pair<std::size_t, std::size_t> find_object(std::string_view text) {
  auto begin = text.find('{');
  while (begin != std::string_view::npos) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = begin; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) return {begin, i + 1};
    }
    begin = std::string_view::npos;
  }
  return {std::string_view::npos, std::string_view::npos};
}

}  // namespace

std::string_view to_string(SchemaId id) {
  switch (id) {
    case SchemaId::knowledge_list: return "knowledge_list";
    case SchemaId::reflection_profile: return "reflection_profile";
    case SchemaId::integrity_verdict: return "integrity_verdict";
    case SchemaId::freshness_verdict: return "freshness_verdict";
    case SchemaId::plurality_verdict: return "plurality_verdict";
    case SchemaId::enrichment_answer: return "enrichment_answer";
    case SchemaId::merged_passage: return "merged_passage";
  }
  return "unknown";
}

std::optional<std::string> validate_schema(SchemaId schema, const json& value) {
  switch (schema) {
    case SchemaId::knowledge_list: {
      if (auto err = require(value, "knowledge", json::value_t::array)) return err;
      for (const auto& item : value.at("knowledge")) {
        if (auto err = require(item, "insight", json::value_t::string)) return err;
        if (auto err = require_string_array(item, "snippets")) return err;
      }
      return std::nullopt;
    }
    case SchemaId::reflection_profile:
      for (const char* key : {"freshness", "plurality", "completeness"}) {
        if (auto err = require(value, key, json::value_t::boolean)) return err;
      }
      return std::nullopt;
    case SchemaId::integrity_verdict:
    case SchemaId::plurality_verdict:
      return analysis(value, false);
    case SchemaId::freshness_verdict:
      return analysis(value, true);
    case SchemaId::enrichment_answer:
      if (auto err = require(value, "answer", json::value_t::string)) return err;
      return require_string_array(value, "quote_ids");
    case SchemaId::merged_passage:
      return require(value, "merged", json::value_t::string);
  }
  return std::string("unknown schema");
}

StructuredPayload parse_structured(std::string_view text, SchemaId schema) {
  auto [begin, end] = find_object(text);
  if (begin == std::string_view::npos) {
    throw MalformedOutput("no complete JSON object in output for " + std::string(to_string(schema)),
                          std::string(text));
  }
  json value;
  try {
    value = json::parse(text.substr(begin, end - begin));
  } catch (const json::parse_error& e) {
    throw MalformedOutput(std::string("invalid JSON: ") + e.what(), std::string(text));
  }
  if (auto err = validate_schema(schema, value)) {
    throw MalformedOutput(std::string(to_string(schema)) + ": " + *err, std::string(text));
  }
  return {schema, std::move(value)};
}

}  // namespace deepreport
