#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "deepreport/io.hpp"

namespace deepreport {

enum class SchemaId {
  knowledge_list,      // {"knowledge": [{"insight": str, "snippets": [str]}]}
  reflection_profile,  // {"freshness": bool, "plurality": bool, "completeness": bool}
  integrity_verdict,   // {"analysis": {"think": str, "pass": bool}}
  freshness_verdict,   // {"analysis": {"think": str, "type": str, "pass": bool}}
  plurality_verdict,   // {"analysis": {"think": str, "pass": bool}}
  enrichment_answer,   // {"answer": str, "quote_ids": [str]}
  merged_passage,      // {"merged": str}
};

std::string_view to_string(SchemaId id);

struct StructuredPayload {
  SchemaId schema;
  json value;
};

/// Empty when the value satisfies the schema, else a description of the
/// first violation.
std::optional<std::string> validate_schema(SchemaId schema, const json& value);

/// Extracts the outermost JSON object from model text (code fences and
/// surrounding prose tolerated), parses and validates it. Throws
/// MalformedOutput with the raw text on any failure.
StructuredPayload parse_structured(std::string_view text, SchemaId schema);

}  // namespace deepreport
