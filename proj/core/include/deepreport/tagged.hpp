#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace deepreport {

struct TextSpan {
  std::size_t begin = 0;  // offset of the opening '<'
  std::size_t end = 0;    // one past the closing '>'
};

struct TaggedBlock {
  std::string tag;
  std::string body;  // text between the delimiters, untrimmed
  TextSpan span;
};

/// Tags that appear in the workflow's output contracts.
bool is_contract_tag(std::string_view tag);

/// All `<tag>...</tag>` occurrences in document order. Prose around the
/// blocks is ignored; an opener without a matching closer, or a second
/// opener before the closer, throws UnbalancedTag. Unknown tags throw
/// std::invalid_argument.
std::vector<TaggedBlock> parse_tagged(std::string_view text, std::string_view tag);

std::string serialize_tagged(std::string_view tag, std::string_view body);

}  // namespace deepreport
