#include "deepreport/tagged.hpp"

#include <array>
#include <stdexcept>

#include "deepreport/error.hpp"

namespace deepreport {

namespace {

constexpr std::array<std::string_view, 11> kContractTags = {
    "confirm", "query", "reject", "sq", "summary", "thinking",
    "chart", "table", "description", "title", "markdown"};

}  // namespace

bool is_contract_tag(std::string_view tag) {
  for (auto t : kContractTags) {
    if (t == tag) return true;
  }
  return false;
}

std::vector<TaggedBlock> parse_tagged(std::string_view text, std::string_view tag) {
  if (!is_contract_tag(tag)) {
    throw std::invalid_argument("not a contract tag: " + std::string(tag));
  }
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";

  std::vector<TaggedBlock> blocks;
  std::size_t pos = 0;
  while (true) {
    auto start = text.find(open, pos);
    if (start == std::string_view::npos) break;
    auto body_begin = start + open.size();
    auto stop = text.find(close, body_begin);
    if (stop == std::string_view::npos) {
      throw UnbalancedTag("<" + std::string(tag) + "> at offset " + std::to_string(start) +
                          " has no closing tag");
    }
    auto nested = text.find(open, body_begin);
    if (nested != std::string_view::npos && nested < stop) {
      throw UnbalancedTag("<" + std::string(tag) + "> at offset " + std::to_string(start) +
                          " is not closed before the next opener");
    }
    TaggedBlock block;
    block.tag = std::string(tag);
    block.body = std::string(text.substr(body_begin, stop - body_begin));
    block.span = {start, stop + close.size()};
    blocks.push_back(std::move(block));
    pos = stop + close.size();
  }
  return blocks;
}

std::string serialize_tagged(std::string_view tag, std::string_view body) {
  std::string out;
  out.reserve(body.size() + 2 * tag.size() + 5);
  out += '<';
  out += tag;
  out += '>';
  out += body;
  out += "</";
  out += tag;
  out += '>';
  return out;
}

}  // namespace deepreport
