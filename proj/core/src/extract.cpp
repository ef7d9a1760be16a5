#include "deepreport/extract.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <regex>
#include <vector>

#include <zlib.h>

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace {

std::string lower(std::string_view s) { return text::casefold(s); }

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t from = 0) {
  if (needle.empty() || haystack.size() < needle.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (std::tolower(static_cast<unsigned char>(haystack[i + j])) !=
          std::tolower(static_cast<unsigned char>(needle[j]))) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

// ---- HTML ---------------------------------------------------------------

struct Tag {
  std::string name;  // lower-case, without '/'
  bool closing = false;
  std::string_view raw;  // whole "<...>"
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Next tag at or after `pos`, skipping '<' that do not start a tag.
std::optional<Tag> next_tag(std::string_view html, std::size_t pos) {
  while (true) {
    auto lt = html.find('<', pos);
    if (lt == std::string_view::npos || lt + 1 >= html.size()) return std::nullopt;
    std::size_t i = lt + 1;
    bool closing = false;
    if (html[i] == '/') {
      closing = true;
      ++i;
    }
    if (i < html.size() && (std::isalpha(static_cast<unsigned char>(html[i])) || html[i] == '!')) {
      std::size_t name_end = i;
      while (name_end < html.size() &&
             (std::isalnum(static_cast<unsigned char>(html[name_end])) || html[name_end] == '-' ||
              html[name_end] == '!' || html[name_end] == ':')) {
        ++name_end;
      }
      // Attribute values may contain '>', so honour quotes.
      std::size_t j = name_end;
      char quote = 0;
      while (j < html.size()) {
        char c = html[j];
        if (quote) {
          if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
          quote = c;
        } else if (c == '>') {
          break;
        }
        ++j;
      }
      if (j >= html.size()) return std::nullopt;
      Tag tag;
      tag.name = lower(html.substr(i, name_end - i));
      tag.closing = closing;
      tag.begin = lt;
      tag.end = j + 1;
      tag.raw = html.substr(lt, tag.end - lt);
      return tag;
    }
    pos = lt + 1;
  }
}

std::optional<std::string> attribute(std::string_view raw_tag, std::string_view name) {
  static const std::regex attr(R"re(([A-Za-z_:][-A-Za-z0-9_:.]*)\s*=\s*("([^"]*)"|'([^']*)'|([^\s>]+)))re");
  std::string s(raw_tag);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), attr); it != std::sregex_iterator(); ++it) {
    if (lower((*it)[1].str()) != lower(name)) continue;
    if ((*it)[3].matched) return (*it)[3].str();
    if ((*it)[4].matched) return (*it)[4].str();
    return (*it)[5].str();
  }
  return std::nullopt;
}

/// Removes `<name ...> ... </name>` regions, nesting-aware.
std::string drop_elements(std::string_view html, const std::vector<std::string_view>& names) {
  std::string out;
  out.reserve(html.size());
  std::size_t pos = 0;
  std::size_t copied = 0;
  while (auto tag = next_tag(html, pos)) {
    bool drop = !tag->closing && std::find(names.begin(), names.end(), tag->name) != names.end() &&
                tag->raw.size() >= 2 && tag->raw[tag->raw.size() - 2] != '/';
    if (!drop) {
      pos = tag->end;
      continue;
    }
    int depth = 1;
    std::size_t scan = tag->end;
    std::size_t stop = html.size();
    // Raw-text elements end at the first matching closer.
    bool raw_text = tag->name == "script" || tag->name == "style";
    while (depth > 0) {
      if (raw_text) {
        auto close = ifind(html, "</" + tag->name, scan);
        if (close == std::string_view::npos) break;
        auto gt = html.find('>', close);
        stop = gt == std::string_view::npos ? html.size() : gt + 1;
        depth = 0;
        break;
      }
      auto inner = next_tag(html, scan);
      if (!inner) break;
      if (inner->name == tag->name) {
        if (inner->closing) --depth;
        else if (inner->raw[inner->raw.size() - 2] != '/') ++depth;
      }
      scan = inner->end;
      if (depth == 0) stop = inner->end;
    }
    out.append(html.substr(copied, tag->begin - copied));
    out += ' ';
    copied = stop;
    pos = stop;
  }
  out.append(html.substr(copied));
  return out;
}

std::string strip_comments(std::string_view html) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto start = html.find("<!--", pos);
    if (start == std::string_view::npos) break;
    out.append(html.substr(pos, start - pos));
    auto end = html.find("-->", start + 4);
    if (end == std::string_view::npos) {
      pos = html.size();
      break;
    }
    pos = end + 3;
  }
  out.append(html.substr(std::min(pos, html.size())));
  return out;
}

/// Inner HTML of the first element called `name`, nesting-aware.
std::optional<std::string> inner_of(std::string_view html, std::string_view name) {
  std::size_t pos = 0;
  while (auto tag = next_tag(html, pos)) {
    if (tag->closing || tag->name != name) {
      pos = tag->end;
      continue;
    }
    int depth = 1;
    std::size_t scan = tag->end;
    while (auto inner = next_tag(html, scan)) {
      if (inner->name == name) {
        depth += inner->closing ? -1 : 1;
        if (depth == 0) return std::string(html.substr(tag->end, inner->begin - tag->end));
      }
      scan = inner->end;
    }
    return std::string(html.substr(tag->end));
  }
  return std::nullopt;
}

bool is_block(std::string_view name) {
  static constexpr std::array<std::string_view, 30> kBlocks = {
      "p",       "div",   "br",    "h1",         "h2",      "h3",   "h4",      "h5",
      "h6",      "li",    "ul",    "ol",         "tr",      "table", "section", "article",
      "blockquote", "pre", "dd",   "dt",         "dl",      "figure", "figcaption", "main",
      "hr",      "td",    "th",    "caption",    "address", "body"};
  return std::find(kBlocks.begin(), kBlocks.end(), name) != kBlocks.end();
}

std::string html_to_text(std::string_view html) {
  // Source whitespace never separates paragraphs; only block tags do.
  constexpr char kBreak = '\x1e';
  std::string flat;
  flat.reserve(html.size());
  std::size_t pos = 0;
  while (pos < html.size()) {
    auto tag = next_tag(html, pos);
    std::size_t stop = tag ? tag->begin : html.size();
    for (char c : html.substr(pos, stop - pos)) {
      flat += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
    }
    if (!tag) break;
    if (tag->name == "td" || tag->name == "th" || tag->name == "br") flat += ' ';
    else if (is_block(tag->name)) flat += kBreak;
    pos = tag->end;
  }
  std::vector<std::string> paragraphs;
  for (const auto& chunk : text::split(flat, kBreak)) {
    auto para = text::collapse_whitespace(decode_html_entities(chunk));
    if (!para.empty()) paragraphs.push_back(std::move(para));
  }
  return text::join(paragraphs, "\n\n");
}

std::optional<Timestamp> html_metadata_date(std::string_view html) {
  static constexpr std::array<std::string_view, 12> kMetaKeys = {
      "article:published_time", "og:published_time", "datepublished", "publish_date",
      "publishdate", "pubdate", "date", "dc.date", "dc.date.issued", "dcterms.created",
      "sailthru.date", "parsely-pub-date"};
  std::optional<Timestamp> best;
  std::size_t best_rank = kMetaKeys.size();
  std::size_t pos = 0;
  while (auto tag = next_tag(html, pos)) {
    pos = tag->end;
    if (tag->closing || tag->name != "meta") continue;
    std::string key;
    for (auto attr_name : {"property", "name", "itemprop", "http-equiv"}) {
      if (auto v = attribute(tag->raw, attr_name)) {
        key = lower(*v);
        break;
      }
    }
    auto rank = std::find(kMetaKeys.begin(), kMetaKeys.end(), key) - kMetaKeys.begin();
    if (static_cast<std::size_t>(rank) >= best_rank) continue;
    auto content = attribute(tag->raw, "content");
    if (!content) continue;
    if (auto t = parse_timestamp(decode_html_entities(*content))) {
      best = t;
      best_rank = static_cast<std::size_t>(rank);
    }
  }
  if (best) return best;

  static const std::regex json_ld(R"re("datePublished"\s*:\s*"([^"]+)")re");
  std::string s(html);
  std::smatch m;
  if (std::regex_search(s, m, json_ld)) {
    if (auto t = parse_timestamp(m[1].str())) return t;
  }
  pos = 0;
  while (auto tag = next_tag(html, pos)) {
    pos = tag->end;
    if (tag->closing || tag->name != "time") continue;
    if (auto dt = attribute(tag->raw, "datetime")) {
      if (auto t = parse_timestamp(*dt)) return t;
    }
  }
  return std::nullopt;
}

// ---- PDF ----------------------------------------------------------------

std::string pdf_string(std::string_view s, std::size_t& i) {
  // s[i] == '('
  std::string out;
  int depth = 1;
  ++i;
  while (i < s.size() && depth > 0) {
    char c = s[i++];
    if (c == '\\' && i < s.size()) {
      char e = s[i++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case 't': out += '\t'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '\r':
          if (i < s.size() && s[i] == '\n') ++i;
          break;
        case '\n': break;
        default:
          if (e >= '0' && e <= '7') {
            int v = e - '0';
            for (int k = 0; k < 2 && i < s.size() && s[i] >= '0' && s[i] <= '7'; ++k) {
              v = v * 8 + (s[i++] - '0');
            }
            out += static_cast<char>(v);
          } else {
            out += e;
          }
      }
    } else if (c == '(') {
      ++depth;
      out += c;
    } else if (c == ')') {
      if (--depth > 0) out += c;
    } else {
      out += c;
    }
  }
  return out;
}

std::string pdf_hex_string(std::string_view s, std::size_t& i) {
  // s[i] == '<'
  std::string digits;
  ++i;
  while (i < s.size() && s[i] != '>') {
    if (std::isxdigit(static_cast<unsigned char>(s[i]))) digits += s[i];
    ++i;
  }
  ++i;
  if (digits.size() % 2) digits += '0';
  std::string out;
  for (std::size_t k = 0; k < digits.size(); k += 2) {
    out += static_cast<char>(std::stoi(digits.substr(k, 2), nullptr, 16));
  }
  return out;
}

/// Text-showing operators of one content stream. Each BT/ET block becomes a
/// paragraph; line moves inside a block become spaces.
std::string pdf_content_text(std::string_view s) {
  std::string out;
  std::string pending;
  std::vector<std::string> operands;
  auto flush_block = [&] {
    auto para = text::collapse_whitespace(pending);
    if (!para.empty()) {
      if (!out.empty()) out += "\n\n";
      out += para;
    }
    pending.clear();
  };
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c == '(') {
      operands.push_back(pdf_string(s, i));
    } else if (c == '<' && i + 1 < s.size() && s[i + 1] != '<') {
      operands.push_back(pdf_hex_string(s, i));
    } else if (c == '[') {
      std::string joined;
      ++i;
      while (i < s.size() && s[i] != ']') {
        if (s[i] == '(') {
          joined += pdf_string(s, i);
        } else if (s[i] == '<') {
          joined += pdf_hex_string(s, i);
        } else if (s[i] == '-' || std::isdigit(static_cast<unsigned char>(s[i]))) {
          std::size_t b = i;
          while (i < s.size() && (s[i] == '-' || s[i] == '.' || std::isdigit(static_cast<unsigned char>(s[i])))) ++i;
          // Large negative kerning reads as a word gap.
          double v = std::atof(std::string(s.substr(b, i - b)).c_str());
          if (v < -200) joined += ' ';
        } else {
          ++i;
        }
      }
      ++i;
      operands.push_back(joined);
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '\'' || c == '"' || c == '*') {
      std::size_t b = i;
      while (i < s.size() && (std::isalpha(static_cast<unsigned char>(s[i])) || s[i] == '*' ||
                              s[i] == '\'' || s[i] == '"')) {
        ++i;
      }
      std::string_view op = s.substr(b, i - b);
      if (op == "Tj" || op == "TJ") {
        if (!operands.empty()) pending += operands.back();
      } else if (op == "'" || op == "\"") {
        pending += ' ';
        if (!operands.empty()) pending += operands.back();
      } else if (op == "Td" || op == "TD" || op == "T*" || op == "Tm") {
        pending += ' ';
      } else if (op == "ET") {
        flush_block();
      }
      operands.clear();
    } else {
      ++i;
    }
  }
  flush_block();
  return out;
}

std::optional<Timestamp> pdf_date(std::string_view body) {
  static const std::regex re(R"(/CreationDate\s*\(D:(\d{4})(\d{2})?(\d{2})?(\d{2})?(\d{2})?(\d{2})?)");
  std::string s(body.substr(0, std::min<std::size_t>(body.size(), 1 << 20)));
  std::smatch m;
  if (!std::regex_search(s, m, re)) {
    auto tail = body.size() > (1u << 20) ? std::string(body.substr(body.size() - (1 << 20))) : std::string();
    if (tail.empty() || !std::regex_search(tail, m, re)) return std::nullopt;
    s = tail;
    std::regex_search(s, m, re);
  }
  std::string iso = m[1].str() + "-" + (m[2].matched ? m[2].str() : "01") + "-" +
                    (m[3].matched ? m[3].str() : "01");
  if (m[4].matched && m[5].matched) {
    iso += "T" + m[4].str() + ":" + m[5].str() + ":" + (m[6].matched ? m[6].str() : "00") + "Z";
  }
  return parse_timestamp(iso);
}

// ---- OOXML --------------------------------------------------------------

std::uint32_t le32(std::string_view s, std::size_t at) {
  if (at + 4 > s.size()) throw ExtractError("truncated zip archive");
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 3])) << 24;
}

std::uint16_t le16(std::string_view s, std::size_t at) {
  if (at + 2 > s.size()) throw ExtractError("truncated zip archive");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) |
                                    static_cast<unsigned char>(s[at + 1]) << 8);
}

/// Text runs of elements named `run` grouped by enclosing `para` elements.
std::vector<std::string> xml_paragraphs(std::string_view xml, std::string_view para,
                                        std::string_view run) {
  std::vector<std::string> out;
  std::string current;
  bool in_para = false;
  std::size_t pos = 0;
  while (auto tag = next_tag(xml, pos)) {
    if (tag->name == para) {
      bool self_closing = tag->raw.size() >= 2 && tag->raw[tag->raw.size() - 2] == '/';
      if (!tag->closing && !self_closing) {
        in_para = true;
        current.clear();
      } else if (tag->closing && in_para) {
        auto p = text::collapse_whitespace(current);
        if (!p.empty()) out.push_back(p);
        in_para = false;
      }
    } else if (tag->name == run && !tag->closing) {
      auto close = xml.find("</" + std::string(run) + ">", tag->end);
      if (close == std::string_view::npos) break;
      current += decode_html_entities(xml.substr(tag->end, close - tag->end));
      if (!in_para) {
        auto p = text::collapse_whitespace(current);
        if (!p.empty()) out.push_back(p);
        current.clear();
      }
      pos = close;
      continue;
    } else if (tag->name == "w:tab" || tag->name == "w:br") {
      current += ' ';
    }
    pos = tag->end;
  }
  return out;
}

std::size_t trailing_number(const std::string& name) {
  auto dot = name.rfind('.');
  auto end = dot == std::string::npos ? name.size() : dot;
  auto b = end;
  while (b > 0 && std::isdigit(static_cast<unsigned char>(name[b - 1]))) --b;
  return b == end ? 0 : std::stoul(name.substr(b, end - b));
}

std::vector<std::string> members_matching(const std::map<std::string, std::string>& files,
                                          std::string_view prefix) {
  std::vector<std::string> names;
  for (const auto& [name, _] : files) {
    if (starts_with(name, prefix) && name.size() > 4 && name.substr(name.size() - 4) == ".xml") {
      names.push_back(name);
    }
  }
  std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return trailing_number(a) < trailing_number(b);
  });
  return names;
}

std::string xlsx_text(const std::map<std::string, std::string>& files) {
  std::vector<std::string> shared;
  if (auto it = files.find("xl/sharedStrings.xml"); it != files.end()) {
    std::size_t pos = 0;
    std::string_view xml = it->second;
    while (auto tag = next_tag(xml, pos)) {
      pos = tag->end;
      if (tag->closing || tag->name != "si") continue;
      auto close = xml.find("</si>", tag->end);
      if (close == std::string_view::npos) break;
      auto runs = xml_paragraphs(xml.substr(tag->end, close - tag->end), "si", "t");
      shared.push_back(text::join(runs, " "));
      pos = close;
    }
  }
  std::vector<std::string> lines;
  for (const auto& name : members_matching(files, "xl/worksheets/sheet")) {
    std::string_view xml = files.at(name);
    std::size_t pos = 0;
    std::vector<std::string> cells;
    bool shared_cell = false;
    while (auto tag = next_tag(xml, pos)) {
      pos = tag->end;
      if (tag->name == "row" && tag->closing) {
        if (!cells.empty()) lines.push_back(text::join(cells, " | "));
        cells.clear();
      } else if (tag->name == "c" && !tag->closing) {
        auto t = attribute(tag->raw, "t");
        shared_cell = t && *t == "s";
      } else if ((tag->name == "v" || tag->name == "t") && !tag->closing) {
        auto close = xml.find("</" + tag->name + ">", tag->end);
        if (close == std::string_view::npos) break;
        std::string value = decode_html_entities(xml.substr(tag->end, close - tag->end));
        if (shared_cell && tag->name == "v") {
          auto idx = static_cast<std::size_t>(std::atol(value.c_str()));
          value = idx < shared.size() ? shared[idx] : std::string();
        }
        if (!value.empty()) cells.push_back(text::trim(value));
        pos = close;
      }
    }
    if (!cells.empty()) lines.push_back(text::join(cells, " | "));
    lines.emplace_back();
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return text::join(lines, "\n");
}

std::optional<Timestamp> ooxml_date(const std::map<std::string, std::string>& files) {
  auto it = files.find("docProps/core.xml");
  if (it == files.end()) return std::nullopt;
  for (auto name : {"dcterms:created", "dcterms:modified"}) {
    auto open = it->second.find(std::string("<") + name);
    if (open == std::string::npos) continue;
    auto gt = it->second.find('>', open);
    auto close = it->second.find(std::string("</") + name, gt);
    if (gt == std::string::npos || close == std::string::npos) continue;
    if (auto t = parse_timestamp(it->second.substr(gt + 1, close - gt - 1))) return t;
  }
  return std::nullopt;
}

std::string printable_runs(std::string_view body) {
  std::vector<std::string> runs;
  std::string current;
  for (char c : body) {
    unsigned char u = static_cast<unsigned char>(c);
    if ((u >= 0x20 && u < 0x7f) || c == '\t') {
      current += c;
    } else {
      if (current.size() >= 20) runs.push_back(text::collapse_whitespace(current));
      current.clear();
    }
  }
  if (current.size() >= 20) runs.push_back(text::collapse_whitespace(current));
  return text::join(runs, "\n\n");
}

bool looks_binary(std::string_view body) {
  std::size_t sample = std::min<std::size_t>(body.size(), 4096);
  std::size_t nul = 0;
  for (std::size_t i = 0; i < sample; ++i) nul += body[i] == '\0';
  return sample > 0 && nul * 100 > sample;
}

std::string plain_text(std::string_view body) {
  auto normalized = std::string(body);
  text::replace_all(normalized, "\r\n", "\n");
  std::vector<std::string> lines;
  for (auto& line : text::split(normalized, '\n')) lines.push_back(text::trim(line));
  return text::trim(text::join(lines, "\n"));
}

}  // namespace

std::string_view to_string(MediaKind kind) {
  switch (kind) {
    case MediaKind::html: return "html";
    case MediaKind::pdf: return "pdf";
    case MediaKind::spreadsheet: return "spreadsheet";
    case MediaKind::doc: return "doc";
    case MediaKind::slides: return "slides";
    case MediaKind::other: return "other";
  }
  return "other";
}

std::optional<MediaKind> media_kind_from_name(std::string_view name) {
  for (auto k : {MediaKind::html, MediaKind::pdf, MediaKind::spreadsheet, MediaKind::doc,
                 MediaKind::slides, MediaKind::other}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

MediaKind classify_media(std::string_view url, std::string_view content_type) {
  std::string suffix;
  try {
    suffix = path_suffix(url);
  } catch (const BadUrl&) {
  }
  if (suffix == "pdf") return MediaKind::pdf;
  if (suffix == "xlsx" || suffix == "xls" || suffix == "csv") return MediaKind::spreadsheet;
  if (suffix == "doc" || suffix == "docx") return MediaKind::doc;
  if (suffix == "ppt" || suffix == "pptx") return MediaKind::slides;
  if (suffix == "html" || suffix == "htm") return MediaKind::html;

  auto ct = lower(content_type);
  if (ct.find("pdf") != std::string::npos) return MediaKind::pdf;
  if (ct.find("spreadsheet") != std::string::npos || ct.find("ms-excel") != std::string::npos ||
      ct.find("text/csv") != std::string::npos) {
    return MediaKind::spreadsheet;
  }
  if (ct.find("wordprocessing") != std::string::npos || ct.find("msword") != std::string::npos) {
    return MediaKind::doc;
  }
  if (ct.find("presentation") != std::string::npos || ct.find("powerpoint") != std::string::npos) {
    return MediaKind::slides;
  }
  if (ct.find("html") != std::string::npos || ct.find("xhtml") != std::string::npos) {
    return MediaKind::html;
  }
  return MediaKind::other;
}

std::string decode_html_entities(std::string_view s) {
  static const std::map<std::string, std::string, std::less<>> kNamed = {
      {"amp", "&"},      {"lt", "<"},       {"gt", ">"},       {"quot", "\""},
      {"apos", "'"},     {"nbsp", " "},     {"mdash", "—"}, {"ndash", "–"},
      {"hellip", "…"}, {"rsquo", "’"}, {"lsquo", "‘"}, {"rdquo", "”"},
      {"ldquo", "“"}, {"euro", "€"}, {"pound", "£"}, {"copy", "©"},
      {"reg", "®"}, {"trade", "™"}, {"deg", "°"}, {"times", "×"}};
  auto utf8 = [](unsigned long cp) {
    std::string out;
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x110000) {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
  };
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += '&';
      continue;
    }
    std::string_view name = s.substr(i + 1, semi - i - 1);
    if (!name.empty() && name[0] == '#') {
      bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
      std::string digits(name.substr(hex ? 2 : 1));
      char* end = nullptr;
      unsigned long cp = std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (!digits.empty() && end && *end == '\0' && cp > 0) {
        out += cp == 0xA0 ? std::string(" ") : utf8(cp);
        i = semi;
        continue;
      }
    } else if (auto it = kNamed.find(name); it != kNamed.end()) {
      out += it->second;
      i = semi;
      continue;
    }
    out += '&';
  }
  return out;
}

Extraction extract_html(std::string_view html) {
  Extraction result;
  result.metadata_date = html_metadata_date(html);
  if (auto title = inner_of(html, "title")) {
    result.title = text::collapse_whitespace(decode_html_entities(*title));
  }
  std::string cleaned = strip_comments(html);
  cleaned = drop_elements(cleaned, {"script", "style", "noscript", "template", "svg", "head",
                                    "nav", "header", "footer", "aside", "form", "iframe"});
  std::string scope;
  if (auto article = inner_of(cleaned, "article")) scope = *article;
  else if (auto main = inner_of(cleaned, "main")) scope = *main;
  else if (auto body = inner_of(cleaned, "body")) scope = *body;
  else scope = cleaned;
  result.text = html_to_text(scope);
  return result;
}

std::string inflate(std::string_view data, bool raw) {
  z_stream zs{};
  if (inflateInit2(&zs, raw ? -MAX_WBITS : MAX_WBITS + 32) != Z_OK) {
    throw ExtractError("zlib init failed");
  }
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buffer[16384];
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buffer);
    zs.avail_out = sizeof buffer;
    rc = ::inflate(&zs, Z_NO_FLUSH);
    out.append(buffer, sizeof buffer - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && rc != Z_BUF_ERROR && rc != Z_OK) {
    throw ExtractError("corrupt deflate stream");
  }
  return out;
}

Extraction extract_pdf(std::string_view body) {
  if (!starts_with(body, "%PDF")) throw ExtractError("not a PDF body");
  Extraction result;
  result.metadata_date = pdf_date(body);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    auto kw = body.find("stream", pos);
    if (kw == std::string_view::npos) break;
    if (kw >= 3 && body.substr(kw - 3, 3) == "end") {
      pos = kw + 6;
      continue;
    }
    auto dict_start = body.rfind("<<", kw);
    std::string_view dict =
        dict_start == std::string_view::npos ? std::string_view() : body.substr(dict_start, kw - dict_start);
    std::size_t data_start = kw + 6;
    if (data_start < body.size() && body[data_start] == '\r') ++data_start;
    if (data_start < body.size() && body[data_start] == '\n') ++data_start;
    auto data_end = body.find("endstream", data_start);
    if (data_end == std::string_view::npos) break;
    std::string_view data = body.substr(data_start, data_end - data_start);
    pos = data_end + 9;
    bool is_image = dict.find("/Image") != std::string_view::npos;
    if (is_image) continue;
    std::string content;
    if (dict.find("/FlateDecode") != std::string_view::npos) {
      try {
        content = inflate(data);
      } catch (const ExtractError&) {
        continue;
      }
    } else if (dict.find("/Filter") == std::string_view::npos) {
      content = std::string(data);
    } else {
      continue;
    }
    auto t = pdf_content_text(content);
    if (!t.empty()) parts.push_back(std::move(t));
  }
  result.text = text::join(parts, "\n\n");
  if (result.text.empty()) throw ExtractError("no extractable text in PDF");
  return result;
}

std::map<std::string, std::string> read_zip(std::string_view archive) {
  if (archive.size() < 22) throw ExtractError("zip archive too small");
  std::size_t eocd = std::string_view::npos;
  std::size_t lowest = archive.size() > 22 + 65535 ? archive.size() - 22 - 65535 : 0;
  for (std::size_t i = archive.size() - 22 + 1; i-- > lowest;) {
    if (le32(archive, i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string_view::npos) throw ExtractError("zip end record not found");
  std::size_t count = le16(archive, eocd + 10);
  std::size_t offset = le32(archive, eocd + 16);
  std::map<std::string, std::string> files;
  for (std::size_t n = 0; n < count; ++n) {
    if (le32(archive, offset) != 0x02014b50) throw ExtractError("bad zip central directory");
    std::uint16_t method = le16(archive, offset + 10);
    std::uint32_t compressed = le32(archive, offset + 20);
    std::uint16_t name_len = le16(archive, offset + 28);
    std::uint16_t extra_len = le16(archive, offset + 30);
    std::uint16_t comment_len = le16(archive, offset + 32);
    std::uint32_t local = le32(archive, offset + 42);
    if (offset + 46 + name_len > archive.size()) throw ExtractError("truncated zip entry name");
    std::string name(archive.substr(offset + 46, name_len));
    offset += 46 + name_len + extra_len + comment_len;

    if (le32(archive, local) != 0x04034b50) throw ExtractError("bad zip local header");
    std::size_t data = local + 30 + le16(archive, local + 26) + le16(archive, local + 28);
    if (data + compressed > archive.size()) throw ExtractError("truncated zip member " + name);
    std::string_view payload = archive.substr(data, compressed);
    if (method == 0) files[name] = std::string(payload);
    else if (method == 8) files[name] = inflate(payload, true);
  }
  return files;
}

Extraction extract_ooxml(std::string_view zip_body) {
  auto files = read_zip(zip_body);
  Extraction result;
  result.metadata_date = ooxml_date(files);
  std::vector<std::string> paragraphs;
  if (auto it = files.find("word/document.xml"); it != files.end()) {
    paragraphs = xml_paragraphs(it->second, "w:p", "w:t");
  } else if (files.count("xl/workbook.xml")) {
    result.text = xlsx_text(files);
  } else {
    auto slides = members_matching(files, "ppt/slides/slide");
    if (slides.empty()) throw ExtractError("zip body is not a recognised office document");
    for (const auto& name : slides) {
      auto paras = xml_paragraphs(files.at(name), "a:p", "a:t");
      if (!paras.empty()) paragraphs.push_back(text::join(paras, " "));
    }
  }
  if (result.text.empty()) result.text = text::join(paragraphs, "\n\n");
  if (auto it = files.find("docProps/core.xml"); it != files.end()) {
    auto open = it->second.find("<dc:title>");
    auto close = it->second.find("</dc:title>");
    if (open != std::string::npos && close != std::string::npos && close > open) {
      result.title = decode_html_entities(it->second.substr(open + 10, close - open - 10));
    }
  }
  return result;
}

Extraction extract_document(std::string_view body, MediaKind kind) {
  if (starts_with(body, "%PDF")) return extract_pdf(body);
  if (starts_with(body, std::string_view("PK\x03\x04", 4))) return extract_ooxml(body);
  switch (kind) {
    case MediaKind::pdf:
      throw ExtractError("body is not a PDF");
    case MediaKind::html:
      if (looks_binary(body)) throw ExtractError("binary body served as HTML");
      return extract_html(body);
    case MediaKind::spreadsheet:
    case MediaKind::other:
      if (looks_binary(body)) break;
      if (kind == MediaKind::other && ifind(body.substr(0, 512), "<html") != std::string_view::npos) {
        return extract_html(body);
      }
      return Extraction{"", plain_text(body), std::nullopt};
    case MediaKind::doc:
    case MediaKind::slides:
      if (!looks_binary(body)) return Extraction{"", plain_text(body), std::nullopt};
      break;
  }
  auto runs = printable_runs(body);
  if (runs.empty()) throw ExtractError("no readable text in binary body");
  return Extraction{"", runs, std::nullopt};
}

std::optional<Timestamp> find_dateline(std::string_view text_in) {
  static const std::string month =
      "(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|Jun(?:e)?|Jul(?:y)?|Aug(?:ust)?|"
      "Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)";
  static const std::regex re("\\b(\\d{4}-\\d{2}-\\d{2})\\b|\\b(" + month +
                             "\\.? \\d{1,2}(?:st|nd|rd|th)?,? \\d{4})\\b|\\b(\\d{1,2} " + month +
                             "\\.?,? \\d{4})\\b");
  std::string window(text_in.substr(0, std::min<std::size_t>(text_in.size(), 600)));
  for (auto it = std::sregex_iterator(window.begin(), window.end(), re); it != std::sregex_iterator();
       ++it) {
    for (int g = 1; g <= 3; ++g) {
      if ((*it)[g].matched) {
        if (auto t = parse_timestamp((*it)[g].str())) return t;
      }
    }
  }
  return std::nullopt;
}

std::optional<Timestamp> resolve_publish_time(const Extraction& extraction,
                                              std::string_view last_modified_header,
                                              std::optional<Date> provider_date) {
  if (extraction.metadata_date) return extraction.metadata_date;
  if (auto t = find_dateline(extraction.text)) return t;
  if (auto t = parse_timestamp(last_modified_header)) return t;
  if (provider_date) return Timestamp{*provider_date};
  return std::nullopt;
}

}  // namespace deepreport
