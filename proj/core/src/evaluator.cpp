#include "deepreport/evaluator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>
#include <set>

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"
#include "deepreport/url.hpp"

namespace deepreport {

namespace {

constexpr std::array<std::pair<Domain, std::string_view>, 6> kDomains = {{
    {Domain::frontier_technology, "frontier technology"},
    {Domain::green_economy, "green economy"},
    {Domain::global_retail, "global retail"},
    {Domain::biomedical_science, "biomedical science"},
    {Domain::supply_chain, "supply chain"},
    {Domain::financial_service, "financial service"},
}};

const std::vector<std::string> kMetricOrder{"rel", "str", "hall", "temp", "cons", "brd", "dep"};

const std::map<std::string, std::string>& column_names() {
  static const std::map<std::string, std::string> names{{"rel", "Rel."},   {"str", "Str."}, {"hall", "Hall."},
                                                        {"temp", "Temp."}, {"cons", "Cons."}, {"brd", "Brd."},
                                                        {"dep", "Dep."}};
  return names;
}

std::optional<double> metric_value(const MetricReport& r, const std::string& name) {
  if (name == "rel") return r.rel;
  if (name == "str") return r.str;
  if (name == "hall") return r.hall;
  if (name == "temp") return r.temp;
  if (name == "cons") return r.cons;
  if (name == "brd") return r.brd;
  if (name == "dep") return r.dep;
  return std::nullopt;
}

std::set<std::string> numbers_in(std::string_view s) {
  static const std::regex re(R"([0-9]+(?:[.,][0-9]+)*)");
  std::set<std::string> out;
  std::string str(s);
  for (auto it = std::sregex_iterator(str.begin(), str.end(), re); it != std::sregex_iterator(); ++it) {
    auto n = it->str();
    text::replace_all(n, ",", "");
    out.insert(n);
  }
  return out;
}

bool negated(std::string_view s) {
  for (const auto& w : text::words(s)) {
    if (w == "not" || w == "never" || w == "cannot" || w == "no") return true;
  }
  return s.find("n't") != std::string_view::npos;
}

double log_in(double x, double base) { return std::log(x) / std::log(base); }

std::vector<std::string> unique_sources(const std::vector<ClaimSourcePair>& pairs) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (p.source_url && seen.insert(*p.source_url).second) out.push_back(*p.source_url);
  }
  return out;
}

std::string domain_of(const std::string& url) {
  try {
    return registrable_domain(parse_url(url).host);
  } catch (const BadUrl&) {
    return text::casefold(url);
  }
}

/// Outermost JSON object in a judge reply.
json reply_object(const std::string& raw) {
  auto a = raw.find('{');
  auto b = raw.rfind('}');
  if (a == std::string::npos || b == std::string::npos || b < a) {
    throw MalformedOutput("judge reply holds no JSON object", raw);
  }
  auto v = json::parse(raw.substr(a, b - a + 1), nullptr, false);
  if (v.is_discarded() || !v.is_object()) throw MalformedOutput("judge reply is not valid JSON", raw);
  return v;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string_view to_string(Domain d) {
  for (const auto& [k, name] : kDomains) {
    if (k == d) return name;
  }
  return "frontier technology";
}

std::optional<Domain> domain_from_name(std::string_view name) {
  auto n = text::casefold(text::trim(name));
  std::replace(n.begin(), n.end(), '_', ' ');
  if (n == "financial services") n = "financial service";
  for (const auto& [k, label] : kDomains) {
    if (label == n) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TemporalKind k) {
  switch (k) {
    case TemporalKind::historical: return "historical";
    case TemporalKind::current: return "current";
    case TemporalKind::forecast: return "forecast";
  }
  return "current";
}

std::optional<TemporalKind> temporal_kind_from_name(std::string_view name) {
  for (auto k : {TemporalKind::historical, TemporalKind::current, TemporalKind::forecast}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(EvalMode m) { return m == EvalMode::full ? "full" : "restricted"; }

std::optional<EvalMode> eval_mode_from_name(std::string_view name) {
  if (name == "full") return EvalMode::full;
  if (name == "restricted") return EvalMode::restricted;
  return std::nullopt;
}

json EvalTask::to_json() const {
  return json{{"task_id", task_id},
              {"query", query},
              {"domain", std::string(to_string(domain))},
              {"keypoints", keypoints},
              {"temporal_constraint",
               {{"start", format_date(start)}, {"end", format_date(end)}, {"kind", std::string(to_string(kind))}}}};
}

EvalTask parse_task(const json& v, std::size_t line) {
  if (!v.is_object()) throw SchemaError("task record must be a JSON object", line);
  auto str_field = [&](const char* key) {
    if (!v.contains(key) || !v[key].is_string() || text::trim(v[key].get<std::string>()).empty()) {
      throw SchemaError(std::string("missing or empty field \"") + key + "\"", line);
    }
    return v[key].get<std::string>();
  };
  EvalTask t;
  t.task_id = str_field("task_id");
  t.query = str_field("query");
  auto domain = domain_from_name(str_field("domain"));
  if (!domain) throw SchemaError("unknown domain \"" + v["domain"].get<std::string>() + "\"", line);
  t.domain = *domain;
  if (!v.contains("keypoints") || !v["keypoints"].is_array() || v["keypoints"].empty()) {
    throw SchemaError("keypoints must be a nonempty list", line);
  }
  for (const auto& k : v["keypoints"]) {
    if (!k.is_string() || text::trim(k.get<std::string>()).empty()) {
      throw SchemaError("keypoints must be nonempty strings", line);
    }
    t.keypoints.push_back(text::trim(k.get<std::string>()));
  }
  if (!v.contains("temporal_constraint") || !v["temporal_constraint"].is_object()) {
    throw SchemaError("missing temporal_constraint", line);
  }
  const auto& tc = v["temporal_constraint"];
  auto start = tc.contains("start") && tc["start"].is_string() ? parse_date(tc["start"].get<std::string>(), false)
                                                               : std::nullopt;
  auto end = tc.contains("end") && tc["end"].is_string() ? parse_date(tc["end"].get<std::string>(), true)
                                                         : std::nullopt;
  if (!start || !end) throw SchemaError("temporal_constraint needs parseable start and end dates", line);
  if (*start > *end) throw SchemaError("temporal_constraint start is after end", line);
  t.start = *start;
  t.end = *end;
  auto kind = temporal_kind_from_name(tc.value("kind", ""));
  if (!kind) throw SchemaError("temporal_constraint kind must be historical, current or forecast", line);
  t.kind = *kind;
  return t;
}

std::vector<EvalTask> parse_dataset(std::string_view ndjson) {
  std::vector<EvalTask> tasks;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (const auto& line : text::split(ndjson, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto v = json::parse(line, nullptr, false);
    if (v.is_discarded()) throw SchemaError("invalid JSON", line_no);
    auto task = parse_task(v, line_no);
    if (!ids.insert(task.task_id).second) throw SchemaError("duplicate task_id " + task.task_id, line_no);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<EvalTask> load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"rel", rel},         {"str", str},
              {"hall", opt(hall)},  {"temp", temp},
              {"cons", cons},       {"brd", opt(brd)},
              {"dep", opt(dep)},    {"len_ktokens", opt(len_ktokens)},
              {"time_seconds", opt(time_seconds)}, {"restricted", restricted},
              {"warnings", warnings}};
}

MetricReport MetricReport::from_json(const json& v) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (v.contains(key) && v[key].is_number()) return v[key].get<double>();
    return std::nullopt;
  };
  MetricReport r;
  r.rel = v.at("rel").get<double>();
  r.str = v.at("str").get<double>();
  r.temp = v.at("temp").get<double>();
  r.cons = v.at("cons").get<double>();
  r.hall = opt("hall");
  r.brd = opt("brd");
  r.dep = opt("dep");
  r.len_ktokens = opt("len_ktokens");
  r.time_seconds = opt("time_seconds");
  r.restricted = v.value("restricted", false);
  r.warnings = v.value("warnings", std::vector<std::string>{});
  return r;
}

MetricReport average_reports(const std::vector<MetricReport>& runs) {
  if (runs.empty()) throw PreconditionError("nothing to average");
  MetricReport out;
  out.restricted = runs.front().restricted;
  auto mean_opt = [&](auto field) -> std::optional<double> {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (auto v = r.*field) {
        sum += *v;
        ++n;
      }
    }
    return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  };
  std::set<std::string> warnings;
  for (const auto& r : runs) {
    if (r.restricted != out.restricted) throw DimensionMismatch("cannot average full and restricted runs");
    out.rel += r.rel;
    out.str += r.str;
    out.temp += r.temp;
    out.cons += r.cons;
    for (const auto& w : r.warnings) {
      if (warnings.insert(w).second) out.warnings.push_back(w);
    }
  }
  double n = static_cast<double>(runs.size());
  out.rel /= n;
  out.str /= n;
  out.temp /= n;
  out.cons /= n;
  out.hall = mean_opt(&MetricReport::hall);
  out.brd = mean_opt(&MetricReport::brd);
  out.dep = mean_opt(&MetricReport::dep);
  out.len_ktokens = mean_opt(&MetricReport::len_ktokens);
  out.time_seconds = mean_opt(&MetricReport::time_seconds);
  return out;
}

std::vector<Heading> extract_headings(std::string_view markdown) {
  static const std::regex re(R"(^(#{1,6})[ \t]+(.+?)[ \t#]*$)");
  std::vector<Heading> out;
  bool fenced = false;
  for (const auto& raw : text::split(markdown, '\n')) {
    auto line = text::trim(raw);
    if (line.rfind("```", 0) == 0) {
      fenced = !fenced;
      continue;
    }
    std::smatch m;
    if (fenced || !std::regex_match(line, m, re)) continue;
    auto title = text::trim(m[2].str());
    auto folded = text::casefold(title);
    if (folded == "references" || folded == "sources") continue;
    out.push_back(Heading{static_cast<int>(m[1].length()), title});
  }
  return out;
}

std::string render_headings(const std::vector<Heading>& headings) {
  std::string out;
  for (const auto& h : headings) {
    out += std::string(static_cast<std::size_t>(h.level - 1) * 2, ' ') + std::string(static_cast<std::size_t>(h.level), '#') +
           " " + h.title + "\n";
  }
  return out;
}

bool LexicalJudge::keypoint_covered(const std::string& report_text, const std::string& keypoint) {
  auto k = text::content_words(keypoint);
  if (k.empty()) return false;
  auto r = text::content_words(report_text);
  std::size_t hit = 0;
  for (const auto& w : k) hit += r.count(w);
  return static_cast<double>(hit) / static_cast<double>(k.size()) >= 0.6;
}

double LexicalJudge::structure_score(const std::string& headings_text, double scale) {
  std::vector<Heading> hs;
  for (const auto& line : text::split(headings_text, '\n')) {
    auto t = text::trim(line);
    std::size_t level = 0;
    while (level < t.size() && t[level] == '#') ++level;
    if (level == 0) continue;
    hs.push_back(Heading{static_cast<int>(level), text::trim(t.substr(level))});
  }
  if (hs.empty()) return 0.0;
  double s = 1.0;
  bool has_title = std::count_if(hs.begin(), hs.end(), [](const Heading& h) { return h.level == 1; }) == 1 &&
                   hs.front().level == 1;
  if (!has_title) s -= 0.1;
  int chapter_level = has_title ? 2 : hs.front().level;
  for (std::size_t i = 1; i < hs.size(); ++i) {
    if (hs[i].level > hs[i - 1].level + 1) s -= 0.15;
  }
  auto chapters = std::count_if(hs.begin(), hs.end(), [&](const Heading& h) { return h.level == chapter_level; });
  if (chapters < 3 || chapters > 8) s -= 0.1;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    int children = 0;
    for (std::size_t j = i + 1; j < hs.size() && hs[j].level > hs[i].level; ++j) {
      if (hs[j].level == hs[i].level + 1) ++children;
    }
    if (children == 1) s -= 0.05;
  }
  std::set<std::string> titles;
  for (const auto& h : hs) {
    if (h.title.empty() || !titles.insert(text::casefold(h.title)).second) s -= 0.1;
  }
  return std::clamp(s, 0.0, 1.0) * scale;
}

bool LexicalJudge::supports(const std::string& statement, const std::string& document) {
  auto s = text::content_words(statement);
  if (s.empty()) return false;
  auto d = text::content_words(document);
  std::size_t hit = 0;
  for (const auto& w : s) hit += d.count(w);
  if (static_cast<double>(hit) / static_cast<double>(s.size()) < 0.6) return false;
  auto doc_numbers = numbers_in(document);
  for (const auto& n : numbers_in(statement)) {
    if (!doc_numbers.count(n)) return false;
  }
  return true;
}

PairLabel LexicalJudge::label_pair(const std::string& a, const std::string& b) {
  PairLabel label;
  label.similar = text::jaccard(text::content_words(a), text::content_words(b)) >= threshold_;
  if (!label.similar) return label;
  auto na = numbers_in(a);
  auto nb = numbers_in(b);
  bool disjoint_figures = !na.empty() && !nb.empty() &&
                          std::none_of(na.begin(), na.end(), [&](const std::string& n) { return nb.count(n) > 0; });
  label.contradictory = disjoint_figures || negated(a) != negated(b);
  return label;
}

json LlmJudge::ask(const std::string& purpose, const std::string& system, const std::string& user,
                   const std::vector<std::string>& required) {
  auto call = gateway_->judge_call(purpose, system, user);
  std::function<json(const std::string&)> parse = [&required](const std::string& raw) {
    auto v = reply_object(raw);
    for (const auto& key : required) {
      if (!v.contains(key)) throw MalformedOutput("judge reply lacks \"" + key + "\"", raw);
    }
    return v;
  };
  try {
    return gateway_->complete_parsed(call, parse);
  } catch (const MalformedOutput& e) {
    throw JudgeError(e.what());
  } catch (const EndpointError& e) {
    throw JudgeError(e.what());
  }
}

bool LlmJudge::keypoint_covered(const std::string& report_text, const std::string& keypoint) {
  auto v = ask("eval_keypoint",
               "You check whether a report covers an expert keypoint. A keypoint is covered when the report states "
               "its substance, in any wording. Reply with JSON only: {\"covered\": true or false}.",
               "Keypoint: " + keypoint + "\n\nReport:\n" + report_text, {"covered"});
  if (!v["covered"].is_boolean()) throw JudgeError("\"covered\" must be a boolean");
  return v["covered"].get<bool>();
}

double LlmJudge::structure_score(const std::string& headings, double scale) {
  auto v = ask("eval_structure",
               "You rate the logical hierarchy of a report's heading outline from 0 to " + fmt("%.0f", scale) +
                   ". Consider whether the chapters decompose the topic cleanly, follow a sensible order, avoid "
                   "overlap between siblings and keep a consistent depth. Reply with JSON only: {\"score\": number}.",
               "Heading outline:\n" + headings, {"score"});
  if (!v["score"].is_number()) throw JudgeError("\"score\" must be a number");
  return std::clamp(v["score"].get<double>(), 0.0, scale);
}

bool LlmJudge::supports(const std::string& statement, const std::string& document) {
  auto v = ask("eval_verify",
               "You check whether a source document supports a statement. Supported means the document states the "
               "same facts, figures and entities; contradicted or absent content is unsupported. Reply with JSON "
               "only: {\"supported\": true or false}.",
               "Statement: " + statement + "\n\nDocument:\n" + document, {"supported"});
  if (!v["supported"].is_boolean()) throw JudgeError("\"supported\" must be a boolean");
  return v["supported"].get<bool>();
}

PairLabel LlmJudge::label_pair(const std::string& a, const std::string& b) {
  auto v = ask("eval_consistency",
               "You compare two statements from one report. similar: they address the same subject and attribute. "
               "contradictory: they cannot both be true. Reply with JSON only: {\"similar\": true or false, "
               "\"contradictory\": true or false}.",
               "Statement A: " + a + "\nStatement B: " + b, {"similar", "contradictory"});
  if (!v["similar"].is_boolean() || !v["contradictory"].is_boolean()) {
    throw JudgeError("\"similar\" and \"contradictory\" must be booleans");
  }
  return PairLabel{v["similar"].get<bool>(), v["contradictory"].get<bool>()};
}

SourceView RetrieverLookup::lookup(const std::string& url) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(url); it != cache_.end()) return it->second;
  }
  SourceView view;
  try {
    auto doc = retriever_->fetch(url);
    view.accessible = doc.ok();
    view.text = doc.extracted_text;
    view.publish_time = doc.publish_time;
  } catch (const std::exception&) {
    view.accessible = false;
  }
  std::lock_guard lock(mutex_);
  cache_[url] = view;
  return view;
}

double relevance(const std::string& report_text, const std::vector<std::string>& keypoints, EvalJudge& judge) {
  if (keypoints.empty()) throw PreconditionError("relevance needs keypoints");
  std::size_t matched = 0;
  for (const auto& k : keypoints) matched += judge.keypoint_covered(report_text, k) ? 1 : 0;
  return static_cast<double>(matched) / static_cast<double>(keypoints.size());
}

double structure(std::string_view markdown, EvalJudge& judge, const EvalConfig& config) {
  auto headings = extract_headings(markdown);
  if (headings.empty()) throw NoHeadings("report has no headings");
  return std::clamp(judge.structure_score(render_headings(headings), config.judge_scale), 0.0, config.judge_scale);
}

double hallucination(const std::vector<ClaimSourcePair>& pairs, SourceLookup& sources, EvalJudge& judge,
                     std::vector<std::string>* warnings) {
  if (pairs.empty()) throw PreconditionError("hallucination needs claim-source pairs");
  double supported = 0;
  for (const auto& p : pairs) {
    if (!p.source_url) continue;
    auto view = sources.lookup(*p.source_url);
    if (!view.accessible) continue;
    try {
      supported += judge.supports(p.statement, view.text) ? 1.0 : 0.0;
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("verification failed at position " + std::to_string(p.position) + ": " + e.what());
    }
  }
  return 1.0 - supported / static_cast<double>(pairs.size());
}

double temporality(const std::vector<ClaimSourcePair>& pairs, const EvalTask& task, SourceLookup& sources) {
  if (pairs.empty()) throw PreconditionError("temporality needs claim-source pairs");
  double in_window = 0;
  for (const auto& p : pairs) {
    if (!p.source_url) continue;
    auto view = sources.lookup(*p.source_url);
    if (!view.publish_time) continue;
    auto d = to_date(*view.publish_time);
    if (d >= task.start && d <= task.end) in_window += 1.0;
  }
  return in_window / static_cast<double>(pairs.size());
}

std::optional<Date> inline_evidence_date(std::string_view statement) {
  static const std::regex paren(R"(\(([^()]*)\))");
  static const std::regex iso(R"((\d{4}-\d{2}-\d{2}))");
  std::optional<Date> last;
  std::string s(statement);
  for (std::sregex_iterator it(s.begin(), s.end(), paren), end; it != end; ++it) {
    auto inner = (*it)[1].str();
    for (std::sregex_iterator d(inner.begin(), inner.end(), iso); d != end; ++d) {
      if (auto date = parse_date(d->str())) last = date;
    }
  }
  return last;
}

std::optional<double> inline_temporality(const std::vector<ClaimSourcePair>& claims, const EvalTask& task) {
  if (claims.empty()) return std::nullopt;
  double in_window = 0;
  bool dated = false;
  for (const auto& c : claims) {
    auto d = inline_evidence_date(c.statement);
    if (!d) continue;
    dated = true;
    if (*d >= task.start && *d <= task.end) in_window += 1.0;
  }
  if (!dated) return std::nullopt;
  return in_window / static_cast<double>(claims.size());
}

double consistency(const std::vector<ClaimSourcePair>& pairs, EvalJudge& judge, const EvalConfig& config) {
  if (config.epsilon <= 0) throw PreconditionError("epsilon must be positive");
  std::vector<std::string> statements;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!p.statement.empty() && seen.insert(text::normalize(p.statement)).second) statements.push_back(p.statement);
  }
  std::vector<std::set<std::string>> words;
  for (const auto& s : statements) words.push_back(text::content_words(s));
  double sim = 0;
  double contra = 0;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    for (std::size_t j = i + 1; j < statements.size(); ++j) {
      if (text::jaccard(words[i], words[j]) < config.similarity_threshold) continue;
      auto label = judge.label_pair(statements[i], statements[j]);
      if (!label.similar) continue;
      sim += 1.0;
      if (label.contradictory) contra += 1.0;
    }
  }
  return 1.0 - contra / (sim + config.epsilon);
}

double breadth(const std::vector<ClaimSourcePair>& pairs, const EvalConfig& config) {
  std::map<std::string, double> counts;
  double total = 0;
  if (config.breadth_per_claim) {
    for (const auto& p : pairs) {
      if (!p.source_url) continue;
      counts[domain_of(*p.source_url)] += 1.0;
      total += 1.0;
    }
  } else {
    for (const auto& url : unique_sources(pairs)) {
      counts[domain_of(url)] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0) throw PreconditionError("breadth needs at least one cited source");
  double entropy = 0;
  for (const auto& [domain, c] : counts) {
    double p = c / total;
    entropy -= p * log_in(p, config.log_base);
  }
  return log_in(1.0 + static_cast<double>(counts.size()), config.log_base) * entropy;
}

bool is_file_url(const std::string& url, const EvalConfig& config) {
  static const std::set<std::string> base{"pdf", "xlsx", "csv", "doc", "ppt"};
  static const std::set<std::string> extended{"docx", "pptx", "xls"};
  std::string suffix;
  try {
    suffix = path_suffix(url);
  } catch (const BadUrl&) {
    return false;
  }
  return base.count(suffix) > 0 || (config.extended_suffixes && extended.count(suffix) > 0);
}

double depth(const std::vector<ClaimSourcePair>& pairs, const EvalConfig& config) {
  if (config.beta < 0) throw PreconditionError("beta must be non-negative");
  auto urls = unique_sources(pairs);
  if (urls.empty()) throw PreconditionError("depth needs at least one cited source");
  double sum = 0;
  for (const auto& u : urls) {
    double seg = 0;
    try {
      seg = static_cast<double>(path_segments(u).size());
    } catch (const BadUrl&) {
    }
    sum += seg + config.beta * (is_file_url(u, config) ? 1.0 : 0.0);
  }
  return sum / static_cast<double>(urls.size());
}

MetricReport evaluate(const EvalInput& input, const EvalTask& task, EvalJudge& judge, SourceLookup& sources,
                      const EvalConfig& config, EvalMode mode) {
  MetricReport r;
  r.restricted = mode == EvalMode::restricted;
  r.len_ktokens = input.len_ktokens;
  r.time_seconds = input.time_seconds;
  const bool sourced = std::any_of(input.pairs.begin(), input.pairs.end(),
                                   [](const ClaimSourcePair& p) { return p.source_url.has_value(); });
  if (mode == EvalMode::full && !sourced) {
    throw PreconditionError("full evaluation needs claim-source pairs; use restricted mode");
  }
  r.rel = relevance(input.markdown, task.keypoints, judge);
  r.str = structure(input.markdown, judge, config);
  auto claims = input.pairs;
  if (claims.empty()) {
    ReportSegment whole;
    whole.markdown_text = input.markdown;
    claims = match_references(whole);
  }
  if (sourced) {
    r.temp = temporality(input.pairs, task, sources);
  } else if (auto inline_temp = inline_temporality(claims, task)) {
    r.temp = *inline_temp;
  } else {
    r.temp = 0.0;
    r.warnings.push_back("no dated source evidence; temporality set to 0");
  }
  if (claims.empty()) {
    r.cons = 1.0;
    r.warnings.push_back("report holds no statements; consistency is vacuous");
  } else {
    r.cons = consistency(claims, judge, config);
  }
  if (mode == EvalMode::full) {
    r.hall = hallucination(input.pairs, sources, judge, &r.warnings);
    r.brd = breadth(input.pairs, config);
    r.dep = depth(input.pairs, config);
  }
  return r;
}

std::vector<double> mean_ranks(const std::vector<double>& values, bool higher_is_better) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher_is_better ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

RankTable normalize_and_rank(const std::vector<std::pair<std::string, MetricReport>>& systems) {
  if (systems.size() < 2) throw PreconditionError("ranking needs at least two systems");
  RankTable table;
  for (const auto& m : kMetricOrder) {
    std::size_t present = 0;
    for (const auto& [name, r] : systems) present += metric_value(r, m).has_value() ? 1 : 0;
    if (present != 0 && present != systems.size()) {
      throw DimensionMismatch("metric " + m + " is missing for some systems");
    }
    if (present) table.metrics.push_back(m);
  }
  for (const auto& [name, r] : systems) {
    RankRow row;
    row.system = name;
    row.len_ktokens = r.len_ktokens;
    row.time_seconds = r.time_seconds;
    table.rows.push_back(std::move(row));
  }
  for (const auto& m : table.metrics) {
    std::vector<double> values;
    for (const auto& [name, r] : systems) values.push_back(*metric_value(r, m));
    const bool inverted = m == "hall";
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    double min = *lo;
    double max = *hi;
    auto ranks = mean_ranks(values, !inverted);
    for (std::size_t i = 0; i < values.size(); ++i) {
      double norm = max == min ? 1.0 : (inverted ? (max - values[i]) : (values[i] - min)) / (max - min);
      table.rows[i].normalized[m] = norm * 100.0;
      table.rows[i].ranks[m] = ranks[i];
    }
  }
  for (auto& row : table.rows) {
    double sum = 0;
    for (const auto& m : table.metrics) sum += row.ranks[m];
    row.avg_rank = table.metrics.empty() ? 0.0 : sum / static_cast<double>(table.metrics.size());
  }
  return table;
}

std::string RankTable::render() const {
  std::vector<std::string> header{"System"};
  for (const auto& m : metrics) header.push_back(column_names().at(m));
  for (auto extra : {"Avg. Rank", "Len.", "Time"}) header.push_back(extra);
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& row : rows) {
    std::vector<std::string> line{row.system};
    for (const auto& m : metrics) line.push_back(fmt("%.2f", row.normalized.at(m)));
    line.push_back(fmt("%.2f", row.avg_rank));
    line.push_back(row.len_ktokens ? fmt("%.2fk", *row.len_ktokens) : "-");
    line.push_back(row.time_seconds ? fmt("%.1fs", *row.time_seconds) : "-");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], text::utf8_length(line[i]));
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      const auto& c = cells[r][i];
      std::string pad(widths[i] - text::utf8_length(c), ' ');
      out += i == 0 ? c + pad : "  " + pad + c;
    }
    out += "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

json RankTable::to_json() const {
  json list = json::array();
  for (const auto& row : rows) {
    list.push_back(json{{"system", row.system},
                        {"normalized", row.normalized},
                        {"ranks", row.ranks},
                        {"avg_rank", row.avg_rank},
                        {"len_ktokens", row.len_ktokens ? json(*row.len_ktokens) : json(nullptr)},
                        {"time_seconds", row.time_seconds ? json(*row.time_seconds) : json(nullptr)}});
  }
  return json{{"metrics", metrics}, {"rows", list}};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("rank lists differ in length: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw DegenerateData("spearman needs at least two observations");
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  double n = static_cast<double>(x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings) {
  if (ratings.size() < 2) throw DegenerateData("agreement needs at least two raters");
  std::size_t items = 0;
  for (const auto& r : ratings) items = std::max(items, r.size());
  std::vector<std::vector<int>> units;
  std::set<int> values;
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<int> unit;
    for (const auto& rater : ratings) {
      if (u < rater.size() && rater[u]) {
        if (*rater[u] < 1 || *rater[u] > 5) throw PreconditionError("ratings must lie within 1..5");
        unit.push_back(*rater[u]);
      }
    }
    if (unit.size() >= 2) {
      values.insert(unit.begin(), unit.end());
      units.push_back(std::move(unit));
    }
  }
  if (units.empty()) throw DegenerateData("no item carries two ratings");
  std::vector<int> vals(values.begin(), values.end());
  const std::size_t v = vals.size();
  auto index = [&](int value) {
    return static_cast<std::size_t>(std::lower_bound(vals.begin(), vals.end(), value) - vals.begin());
  };
  std::vector<std::vector<double>> o(v, std::vector<double>(v, 0.0));
  for (const auto& unit : units) {
    double w = 1.0 / static_cast<double>(unit.size() - 1);
    for (std::size_t i = 0; i < unit.size(); ++i) {
      for (std::size_t j = 0; j < unit.size(); ++j) {
        if (i != j) o[index(unit[i])][index(unit[j])] += w;
      }
    }
  }
  std::vector<double> nc(v, 0.0);
  double n = 0;
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < v; ++k) nc[c] += o[c][k];
    n += nc[c];
  }
  auto delta2 = [&](std::size_t c, std::size_t k) {
    if (c == k) return 0.0;
    auto [a, b] = std::minmax(c, k);
    double s = 0;
    for (std::size_t g = a; g <= b; ++g) s += nc[g];
    s -= (nc[a] + nc[b]) / 2.0;
    return s * s;
  };
  double observed = 0;
  double expected = 0;
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < v; ++k) {
      double d = delta2(c, k);
      observed += o[c][k] * d;
      expected += nc[c] * nc[k] * d;
    }
  }
  if (expected == 0) {
    if (observed == 0) return 1.0;
    throw DegenerateData("expected disagreement is zero");
  }
  return 1.0 - (n - 1.0) * observed / expected;
}

}  // namespace deepreport
