#include "deepreport/knowledge.hpp"

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

json check_json(const CheckResult& c, bool with_type) {
  json out{{"think", c.think}, {"pass", c.pass}};
  if (with_type) out["type"] = c.type;
  return out;
}

}  // namespace

json KnowledgeCandidate::to_json() const {
  json out{{"insight", insight},
           {"snippet_ids", snippet_ids},
           {"source_url", source_url},
           {"source_title", source_title}};
  out["publish_time"] = publish_time ? json(format_timestamp(*publish_time)) : json(nullptr);
  return out;
}

KnowledgeCandidate KnowledgeCandidate::from_json(const json& value) {
  KnowledgeCandidate c;
  c.insight = value.at("insight").get<std::string>();
  c.snippet_ids = value.value("snippet_ids", std::vector<std::string>{});
  c.source_url = value.at("source_url").get<std::string>();
  c.source_title = value.value("source_title", "");
  if (value.contains("publish_time") && value["publish_time"].is_string()) {
    c.publish_time = parse_timestamp(value["publish_time"].get<std::string>());
  }
  return c;
}

std::string candidate_key(std::string_view source_url, std::string_view insight) {
  return std::string(source_url) + '\n' + text::normalize(insight);
}

json ReflectionProfile::to_json() const {
  return json{{"freshness", freshness}, {"plurality", plurality}, {"completeness", completeness}};
}

bool ReflectionVerdict::gate(const CheckResult& integrity, const std::optional<CheckResult>& freshness,
                             const std::optional<CheckResult>& plurality) {
  return integrity.pass && (!freshness || freshness->pass) && (!plurality || plurality->pass);
}

json ReflectionVerdict::to_json() const {
  json out{{"integrity", check_json(integrity, false)}, {"steps_used", steps_used}, {"accepted", accepted}};
  out["freshness"] = freshness ? check_json(*freshness, true) : json(nullptr);
  out["plurality"] = plurality ? check_json(*plurality, false) : json(nullptr);
  return out;
}

std::string_view to_string(ResearchStatus status) {
  switch (status) {
    case ResearchStatus::searching: return "searching";
    case ResearchStatus::accepted: return "accepted";
    case ResearchStatus::budget_exhausted: return "budget_exhausted";
  }
  return "searching";
}

json ChapterResearchState::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back(c.to_json());
  json verdict_list = json::array();
  for (const auto& v : verdicts) verdict_list.push_back(v.to_json());
  return json{{"chapter_id", chapter_id},
              {"step_count", step_count},
              {"status", std::string(to_string(status))},
              {"candidates", cands},
              {"verdicts", verdict_list},
              {"documents_fetched", documents_fetched}};
}

GateToken GateToken::issue(const ChapterResearchState& state) {
  if (state.status == ResearchStatus::searching) {
    throw PreconditionError("chapter " + state.chapter_id + " has not finished its reflection loop");
  }
  if (state.status == ResearchStatus::accepted &&
      (state.verdicts.empty() || !state.verdicts.back().accepted)) {
    throw PreconditionError("chapter " + state.chapter_id + " is marked accepted without an accepting verdict");
  }
  return GateToken(state.chapter_id, state.status);
}

}  // namespace deepreport
