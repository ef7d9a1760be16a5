#include "deepreport/compare.hpp"

#include <cstdio>
#include <map>

#include "deepreport/error.hpp"
#include "deepreport/io.hpp"
#include "deepreport/memory.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

EvalConfig config_from_json(const json& v) {
  EvalConfig c;
  if (!v.is_object()) return c;
  c.beta = v.value("beta", c.beta);
  c.epsilon = v.value("epsilon", c.epsilon);
  c.log_base = v.value("log_base", c.log_base);
  c.judge_scale = v.value("judge_scale", c.judge_scale);
  c.similarity_threshold = v.value("similarity_threshold", c.similarity_threshold);
  c.extended_suffixes = v.value("extended_suffixes", c.extended_suffixes);
  c.breadth_per_claim = v.value("breadth_per_claim", c.breadth_per_claim);
  return c;
}

}  // namespace

json SystemRun::to_json() const {
  json j{{"system", system}, {"task_id", task_id}, {"report", report.string()}};
  if (sidecar) j["sidecar"] = sidecar->string();
  if (time_seconds) j["time_seconds"] = *time_seconds;
  return j;
}

SystemRun SystemRun::from_json(const json& v) {
  try {
    SystemRun r;
    r.system = v.at("system").get<std::string>();
    r.task_id = v.at("task_id").get<std::string>();
    r.report = v.at("report").get<std::string>();
    if (v.contains("sidecar") && v["sidecar"].is_string()) r.sidecar = v["sidecar"].get<std::string>();
    if (v.contains("time_seconds") && v["time_seconds"].is_number()) r.time_seconds = v["time_seconds"].get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad system run: ") + e.what());
  }
}

SystemRun SystemRun::parse_spec(const std::string& spec) {
  auto parts = text::split(spec, ':');
  if (parts.size() < 3 || parts.size() > 4) {
    throw ConfigError("system spec must be system:task_id:report[:sidecar], got " + spec);
  }
  SystemRun r;
  r.system = parts[0];
  r.task_id = parts[1];
  r.report = parts[2];
  if (parts.size() == 4 && !parts[3].empty()) r.sidecar = parts[3];
  if (r.system.empty() || r.task_id.empty() || r.report.empty()) throw ConfigError("empty field in system spec " + spec);
  return r;
}

EvalJob EvalJob::from_json(const json& v) {
  if (!v.is_object()) throw ConfigError("eval request must be a JSON object");
  EvalJob job;
  if (!v.contains("dataset") || !v["dataset"].is_string()) throw ConfigError("eval request needs a dataset path");
  job.dataset = v["dataset"].get<std::string>();
  if (v.contains("mode")) {
    auto mode = eval_mode_from_name(v["mode"].is_string() ? v["mode"].get<std::string>() : "");
    if (!mode) throw ConfigError("mode must be full or restricted");
    job.mode = *mode;
  }
  if (!v.contains("runs") || !v["runs"].is_array() || v["runs"].empty()) {
    throw ConfigError("eval request needs a non-empty runs list");
  }
  for (const auto& r : v["runs"]) job.runs.push_back(SystemRun::from_json(r));
  if (v.contains("config")) job.config = config_from_json(v["config"]);
  return job;
}

json Comparison::to_json() const {
  json list = json::array();
  for (const auto& s : systems) {
    json runs = json::array();
    for (const auto& r : s.runs) runs.push_back(r.to_json());
    list.push_back(json{{"system", s.system}, {"mean", s.mean.to_json()}, {"runs", runs}});
  }
  return json{{"systems", list}, {"table", table ? table->to_json() : json(nullptr)}};
}

std::string Comparison::render() const {
  if (table) return table->render();
  std::string out;
  for (const auto& s : systems) {
    const auto& m = s.mean;
    out += s.system + "\n";
    out += "  Rel.  " + fmt_value(m.rel) + "\n";
    out += "  Str.  " + fmt_value(m.str) + "\n";
    if (m.hall) out += "  Hall. " + fmt_value(*m.hall) + "\n";
    out += "  Temp. " + fmt_value(m.temp) + "\n";
    out += "  Cons. " + fmt_value(m.cons) + "\n";
    if (m.brd) out += "  Brd.  " + fmt_value(*m.brd) + "\n";
    if (m.dep) out += "  Dep.  " + fmt_value(*m.dep) + "\n";
  }
  return out;
}

Comparison compare_systems(const EvalJob& job, EvalJudge& judge, SourceLookup& sources) {
  if (job.runs.empty()) throw PreconditionError("nothing to evaluate");
  if (!std::filesystem::exists(job.dataset)) throw PreconditionError("dataset not found: " + job.dataset.string());
  std::map<std::string, EvalTask> tasks;
  for (auto& t : load_dataset(job.dataset)) tasks.emplace(t.task_id, std::move(t));

  std::vector<std::string> order;
  std::map<std::string, std::vector<MetricReport>> per_system;
  for (const auto& run : job.runs) {
    auto task = tasks.find(run.task_id);
    if (task == tasks.end()) throw PreconditionError("task " + run.task_id + " is not in the dataset");
    if (!std::filesystem::exists(run.report)) throw PreconditionError("report not found: " + run.report.string());
    EvalInput input;
    input.markdown = read_file(run.report);
    if (run.sidecar) {
      if (!std::filesystem::exists(*run.sidecar)) {
        throw PreconditionError("sidecar not found: " + run.sidecar->string());
      }
      input.pairs = read_sidecar(*run.sidecar);
    }
    input.len_ktokens = static_cast<double>(estimate_tokens(input.markdown)) / 1000.0;
    input.time_seconds = run.time_seconds;
    if (!per_system.count(run.system)) order.push_back(run.system);
    per_system[run.system].push_back(evaluate(input, task->second, judge, sources, job.config, job.mode));
  }

  Comparison out;
  std::vector<std::pair<std::string, MetricReport>> means;
  for (const auto& name : order) {
    SystemResult s{name, average_reports(per_system[name]), per_system[name]};
    means.emplace_back(name, s.mean);
    out.systems.push_back(std::move(s));
  }
  if (means.size() >= 2) out.table = normalize_and_rank(means);
  return out;
}

}  // namespace deepreport
