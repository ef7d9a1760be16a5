#include "deepreport/pipeline.hpp"

#include <array>

#include <spdlog/spdlog.h>

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 6> kStages = {{
    {Stage::clarifying, "clarifying"},
    {Stage::outlining, "outlining"},
    {Stage::researching, "researching"},
    {Stage::synthesizing, "synthesizing"},
    {Stage::done, "done"},
    {Stage::failed, "failed"},
}};

constexpr std::size_t kObservationChars = 240;

std::string digest(const json& payload) {
  auto line = to_line(payload);
  if (line.size() <= kObservationChars) return line;
  // Cut on a UTF-8 boundary.
  std::size_t cut = kObservationChars;
  while (cut > 0 && (static_cast<unsigned char>(line[cut]) & 0xC0) == 0x80) --cut;
  return line.substr(0, cut) + "…";
}

std::string action_of(const RunEvent& e) {
  std::string action(to_string(e.kind));
  if (e.payload.contains("chapter_id") && e.payload["chapter_id"].is_string()) {
    action += " " + e.payload["chapter_id"].get<std::string>();
  }
  return action;
}

bool terminal(Stage s) { return s == Stage::done || s == Stage::failed; }

std::string code_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->code()));
  return "internal";
}

}  // namespace

std::string_view to_string(RunMode mode) { return mode == RunMode::interactive ? "interactive" : "auto"; }

std::optional<RunMode> run_mode_from_name(std::string_view name) {
  if (name == "interactive") return RunMode::interactive;
  if (name == "auto" || name == "automatic") return RunMode::automatic;
  return std::nullopt;
}

std::string_view to_string(Stage stage) {
  for (const auto& [s, name] : kStages) {
    if (s == stage) return name;
  }
  return "failed";
}

std::optional<Stage> stage_from_name(std::string_view name) {
  for (const auto& [s, n] : kStages) {
    if (n == name) return s;
  }
  return std::nullopt;
}

json RunOverrides::to_json() const {
  json j = json::object();
  if (domain) j["domain"] = *domain;
  if (step_budget) j["step_budget"] = *step_budget;
  if (chapter_concurrency) j["chapter_concurrency"] = *chapter_concurrency;
  if (token_budget) j["token_budget"] = *token_budget;
  if (clarification_timeout_seconds) j["clarification_timeout_seconds"] = *clarification_timeout_seconds;
  return j;
}

RunOverrides RunOverrides::from_json(const json& v) {
  RunOverrides o;
  if (v.is_null()) return o;
  if (!v.is_object()) throw ConfigError("config overrides must be an object");
  try {
    if (v.contains("domain")) o.domain = v["domain"].get<std::string>();
    if (v.contains("step_budget")) o.step_budget = v["step_budget"].get<int>();
    if (v.contains("chapter_concurrency")) o.chapter_concurrency = v["chapter_concurrency"].get<std::size_t>();
    if (v.contains("token_budget")) o.token_budget = v["token_budget"].get<std::size_t>();
    if (v.contains("clarification_timeout_seconds")) {
      o.clarification_timeout_seconds = v["clarification_timeout_seconds"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config override: ") + e.what());
  }
  if (o.step_budget && *o.step_budget < 1) throw ConfigError("step_budget must be >= 1");
  if (o.chapter_concurrency && *o.chapter_concurrency < 1) throw ConfigError("chapter_concurrency must be >= 1");
  if (o.token_budget && *o.token_budget < 1) throw ConfigError("token_budget must be >= 1");
  if (o.clarification_timeout_seconds && *o.clarification_timeout_seconds < 0) {
    throw ConfigError("clarification_timeout_seconds must be >= 0");
  }
  return o;
}

json RunRequest::to_json() const {
  json j{{"query", query}, {"mode", to_string(mode)}, {"config", overrides.to_json()}};
  if (snapshot_mode) j["snapshot_mode"] = to_string(*snapshot_mode);
  return j;
}

RunRequest RunRequest::from_json(const json& v) {
  if (!v.is_object()) throw ConfigError("run request must be a JSON object");
  RunRequest r;
  if (!v.contains("query") || !v["query"].is_string()) throw ConfigError("run request needs a query string");
  r.query = text::trim(v["query"].get<std::string>());
  if (r.query.empty()) throw ConfigError("query must not be empty");
  if (v.contains("mode")) {
    auto mode = run_mode_from_name(v["mode"].is_string() ? v["mode"].get<std::string>() : "");
    if (!mode) throw ConfigError("mode must be interactive or auto");
    r.mode = *mode;
  }
  if (v.contains("snapshot_mode") && !v["snapshot_mode"].is_null()) {
    auto mode = snapshot_mode_from_name(v["snapshot_mode"].is_string() ? v["snapshot_mode"].get<std::string>() : "");
    if (!mode) throw ConfigError("snapshot_mode must be live, record or replay");
    r.snapshot_mode = *mode;
  }
  if (v.contains("config")) r.overrides = RunOverrides::from_json(v["config"]);
  return r;
}

json RunArtifacts::to_json() const {
  return json{{"dir", dir.string()},       {"report", report.string()}, {"sidecar", sidecar.string()},
              {"memory", memory.string()}, {"outline", outline.string()}, {"events", events.string()}};
}

json PipelineState::to_json() const {
  json j{{"run_id", run_id},
         {"stage", to_string(stage)},
         {"step_counter", step_counter},
         {"last_action", last_action},
         {"last_observation", last_observation},
         {"started_at", started_at},
         {"finished_at", finished_at ? json(*finished_at) : json(nullptr)}};
  if (error_code) j["error"] = json{{"code", *error_code}, {"message", error_message.value_or("")}};
  if (artifacts) j["artifacts"] = artifacts->to_json();
  return j;
}

void apply_event(PipelineState& state, const RunEvent& e) {
  if (state.started_at.empty()) state.started_at = e.at;
  switch (e.kind) {
    case EventKind::stage_changed: {
      auto stage = stage_from_name(e.payload.value("stage", ""));
      if (!stage) break;
      state.stage = *stage;
      if (terminal(*stage)) state.finished_at = e.at;
      return;
    }
    case EventKind::warning:
      return;
    case EventKind::error:
      // A chapter error leaves the run going; only a run-level one is kept.
      if (!e.payload.contains("chapter_id")) {
        state.error_code = e.payload.value("code", "internal");
        state.error_message = e.payload.value("message", "");
      }
      break;
    case EventKind::report_ready:
      if (e.payload.contains("artifacts")) {
        const auto& a = e.payload["artifacts"];
        RunArtifacts art;
        art.dir = a.value("dir", "");
        art.report = a.value("report", "");
        art.sidecar = a.value("sidecar", "");
        art.memory = a.value("memory", "");
        art.outline = a.value("outline", "");
        art.events = a.value("events", "");
        state.artifacts = art;
      }
      break;
    default:
      break;
  }
  ++state.step_counter;
  state.last_action = action_of(e);
  state.last_observation = digest(e.payload);
}

PipelineState replay_state(const std::string& run_id, const std::vector<RunEvent>& events) {
  PipelineState state;
  state.run_id = run_id;
  for (const auto& e : events) apply_event(state, e);
  return state;
}

void ClarificationRendezvous::open() {
  std::lock_guard lock(mutex_);
  if (phase_ == Phase::idle) phase_ = Phase::waiting;
}

bool ClarificationRendezvous::is_open() const {
  std::lock_guard lock(mutex_);
  return phase_ != Phase::idle;
}

bool ClarificationRendezvous::settled() const {
  std::lock_guard lock(mutex_);
  return phase_ == Phase::answered || phase_ == Phase::timed_out;
}

bool ClarificationRendezvous::deliver(std::vector<std::string> answers) {
  {
    std::lock_guard lock(mutex_);
    if (phase_ == Phase::idle) throw WrongStage("no clarification is pending");
    if (phase_ != Phase::waiting) return false;
    answers_ = std::move(answers);
    phase_ = Phase::answered;
  }
  cv_.notify_all();
  return true;
}

ClarificationRendezvous::Outcome ClarificationRendezvous::wait(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (phase_ == Phase::idle) phase_ = Phase::waiting;
  cv_.wait_for(lock, timeout, [&] { return phase_ != Phase::waiting; });
  if (phase_ == Phase::waiting) phase_ = Phase::timed_out;
  return phase_ == Phase::answered ? Outcome::answered : Outcome::timed_out;
}

std::vector<std::string> ClarificationRendezvous::answers() const {
  std::lock_guard lock(mutex_);
  return answers_;
}

PipelineConfig apply_overrides(PipelineConfig base, const RunOverrides& o) {
  if (o.domain) {
    base.domain = *o.domain;
    base.synthesizer.domain = *o.domain;
  }
  if (o.step_budget) base.researcher.step_budget = *o.step_budget;
  if (o.chapter_concurrency) base.researcher.chapter_concurrency = *o.chapter_concurrency;
  if (o.token_budget) {
    base.enrichment.token_budget = *o.token_budget;
    base.synthesizer.token_budget = *o.token_budget;
  }
  if (o.clarification_timeout_seconds) {
    base.clarification_timeout =
        std::chrono::milliseconds(static_cast<long long>(*o.clarification_timeout_seconds * 1000.0));
  }
  return base;
}

Run::Run(std::string run_id, RunRequest request, PipelineServices services, PipelineConfig config)
    : id_(std::move(run_id)),
      request_(std::move(request)),
      services_(std::move(services)),
      config_(apply_overrides(std::move(config), request_.overrides)),
      log_(id_, services_.clock),
      memory_(services_.clock, estimate_tokens, config_.entry_id_width) {
  if (!services_.gateway || !services_.retriever) throw ConfigError("a run needs a gateway and a retriever");
  if (!services_.clock) services_.clock = default_clock();
  if (text::trim(request_.query).empty()) throw ConfigError("query must not be empty");
  state_.run_id = id_;
}

void Run::emit(EventKind kind, json payload) {
  std::lock_guard lock(mutex_);
  if (kind == EventKind::outline_ready) outline_ready_ = true;
  auto e = log_.append(kind, std::move(payload));
  apply_event(state_, e);
}

void Run::transition(Stage stage, const std::string& action) {
  emit(EventKind::stage_changed, json{{"stage", to_string(stage)}, {"action", action}});
}

PipelineState Run::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::optional<Report> Run::report() const {
  std::lock_guard lock(mutex_);
  return report_;
}

bool Run::answer_clarification(std::vector<std::string> answers) {
  {
    std::lock_guard lock(mutex_);
    if (!rendezvous_.is_open() || outline_ready_ || terminal(state_.stage)) {
      throw WrongStage("run " + id_ + " is not awaiting clarification (stage " +
                       std::string(to_string(state_.stage)) + ")");
    }
    if (answers.size() != pending_questions_) {
      throw AnswerCountMismatch("expected " + std::to_string(pending_questions_) + " answers, got " +
                                std::to_string(answers.size()));
    }
  }
  return rendezvous_.deliver(std::move(answers));
}

ClarifiedIntent Run::clarify() {
  Planner planner(services_.gateway, services_.retriever, services_.clock, config_.planner);
  auto decision = planner.classify_intent(request_.query, *this);
  std::optional<std::vector<std::string>> answers;
  if (decision.kind == IntentKind::confirm && request_.mode == RunMode::interactive) {
    json questions = json::array();
    for (const auto& q : decision.questions) questions.push_back(json{{"text", q.text}, {"options", q.options}});
    {
      std::lock_guard lock(mutex_);
      pending_questions_ = decision.questions.size();
    }
    rendezvous_.open();
    emit(EventKind::clarification_needed, json{{"preamble", decision.preamble}, {"questions", questions}});
    if (rendezvous_.wait(config_.clarification_timeout) == ClarificationRendezvous::Outcome::answered) {
      answers = rendezvous_.answers();
      emit(EventKind::clarification_answered, json{{"answers", *answers}});
    } else {
      warn("no clarification answer before the timeout; expanding every option automatically",
           json{{"timeout_ms", config_.clarification_timeout.count()}});
    }
  }
  auto intent = resolve_intent(request_.query, decision, answers);
  emit(EventKind::intent_resolved, intent.to_json());
  return intent;
}

ChapterTree Run::outline(const ClarifiedIntent& intent) {
  Planner planner(services_.gateway, services_.retriever, services_.clock, config_.planner);
  auto bundle = planner.preliminary_search(intent, *this);
  auto tree = planner.generate_outline(intent, bundle, config_.domain, *this);
  emit(EventKind::outline_ready, json{{"outline", tree.to_json()}, {"reference_queries", bundle.queries}});
  return tree;
}

void Run::research(ChapterTree& tree) {
  Researcher researcher(services_.gateway, services_.retriever, services_.clock, config_.researcher);
  auto targets = research_targets(tree);
  auto results = researcher.research_all(tree, targets, *this);
  // Recording in leaf order keeps entry ids independent of thread timing.
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& r = results[i];
    if (r.candidates.empty()) continue;
    auto token = GateToken::issue(r.state);
    auto ids = memory_.record(targets[i]->node_id, r.candidates, token);
    emit(EventKind::memory_recorded, json{{"chapter_id", targets[i]->node_id},
                                          {"entry_ids", ids},
                                          {"accepted", r.state.status == ResearchStatus::accepted},
                                          {"total_entries", memory_.size()}});
  }
  if (memory_.size() == 0) throw ResearchFailed("no chapter produced any knowledge");
}

std::map<std::string, std::string> Run::enrich(ChapterTree& tree) {
  std::map<std::string, std::string> out;
  for (const auto* target : research_targets(tree)) {
    auto* chapter = tree.find(target->node_id);
    if (memory_.chapter_entries(chapter->node_id).empty()) continue;
    try {
      auto answer = enrich_chapter(*services_.gateway, tree, *chapter, memory_, *this, config_.enrichment);
      out[chapter->node_id] = answer.answer;
    } catch (const Error& e) {
      emit(EventKind::error, json{{"chapter_id", chapter->node_id},
                                  {"code", to_string(e.code())},
                                  {"message", e.what()}});
      warn("enrichment failed; the chapter is written from its raw knowledge",
           json{{"chapter_id", chapter->node_id}});
    }
  }
  return out;
}

Report Run::synthesize(const ChapterTree& tree, const std::string& query,
                       const std::map<std::string, std::string>& enrichments, Timestamp started_at) {
  Synthesizer synthesizer(services_.gateway, services_.clock, config_.synthesizer);
  return synthesizer.write_report(tree, memory_, query, enrichments, *this, started_at);
}

RunArtifacts Run::write_outputs(const ChapterTree& tree, const Report& report) {
  RunArtifacts a;
  a.dir = config_.output_dir / id_;
  a.report = a.dir / "report.md";
  a.sidecar = a.dir / "sidecar.ndjson";
  a.memory = a.dir / "memory.ndjson";
  a.outline = a.dir / "outline.json";
  a.events = a.dir / "events.ndjson";
  std::filesystem::create_directories(a.dir);
  write_file_atomic(a.report, report.markdown);
  write_file_atomic(a.sidecar, sidecar_ndjson(report));
  write_file_atomic(a.memory, memory_.dump_ndjson());
  write_file_atomic(a.outline, tree.to_json().dump(2) + "\n");
  if (auto bad = memory_.audit_dump(a.memory); !bad.empty()) {
    throw PreconditionError("memory dump does not match recorded hashes for entries " + text::join(bad, ", "));
  }
  return a;
}

void Run::execute() {
  auto started_at = services_.clock->now_seconds();
  try {
    transition(Stage::clarifying, "classify intent");
    auto intent = clarify();
    transition(Stage::outlining, "preliminary search and outline");
    auto tree = outline(intent);
    transition(Stage::researching, "research chapters");
    research(tree);
    transition(Stage::synthesizing, "enrich and write");
    auto enrichments = enrich(tree);
    auto report = synthesize(tree, intent.resolved_query, enrichments, started_at);
    if (auto problems = citation_problems(report); !problems.empty()) {
      throw CitationUnbound("report citations are inconsistent: " + text::join(problems, "; "));
    }
    auto artifacts = write_outputs(tree, report);
    {
      std::lock_guard lock(mutex_);
      report_ = report;
    }
    emit(EventKind::report_ready, json{{"artifacts", artifacts.to_json()},
                                       {"references", report.references.size()},
                                       {"claims", report.claim_source_pairs.size()},
                                       {"length_ktokens", report.profile.length_ktokens}});
    transition(Stage::done, "report written");
  } catch (const std::exception& e) {
    spdlog::warn("run {} failed: {}", id_, e.what());
    emit(EventKind::error, json{{"code", code_of(e)}, {"message", e.what()}});
    transition(Stage::failed, "stopped on " + code_of(e));
  }
  auto dir = config_.output_dir / id_;
  try {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "events.ndjson", log_.to_ndjson());
  } catch (const std::exception& e) {
    spdlog::warn("run {}: could not write the event log: {}", id_, e.what());
  }
  log_.close();
}

RunManager::RunManager(PipelineServices services, PipelineConfig config)
    : services_(std::move(services)), config_(std::move(config)) {
  if (!services_.gateway || !services_.retriever) throw ConfigError("run manager needs a gateway and a retriever");
  if (!services_.clock) services_.clock = default_clock();
}

RunManager::~RunManager() {
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

std::string RunManager::start(RunRequest request) {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "run-%04zu", ++counter_);
  std::string id = buf;
  auto run = std::make_shared<Run>(id, std::move(request), services_, config_);
  runs_[id] = run;
  threads_.emplace_back([run] { run->execute(); });
  return id;
}

std::shared_ptr<Run> RunManager::get(const std::string& run_id) const {
  std::lock_guard lock(mutex_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) throw UnknownRun("no run with id " + run_id);
  return it->second;
}

std::vector<std::string> RunManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, run] : runs_) out.push_back(id);
  return out;
}

PipelineState RunManager::wait(const std::string& run_id) const {
  auto run = get(run_id);
  std::uint64_t seen = 0;
  while (!run->log().closed()) {
    auto batch = run->log().wait_since(seen, std::chrono::milliseconds(200));
    if (!batch.empty()) seen = batch.back().seq;
  }
  return run->state();
}

}  // namespace deepreport
