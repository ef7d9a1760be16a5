#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "deepreport/events.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/memory.hpp"
#include "deepreport/planner.hpp"
#include "deepreport/researcher.hpp"
#include "deepreport/retrieval.hpp"
#include "deepreport/synthesizer.hpp"

namespace deepreport {

enum class RunMode { interactive, automatic };

std::string_view to_string(RunMode mode);
/// Accepts "interactive" and "auto".
std::optional<RunMode> run_mode_from_name(std::string_view name);

enum class Stage { clarifying, outlining, researching, synthesizing, done, failed };

std::string_view to_string(Stage stage);
std::optional<Stage> stage_from_name(std::string_view name);

/// Per-run knobs a request may override.
struct RunOverrides {
  std::optional<std::string> domain;
  std::optional<int> step_budget;
  std::optional<std::size_t> chapter_concurrency;
  std::optional<std::size_t> token_budget;
  std::optional<double> clarification_timeout_seconds;

  json to_json() const;
  static RunOverrides from_json(const json& value);
};

struct RunRequest {
  std::string query;
  RunMode mode = RunMode::automatic;
  /// Informational for the service; the retriever decides the real mode.
  std::optional<SnapshotMode> snapshot_mode;
  RunOverrides overrides;

  json to_json() const;
  /// Throws ConfigError for an empty query or unknown enum names.
  static RunRequest from_json(const json& value);
};

struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path report;
  std::filesystem::path sidecar;
  std::filesystem::path memory;
  std::filesystem::path outline;
  std::filesystem::path events;

  json to_json() const;
};

struct PipelineState {
  std::string run_id;
  Stage stage = Stage::clarifying;
  std::uint64_t step_counter = 0;
  std::string last_action;
  std::string last_observation;
  std::string started_at;
  std::optional<std::string> finished_at;
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
  std::optional<RunArtifacts> artifacts;

  json to_json() const;
};

/// Folds one event into the state. The live run and replay_state share it,
/// so a state rebuilt from the log equals the live one.
void apply_event(PipelineState& state, const RunEvent& event);
PipelineState replay_state(const std::string& run_id, const std::vector<RunEvent>& events);

/// One-shot meeting point between the planner, which waits for answers,
/// and whoever delivers them. Exactly one of delivery and timeout wins.
class ClarificationRendezvous {
 public:
  enum class Outcome { answered, timed_out };

  /// Marks the rendezvous open for delivery.
  void open();
  bool is_open() const;
  bool settled() const;

  /// True when this delivery won; false when answers were already taken or
  /// the wait had timed out. Throws WrongStage before open().
  bool deliver(std::vector<std::string> answers);

  /// Blocks until delivery or timeout.
  Outcome wait(std::chrono::milliseconds timeout);
  std::vector<std::string> answers() const;

 private:
  enum class Phase { idle, waiting, answered, timed_out };
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  Phase phase_ = Phase::idle;
  std::vector<std::string> answers_;
};

struct PipelineConfig {
  std::string domain = "business analysis";
  std::filesystem::path output_dir = "runs";
  std::chrono::milliseconds clarification_timeout{std::chrono::minutes(10)};
  PlannerConfig planner;
  ResearcherConfig researcher;
  EnrichmentConfig enrichment;
  SynthesizerConfig synthesizer;
  int entry_id_width = 4;
};

/// What a run is wired to. Everything that dials sits behind these.
struct PipelineServices {
  std::shared_ptr<Gateway> gateway;
  std::shared_ptr<Retriever> retriever;
  std::shared_ptr<Clock> clock;
};

/// One end-to-end execution: planner, researcher, memory enrichment,
/// synthesizer. Writes report.md, sidecar.ndjson, memory.ndjson,
/// outline.json and events.ndjson under output_dir/run_id.
class Run final : public EventSink {
 public:
  Run(std::string run_id, RunRequest request, PipelineServices services, PipelineConfig config);

  /// Runs to done or failed. Never throws for stage failures; those end in
  /// Stage::failed with an error event.
  void execute();

  const std::string& id() const noexcept { return id_; }
  const RunRequest& request() const noexcept { return request_; }
  PipelineState state() const;
  EventLog& log() noexcept { return log_; }
  const EventLog& log() const noexcept { return log_; }

  /// Hands answers to a waiting planner. True when accepted, false for a
  /// no-op duplicate. Throws WrongStage when the run is not awaiting
  /// clarification and AnswerCountMismatch for the wrong number of answers.
  bool answer_clarification(std::vector<std::string> answers);

  std::optional<Report> report() const;
  const MemoryStore& memory() const noexcept { return memory_; }

  void emit(EventKind kind, json payload) override;

 private:
  void transition(Stage stage, const std::string& action);
  ClarifiedIntent clarify();
  ChapterTree outline(const ClarifiedIntent& intent);
  void research(ChapterTree& tree);
  std::map<std::string, std::string> enrich(ChapterTree& tree);
  Report synthesize(const ChapterTree& tree, const std::string& query,
                    const std::map<std::string, std::string>& enrichments, Timestamp started_at);
  RunArtifacts write_outputs(const ChapterTree& tree, const Report& report);

  std::string id_;
  RunRequest request_;
  PipelineServices services_;
  PipelineConfig config_;
  EventLog log_;
  MemoryStore memory_;
  ClarificationRendezvous rendezvous_;

  mutable std::mutex mutex_;
  PipelineState state_;
  bool outline_ready_ = false;
  std::size_t pending_questions_ = 0;
  std::optional<Report> report_;
};

/// Applies request overrides on top of a base configuration.
PipelineConfig apply_overrides(PipelineConfig base, const RunOverrides& overrides);

/// Holds concurrent runs, each on its own thread.
class RunManager {
 public:
  RunManager(PipelineServices services, PipelineConfig config);
  ~RunManager();

  RunManager(const RunManager&) = delete;
  RunManager& operator=(const RunManager&) = delete;

  /// Starts a run in the background and returns its id ("run-0001", …).
  std::string start(RunRequest request);
  /// Throws UnknownRun.
  std::shared_ptr<Run> get(const std::string& run_id) const;
  std::vector<std::string> ids() const;
  /// Blocks until the run reaches done or failed.
  PipelineState wait(const std::string& run_id) const;
  const PipelineServices& services() const noexcept { return services_; }
  const PipelineConfig& config() const noexcept { return config_; }

 private:
  PipelineServices services_;
  PipelineConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
};

}  // namespace deepreport
