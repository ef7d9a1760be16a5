// deepreport: run the pipeline, score reports, manage snapshot corpora and
// serve the HTTP API.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "deepreport/compare.hpp"
#include "deepreport/error.hpp"
#include "deepreport/evaluator.hpp"
#include "deepreport/gateway.hpp"
#include "deepreport/io.hpp"
#include "deepreport/pipeline.hpp"
#include "deepreport/retrieval.hpp"
#include "deepreport/service.hpp"
#include "deepreport/snapshot.hpp"

using namespace deepreport;

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Wiring {
  std::string llm_mode = env_or("DEEPREPORT_LLM_MODE", "live");
  std::string transcripts = env_or("DEEPREPORT_TRANSCRIPTS");
  std::string snapshot_mode;
  std::string snapshot_dir;

  void add_to(CLI::App& app) {
    app.add_option("--llm-mode", llm_mode, "live, record or replay")->check(CLI::IsMember({"live", "record", "replay"}));
    app.add_option("--transcripts", transcripts, "Model transcript file (record and replay)");
    app.add_option("--snapshot-mode", snapshot_mode, "live, record or replay; default SNAPSHOT_MODE")
        ->check(CLI::IsMember({"live", "record", "replay"}));
    app.add_option("--snapshot-dir", snapshot_dir, "Snapshot corpus; default SNAPSHOT_DIR");
  }

  std::shared_ptr<Gateway> gateway(const std::shared_ptr<Transport>& transport,
                                   const std::shared_ptr<Clock>& clock) const {
    GatewayConfig config;
    config.mode = *llm_mode_from_name(llm_mode);
    std::shared_ptr<TranscriptStore> store;
    if (config.mode != LlmMode::live) {
      if (transcripts.empty()) throw ConfigError("--transcripts is required for record and replay");
      store = std::make_shared<TranscriptStore>(transcripts);
    } else if (!transcripts.empty()) {
      store = std::make_shared<TranscriptStore>(transcripts);
    }
    auto gw = std::make_shared<Gateway>(config, store, clock);
    for (auto role : {ModelRole::planner, ModelRole::worker, ModelRole::judge}) {
      auto endpoint = endpoint_from_env(role);
      if (!endpoint) {
        if (config.mode == LlmMode::replay) endpoint = EndpointConfig{"http://replay.invalid/v1", "", "replay"};
        else throw ConfigError("no model endpoint for role " + std::string(to_string(role)) +
                               "; set DEEPREPORT_LLM_BASE_URL, _API_KEY and _MODEL");
      }
      gw->set_backend(role, std::make_shared<OpenAiChatBackend>(*endpoint, transport));
    }
    return gw;
  }

  PipelineServices services() const {
    auto clock = default_clock();
    auto transport = std::make_shared<HttplibTransport>();
    PipelineServices s;
    s.clock = clock;
    s.gateway = gateway(transport, clock);
    std::optional<SnapshotMode> mode;
    if (!snapshot_mode.empty()) mode = snapshot_mode_from_name(snapshot_mode);
    std::optional<std::string> dir;
    if (!snapshot_dir.empty()) dir = snapshot_dir;
    s.retriever = retriever_from_env(transport, mode, dir, clock);
    return s;
  }
};

int run_once(const Wiring& wiring, const std::string& query, const std::string& mode, const std::string& output,
             const std::string& domain, std::optional<int> step_budget) {
  RunRequest request;
  request.query = query;
  request.mode = *run_mode_from_name(mode);
  PipelineConfig config;
  config.output_dir = output;
  if (!domain.empty()) config.domain = domain;
  if (step_budget) config.researcher.step_budget = *step_budget;
  auto manager = std::make_shared<RunManager>(wiring.services(), config);
  auto id = manager->start(request);
  auto run = manager->get(id);

  // Interactive runs read answers from stdin, one per question.
  std::uint64_t seen = 0;
  while (true) {
    auto events = run->log().wait_since(seen, std::chrono::milliseconds(500));
    for (const auto& e : events) {
      seen = e.seq;
      std::cerr << to_string(e.kind) << " " << e.payload.dump() << "\n";
      if (e.kind == EventKind::clarification_needed) {
        std::vector<std::string> answers;
        for (const auto& q : e.payload.value("questions", json::array())) {
          std::cout << q.value("text", "") << "\n> " << std::flush;
          std::string line;
          if (!std::getline(std::cin, line)) break;
          answers.push_back(line);
        }
        try {
          run->answer_clarification(answers);
        } catch (const Error& err) {
          spdlog::warn("answer not taken: {}", err.what());
        }
      }
    }
    if (run->log().closed() && run->log().last_seq() == seen) break;
  }
  auto state = manager->wait(id);
  std::cout << state.to_json().dump(2) << "\n";
  return state.stage == Stage::done ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep research reports with evaluation and snapshot replay"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "spdlog level");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline on one query");
  Wiring run_wiring;
  std::string query;
  std::string mode = "auto";
  std::string output = "runs";
  std::string domain;
  std::optional<int> step_budget;
  run_cmd->add_option("query", query, "Research request")->required();
  run_cmd->add_option("--mode", mode, "interactive or auto")->check(CLI::IsMember({"interactive", "auto"}));
  run_cmd->add_option("--output", output, "Directory for run artifacts");
  run_cmd->add_option("--domain", domain, "Report domain");
  run_cmd->add_option("--step-budget", step_budget, "Reflection rounds per chapter");
  run_wiring.add_to(*run_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score reports against a dataset");
  std::string dataset;
  std::vector<std::string> specs;
  std::string eval_mode = "full";
  std::string judge_name = "lexical";
  std::string eval_out;
  EvalConfig eval_config;
  Wiring eval_wiring;
  eval_cmd->add_option("--dataset", dataset, "Dataset NDJSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--run", specs, "system:task_id:report.md[:sidecar.ndjson], repeatable")->required();
  eval_cmd->add_option("--mode", eval_mode, "full or restricted")->check(CLI::IsMember({"full", "restricted"}));
  eval_cmd->add_option("--beta", eval_config.beta, "Depth file-type weight");
  eval_cmd->add_option("--epsilon", eval_config.epsilon, "Consistency smoothing");
  eval_cmd->add_option("--log-base", eval_config.log_base, "Breadth logarithm base");
  eval_cmd->add_option("--judge", judge_name, "lexical or llm")->check(CLI::IsMember({"lexical", "llm"}));
  eval_cmd->add_option("--out", eval_out, "Also write the JSON comparison here");
  eval_wiring.add_to(*eval_cmd);

  // snapshot
  auto* snap_cmd = app.add_subcommand("snapshot", "Record, verify or describe a snapshot corpus");
  snap_cmd->require_subcommand(1);
  std::string snap_dir;
  auto* snap_record = snap_cmd->add_subcommand("record", "Run queries live and record every fetch and search");
  std::vector<std::string> record_queries;
  std::string record_output = "runs";
  Wiring record_wiring;
  snap_record->add_option("--dir", snap_dir, "Corpus directory")->required();
  snap_record->add_option("query", record_queries, "Queries to run")->required();
  snap_record->add_option("--output", record_output, "Directory for run artifacts");
  snap_record->add_option("--llm-mode", record_wiring.llm_mode, "live, record or replay");
  snap_record->add_option("--transcripts", record_wiring.transcripts, "Model transcript file");
  auto* snap_verify = snap_cmd->add_subcommand("verify", "Re-hash every stored body against the manifest");
  snap_verify->add_option("--dir,dir", snap_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  auto* snap_stats = snap_cmd->add_subcommand("stats", "URL, domain and date coverage");
  snap_stats->add_option("--dir,dir", snap_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string serve_output = "runs";
  std::string serve_judge = "lexical";
  Wiring serve_wiring;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port; 0 picks one");
  serve_cmd->add_option("--output", serve_output, "Directory for run artifacts");
  serve_cmd->add_option("--judge", serve_judge, "lexical or llm")->check(CLI::IsMember({"lexical", "llm"}));
  serve_wiring.add_to(*serve_cmd);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run_cmd) return run_once(run_wiring, query, mode, output, domain, step_budget);

    if (*eval_cmd) {
      EvalJob job;
      job.dataset = dataset;
      job.mode = *eval_mode_from_name(eval_mode);
      job.config = eval_config;
      for (const auto& s : specs) job.runs.push_back(SystemRun::parse_spec(s));
      std::unique_ptr<EvalJudge> judge;
      std::shared_ptr<Retriever> retriever;
      if (judge_name == "llm") {
        auto transport = std::make_shared<HttplibTransport>();
        judge = std::make_unique<LlmJudge>(eval_wiring.gateway(transport, default_clock()));
      } else {
        judge = std::make_unique<LexicalJudge>(eval_config.similarity_threshold);
      }
      std::unique_ptr<SourceLookup> lookup;
      if (job.mode == EvalMode::full) {
        lookup = std::make_unique<RetrieverLookup>(eval_wiring.services().retriever);
      } else {
        // Restricted scoring never opens a source.
        struct NoSources final : SourceLookup {
          SourceView lookup(const std::string&) override { return {}; }
        };
        lookup = std::make_unique<NoSources>();
      }
      auto comparison = compare_systems(job, *judge, *lookup);
      std::cout << comparison.render();
      if (!eval_out.empty()) write_file_atomic(eval_out, comparison.to_json().dump(2) + "\n");
      return 0;
    }

    if (*snap_cmd) {
      if (*snap_verify) {
        SnapshotStore store(snap_dir);
        try {
          store.verify();
        } catch (const CorruptCorpus& e) {
          std::cerr << "corrupt corpus: " << e.urls().size() << " document(s)\n";
          for (const auto& url : e.urls()) std::cerr << "  " << url << "\n";
          return 2;
        }
        std::cout << "OK " << store.size() << " documents\n";
        return 0;
      }
      if (*snap_stats) {
        auto s = SnapshotStore(snap_dir).stats();
        json out{{"documents", s.documents},
                 {"ok_documents", s.ok_documents},
                 {"searches", s.searches},
                 {"domains", s.domains},
                 {"dated", s.dated},
                 {"earliest", s.earliest ? json(format_date(*s.earliest)) : json()},
                 {"latest", s.latest ? json(format_date(*s.latest)) : json()},
                 {"by_media_kind", s.by_media_kind},
                 {"by_domain", s.by_domain}};
        std::cout << out.dump(2) << "\n";
        return 0;
      }
      if (*snap_record) {
        record_wiring.snapshot_mode = "record";
        record_wiring.snapshot_dir = snap_dir;
        int failures = 0;
        for (const auto& q : record_queries) failures += run_once(record_wiring, q, "auto", record_output, "", {});
        return failures == 0 ? 0 : 1;
      }
    }

    if (*serve_cmd) {
      PipelineConfig config;
      config.output_dir = serve_output;
      auto services = serve_wiring.services();
      auto manager = std::make_shared<RunManager>(services, config);
      auto retriever = services.retriever;
      auto gateway = services.gateway;
      EvalHandler handler = [retriever, gateway, serve_judge](const EvalJob& job) {
        RetrieverLookup lookup(retriever);
        if (serve_judge == "llm") {
          LlmJudge judge(gateway);
          return compare_systems(job, judge, lookup);
        }
        LexicalJudge judge(job.config.similarity_threshold);
        return compare_systems(job, judge, lookup);
      };
      Service service(manager, handler);
      bool bound = port == 0 ? (port = service.bind_any(host)) > 0 : service.bind(host, port);
      if (!bound) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      std::cout << "listening on http://" << host << ":" << port << std::endl;
      return service.serve() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
