#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <thread>

#include "deepreport/error.hpp"
#include "deepreport/evaluator.hpp"
#include "deepreport/pipeline.hpp"
#include "harness.hpp"

using namespace deepreport;
using namespace deepreport::testkit;
using namespace std::chrono_literals;

namespace {

const char* kShortQuery = "Battery recycling economics in Europe";

std::optional<RunEvent> wait_for(const EventLog& log, EventKind kind, std::chrono::milliseconds limit = 10s) {
  auto deadline = std::chrono::steady_clock::now() + limit;
  std::uint64_t seen = 0;
  while (std::chrono::steady_clock::now() < deadline) {
    for (const auto& e : log.wait_since(seen, 100ms)) {
      seen = e.seq;
      if (e.kind == kind) return e;
    }
    if (log.closed() && log.last_seq() == seen) break;
  }
  return std::nullopt;
}

bool has_event(const deepreport::Run& run, EventKind kind) {
  for (const auto& e : run.log().since(0)) {
    if (e.kind == kind) return true;
  }
  return false;
}

}  // namespace

TEST(Rendezvous, ExactlyOneOfDeliveryAndTimeoutWins) {
  for (int trial = 0; trial < 200; ++trial) {
    ClarificationRendezvous r;
    EXPECT_THROW(r.deliver({"a"}), WrongStage);
    r.open();
    std::atomic<int> delivered{0};
    std::vector<std::thread> senders;
    for (int i = 0; i < 4; ++i) {
      senders.emplace_back([&, i] {
        std::this_thread::sleep_for(std::chrono::microseconds((trial * 7 + i * 13) % 400));
        if (r.deliver({"answer " + std::to_string(i)})) ++delivered;
      });
    }
    auto outcome = r.wait(std::chrono::milliseconds(trial % 3));
    for (auto& t : senders) t.join();
    if (outcome == ClarificationRendezvous::Outcome::answered) {
      EXPECT_EQ(delivered.load(), 1);
      EXPECT_EQ(r.answers().size(), 1u);
    } else {
      EXPECT_EQ(delivered.load(), 0);
    }
    EXPECT_TRUE(r.settled());
  }
}

TEST(Events, SeqIsGapFreeAndReplayable) {
  EventLog log("r", std::make_shared<FixedClock>(fixture_time()));
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 100; ++i) log.emit(EventKind::warning, json{{"i", i}});
    });
  }
  for (auto& t : ts) t.join();
  auto all = log.since(0);
  ASSERT_EQ(all.size(), 400u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].seq, i + 1);
  EXPECT_EQ(log.since(390).size(), 10u);
  for (const auto& e : all) EXPECT_EQ(RunEvent::from_json(e.to_json()).to_json(), e.to_json());
}

TEST(Pipeline, ReplayRunWritesEveryArtifact) {
  TempDir out;
  auto h = replay_harness(replay_dir());
  auto task = load_dataset(dataset_path()).front();
  deepreport::Run run(task.task_id, RunRequest{task.query, RunMode::automatic, {}, {}}, h.services, fixture_config(out.path()));
  run.execute();
  auto st = run.state();
  ASSERT_EQ(st.stage, Stage::done) << st.error_message.value_or("");
  ASSERT_TRUE(st.artifacts);
  for (const auto& p : {st.artifacts->report, st.artifacts->sidecar, st.artifacts->memory, st.artifacts->outline,
                        st.artifacts->events}) {
    EXPECT_TRUE(std::filesystem::exists(p)) << p;
  }
  auto tree = ChapterTree::from_json(json::parse(read_file(st.artifacts->outline)));
  auto report = run.report();
  ASSERT_TRUE(report);
  std::set<std::string> written;
  for (const auto& s : report->segments) written.insert(s.chapter_id);
  for (const auto* leaf : tree.leaves()) EXPECT_TRUE(written.count(leaf->node_id)) << leaf->node_id;
  EXPECT_TRUE(run.memory().audit_dump(st.artifacts->memory).empty());
  EXPECT_EQ(h.transport->dials(), 0u);

  // The log alone rebuilds the final state.
  EXPECT_EQ(replay_state(run.id(), run.log().since(0)).to_json(), st.to_json());
  std::vector<RunEvent> from_file;
  for (const auto& v : parse_ndjson(read_file(st.artifacts->events))) from_file.push_back(RunEvent::from_json(v));
  EXPECT_EQ(replay_state(run.id(), from_file).to_json(), st.to_json());
}

TEST(Pipeline, RejectedQueryFails) {
  TempDir out;
  auto h = offline_harness();
  deepreport::Run run("r", RunRequest{"solve 2+2", RunMode::automatic, {}, {}}, h.services, fixture_config(out.path()));
  run.execute();
  auto st = run.state();
  EXPECT_EQ(st.stage, Stage::failed);
  EXPECT_EQ(st.error_code, "RejectedQuery");
  EXPECT_TRUE(has_event(run, EventKind::error));
}

TEST(Pipeline, InteractiveTimeoutFallsBackToExpansion) {
  TempDir out;
  auto h = offline_harness();
  auto config = fixture_config(out.path());
  config.clarification_timeout = 50ms;
  deepreport::Run run("r", RunRequest{kShortQuery, RunMode::interactive, {}, {}}, h.services, config);
  run.execute();
  EXPECT_EQ(run.state().stage, Stage::done);
  EXPECT_TRUE(has_event(run, EventKind::clarification_needed));
  EXPECT_TRUE(has_event(run, EventKind::warning));
  auto resolved = wait_for(run.log(), EventKind::intent_resolved, 1s);
  ASSERT_TRUE(resolved);
  EXPECT_TRUE(resolved->payload.at("auto_expanded").get<bool>());
  EXPECT_THROW(run.answer_clarification({"a", "b", "c"}), WrongStage);
}

TEST(Pipeline, AnswersUnblockPlannerOnceAndDuplicatesAreNoOps) {
  TempDir out;
  auto h = offline_harness();
  auto config = fixture_config(out.path());
  config.clarification_timeout = 30s;
  deepreport::Run run("r", RunRequest{kShortQuery, RunMode::interactive, {}, {}}, h.services, config);
  EXPECT_THROW(run.answer_clarification({"x"}), WrongStage);
  std::thread worker([&] { run.execute(); });
  auto needed = wait_for(run.log(), EventKind::clarification_needed);
  ASSERT_TRUE(needed);
  auto n = needed->payload.at("questions").size();
  EXPECT_THROW(run.answer_clarification(std::vector<std::string>(n + 1, "x")), AnswerCountMismatch);
  std::vector<std::string> answers(n, "the most recent quarter");
  EXPECT_TRUE(run.answer_clarification(answers));
  bool second = true;
  try {
    second = run.answer_clarification(answers);
  } catch (const WrongStage&) {
    second = false;  // outline already out
  }
  EXPECT_FALSE(second);
  worker.join();
  EXPECT_EQ(run.state().stage, Stage::done);
  auto resolved = wait_for(run.log(), EventKind::intent_resolved, 1s);
  ASSERT_TRUE(resolved);
  EXPECT_FALSE(resolved->payload.at("auto_expanded").get<bool>());
  EXPECT_THROW(run.answer_clarification(answers), WrongStage);
}

TEST(Pipeline, StagesFollowTheListedOrder) {
  TempDir out;
  auto h = offline_harness();
  deepreport::Run run("r", RunRequest{load_dataset(dataset_path())[1].query, RunMode::automatic, {}, {}}, h.services,
          fixture_config(out.path()));
  run.execute();
  std::vector<std::string> stages;
  for (const auto& e : run.log().since(0)) {
    if (e.kind == EventKind::stage_changed) stages.push_back(e.payload.at("stage").get<std::string>());
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"clarifying", "outlining", "researching", "synthesizing", "done"}));
}

TEST(Researcher, FailingChapterDegradesInsteadOfFailingTheBatch) {
  auto h = offline_harness();
  // Searches for the second chapter find nothing, so no document is ever fetched.
  auto model = std::make_shared<ScriptedModel>([](const ChatCall& c) -> std::optional<std::string> {
    if (c.purpose == "search_query_expanding" && c.user_text.find("Zzyzx") != std::string::npos) {
      return std::string("<sq>qwxv zzkj</sq>");
    }
    return std::nullopt;
  });
  h.services.gateway->set_backend(model);
  ChapterTree tree;
  tree.title = "Solar photovoltaic module prices 2024";
  tree.roots = {ChapterNode{"", "Solar Module Prices", "Solar module prices in 2024.", "Compare prices.",
                            NodeRole::section, {}, {}},
                ChapterNode{"", "Zzyzx Outlook", "Nothing indexed.", "None.", NodeRole::section, {}, {}},
                ChapterNode{"", "Conclusions", "Close.", "Summarize.", NodeRole::section, {}, {}}};
  number_tree(tree);
  Researcher researcher(h.services.gateway, h.services.retriever, h.services.clock);
  EventLog log("r");
  auto targets = research_targets(tree);
  ASSERT_EQ(targets.size(), 2u);
  auto results = researcher.research_all(tree, targets, log);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_FALSE(results[0].candidates.empty());
  EXPECT_TRUE(results[1].candidates.empty());
  bool error = false;
  bool warning = false;
  for (const auto& e : log.since(0)) {
    error = error || e.kind == EventKind::error;
    warning = warning || e.kind == EventKind::warning;
  }
  EXPECT_TRUE(error);
  EXPECT_TRUE(warning);
}

TEST(RunManager, ConcurrentRunsGetSequentialIds) {
  TempDir out;
  auto h = offline_harness();
  auto manager = std::make_shared<RunManager>(h.services, fixture_config(out.path()));
  auto tasks = load_dataset(dataset_path());
  auto a = manager->start(RunRequest{tasks[0].query, RunMode::automatic, {}, {}});
  auto b = manager->start(RunRequest{tasks[1].query, RunMode::automatic, {}, {}});
  EXPECT_EQ(a, "run-0001");
  EXPECT_EQ(b, "run-0002");
  EXPECT_EQ(manager->wait(a).stage, Stage::done);
  EXPECT_EQ(manager->wait(b).stage, Stage::done);
  EXPECT_THROW(manager->get("run-9999"), UnknownRun);
}

TEST(Overrides, ApplyOnTopOfBase) {
  RunOverrides o;
  o.step_budget = 5;
  o.token_budget = 8000;
  o.clarification_timeout_seconds = 1.5;
  auto c = apply_overrides(PipelineConfig{}, o);
  EXPECT_EQ(c.researcher.step_budget, 5);
  EXPECT_EQ(c.synthesizer.token_budget, 8000u);
  EXPECT_EQ(c.clarification_timeout, 1500ms);
  EXPECT_THROW(RunRequest::from_json(json{{"query", ""}}), ConfigError);
  EXPECT_THROW(RunRequest::from_json(json{{"query", "x"}, {"mode", "sometimes"}}), ConfigError);
}
