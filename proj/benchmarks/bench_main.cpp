#include <benchmark/benchmark.h>

#include <random>

#include "deepreport/evaluator.hpp"
#include "deepreport/memory.hpp"
#include "deepreport/snapshot.hpp"
#include "deepreport/url.hpp"
#include "harness.hpp"
#include "oracles.hpp"

using namespace deepreport;
using namespace deepreport::testkit;

static void BM_EvaluateRandomSidecar(benchmark::State& state) {
  std::mt19937_64 rng(7);
  auto s = random_sidecar(rng);
  TableJudge judge(s);
  MapLookup lookup(s.views);
  EvalConfig config;
  for (auto _ : state) {
    auto r = evaluate(EvalInput{s.markdown, s.pairs, std::nullopt, std::nullopt}, s.task, judge, lookup, config,
                      EvalMode::full);
    benchmark::DoNotOptimize(r);
  }
  state.counters["pairs"] = static_cast<double>(s.pairs.size());
}
BENCHMARK(BM_EvaluateRandomSidecar);

static void BM_Consistency(benchmark::State& state) {
  std::mt19937_64 rng(11);
  auto s = random_sidecar(rng);
  TableJudge judge(s);
  EvalConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(consistency(s.pairs, judge, config));
}
BENCHMARK(BM_Consistency);

static void BM_Canonicalize(benchmark::State& state) {
  const std::string url = "HTTPS://Www.Example.COM:443/a/./b/../c/?utm_source=x&b=2&a=1#frag";
  for (auto _ : state) benchmark::DoNotOptimize(canonicalize(url));
}
BENCHMARK(BM_Canonicalize);

static void BM_MemoryView(benchmark::State& state) {
  MemoryStore m;
  ChapterResearchState st;
  st.chapter_id = "1";
  st.status = ResearchStatus::budget_exhausted;
  st.step_count = 1;
  auto token = GateToken::issue(st);
  std::vector<KnowledgeCandidate> cands;
  for (int i = 0; i < state.range(0); ++i) {
    KnowledgeCandidate k;
    k.source_url = "https://s" + std::to_string(i % 40) + ".example/p" + std::to_string(i);
    k.source_title = "T";
    k.insight = "Observation number " + std::to_string(i) + " about module prices and shipments.";
    k.snippet_ids = {"0"};
    cands.push_back(std::move(k));
  }
  m.record("1", cands, token);
  for (auto _ : state) benchmark::DoNotOptimize(m.view_for_writing("1", 12000));
}
BENCHMARK(BM_MemoryView)->Arg(100)->Arg(500);

static void BM_SnapshotVerify(benchmark::State& state) {
  SnapshotStore store(replay_dir() / "snapshot");
  for (auto _ : state) store.verify();
  state.counters["documents"] = static_cast<double>(store.stats().documents);
}
BENCHMARK(BM_SnapshotVerify)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
