#include <gtest/gtest.h>

#include <thread>

#include "deepreport/error.hpp"
#include "deepreport/memory.hpp"
#include "deepreport/synthesizer.hpp"
#include "harness.hpp"

using namespace deepreport;
using namespace deepreport::testkit;

namespace {

KnowledgeCandidate cand(std::string url, std::string insight, std::optional<std::string> date = std::nullopt) {
  KnowledgeCandidate k;
  k.source_url = std::move(url);
  k.insight = std::move(insight);
  k.snippet_ids = {"0"};
  k.source_title = "T";
  if (date) k.publish_time = *parse_timestamp(*date);
  return k;
}

GateToken token(const std::string& chapter) {
  ChapterResearchState st;
  st.chapter_id = chapter;
  st.status = ResearchStatus::budget_exhausted;
  st.step_count = 3;
  return GateToken::issue(st);
}

}  // namespace

TEST(Memory, EstimateIsCharsOverFourRoundedUp) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("abcd"), 1u);
  EXPECT_EQ(estimate_tokens("abcde"), 2u);
}

TEST(Memory, GateTokenRefusesUnfinishedResearch) {
  ChapterResearchState st;
  st.chapter_id = "1";
  EXPECT_THROW(GateToken::issue(st), PreconditionError);
  MemoryStore m;
  EXPECT_THROW(m.record("2", {cand("https://a.com/", "x")}, token("1")), PreconditionError);
}

TEST(Memory, DedupLinksDuplicatesAndIdsAreGapFree) {
  MemoryStore m(std::make_shared<FixedClock>(fixture_time()));
  auto a = m.record("1", {cand("https://a.com/", "Prices fell."), cand("https://b.com/", "Output rose.")}, token("1"));
  auto b = m.record("2", {cand("https://a.com/", "  prices   FELL. ")}, token("2"));
  EXPECT_EQ(a, (std::vector<std::string>{"0001", "0002"}));
  EXPECT_EQ(b, (std::vector<std::string>{"0001"}));
  EXPECT_EQ(m.size(), 2u);
  EXPECT_TRUE(m.chapter_has("2", "0001"));
  EXPECT_TRUE(m.audit().empty());
}

TEST(Memory, ConcurrentRecordsStayGapFree) {
  MemoryStore m;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        m.record(std::to_string(t), {cand("https://s" + std::to_string(t) + ".com/", "fact " + std::to_string(i))},
                 token(std::to_string(t)));
      }
    });
  }
  for (auto& th : threads) th.join();
  auto entries = m.entries();
  ASSERT_EQ(entries.size(), 400u);
  for (std::size_t i = 0; i < entries.size(); ++i) EXPECT_EQ(std::stoul(entries[i].entry_id), i + 1);
}

TEST(Memory, ViewIsNewestFirstAndWithinBudget) {
  MemoryStore m;
  m.record("1",
           {cand("https://a.com/", "Old fact.", "2023-01-01"), cand("https://b.com/", "New fact.", "2025-01-01"),
            cand("https://c.com/", "Undated fact.")},
           token("1"));
  auto v = m.view_for_writing("1", 100000);
  ASSERT_EQ(v.entries.size(), 3u);
  EXPECT_EQ(v.entries[0].insight, "New fact.");
  EXPECT_EQ(v.entries[2].insight, "Undated fact.");
  auto small = m.view_for_writing("1", estimate_tokens(render_entry(v.entries[0])) + 1);
  EXPECT_EQ(small.entries.size(), 1u);
  EXPECT_EQ(small.omitted, 2u);
  EXPECT_LE(small.estimated_tokens, estimate_tokens(render_entry(v.entries[0])) + 1);
  auto only = m.view_for_writing("1", 100000, std::set<std::string>{v.entries[1].entry_id});
  EXPECT_EQ(only.entries.size(), 1u);
}

TEST(Memory, AuditDumpDetectsTampering) {
  TempDir tmp;
  MemoryStore m;
  m.record("1", {cand("https://a.com/", "Fact one."), cand("https://b.com/", "Fact two.")}, token("1"));
  auto path = tmp.path() / "memory.ndjson";
  write_file_atomic(path, m.dump_ndjson());
  EXPECT_TRUE(m.audit_dump(path).empty());
  auto text = read_file(path);
  text.replace(text.find("Fact two"), 8, "Fact 2!!");
  write_file_atomic(path, text);
  EXPECT_EQ(m.audit_dump(path), std::vector<std::string>{"0002"});
}

TEST(Synth, SentenceSplitKeepsMarkersAndAbbreviations) {
  auto s = split_sentences("Dr. Lee said prices fell 3.5 percent.[^1] U.S. output rose! Was it enough?");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], "Dr. Lee said prices fell 3.5 percent.[^1]");
  EXPECT_EQ(find_markers("a[^2] b[^10] c[^2]"), (std::vector<int>{2, 10, 2}));
}

TEST(Synth, UncitedSentencesAttachToNextCitedInParagraph) {
  ReportSegment seg;
  seg.markdown_text = "Context sentence. Cited claim.[^1]\n\nLonely sentence.";
  seg.local_sources = {{1, "https://a.com/"}};
  seg.local_citations = {{1, "0001"}};
  auto pairs = match_references(seg);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].source_url, "https://a.com/");
  EXPECT_EQ(pairs[1].entry_id, "0001");
  EXPECT_FALSE(pairs[2].source_url);
}

TEST(Synth, AssemblyRenumbersDenselyByFirstUse) {
  ChapterTree tree;
  tree.title = "R";
  tree.roots = {ChapterNode{"", "A", "s", "t", NodeRole::section, {}, {}},
                ChapterNode{"", "B", "s", "t", NodeRole::section, {}, {}}};
  number_tree(tree);
  ReportSegment a;
  a.chapter_id = "1";
  a.markdown_text = "One.[^2] Two.[^1]";
  a.local_sources = {{1, "https://x.com/"}, {2, "https://y.com/"}};
  a.local_citations = {{1, "0001"}, {2, "0002"}};
  a.local_titles = {{1, "X"}, {2, "Y"}};
  ReportSegment b;
  b.chapter_id = "2";
  b.markdown_text = "Three.[^1]";
  b.local_sources = {{1, "https://y.com/"}};
  b.local_citations = {{1, "0002"}};
  b.local_titles = {{1, "Y"}};
  auto r = assemble_report(tree, {a, b}, estimate_tokens, 1.0);
  ASSERT_EQ(r.references.size(), 2u);
  EXPECT_EQ(r.references[0].source_url, "https://y.com/");
  EXPECT_EQ(r.references[0].number, 1);
  EXPECT_NE(r.markdown.find("Three.[^1]"), std::string::npos);
  EXPECT_TRUE(citation_problems(r).empty());
  TempDir tmp;
  write_file_atomic(tmp.path() / "s.ndjson", sidecar_ndjson(r));
  auto back = read_sidecar(tmp.path() / "s.ndjson");
  ASSERT_EQ(back.size(), r.claim_source_pairs.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].to_json(), r.claim_source_pairs[i].to_json());
}

TEST(Synth, ToolBlocksWithoutPartsAreDropped) {
  std::string md = "Text.\n<chart><title>t</title></chart>\nMore.";
  auto removed = sanitize_tool_blocks(md);
  EXPECT_EQ(removed, 1u);
  EXPECT_EQ(md.find("<chart>"), std::string::npos);
}

TEST(Synth, GroupsBySourceInFirstAppearanceOrder) {
  std::vector<KnowledgeEntry> es(3);
  es[0].entry_id = "0001";
  es[0].source_url = "https://b.com/";
  es[0].insight = "b1";
  es[1].entry_id = "0002";
  es[1].source_url = "https://a.com/";
  es[1].insight = "a1";
  es[2].entry_id = "0003";
  es[2].source_url = "https://b.com/";
  es[2].insight = "b2";
  auto g = group_by_source(es);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].source_url, "https://b.com/");
  EXPECT_EQ(g[0].merged_text, "b1 b2");
  EXPECT_EQ(g[0].entry_ids, (std::vector<std::string>{"0001", "0003"}));
}
