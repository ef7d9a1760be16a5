#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "deepreport/compare.hpp"
#include "deepreport/error.hpp"
#include "deepreport/evaluator.hpp"
#include "harness.hpp"
#include "oracles.hpp"

using namespace deepreport;
using namespace deepreport::testkit;

namespace {

ClaimSourcePair claim(std::size_t pos, std::string statement, std::optional<std::string> url = std::nullopt) {
  ClaimSourcePair p;
  p.position = pos;
  p.statement = std::move(statement);
  if (url) p.marker = 1;
  p.source_url = std::move(url);
  return p;
}

// Answers from fixed sets; anything unlisted is false.
class SetJudge final : public EvalJudge {
 public:
  std::set<std::string> covered;
  std::set<std::string> supported;
  std::set<std::pair<std::string, std::string>> similar;
  std::set<std::pair<std::string, std::string>> contradictory;
  double structure = 80;
  std::string last_headings;

  bool keypoint_covered(const std::string&, const std::string& k) override { return covered.count(k) > 0; }
  double structure_score(const std::string& headings, double) override {
    last_headings = headings;
    return structure;
  }
  bool supports(const std::string& s, const std::string&) override { return supported.count(s) > 0; }
  PairLabel label_pair(const std::string& a, const std::string& b) override {
    auto has = [&](const auto& set) { return set.count({a, b}) || set.count({b, a}); };
    return PairLabel{has(similar) > 0, has(contradictory) > 0};
  }
};

EvalTask window_task() {
  EvalTask t;
  t.task_id = "t";
  t.query = "q";
  t.keypoints = {"k1"};
  t.start = *parse_date("2024-01-01");
  t.end = *parse_date("2025-12-31");
  return t;
}

SourceView view(bool accessible, std::optional<std::string> date = std::nullopt) {
  SourceView v;
  v.accessible = accessible;
  v.text = "body";
  if (date) v.publish_time = *parse_timestamp(*date);
  return v;
}

// Ordinal alpha straight from the coincidence matrix.
double alpha_oracle(const std::vector<std::vector<std::optional<int>>>& ratings) {
  std::map<std::pair<int, int>, double> o;
  std::size_t items = ratings.front().size();
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<int> vals;
    for (const auto& r : ratings) {
      if (r[u]) vals.push_back(*r[u]);
    }
    if (vals.size() < 2) continue;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) {
        if (i != j) o[{vals[i], vals[j]}] += 1.0 / static_cast<double>(vals.size() - 1);
      }
    }
  }
  std::map<int, double> n;
  double total = 0;
  for (const auto& [ck, w] : o) {
    n[ck.first] += w;
    total += w;
  }
  auto delta = [&](int c, int k) {
    if (c > k) std::swap(c, k);
    double s = 0;
    for (const auto& [g, ng] : n) {
      if (g >= c && g <= k) s += ng;
    }
    s -= (n[c] + n[k]) / 2.0;
    return s * s;
  };
  double observed = 0;
  for (const auto& [ck, w] : o) observed += w * delta(ck.first, ck.second);
  double expected = 0;
  for (const auto& [c, nc] : n) {
    for (const auto& [k, nk] : n) expected += nc * nk * delta(c, k);
  }
  return 1.0 - (total - 1.0) * observed / expected;
}

}  // namespace

TEST(Dataset, BundledSampleHasOneTaskPerDomain) {
  auto tasks = load_dataset(dataset_path());
  ASSERT_EQ(tasks.size(), 6u);
  std::set<Domain> domains;
  for (const auto& t : tasks) domains.insert(t.domain);
  EXPECT_EQ(domains.size(), 6u);
}

TEST(Dataset, RejectsUnknownDomainAndMissingKeypoints) {
  const char* base = R"({"task_id":"x","query":"q","domain":"%s","keypoints":%s,)"
                     R"("temporal_constraint":{"start":"2024","end":"2025","kind":"current"}})";
  char buf[512];
  std::snprintf(buf, sizeof buf, base, "crypto", R"(["a"])");
  EXPECT_THROW(parse_dataset(std::string("\n") + buf), SchemaError);
  try {
    parse_dataset(std::string("\n") + buf);
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::snprintf(buf, sizeof buf, base, "green economy", "[]");
  EXPECT_THROW(parse_dataset(buf), SchemaError);
}

TEST(Relevance, RatioOfCoveredKeypoints) {
  SetJudge j;
  std::vector<std::string> kps;
  for (int i = 0; i < 8; ++i) kps.push_back("k" + std::to_string(i));
  j.covered = {"k0", "k1", "k2", "k3", "k4", "k5"};
  EXPECT_DOUBLE_EQ(relevance("r", kps, j), 0.75);
  j.covered.clear();
  EXPECT_DOUBLE_EQ(relevance("r", kps, j), 0.0);
}

TEST(Relevance, TokenContainmentMatchesBruteCount) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> kps;
    int expected = 0;
    for (int i = 0; i < 10; ++i) {
      bool tagged = std::bernoulli_distribution(0.4)(rng);
      kps.push_back("keypoint " + std::to_string(i) + (tagged ? " FIXTURE" : ""));
      expected += tagged ? 1 : 0;
    }
    SetJudge j;
    for (const auto& k : kps) {
      if (k.find("FIXTURE") != std::string::npos) j.covered.insert(k);
    }
    EXPECT_DOUBLE_EQ(relevance("r", kps, j), expected / 10.0);
  }
}

TEST(Structure, SendsOnlyHeadingsAndPassesScoreThrough) {
  SetJudge j;
  std::string md = "# T\n\nbody text\n\n## A\n\nmore\n\n```\n# not a heading\n```\n\n### A.1\n\n## References\n\n[^1]: x\n";
  EXPECT_DOUBLE_EQ(structure(md, j, EvalConfig{}), 80.0);
  EXPECT_EQ(j.last_headings.find("body"), std::string::npos);
  EXPECT_EQ(j.last_headings.find("not a heading"), std::string::npos);
  EXPECT_EQ(j.last_headings.find("References"), std::string::npos);
  EXPECT_THROW(structure("no headings here", j, EvalConfig{}), NoHeadings);
}

TEST(Structure, HeadingCountsOfATwoLevelOutline) {
  std::string md = "# Report\n";
  for (int c = 1; c <= 5; ++c) {
    md += "## Chapter " + std::to_string(c) + "\n";
    for (int s = 1; s <= (c <= 3 ? 2 : 1); ++s) md += "### Section " + std::to_string(c) + "." + std::to_string(s) + "\n";
  }
  auto hs = extract_headings(md);
  EXPECT_EQ(std::count_if(hs.begin(), hs.end(), [](const Heading& h) { return h.level == 2; }), 5);
  EXPECT_EQ(std::count_if(hs.begin(), hs.end(), [](const Heading& h) { return h.level == 3; }), 8);
}

TEST(Hallucination, DeadLinkCountsUnsupported) {
  SetJudge j;
  MapLookup lookup;
  std::vector<ClaimSourcePair> pairs;
  for (int i = 0; i < 4; ++i) {
    auto s = "claim " + std::to_string(i);
    auto u = "https://x" + std::to_string(i) + ".com/a";
    pairs.push_back(claim(static_cast<std::size_t>(i), s, u));
    j.supported.insert(s);
    lookup.put(u, view(i != 3));
  }
  EXPECT_DOUBLE_EQ(hallucination(pairs, lookup, j), 0.25);
  pairs.push_back(claim(4, "unsourced"));
  j.supported.insert("unsourced");
  EXPECT_DOUBLE_EQ(hallucination(pairs, lookup, j), 1.0 - 3.0 / 5.0);
}

TEST(Temporality, WindowIsClosedAndUndatedCountsZero) {
  MapLookup lookup;
  lookup.put("https://a.com/1", view(true, "2024-05-01"));
  lookup.put("https://b.com/1", view(true, "2023-01-01"));
  lookup.put("https://c.com/1", view(true, "2024-01-01"));
  lookup.put("https://d.com/1", view(true));
  auto task = window_task();
  EXPECT_DOUBLE_EQ(temporality({claim(0, "a", "https://a.com/1"), claim(1, "b", "https://b.com/1")}, task, lookup), 0.5);
  EXPECT_DOUBLE_EQ(temporality({claim(0, "c", "https://c.com/1")}, task, lookup), 1.0);
  EXPECT_DOUBLE_EQ(temporality({claim(0, "d", "https://d.com/1")}, task, lookup), 0.0);
}

TEST(Temporality, InlineEvidenceDates) {
  EXPECT_EQ(format_date(*inline_evidence_date("Prices fell (Wire, published 2025-03-18).")), "2025-03-18");
  EXPECT_FALSE(inline_evidence_date("Prices fell in 2025-03-18 terms."));
  auto task = window_task();
  EXPECT_FALSE(inline_temporality({claim(0, "no date")}, task));
  EXPECT_DOUBLE_EQ(*inline_temporality({claim(0, "a (x, 2024-02-01)"), claim(1, "b (y, 2019-02-01)"), claim(2, "c")}, task),
                   1.0 / 3.0);
}

TEST(Consistency, HandEvaluatedCases) {
  SetJudge j;
  EvalConfig c;
  std::vector<std::string> s = {"lithium brine yield reached 12 units", "lithium brine yield reached 47 units",
                                "lithium brine yield hit 12 units", "lithium brine yield hit 85 units",
                                "coffee exports"};
  std::vector<ClaimSourcePair> pairs;
  for (std::size_t i = 0; i < s.size(); ++i) pairs.push_back(claim(i, s[i]));
  EXPECT_DOUBLE_EQ(consistency(pairs, j, c), 1.0);
  j.similar = {{s[0], s[1]}, {s[0], s[2]}, {s[1], s[3]}, {s[2], s[3]}};
  j.contradictory = {{s[0], s[1]}};
  EXPECT_NEAR(consistency(pairs, j, c), 0.75, 1e-8);
}

TEST(Consistency, LexicalJudgeSeesFigureDisagreement) {
  LexicalJudge j;
  auto a = claim(0, "Copper smelter output reached 12 million tonnes.");
  auto b = claim(1, "Copper smelter output reached 15 million tonnes.");
  auto c = claim(2, "Copper smelter output reached 12 million tonnes, analysts said.");
  EXPECT_TRUE(j.label_pair(a.statement, b.statement).contradictory);
  // Any shared figure, a year included, reads as the same fact restated.
  EXPECT_FALSE(j.label_pair("Copper output reached 12 million tonnes in 2024.",
                            "Copper output reached 15 million tonnes in 2024.").contradictory);
  EXPECT_TRUE(j.label_pair("Copper output did not rise in 2024.", "Copper output did rise in 2024.").contradictory);
  EXPECT_FALSE(j.label_pair(a.statement, c.statement).contradictory);
  EXPECT_DOUBLE_EQ(consistency({a, c}, j, EvalConfig{}), 1.0);
}

TEST(Breadth, HandEvaluatedCases) {
  EvalConfig c;
  EXPECT_DOUBLE_EQ(breadth({claim(0, "a", "https://www.x.com/1"), claim(1, "b", "https://news.x.com/2")}, c), 0.0);
  std::vector<ClaimSourcePair> two = {claim(0, "a", "https://a.com/1"), claim(1, "b", "https://a.com/2"),
                                      claim(2, "c", "https://b.org/1"), claim(3, "d", "https://b.org/2")};
  EXPECT_NEAR(breadth(two, c), std::log(3.0) * std::log(2.0), 1e-12);
  std::vector<ClaimSourcePair> three = {claim(0, "a", "https://a.com/1"), claim(1, "b", "https://b.com/1"),
                                        claim(2, "c", "https://c.com/1")};
  EXPECT_NEAR(breadth(three, c), std::log(4.0) * std::log(3.0), 1e-12);
  c.log_base = 2;
  EXPECT_NEAR(breadth(two, c), std::log2(3.0) * 1.0, 1e-12);
}

TEST(Breadth, MaximizedByUniformDistribution) {
  std::mt19937_64 rng(11);
  EvalConfig c;
  for (int trial = 0; trial < 200; ++trial) {
    int domains = std::uniform_int_distribution<int>(2, 5)(rng);
    std::vector<ClaimSourcePair> pairs;
    std::size_t pos = 0;
    for (int d = 0; d < domains; ++d) {
      int n = std::uniform_int_distribution<int>(1, 6)(rng);
      for (int k = 0; k < n; ++k) {
        pairs.push_back(claim(pos++, "s", "https://d" + std::to_string(d) + ".com/" + std::to_string(k)));
      }
    }
    double uniform = std::log(1.0 + domains) * std::log(static_cast<double>(domains));
    EXPECT_LE(breadth(pairs, c), uniform + 1e-12);
    auto shuffled = pairs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_DOUBLE_EQ(breadth(shuffled, c), breadth(pairs, c));
    EXPECT_DOUBLE_EQ(depth(shuffled, c), depth(pairs, c));
  }
}

TEST(Depth, HandEvaluatedCases) {
  EvalConfig c;
  EXPECT_DOUBLE_EQ(depth({claim(0, "a", "https://ex.com/")}, c), 0.0);
  EXPECT_DOUBLE_EQ(depth({claim(0, "a", "https://ex.com/reports/2025/q3.pdf"), claim(1, "b", "https://ex.com/a/b")}, c), 3.0);
  EXPECT_DOUBLE_EQ(depth({claim(0, "a", "https://ex.com/a/b"), claim(1, "b", "https://ex.com/a/b")}, c), 2.0);
  EXPECT_TRUE(is_file_url("https://ex.com/a.docx", c));
  c.extended_suffixes = false;
  EXPECT_FALSE(is_file_url("https://ex.com/a.docx", c));
  EXPECT_TRUE(is_file_url("https://ex.com/a.csv", c));
}

TEST(Evaluate, FullHasEverythingRestrictedDropsSourceMetrics) {
  LexicalJudge j;
  MapLookup lookup;
  lookup.put("https://a.com/r/1.pdf", view(true, "2024-06-01"));
  std::string md = "# T\n\n## A\n\nSolar module prices fell 30 percent in 2024.[^1]\n";
  auto task = window_task();
  task.keypoints = {"solar module prices"};
  std::vector<ClaimSourcePair> pairs = {claim(0, "Solar module prices fell 30 percent in 2024.", "https://a.com/r/1.pdf")};
  auto full = evaluate({md, pairs, 1.5, 3.0}, task, j, lookup, EvalConfig{}, EvalMode::full);
  EXPECT_TRUE(full.hall && full.brd && full.dep);
  EXPECT_FALSE(full.restricted);
  auto again = evaluate({md, pairs, 1.5, 3.0}, task, j, lookup, EvalConfig{}, EvalMode::full);
  EXPECT_EQ(to_line(full.to_json()), to_line(again.to_json()));
  auto restricted = evaluate({md, {}, std::nullopt, std::nullopt}, task, j, lookup, EvalConfig{}, EvalMode::restricted);
  EXPECT_TRUE(restricted.restricted);
  EXPECT_FALSE(restricted.hall || restricted.brd || restricted.dep);
  EXPECT_DOUBLE_EQ(restricted.temp, 0.0);
  EXPECT_FALSE(restricted.warnings.empty());
}

TEST(Evaluate, MetricsStayInBounds) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    auto s = random_sidecar(rng);
    TableJudge j(s);
    MapLookup lookup(s.views);
    auto r = evaluate({s.markdown, s.pairs, std::nullopt, std::nullopt}, s.task, j, lookup, EvalConfig{}, EvalMode::full);
    EXPECT_GE(r.rel, 0);
    EXPECT_LE(r.rel, 1);
    EXPECT_GE(*r.hall, 0);
    EXPECT_LE(*r.hall, 1);
    EXPECT_GE(r.temp, 0);
    EXPECT_LE(r.temp, 1);
    EXPECT_GT(r.cons, 0);
    EXPECT_LE(r.cons, 1);
    EXPECT_GE(*r.brd, 0);
    EXPECT_GE(*r.dep, 0);
  }
}

TEST(Ranking, MeanRanksWithTies) {
  EXPECT_EQ(mean_ranks({3, 1, 3}), (std::vector<double>{1.5, 3, 1.5}));
  EXPECT_EQ(mean_ranks({3, 1, 2}, false), (std::vector<double>{3, 1, 2}));
}

TEST(Ranking, DominantSystemRanksFirst) {
  MetricReport a{0.9, 90, 0.1, 0.9, 0.9, 2.0, 4.0, 10.0, 60.0, false, {}};
  MetricReport b{0.5, 50, 0.5, 0.5, 0.5, 1.0, 2.0, 5.0, 30.0, false, {}};
  auto t = normalize_and_rank({{"A", a}, {"B", b}});
  EXPECT_DOUBLE_EQ(t.rows[0].avg_rank, 1.0);
  EXPECT_DOUBLE_EQ(t.rows[1].avg_rank, 2.0);
  EXPECT_DOUBLE_EQ(t.rows[0].normalized["hall"], 100.0);
  b.rel = 0.9;
  t = normalize_and_rank({{"A", a}, {"B", b}});
  EXPECT_DOUBLE_EQ(t.rows[0].ranks["rel"], 1.5);
  EXPECT_DOUBLE_EQ(t.rows[1].ranks["rel"], 1.5);
  MetricReport r = b;
  r.hall.reset();
  EXPECT_THROW(normalize_and_rank({{"A", a}, {"R", r}}), DimensionMismatch);
}

TEST(Ranking, MatchesBruteForceOnThreeSystems) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::string, MetricReport>> systems;
    for (int s = 0; s < 3; ++s) {
      MetricReport m;
      // Coarse values so ties show up.
      auto q = [&] { return std::round(u(rng) * 4) / 4; };
      m.rel = q();
      m.str = q() * 100;
      m.hall = q();
      m.temp = q();
      m.cons = q();
      m.brd = q() * 3;
      m.dep = q() * 5;
      systems.emplace_back("S" + std::to_string(s), m);
    }
    auto t = normalize_and_rank(systems);
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0;
      for (const auto& metric : t.metrics) {
        auto value = [&](const MetricReport& m) {
          auto v = m.to_json()[metric].get<double>();
          return metric == "hall" ? -v : v;
        };
        double mine = value(systems[i].second);
        double better = 0;
        double equal = 0;
        for (const auto& [name, other] : systems) {
          double v = value(other);
          if (v > mine) better += 1;
          if (v == mine) equal += 1;
        }
        double rank = better + (equal + 1) / 2.0;
        EXPECT_DOUBLE_EQ(t.rows[i].ranks.at(metric), rank) << metric;
        total += rank;
      }
      EXPECT_NEAR(t.rows[i].avg_rank, total / static_cast<double>(t.metrics.size()), 1e-12);
    }
  }
}

TEST(Agreement, SpearmanCases) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {2, 1, 4, 3}), 0.6);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {2, 1, 4, 3}), oracle::spearman({1, 2, 3, 4}, {2, 1, 4, 3}));
  EXPECT_THROW(spearman({1, 2}, {1, 2, 3}), LengthMismatch);
  EXPECT_THROW(spearman({1}, {1}), DegenerateData);
}

TEST(Agreement, KrippendorffAgainstCoincidenceOracle) {
  std::vector<std::vector<std::optional<int>>> flipped = {{1, 5, 1}, {5, 1, 5}};
  double a = krippendorff_alpha(flipped);
  EXPECT_LT(a, -0.5);
  EXPECT_NEAR(a, alpha_oracle(flipped), 1e-12);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    int raters = std::uniform_int_distribution<int>(2, 4)(rng);
    int items = std::uniform_int_distribution<int>(3, 12)(rng);
    std::vector<std::vector<std::optional<int>>> r(static_cast<std::size_t>(raters));
    for (auto& row : r) {
      for (int i = 0; i < items; ++i) {
        if (std::bernoulli_distribution(0.85)(rng)) row.push_back(std::uniform_int_distribution<int>(1, 5)(rng));
        else row.push_back(std::nullopt);
      }
    }
    double oracle_value;
    try {
      oracle_value = alpha_oracle(r);
    } catch (...) {
      continue;
    }
    if (!std::isfinite(oracle_value)) continue;
    try {
      EXPECT_NEAR(krippendorff_alpha(r), oracle_value, 1e-9);
      EXPECT_LE(krippendorff_alpha(r), 1.0 + 1e-12);
    } catch (const DegenerateData&) {
    }
  }
  EXPECT_THROW(krippendorff_alpha({{1, std::nullopt}, {std::nullopt, 2}}), DegenerateData);
}

TEST(Compare, TwoSystemsYieldTableWithAvgRank) {
  TempDir tmp;
  auto write = [&](const std::string& name, const std::string& md, const std::string& sidecar) {
    write_file_atomic(tmp.path() / (name + ".md"), md);
    write_file_atomic(tmp.path() / (name + ".ndjson"), sidecar);
  };
  auto line = [](const ClaimSourcePair& p) { return to_line(p.to_json()) + "\n"; };
  write("a", "# A\n\n## One\n\nCloud prices fell 20 percent in 2024.[^1]\n",
        line(claim(0, "Cloud prices fell 20 percent in 2024.", "https://a.com/x/y.pdf")));
  write("b", "# B\n\nCloud prices fell.[^1]\n", line(claim(0, "Cloud prices fell.", "https://b.com/")));
  EvalJob job;
  job.dataset = dataset_path();
  job.runs = {SystemRun::parse_spec("alpha:tech-001:" + (tmp.path() / "a.md").string() + ":" +
                                    (tmp.path() / "a.ndjson").string()),
              SystemRun::parse_spec("beta:tech-001:" + (tmp.path() / "b.md").string() + ":" +
                                    (tmp.path() / "b.ndjson").string())};
  LexicalJudge j;
  MapLookup lookup;
  lookup.put("https://a.com/x/y.pdf", view(true, "2024-03-01"));
  lookup.put("https://b.com/", view(true, "2020-03-01"));
  auto c = compare_systems(job, j, lookup);
  ASSERT_TRUE(c.table);
  EXPECT_EQ(c.table->rows.size(), 2u);
  auto rendered = c.render();
  EXPECT_NE(rendered.find("Avg. Rank"), std::string::npos);
  EXPECT_EQ(rendered, compare_systems(job, j, lookup).render());

  job.mode = EvalMode::restricted;
  auto r = compare_systems(job, j, lookup).render();
  EXPECT_EQ(r.find("Hall."), std::string::npos);
  EXPECT_EQ(r.find("Brd."), std::string::npos);
  EXPECT_EQ(r.find("Dep."), std::string::npos);
}
