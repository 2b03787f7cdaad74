#include <gtest/gtest.h>

#include <random>

#include "comptag/error.hpp"
#include "comptag/fixture.hpp"
#include "comptag/graph.hpp"
#include "comptag/io.hpp"
#include "test_util.hpp"

using namespace comptag;
using nlohmann::json;

namespace {

CompetencyNode node(std::string id, std::string label = "") {
  return {id, label.empty() ? "L" + id : label, std::nullopt, "", {}, {}};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

}  // namespace

TEST(Graph, Ml101Loads) {
  testutil::TempDir dir;
  io::write_file(dir / "g.json", fixture::ml101_graph().to_json().dump());
  const auto g = load_graph(dir / "g.json");
  EXPECT_EQ(g.size(), 5u);
  EXPECT_EQ(g.edges().size(), 4u);
}

TEST(Graph, UnknownEndpoint) {
  EXPECT_EQ(code_of([] { CompetencyGraph({node("c4")}, {{"c9", "c4", Relation::PrerequisiteOf}}); }),
            ErrorCode::UnknownEndpoint);
}

TEST(Graph, SelfLoopAndDuplicateEdge) {
  EXPECT_EQ(code_of([] { CompetencyGraph({node("a")}, {{"a", "a", Relation::PartOf}}); }),
            ErrorCode::SelfLoop);
  EXPECT_EQ(code_of([] {
              CompetencyGraph({node("a"), node("b")}, {{"a", "b", Relation::PartOf}, {"a", "b", Relation::PartOf}});
            }),
            ErrorCode::DuplicateEdge);
  // Same pair under a different relation is a different triple.
  EXPECT_NO_THROW(CompetencyGraph({node("a"), node("b")},
                                  {{"a", "b", Relation::PartOf}, {"a", "b", Relation::PrerequisiteOf}}));
}

TEST(Graph, EmptyEdgeListIsValid) {
  const CompetencyGraph g({node("a")}, {});
  EXPECT_EQ(g.edges().size(), 0u);
  EXPECT_TRUE(validate_hierarchy(g).empty());
}

TEST(Graph, RejectsEmptyLabelAndDuplicateNode) {
  EXPECT_EQ(code_of([] { CompetencyGraph({{"a", "", std::nullopt, "", {}, {}}}, {}); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { CompetencyGraph({node("a"), node("a")}, {}); }), ErrorCode::MalformedRecord);
}

TEST(Graph, AliasesDeduplicatedIgnoringCaseAndAccents) {
  const CompetencyGraph g({{"a", "A", std::nullopt, "", {"Régression", "regression", "REGRESSION", "autre"}, {}}}, {});
  EXPECT_EQ(g.node("a").aliases, (std::vector<std::string>{"Régression", "autre"}));
}

TEST(Graph, UnknownRelationStringIsMalformed) {
  const json j = {{"nodes", {{{"competency_id", "a"}, {"label_fr", "A"}}, {{"competency_id", "b"}, {"label_fr", "B"}}}},
                  {"edges", {{{"source", "a"}, {"target", "b"}, {"relation", "related"}}}}};
  EXPECT_NE(code_of([&] { CompetencyGraph::from_json(j); }), ErrorCode::Ok);
}

TEST(Hierarchy, Ml101HasNoViolations) {
  EXPECT_TRUE(validate_hierarchy(fixture::ml101_graph()).empty());
}

TEST(Hierarchy, TwoCycle) {
  const CompetencyGraph g({node("a"), node("b")},
                          {{"a", "b", Relation::PrerequisiteOf}, {"b", "a", Relation::PrerequisiteOf}});
  const auto v = validate_hierarchy(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::PrerequisiteCycle);
  EXPECT_EQ(v[0].members, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(code_of([&] { require_acyclic(g); }), ErrorCode::HierarchyCycle);
}

TEST(Hierarchy, ChainOfTenIsAcyclic) {
  std::vector<CompetencyNode> nodes;
  std::vector<CompetencyEdge> edges;
  for (int i = 0; i <= 10; ++i) nodes.push_back(node("n" + std::to_string(i)));
  for (int i = 0; i < 10; ++i) edges.push_back({"n" + std::to_string(i), "n" + std::to_string(i + 1), Relation::PrerequisiteOf});
  EXPECT_TRUE(validate_hierarchy(CompetencyGraph(nodes, edges)).empty());
}

TEST(Hierarchy, MixedRelationsDoNotFormCycles) {
  // a -> b in the hierarchy and b -> a as a prerequisite: each subgraph is acyclic.
  const CompetencyGraph g({node("a"), node("b")},
                          {{"a", "b", Relation::PartOf}, {"b", "a", Relation::PrerequisiteOf}});
  EXPECT_TRUE(validate_hierarchy(g).empty());
}

// Independent check: Kahn's algorithm succeeds iff no violation is reported.
TEST(HierarchyProperty, MatchesTopologicalSort) {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 300; ++iter) {
    const std::size_t n = 2 + testutil::pick(rng, 6);
    std::vector<CompetencyNode> nodes;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back(node("n" + std::to_string(i)));
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    const auto m = testutil::pick(rng, n * 2);
    for (std::size_t k = 0; k < m; ++k) {
      const auto a = testutil::pick(rng, n), b = testutil::pick(rng, n);
      if (a != b) pairs.insert({a, b});
    }
    std::vector<CompetencyEdge> edges;
    for (auto [a, b] : pairs) edges.push_back({nodes[a].competency_id, nodes[b].competency_id, Relation::PrerequisiteOf});
    std::vector<int> indeg(n, 0);
    for (auto [a, b] : pairs) ++indeg[b];
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) if (indeg[i] == 0) queue.push_back(i);
    std::size_t seen = 0;
    while (!queue.empty()) {
      const auto v = queue.back();
      queue.pop_back();
      ++seen;
      for (auto [a, b] : pairs) if (a == v && --indeg[b] == 0) queue.push_back(b);
    }
    EXPECT_EQ(validate_hierarchy(CompetencyGraph(nodes, edges)).empty(), seen == n) << iter;
  }
}

TEST(Queries, Ml101PrerequisitesOfC4) {
  const auto g = fixture::ml101_graph();
  EXPECT_EQ(g.prerequisites_of("c4"), (IdSet{"c1", "c2", "c3"}));
  EXPECT_EQ(g.direct_prerequisites("c4"), (IdSet{"c1", "c3"}));
  EXPECT_TRUE(g.ancestors("c4").empty());
}

TEST(Queries, ThreeLevelChainDescendants) {
  // c -> b -> a (child -> parent)
  const CompetencyGraph g({node("a"), node("b"), node("c")},
                          {{"b", "a", Relation::BroaderNarrower}, {"c", "b", Relation::PartOf}});
  EXPECT_EQ(g.descendants("a"), (IdSet{"b", "c"}));
  EXPECT_EQ(g.ancestors("c"), (IdSet{"a", "b"}));
  EXPECT_EQ(g.parents("c"), (IdSet{"b"}));
  EXPECT_EQ(g.children("a"), (IdSet{"b"}));
}

TEST(Queries, UnknownCompetency) {
  const auto g = fixture::ml101_graph();
  EXPECT_EQ(code_of([&] { g.ancestors("zz"); }), ErrorCode::UnknownCompetency);
  EXPECT_EQ(code_of([&] { build_profile(g, "zz"); }), ErrorCode::UnknownCompetency);
}

TEST(QueriesProperty, AncestorsAndDescendantsAreInverse) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t n = 3 + testutil::pick(rng, 6);
    std::vector<CompetencyNode> nodes;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back(node("n" + std::to_string(i)));
    std::vector<CompetencyEdge> edges;
    for (std::size_t i = 1; i < n; ++i) {
      if (testutil::pick(rng, 4) == 0) continue;
      edges.push_back({nodes[i].competency_id, nodes[testutil::pick(rng, i)].competency_id,
                       testutil::pick(rng, 2) ? Relation::PartOf : Relation::BroaderNarrower});
    }
    const CompetencyGraph g(nodes, edges);
    for (const auto& a : g.ids()) {
      for (const auto& b : g.ids()) {
        EXPECT_EQ(g.descendants(a).count(b) > 0, g.ancestors(b).count(a) > 0);
      }
    }
  }
}

TEST(Profile, MinimalNode) {
  const CompetencyGraph g({{"p", "Probability", std::nullopt, "", {}, {}}}, {});
  EXPECT_EQ(build_profile(g, "p").profile_text, "Probability");
}

TEST(Profile, IncludesPrerequisiteLabel) {
  const auto g = fixture::ml101_graph();
  const auto text = build_profile(g, "c4").profile_text;
  EXPECT_NE(text.find("Supervised Learning"), std::string::npos);
  EXPECT_NE(text.find("Linear Algebra"), std::string::npos);
}

TEST(Profile, FieldOrder) {
  const CompetencyGraph g(
      {{"c", "Enfant", std::string("Child"), "desc", {"alias1", "alias2"}, {"ex1"}},
       {"p", "Parent", std::nullopt, "", {}, {}},
       {"k", "Kid", std::nullopt, "", {}, {}},
       {"q", "Prereq", std::nullopt, "", {}, {}}},
      {{"c", "p", Relation::BroaderNarrower},
       {"k", "c", Relation::PartOf},
       {"q", "c", Relation::PrerequisiteOf}});
  EXPECT_EQ(build_profile(g, "c").profile_text,
            "Enfant; Child\nalias1; alias2\ndesc\nex1\nParent\nKid\nPrereq");
}

TEST(Profile, DeterministicAcrossLoads) {
  testutil::TempDir dir;
  io::write_file(dir / "g.json", fixture::ml101_graph().to_json().dump());
  const auto a = build_profiles(load_graph(dir / "g.json"));
  const auto b = build_profiles(load_graph(dir / "g.json"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].profile_text, b[i].profile_text);
}

TEST(Graph, JsonRoundTrip) {
  const auto g = fixture::ml101_graph();
  EXPECT_EQ(CompetencyGraph::from_json(g.to_json()).to_json(), g.to_json());
}
