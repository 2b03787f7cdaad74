#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "comptag/comptag.h"
#include "test_util.hpp"

using nlohmann::json;

namespace {

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  ct_string_free(s);
  return out;
}

const char* kGraph = R"({
  "nodes": [
    {"competency_id": "c1", "label_fr": "Algèbre linéaire", "label_en": "Linear Algebra"},
    {"competency_id": "c3", "label_fr": "Apprentissage supervisé", "label_en": "Supervised Learning"},
    {"competency_id": "c4", "label_fr": "Régression linéaire", "label_en": "Linear Regression"}
  ],
  "edges": [
    {"source": "c1", "target": "c4", "relation": "prerequisite_of"},
    {"source": "c3", "target": "c4", "relation": "prerequisite_of"}
  ]
})";

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(ct_version(), "0.1.0");
  EXPECT_STREQ(ct_status_name(CT_OK), "Ok");
  EXPECT_STREQ(ct_status_name(CT_MISSING_STAGE_INPUT), "MissingStageInput");
}

TEST(CApi, GraphLifecycle) {
  ct_graph* g = nullptr;
  ASSERT_EQ(ct_graph_from_json(kGraph, &g), CT_OK);
  size_t nodes = 0, edges = 0;
  EXPECT_EQ(ct_graph_counts(g, &nodes, &edges), CT_OK);
  EXPECT_EQ(nodes, 3u);
  EXPECT_EQ(edges, 2u);
  char* out = nullptr;
  ASSERT_EQ(ct_graph_query(g, "c4", CT_QUERY_PREREQUISITES, &out), CT_OK);
  EXPECT_EQ(json::parse(take(out)), (json{"c1", "c3"}));
  ASSERT_EQ(ct_graph_validate(g, &out), CT_OK);
  EXPECT_EQ(take(out), "[]");
  ASSERT_EQ(ct_graph_profile(g, "c4", &out), CT_OK);
  EXPECT_NE(take(out).find("Supervised Learning"), std::string::npos);
  EXPECT_EQ(ct_graph_query(g, "zz", CT_QUERY_ANCESTORS, &out), CT_UNKNOWN_COMPETENCY);
  EXPECT_NE(std::strlen(ct_last_error()), 0u);
  ct_graph_free(g);
}

TEST(CApi, GraphErrors) {
  ct_graph* g = nullptr;
  EXPECT_EQ(ct_graph_from_json("{not json", &g), CT_MALFORMED_RECORD);
  EXPECT_EQ(g, nullptr);
  EXPECT_EQ(ct_graph_from_json(nullptr, &g), CT_INVALID_ARGUMENT);
  EXPECT_EQ(ct_graph_load("/nonexistent/graph.json", &g), CT_IO);
  const char* bad = R"({"nodes":[{"competency_id":"c4","label_fr":"x"}],
                        "edges":[{"source":"c9","target":"c4","relation":"prerequisite_of"}]})";
  EXPECT_EQ(ct_graph_from_json(bad, &g), CT_UNKNOWN_ENDPOINT);
  ct_graph_free(nullptr);
}

TEST(CApi, IndexOutlivesGraph) {
  ct_graph* g = nullptr;
  ASSERT_EQ(ct_graph_from_json(kGraph, &g), CT_OK);
  ct_index* idx = nullptr;
  ASSERT_EQ(ct_index_build(g, 1.2, 0.75, &idx), CT_OK);
  ct_graph_free(g);
  char* out = nullptr;
  ASSERT_EQ(ct_index_rank(idx, "la régression linéaire", 2, &out), CT_OK);
  const auto j = json::parse(take(out));
  ASSERT_FALSE(j["ranked"].empty());
  EXPECT_LE(j["ranked"].size(), 2u);
  EXPECT_EQ(j["ranked"][0]["competency_id"], "c4");
  ct_index_free(idx);
}

TEST(CApi, Fragmentation) {
  const json r = {{"resource_id", "r1"}, {"course_id", "U"}, {"kind", "page"}, {"title", "t"},
                  {"body", "## A\nalpha\n\n## B\nbeta"}};
  char* out = nullptr;
  ASSERT_EQ(ct_fragment_resource(r.dump().c_str(), 512, &out), CT_OK);
  const auto j = json::parse(take(out));
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["fragment_id"], "r1::f1");
  EXPECT_EQ(ct_fragment_resource(r.dump().c_str(), 0, &out), CT_INVALID_ARGUMENT);
}

TEST(CApi, StageNames) {
  ct_stage s;
  EXPECT_EQ(ct_stage_from_name("sweep", &s), CT_OK);
  EXPECT_EQ(s, CT_STAGE_SWEEP);
  EXPECT_NE(ct_stage_from_name("nope", &s), CT_OK);
}

TEST(CApi, PipelineOnFixture) {
  testutil::TempDir dir;
  ASSERT_EQ(ct_generate_fixture(dir.path().c_str(), 7), CT_OK);
  const std::string cfg = (dir / "config.json").string();
  const json overrides = {{"paths", {{"out", (dir / "out").string()}}}};
  ct_pipeline* p = nullptr;
  ASSERT_EQ(ct_pipeline_create(cfg.c_str(), overrides.dump().c_str(), &p), CT_OK);
  char* out = nullptr;
  EXPECT_EQ(ct_pipeline_run(p, CT_STAGE_EVALUATE, &out), CT_MISSING_STAGE_INPUT);
  for (int s = CT_STAGE_INGEST; s <= CT_STAGE_EVALUATE; ++s) {
    ASSERT_EQ(ct_pipeline_run(p, static_cast<ct_stage>(s), &out), CT_OK) << ct_last_error();
    if (s == CT_STAGE_EVALUATE) {
      EXPECT_DOUBLE_EQ(json::parse(take(out))["micro_f1"].get<double>(), 1.0);
    } else {
      ct_string_free(out);
    }
  }
  ASSERT_EQ(ct_pipeline_config(p, &out), CT_OK);
  EXPECT_EQ(json::parse(take(out))["retrieval"]["k"], 20);
  ct_pipeline_free(p);
}

TEST(CApi, PipelineRejectsBadOverrides) {
  ct_pipeline* p = nullptr;
  EXPECT_EQ(ct_pipeline_create(nullptr, R"({"retrieval":{"nope":1}})", &p), CT_CONFIG);
  EXPECT_EQ(ct_pipeline_create(nullptr, "{", &p), CT_CONFIG);
  EXPECT_EQ(p, nullptr);
}
