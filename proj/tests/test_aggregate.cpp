#include <gtest/gtest.h>

#include <random>

#include "comptag/aggregate.hpp"
#include "comptag/error.hpp"
#include "test_util.hpp"

using namespace comptag;

namespace {

ReconciledSet frag(std::string id, std::vector<std::pair<std::string, double>> preds) {
  ReconciledSet rs{id, {}, {}};
  for (auto& [c, conf] : preds) rs.predictions.push_back({id, c, conf, 0, 1, ""});
  return rs;
}

AggregationConfig with(AggKind k) {
  AggregationConfig cfg;
  cfg.agg = k;
  return cfg;
}

}  // namespace

TEST(Score, WorkedResourceMax) {
  const auto s = score_resource({frag("r2::f0", {{"c3", 0.8}}), frag("r2::f1", {{"c5", 0.7}})},
                                ResourceKind::Page, with(AggKind::Max));
  EXPECT_EQ(s, (std::map<std::string, double>{{"c3", 0.8}, {"c5", 0.7}}));
}

TEST(Score, SingleElementSameUnderAllKinds) {
  for (auto k : {AggKind::Max, AggKind::WeightedMean, AggKind::WeightedSum}) {
    const auto s = score_resource({frag("f", {{"c", 0.9}})}, ResourceKind::Page, with(k));
    EXPECT_DOUBLE_EQ(s.at("c"), 0.9) << to_string(k);
  }
}

TEST(Score, TwoFragmentsArithmetic) {
  const std::vector<ReconciledSet> fs{frag("f0", {{"c", 0.4}}), frag("f1", {{"c", 0.6}})};
  EXPECT_DOUBLE_EQ(score_resource(fs, ResourceKind::Page, with(AggKind::Max)).at("c"), 0.6);
  EXPECT_DOUBLE_EQ(score_resource(fs, ResourceKind::Page, with(AggKind::WeightedMean)).at("c"), 0.5);
  EXPECT_DOUBLE_EQ(score_resource(fs, ResourceKind::Page, with(AggKind::WeightedSum)).at("c"), 1.0);
}

TEST(Score, MeanCountsFragmentsWithoutThePrediction) {
  const std::vector<ReconciledSet> fs{frag("f0", {{"c", 0.9}}), frag("f1", {}), frag("f2", {})};
  EXPECT_NEAR(score_resource(fs, ResourceKind::Page, with(AggKind::WeightedMean)).at("c"), 0.3, 1e-12);
}

TEST(Score, KindWeightApplies) {
  auto cfg = with(AggKind::Max);
  cfg.weights[ResourceKind::Quiz] = 0.5;
  EXPECT_DOUBLE_EQ(score_resource({frag("f", {{"c", 0.8}})}, ResourceKind::Quiz, cfg).at("c"), 0.4);
  cfg.weights[ResourceKind::Quiz] = -1;
  EXPECT_THROW(score_resource({frag("f", {{"c", 0.8}})}, ResourceKind::Quiz, cfg), Error);
}

TEST(Score, EmptyResource) {
  EXPECT_TRUE(score_resource({}, ResourceKind::Page, {}).empty());
}

TEST(Map, ThresholdExclusion) {
  AggregationConfig cfg;
  cfg.tau = 0.4;
  EXPECT_EQ(map_resource("r", {{"c3", 0.8}, {"c5", 0.35}}, cfg).mapping, (IdSet{"c3"}));
}

TEST(Map, ThresholdIsInclusive) {
  AggregationConfig cfg;
  cfg.tau = 0.4;
  EXPECT_EQ(map_resource("r", {{"c", 0.4}}, cfg).mapping, (IdSet{"c"}));
}

TEST(Map, TopKIgnoresTau) {
  AggregationConfig cfg;
  cfg.tau = 0.95;
  cfg.topk = 2;
  const std::map<std::string, double> scores{{"a", 0.1}, {"b", 0.7}, {"c", 0.3}, {"d", 0.7}, {"e", 0.5}};
  const auto rs = map_resource("r", scores, cfg);
  EXPECT_TRUE(rs.mapping.empty());
  // Sort oracle: descending score, ties by id.
  std::vector<std::pair<std::string, double>> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(), [](auto& x, auto& y) { return x.second > y.second; });
  ASSERT_TRUE(rs.topk_mapping);
  EXPECT_EQ(*rs.topk_mapping, (std::vector<std::string>{v[0].first, v[1].first}));
}

TEST(Map, JsonRoundTrip) {
  AggregationConfig cfg;
  cfg.topk = 1;
  const auto rs = map_resource("r", {{"a", 0.5}, {"b", 0.2}}, cfg);
  const auto back = resource_score_from_json(to_json(rs));
  EXPECT_EQ(back.scores, rs.scores);
  EXPECT_EQ(back.mapping, rs.mapping);
  EXPECT_EQ(back.topk_mapping, rs.topk_mapping);
}

TEST(AggregateProperty, MonotoneInTauAndMaxDominates) {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<ReconciledSet> fs;
    const auto n = 1 + testutil::pick(rng, 5);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<std::string, double>> ps;
      for (const std::string c : {"a", "b", "c", "d"}) {
        if (testutil::pick(rng, 2)) ps.emplace_back(c, 0.01 * static_cast<double>(testutil::pick(rng, 101)));
      }
      fs.push_back(frag("f" + std::to_string(i), ps));
    }
    const auto mx = score_resource(fs, ResourceKind::Page, with(AggKind::Max));
    const auto mean = score_resource(fs, ResourceKind::Page, with(AggKind::WeightedMean));
    for (const auto& [c, v] : mean) EXPECT_LE(v, mx.at(c) + 1e-12);
    IdSet prev;
    bool first = true;
    for (double tau = 1.0; tau >= -1e-9; tau -= 0.05) {
      AggregationConfig cfg;
      cfg.tau = tau;
      const auto m = map_resource("r", mx, cfg).mapping;
      if (!first) {
        for (const auto& c : prev) EXPECT_TRUE(m.count(c));
      }
      prev = m;
      first = false;
    }
  }
}
