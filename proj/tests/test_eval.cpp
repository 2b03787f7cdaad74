#include <gtest/gtest.h>

#include <random>

#include "comptag/error.hpp"
#include "comptag/eval.hpp"
#include "comptag/io.hpp"
#include "test_util.hpp"

using namespace comptag;
using nlohmann::json;

namespace {

GoldAnnotation gold(std::string fid, std::string course, IdSet labels) {
  const auto rid = fid.substr(0, fid.find("::"));
  return {std::move(fid), rid, std::move(course), std::move(labels)};
}

TagPrediction pred(std::string fid, std::string c, double conf) {
  return {std::move(fid), std::move(c), conf, 0, 1, ""};
}

RankedList ranked(std::vector<std::string> ids) {
  RankedList rl{"f", {}};
  double s = 1.0;
  for (auto& id : ids) rl.entries.push_back({std::move(id), s -= 0.1});
  return rl;
}

}  // namespace

TEST(Micro, PerfectAndEmpty) {
  const LabelSets g{{"u1", {"a"}}, {"u2", {"b", "c"}}};
  EXPECT_DOUBLE_EQ(micro_f1(g, g, {"u1", "u2"}), 1.0);
  EXPECT_DOUBLE_EQ(micro_f1(g, {}, {"u1", "u2"}), 0.0);
}

TEST(Micro, HandCountedToyInstance) {
  const LabelSets g{{"u1", {"a", "b"}}, {"u2", {"b"}}};
  const LabelSets p{{"u1", {"a"}}, {"u2", {"b", "c"}}};
  const auto rep = f1_report(g, p, {"u1", "u2"}, {"a", "b", "c"});
  EXPECT_EQ(rep.pooled.tp, 2u);
  EXPECT_EQ(rep.pooled.fp, 1u);
  EXPECT_EQ(rep.pooled.fn, 1u);
  EXPECT_NEAR(rep.micro, 2.0 / 3.0, 1e-12);
}

TEST(Macro, AbsentClassCountsAsZero) {
  const LabelSets g{{"u1", {"a"}}};
  EXPECT_DOUBLE_EQ(macro_f1(g, g, {"u1"}, {"a", "b"}), 0.5);
  EXPECT_DOUBLE_EQ(macro_f1(g, g, {"u1"}, {"a"}), 1.0);
}

TEST(Macro, ToyInstanceOverThreeClasses) {
  // Class b: tp=1 (u2), fn=1 (u1) -> 2/3; class a: 1; class c: 0.
  const LabelSets g{{"u1", {"a", "b"}}, {"u2", {"b"}}};
  const LabelSets p{{"u1", {"a"}}, {"u2", {"b", "c"}}};
  const auto rep = f1_report(g, p, {"u1", "u2"}, {"a", "b", "c"});
  EXPECT_DOUBLE_EQ(rep.per_class[0].f1, 1.0);
  EXPECT_NEAR(rep.per_class[1].f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.per_class[2].f1, 0.0);
  EXPECT_NEAR(rep.macro, (1.0 + 2.0 / 3.0) / 3.0, 1e-12);
}

TEST(Macro, PerfectOnAllClasses) {
  const LabelSets g{{"u1", {"a"}}, {"u2", {"b"}}};
  EXPECT_DOUBLE_EQ(macro_f1(g, g, {"u1", "u2"}, {"a", "b"}), 1.0);
}

TEST(Units, MismatchRejected) {
  const LabelSets g{{"u1", {"a"}}};
  auto code = [&](const LabelSets& gg, const LabelSets& p, std::vector<std::string> units) {
    try {
      micro_f1(gg, p, units);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Ok;
  };
  EXPECT_EQ(code(g, {{"u9", {"a"}}}, {"u1"}), ErrorCode::UnitMismatch);
  EXPECT_EQ(code(g, {}, {"u1", "u2"}), ErrorCode::UnitMismatch);
  EXPECT_EQ(code(g, {}, {"u1"}), ErrorCode::Ok);
}

TEST(F1Property, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  const std::vector<std::string> classes{"a", "b", "c", "d"};
  for (int iter = 0; iter < 300; ++iter) {
    LabelSets g, p;
    std::vector<std::string> units;
    const auto n = 1 + testutil::pick(rng, 6);
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = "u" + std::to_string(i);
      units.push_back(u);
      g[u];
      for (const auto& c : classes) {
        if (testutil::pick(rng, 3) == 0) g[u].insert(c);
        if (testutil::pick(rng, 3) == 0) p[u].insert(c);
      }
    }
    // Oracle: enumerate (unit, class) pairs.
    double tp = 0, fp = 0, fn = 0, macro = 0;
    for (const auto& c : classes) {
      double ctp = 0, cfp = 0, cfn = 0;
      for (const auto& u : units) {
        const bool in_g = g[u].count(c) > 0, in_p = p[u].count(c) > 0;
        ctp += in_g && in_p;
        cfp += !in_g && in_p;
        cfn += in_g && !in_p;
      }
      tp += ctp;
      fp += cfp;
      fn += cfn;
      macro += (2 * ctp + cfp + cfn) > 0 ? 2 * ctp / (2 * ctp + cfp + cfn) : 0.0;
    }
    const double micro = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    const auto rep = f1_report(g, p, units, classes);
    EXPECT_NEAR(rep.micro, micro, 1e-12);
    EXPECT_NEAR(rep.macro, macro / 4.0, 1e-12);
    EXPECT_GE(rep.micro, 0.0);
    EXPECT_LE(rep.micro, 1.0);
  }
}

TEST(ResourceGold, UnionOfFragments) {
  const auto rg = derive_resource_gold(
      {gold("r::f0", "U", {"c3"}), gold("r::f1", "U", {"c3", "c5"}), gold("s::f0", "U", {"a"}),
       gold("t::f0", "U", {"x"}), gold("t::f1", "U", {"y"}), gold("t::f2", "U", {"z"})});
  EXPECT_EQ(rg.at("r"), (IdSet{"c3", "c5"}));
  EXPECT_EQ(rg.at("s"), (IdSet{"a"}));
  EXPECT_EQ(rg.at("t").size(), 3u);
}

TEST(SpanValid, Examples) {
  const std::map<std::string, std::size_t> len{{"f", 10}};
  EXPECT_DOUBLE_EQ(span_valid({{"f", 0, 5, true}}, len), 1.0);
  EXPECT_DOUBLE_EQ(span_valid({{"f", 7, 7, true}}, len), 0.0);
  EXPECT_NEAR(span_valid({{"f", 0, 5, true}, {"f", 2, 10, true}, {"f", 3, 11, true}}, len), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(span_valid({{"f", 0, 0, false}}, len), 0.0);
  EXPECT_DOUBLE_EQ(span_valid({}, len), 1.0);
  EXPECT_THROW(span_valid({{"g", 0, 1, true}}, len), Error);
}

TEST(Mrr, Examples) {
  const LabelSets g{{"f", {"x"}}};
  EXPECT_DOUBLE_EQ(mrr({{"f", ranked({"x", "a"})}}, g, 5), 1.0);
  EXPECT_NEAR(mrr({{"f", ranked({"a", "b", "x"})}}, g, 3), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(mrr({{"f", ranked({"a", "b", "c", "d", "e", "x"})}}, g, 5), 0.0);
  EXPECT_DOUBLE_EQ(mrr({}, g, 5), 0.0);
  // Fragments with empty gold are not part of the mean.
  EXPECT_DOUBLE_EQ(mrr({{"f", ranked({"x"})}}, {{"f", {"x"}}, {"e", {}}}, 5), 1.0);
}

TEST(Mrr, RankPredictionsByConfidence) {
  const auto rl = rank_predictions("f", {pred("f", "b", 0.5), pred("f", "a", 0.9), pred("f", "b", 0.95)});
  ASSERT_EQ(rl.entries.size(), 2u);
  EXPECT_EQ(rl.entries[0].competency_id, "b");
  EXPECT_DOUBLE_EQ(rl.entries[0].score, 0.95);
}

TEST(Folds, TwentySixCoursesIntoFive) {
  std::vector<GoldAnnotation> gs;
  for (int i = 0; i < 26; ++i) gs.push_back(gold("r" + std::to_string(i) + "::f0", "UV" + std::to_string(i), {}));
  const auto spec = make_folds(gs, 5, 13);
  std::vector<std::size_t> sizes(5, 0);
  for (const auto& [c, f] : spec.assignment) ++sizes[f];
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{6, 5, 5, 5, 5}));
}

TEST(Folds, OneCoursePerFoldAndDeterminism) {
  std::vector<GoldAnnotation> gs;
  for (int i = 0; i < 5; ++i) gs.push_back(gold("r" + std::to_string(i) + "::f0", "U" + std::to_string(i), {}));
  const auto a = make_folds(gs, 5, 1);
  std::set<std::size_t> used;
  for (const auto& [c, f] : a.assignment) used.insert(f);
  EXPECT_EQ(used.size(), 5u);
  EXPECT_EQ(make_folds(gs, 5, 1).assignment, a.assignment);
  try {
    make_folds(gs, 6, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewGroups);
  }
}

TEST(FoldsProperty, CoursesNeverSplit) {
  std::mt19937_64 rng(40);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<GoldAnnotation> gs;
    const auto courses = 3 + testutil::pick(rng, 20);
    for (int i = 0; i < 60; ++i) {
      gs.push_back(gold("r" + std::to_string(i) + "::f0", "U" + std::to_string(testutil::pick(rng, courses)), {}));
    }
    std::set<std::string> distinct;
    for (const auto& g : gs) distinct.insert(g.course_id);
    const auto n = 1 + testutil::pick(rng, distinct.size());
    const auto spec = make_folds(gs, n, iter);
    EXPECT_EQ(spec.assignment.size(), distinct.size());
    std::vector<std::size_t> sizes(n, 0);
    for (const auto& [c, f] : spec.assignment) ++sizes[f];
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
  }
}

TEST(Gold, LoadRejectsDuplicateFragment) {
  testutil::TempDir dir;
  const json rec = {{"fragment_id", "r::f0"}, {"resource_id", "r"}, {"course_id", "U"}, {"gold", {"a"}}};
  io::write_jsonl(dir / "g.jsonl", {rec, rec});
  try {
    load_gold(dir / "g.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
  }
  io::write_jsonl(dir / "h.jsonl", {rec});
  EXPECT_EQ(load_gold(dir / "h.jsonl").at(0).gold, (IdSet{"a"}));
}

TEST(Cache, ProducerRunsOncePerKey) {
  int calls = 0;
  PredictionCache cache([&](const CacheKey& k) {
    ++calls;
    FragmentRun r;
    r.predictions["f"] = {pred("f", "c", 0.1 * static_cast<double>(k.k))};
    return r;
  });
  cache.get({std::nullopt, 5});
  cache.get({std::nullopt, 5});
  cache.get({std::size_t{1}, 5});
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.misses(), 2u);
  EXPECT_THROW(cache.put({std::nullopt, 5}, {}), Error);
}

TEST(Cache, MissWithoutProducer) {
  PredictionCache cache;
  try {
    cache.get({std::nullopt, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCache);
  }
}

TEST(Cache, PersistsAndReloads) {
  testutil::TempDir dir;
  FragmentRun run;
  run.predictions["r::f0"] = {TagPrediction{"r::f0", "c", 0.7, 1, 3, "ab"}};
  run.raw_spans["r::f0"] = {RawSpan{"r::f0", 1, 3, true}};
  run.discarded = 2;
  {
    PredictionCache cache([&](const CacheKey&) { return run; }, dir.path());
    cache.get({std::size_t{2}, 10});
    EXPECT_TRUE(std::filesystem::exists(dir / "predictions_K10_fold2.jsonl"));
  }
  PredictionCache again({}, dir.path());
  const auto& back = again.get({std::size_t{2}, 10});
  EXPECT_EQ(again.disk_loads(), 1u);
  EXPECT_EQ(back.predictions, run.predictions);
  EXPECT_EQ(back.discarded, 2u);
  EXPECT_EQ(back.raw_spans.at("r::f0")[0].end, 3);
}

namespace {

// Four courses, one resource each, two fragments per resource.
SweepSetup small_setup() {
  SweepSetup s;
  for (int i = 0; i < 4; ++i) {
    const auto r = "r" + std::to_string(i);
    s.golds.push_back(gold(r + "::f0", "U" + std::to_string(i), {"a"}));
    s.golds.push_back(gold(r + "::f1", "U" + std::to_string(i), {}));
    s.resource_fragments[r] = {r + "::f0", r + "::f1"};
    s.resource_kinds[r] = ResourceKind::Page;
    s.resource_courses[r] = "U" + std::to_string(i);
    s.fragment_lengths[r + "::f0"] = 10;
    s.fragment_lengths[r + "::f1"] = 10;
  }
  s.competencies = {"a", "b"};
  s.folds = make_folds(s.golds, 2, 3);
  return s;
}

FragmentRun run_for(std::size_t k) {
  FragmentRun run;
  for (int i = 0; i < 4; ++i) {
    const auto r = "r" + std::to_string(i);
    // Correct label at 0.45; larger K adds a spurious "b" at 0.35.
    run.predictions[r + "::f0"] = {pred(r + "::f0", "a", 0.45)};
    if (k >= 10) run.predictions[r + "::f1"] = {pred(r + "::f1", "b", 0.35)};
  }
  return run;
}

}  // namespace

TEST(Sweep, GridCardinalityAndCacheReuse) {
  const auto setup = small_setup();
  int calls = 0;
  PredictionCache cache([&](const CacheKey& k) {
    ++calls;
    return run_for(k.k);
  });
  const auto rep = sweep_grid(setup, cache);
  // 16 cells per fold plus 16 pooled rows.
  EXPECT_EQ(rep.rows.size(), 16u * 2 + 16u);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(rep.cache_misses, 4u);
  EXPECT_EQ(rep.cache_hits, 2u * 16u - 4u);
  ASSERT_EQ(rep.selections.size(), 2u);
}

TEST(Sweep, ThresholdOnlyRefilters) {
  const auto setup = small_setup();
  PredictionCache cache([](const CacheKey& k) { return run_for(k.k); });
  const auto rep = sweep_grid(setup, cache);
  auto pooled = [&](std::size_t k, double tau) {
    for (const auto& r : rep.rows) {
      if (r.fold == "pooled" && r.k == k && r.tau == tau) return r.metrics;
    }
    ADD_FAILURE() << "missing row";
    return MetricsReport{};
  };
  EXPECT_DOUBLE_EQ(pooled(5, 0.3).micro_f1, 1.0);
  EXPECT_DOUBLE_EQ(pooled(5, 0.5).micro_f1, 0.0);
  // K=10 adds one false positive per resource at tau <= 0.35.
  EXPECT_NEAR(pooled(10, 0.3).micro_f1, 8.0 / 12.0, 1e-12);
  EXPECT_DOUBLE_EQ(pooled(10, 0.4).micro_f1, 1.0);
  // Selection prefers the best training cell, earliest in grid order.
  for (const auto& sel : rep.selections) {
    EXPECT_EQ(sel.k, 5u);
    EXPECT_DOUBLE_EQ(sel.tau, 0.3);
  }
}

TEST(Sweep, FoldSpecificKeys) {
  auto setup = small_setup();
  setup.fold_specific = true;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  PredictionCache cache([&](const CacheKey& k) {
    seen.insert({k.fold.value(), k.k});
    return run_for(k.k);
  });
  const auto rep = sweep_grid(setup, cache);
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(rep.cache_misses, 8u);
}

TEST(Sweep, CsvAndSummary) {
  const auto setup = small_setup();
  PredictionCache cache([](const CacheKey& k) { return run_for(k.k); });
  const auto rep = sweep_grid(setup, cache);
  const auto csv = sweep_csv(rep);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rep.rows.size() + 1);
  const auto summary = sweep_summary(rep);
  EXPECT_TRUE(summary.contains("selections"));
  EXPECT_TRUE(summary.contains("pooled"));
}

TEST(Evaluate, ResourceMetricsUseResourcesWithGold) {
  EvalInputs in;
  in.golds = {gold("r::f0", "U", {"a"})};
  in.fragment_predictions = {{"r::f0", {"a"}}};
  in.resource_predictions = {{"r", {"a"}}, {"other", {"b"}}};
  in.fragment_lengths = {{"r::f0", 5}};
  in.competencies = {"a", "b"};
  const auto m = evaluate(in);
  EXPECT_DOUBLE_EQ(m.micro_f1, 1.0);
  EXPECT_EQ(m.resources, 1u);
  EXPECT_DOUBLE_EQ(m.resource_macro_f1, 0.5);
}
