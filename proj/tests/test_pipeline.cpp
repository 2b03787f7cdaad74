#include <gtest/gtest.h>

#include "comptag/error.hpp"
#include "comptag/fixture.hpp"
#include "comptag/io.hpp"
#include "comptag/pipeline.hpp"
#include "test_util.hpp"

using namespace comptag;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// A small synthetic dataset keeps these tests fast.
RunConfig small_config(const testutil::TempDir& dir) {
  fixture::SyntheticOptions opts;
  opts.courses = 6;
  opts.resources = 40;
  fixture::write_dataset(fixture::generate(opts), dir.path(), opts.seed);
  return RunConfig::load(dir / "config.json");
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

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.retrieval.k, 20u);
  EXPECT_EQ(c.eval.n_folds, 5u);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_EQ(code_of([] { RunConfig::from_json({{"bogus", 1}}); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { RunConfig::from_json({{"retrieval", {{"kk", 3}}}}); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { RunConfig::from_json({{"retrieval", {{"method", "magic"}}}}); }), ErrorCode::Config);
  EXPECT_EQ(code_of([] { RunConfig::from_json({{"tagger", {{"mode", "guess"}}}}); }), ErrorCode::Config);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const auto c = RunConfig::from_json({{"paths", {{"corpus", "data/c.jsonl"}}}}, "/base");
  EXPECT_EQ(c.paths.corpus, fs::path("/base/data/c.jsonl"));
}

TEST(Stages, EvaluateWithoutPredictionsIsMissingStageInput) {
  testutil::TempDir dir;
  auto cfg = small_config(dir);
  Pipeline p(cfg);
  p.run(Stage::Ingest);
  p.run(Stage::Fragment);
  EXPECT_EQ(code_of([&] { p.run(Stage::Evaluate); }), ErrorCode::MissingStageInput);
  EXPECT_EQ(code_of([&] { Pipeline(cfg).run(Stage::Reconcile); }), ErrorCode::MissingStageInput);
}

TEST(Stages, HttpProviderNeedsKey) {
  testutil::TempDir dir;
  auto cfg = small_config(dir);
  cfg.tagger.provider = ProviderKind::Http;
  Pipeline p(cfg);
  p.run(Stage::Ingest);
  p.run(Stage::Fragment);
  p.run(Stage::Retrieve);
  ::unsetenv("COMPTAG_API_KEY");
  EXPECT_EQ(code_of([&] { p.run(Stage::Tag); }), ErrorCode::Config);
}

TEST(EndToEnd, MockRunWritesAllArtifacts) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir);
  Pipeline p(cfg);
  json last;
  for (auto s : {Stage::Ingest, Stage::Fragment, Stage::Retrieve, Stage::Tag, Stage::Reconcile,
                 Stage::Aggregate, Stage::Evaluate}) {
    last = p.run(s);
    EXPECT_TRUE(fs::exists(cfg.paths.out / ("manifest_" + std::string(to_string(s)) + ".json")));
  }
  for (const char* f : {"resources.jsonl", "fragments.jsonl", "candidates.jsonl", "predictions.jsonl",
                        "raw_spans.jsonl", "raw_log.jsonl", "tag_summary.json", "reconciled.jsonl",
                        "dropped.jsonl", "flags.jsonl", "resource_scores.jsonl", "metrics.json"}) {
    EXPECT_TRUE(fs::exists(cfg.paths.out / f)) << f;
  }
  EXPECT_DOUBLE_EQ(last["micro_f1"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(last["span_valid"].get<double>(), 1.0);
  const auto manifest = json::parse(io::read_file(cfg.paths.out / "manifest_tag.json"));
  EXPECT_EQ(manifest["version"], std::string(kVersion));
  EXPECT_EQ(manifest["seed"], cfg.seed);
  EXPECT_FALSE(manifest["inputs"].empty());
}

TEST(EndToEnd, RerunIsByteIdentical) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir);
  Pipeline p(cfg);
  for (auto s : {Stage::Ingest, Stage::Fragment, Stage::Retrieve, Stage::Tag, Stage::Reconcile}) p.run(s);
  const auto first = io::read_file(cfg.paths.out / "reconciled.jsonl");
  const auto log = io::read_file(cfg.paths.out / "raw_log.jsonl");
  for (auto s : {Stage::Tag, Stage::Reconcile}) p.run(s);
  EXPECT_EQ(io::read_file(cfg.paths.out / "reconciled.jsonl"), first);
  EXPECT_EQ(io::read_file(cfg.paths.out / "raw_log.jsonl"), log);
}

TEST(EndToEnd, ReplayReproducesMockRun) {
  testutil::TempDir dir;
  auto cfg = small_config(dir);
  Pipeline p(cfg);
  for (auto s : {Stage::Ingest, Stage::Fragment, Stage::Retrieve, Stage::Tag}) p.run(s);
  const auto preds = io::read_file(cfg.paths.out / "predictions.jsonl");
  fs::copy_file(cfg.paths.out / "raw_log.jsonl", dir / "log.jsonl");
  cfg.tagger.provider = ProviderKind::Replay;
  cfg.tagger.replay_log = dir / "log.jsonl";
  Pipeline(cfg).run(Stage::Tag);
  EXPECT_EQ(io::read_file(cfg.paths.out / "predictions.jsonl"), preds);
}

TEST(EndToEnd, RankingSourceEvaluates) {
  testutil::TempDir dir;
  auto cfg = small_config(dir);
  cfg.eval.source = EvalSource::Ranking;
  Pipeline p(cfg);
  for (auto s : {Stage::Ingest, Stage::Fragment, Stage::Retrieve}) p.run(s);
  const auto rep = p.run(Stage::Evaluate);
  EXPECT_GT(rep["mrr"].get<double>(), 0.0);
  EXPECT_LE(rep["micro_f1"].get<double>(), 1.0);
}

TEST(EndToEnd, SweepCoversGridAndReusesTagging) {
  testutil::TempDir dir;
  auto cfg = small_config(dir);
  cfg.eval.n_folds = 3;
  Pipeline p(cfg);
  for (auto s : {Stage::Ingest, Stage::Fragment, Stage::Retrieve}) p.run(s);
  p.run(Stage::Sweep);
  const auto summary = json::parse(io::read_file(cfg.paths.out / "sweep_summary.json"));
  EXPECT_EQ(summary["cache"]["misses"], 4);
  EXPECT_EQ(summary["cache"]["hits"], 3 * 16 - 4);
  EXPECT_EQ(summary["pooled"].size(), 16u);
  const auto csv = io::read_file(cfg.paths.out / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 16 + 16);
}

TEST(Fixture, SameSeedByteIdentical) {
  testutil::TempDir a, b;
  fixture::write_dataset(fixture::generate({}), a.path(), 7);
  fixture::write_dataset(fixture::generate({}), b.path(), 7);
  for (const char* f : {"graph.json", "resources.jsonl", "gold.jsonl", "config.json"}) {
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
  }
}

TEST(Fixture, ShapeMatchesOptions) {
  const auto ds = fixture::generate({});
  EXPECT_EQ(ds.graph.size(), 22u);
  EXPECT_EQ(ds.resources.size(), 430u);
  std::set<std::string> courses;
  for (const auto& r : ds.resources) courses.insert(r.course_id);
  EXPECT_EQ(courses.size(), 26u);
  EXPECT_TRUE(validate_hierarchy(ds.graph).empty());
  for (const auto& g : ds.gold) {
    EXPECT_FALSE(g.gold.empty());
    for (const auto& c : g.gold) {
      for (const auto& a : ds.graph.ancestors(c)) EXPECT_EQ(g.gold.count(a), 0u);
    }
  }
}

TEST(Fixture, DifferentSeedDiffers) {
  fixture::SyntheticOptions o;
  o.seed = 8;
  EXPECT_NE(fixture::generate(o).resources[0].body, fixture::generate({}).resources[0].body);
}
