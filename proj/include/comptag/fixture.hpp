#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "comptag/corpus.hpp"
#include "comptag/eval.hpp"
#include "comptag/graph.hpp"
#include "comptag/tagger.hpp"

namespace comptag::fixture {

// ---------------------------------------------------------------- ML101

/// Five competencies c1..c5 (linear algebra, probability, supervised
/// learning, linear regression, logistic regression) with the prerequisite
/// edges c1->c4, c2->c3, c3->c4, c3->c5.
CompetencyGraph ml101_graph();

/// resource id -> fragment id -> predictions, every confidence 0.8:
/// x1,2:{c3}  x2,2:{c3,c5}  x3,1:{c3}  x4,1:{c5}; the other fragments are empty.
using ResourcePredictions = std::map<std::string, std::map<std::string, std::vector<TagPrediction>>>;
ResourcePredictions ml101_predictions();

// ---------------------------------------------------------------- synthetic

struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::size_t courses = 26;
  std::size_t resources = 430;
  std::size_t extra_gold = 2;  // annotated second fragments
};

struct SyntheticDataset {
  CompetencyGraph graph;
  std::vector<Resource> resources;
  std::vector<GoldAnnotation> gold;
};

/// 22 competencies; every annotated fragment contains the literal label of
/// each of its gold competencies and no other label or alias. Output is a
/// pure function of the options.
SyntheticDataset generate(const SyntheticOptions& opts);

/// Writes graph.json, resources.jsonl, gold.jsonl and a config.json whose
/// paths are relative to `dir`.
void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir,
                   std::uint64_t seed);

}  // namespace comptag::fixture
