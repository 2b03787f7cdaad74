#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/aggregate.hpp"
#include "comptag/corpus.hpp"
#include "comptag/reconcile.hpp"
#include "comptag/retrieval.hpp"
#include "comptag/tagger.hpp"

namespace comptag {

inline constexpr std::string_view kVersion = "0.1.0";

enum class RetrievalMethod { Bm25, Cosine, Pairs, Rrf };
std::string_view to_string(RetrievalMethod m) noexcept;
RetrievalMethod retrieval_method_from_string(std::string_view s);

enum class ProviderKind { Mock, Http, Replay };
std::string_view to_string(ProviderKind p) noexcept;
ProviderKind provider_kind_from_string(std::string_view s);

/// What `evaluate` scores: the tagged pipeline output, or the retrieval
/// ranking itself (top-K as the predicted set).
enum class EvalSource { Pipeline, Ranking };

struct RunConfig {
  struct Paths {
    std::filesystem::path corpus;
    std::filesystem::path graph;
    std::filesystem::path gold;
    std::filesystem::path vectors;
    std::filesystem::path pair_scores;
    std::filesystem::path out = "out";
  } paths;

  FragmentConfig fragmentation;

  struct Retrieval {
    RetrievalMethod method = RetrievalMethod::Bm25;
    std::size_t k = 20;
    Bm25Params bm25;
    int k_rrf = 60;
    std::vector<RetrievalMethod> fuse{RetrievalMethod::Bm25, RetrievalMethod::Cosine};
  } retrieval;

  struct Tagger {
    TagMode mode = TagMode::Constrained;
    ProviderKind provider = ProviderKind::Mock;
    TaggerSettings settings;
    PromptLanguage language = PromptLanguage::En;
    std::size_t demonstrations = 3;
    std::size_t full_inventory_limit = 50;
    std::string base_url = "https://api.openai.com/v1";
    int max_attempts = 3;
    std::filesystem::path replay_log;  // defaults to <out>/raw_log.jsonl
  } tagger;

  ReconcileOptions reconcile;
  AggregationConfig aggregation;

  struct Eval {
    EvalSource source = EvalSource::Pipeline;
    std::size_t n_folds = 5;
    std::vector<std::size_t> k_grid{5, 10, 15, 20};
    std::vector<double> tau_grid{0.3, 0.4, 0.5, 0.6};
  } eval;

  std::uint64_t seed = 13;

  /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  /// Every field, defaults included.
  nlohmann::json to_json() const;
};

enum class Stage { Ingest, Fragment, Retrieve, Tag, Reconcile, Aggregate, Evaluate, Sweep };
std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);

/// Runs one stage at a time against the artifact directory `paths.out`.
/// Each stage reads its predecessors' files, raises MissingStageInput when
/// one is absent, and writes its outputs plus manifest_<stage>.json.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config) : config_(std::move(config)) {}

  /// Returns a short report (counts, outputs) that is also stored in the
  /// stage manifest.
  nlohmann::json run(Stage stage);
  const RunConfig& config() const noexcept { return config_; }

 private:
  nlohmann::json ingest();
  nlohmann::json fragment();
  nlohmann::json retrieve();
  nlohmann::json tag();
  nlohmann::json reconcile();
  nlohmann::json aggregate();
  nlohmann::json evaluate();
  nlohmann::json sweep();

  std::filesystem::path out(std::string_view name) const { return config_.paths.out / name; }
  std::filesystem::path require(const std::filesystem::path& p, std::string_view what);
  void write_manifest(Stage stage, const nlohmann::json& report);

  RunConfig config_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
};

}  // namespace comptag
