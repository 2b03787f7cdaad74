#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/aggregate.hpp"
#include "comptag/corpus.hpp"
#include "comptag/graph.hpp"
#include "comptag/retrieval.hpp"
#include "comptag/tagger.hpp"

namespace comptag {

struct GoldAnnotation {
  std::string fragment_id;
  std::string resource_id;
  std::string course_id;
  IdSet gold;
};

nlohmann::json to_json(const GoldAnnotation& g);
/// Rejects a fragment annotated twice; with a graph, also unknown labels.
std::vector<GoldAnnotation> load_gold(const std::filesystem::path& path,
                                      const CompetencyGraph* graph = nullptr);

/// unit id -> label set
using LabelSets = std::map<std::string, IdSet>;

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// 2TP / (2TP + FP + FN), defined as 0 when the denominator is 0.
double f1_from_counts(const Counts& c);

struct ClassScore {
  std::string competency_id;
  Counts counts;
  double f1 = 0.0;
};

struct F1Report {
  Counts pooled;
  std::vector<ClassScore> per_class;
  double micro = 0.0;
  double macro = 0.0;
};

/// `golds` must cover exactly `units`; `preds` may omit units (empty
/// prediction) but may not name others. Macro averages over every
/// competency in `competencies`, including ones absent from gold.
F1Report f1_report(const LabelSets& golds, const LabelSets& preds,
                   const std::vector<std::string>& units,
                   const std::vector<std::string>& competencies);
double micro_f1(const LabelSets& golds, const LabelSets& preds,
                const std::vector<std::string>& units);
double macro_f1(const LabelSets& golds, const LabelSets& preds,
                const std::vector<std::string>& units,
                const std::vector<std::string>& competencies);

/// Union of fragment gold per resource.
LabelSets derive_resource_gold(const std::vector<GoldAnnotation>& golds);

/// Share of spans with 0 <= a < b <= |x|; 1.0 when there are none.
double span_valid(const std::vector<RawSpan>& raw_spans,
                  const std::map<std::string, std::size_t>& fragment_lengths);

/// Mean over fragments with non-empty gold of 1/rank of the first gold hit
/// within the top K (0 if none). A fragment without a list scores 0.
double mrr(const std::map<std::string, RankedList>& ranked, const LabelSets& golds, std::size_t k);

/// Accepted predictions ranked by descending confidence.
RankedList rank_predictions(const std::string& fragment_id,
                            const std::vector<TagPrediction>& preds);

struct FoldSpec {
  std::size_t n_folds = 0;
  std::map<std::string, std::size_t> assignment;  // course_id -> fold

  std::size_t fold_of(const std::string& course_id) const;
};

nlohmann::json to_json(const FoldSpec& f);

/// Courses are shuffled with a seeded Fisher-Yates pass over mt19937_64
/// and dealt round-robin into folds.
FoldSpec make_folds(const std::vector<GoldAnnotation>& golds, std::size_t n_folds,
                    std::uint64_t seed);

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double resource_macro_f1 = 0.0;
  double span_valid = 1.0;
  double mrr = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  Counts pooled;
  std::vector<ClassScore> per_class;
  std::size_t fragments = 0;
  std::size_t resources = 0;
};

nlohmann::json to_json(const MetricsReport& m);

struct EvalInputs {
  std::vector<GoldAnnotation> golds;        // the evaluated fragment units
  LabelSets fragment_predictions;           // Y^_x per unit
  LabelSets resource_predictions;           // M(r)
  std::vector<RawSpan> raw_spans;
  std::map<std::string, std::size_t> fragment_lengths;
  std::map<std::string, RankedList> ranked;
  std::size_t k = 20;
  std::vector<std::string> competencies;
};

MetricsReport evaluate(const EvalInputs& in);

// ---------------------------------------------------------------- sweep

/// Reconciled predictions for every fragment, produced by one tagging run.
struct FragmentRun {
  std::map<std::string, std::vector<TagPrediction>> predictions;
  std::map<std::string, std::vector<RawSpan>> raw_spans;
  std::size_t discarded = 0;
};

std::vector<nlohmann::json> to_jsonl(const FragmentRun& run);
FragmentRun fragment_run_from_jsonl(const std::vector<nlohmann::json>& lines);

struct CacheKey {
  std::optional<std::size_t> fold;  // set only for fold-dependent tagging
  std::size_t k = 0;
  auto operator<=>(const CacheKey&) const = default;
};

/// Write-once store of tagging runs keyed by (fold, K). A miss runs the
/// producer; without one, a miss raises MissingCache. When a directory is
/// given, runs are persisted there and reloaded on later misses.
class PredictionCache {
 public:
  using Producer = std::function<FragmentRun(const CacheKey&)>;

  explicit PredictionCache(Producer producer = {}, std::optional<std::filesystem::path> dir = {})
      : producer_(std::move(producer)), dir_(std::move(dir)) {}

  const FragmentRun& get(const CacheKey& key);
  const FragmentRun& peek(const CacheKey& key) const;
  void put(const CacheKey& key, FragmentRun run);

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }
  std::size_t disk_loads() const noexcept { return disk_loads_; }
  std::filesystem::path file_for(const CacheKey& key) const;

 private:
  Producer producer_;
  std::optional<std::filesystem::path> dir_;
  std::map<CacheKey, FragmentRun> runs_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
  std::size_t disk_loads_ = 0;
};

struct SweepSetup {
  std::vector<GoldAnnotation> golds;
  std::map<std::string, std::vector<std::string>> resource_fragments;  // all fragments
  std::map<std::string, ResourceKind> resource_kinds;
  std::map<std::string, std::string> resource_courses;
  std::map<std::string, std::size_t> fragment_lengths;
  std::vector<std::string> competencies;
  FoldSpec folds;
  std::vector<std::size_t> k_grid{5, 10, 15, 20};
  std::vector<double> tau_grid{0.3, 0.4, 0.5, 0.6};
  AggregationConfig aggregation;  // tau is set per cell
  bool fold_specific = false;
};

struct SweepRow {
  std::string fold;  // fold index, or "pooled"
  std::size_t k = 0;
  double tau = 0.0;
  MetricsReport metrics;
};

struct FoldSelection {
  std::size_t fold = 0;
  std::size_t k = 0;
  double tau = 0.0;
  double train_micro_f1 = 0.0;
  MetricsReport held_out;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<FoldSelection> selections;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

/// Evaluates the (K, tau) grid on every held-out fold, pools held-out
/// predictions across folds, and per fold selects the cell with the best
/// micro-F1 on the training folds. Tagging happens once per cache key;
/// tau only re-thresholds.
SweepReport sweep_grid(const SweepSetup& setup, PredictionCache& cache);

std::string sweep_csv(const SweepReport& report);
nlohmann::json sweep_summary(const SweepReport& report);

/// Metrics of one run on the given units at a fixed (K, tau).
MetricsReport evaluate_run(const SweepSetup& setup, const FragmentRun& run,
                           const std::vector<GoldAnnotation>& units, std::size_t k, double tau);

}  // namespace comptag
