#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/graph.hpp"
#include "comptag/tagger.hpp"

namespace comptag {

enum class GranularityPolicy { KeepMostSpecific, KeepMostGeneral };

struct DroppedPrediction {
  TagPrediction prediction;
  std::string reason;
};

struct ReconciledSet {
  std::string fragment_id;
  std::vector<TagPrediction> predictions;
  std::vector<DroppedPrediction> dropped;
};

enum class Severity { Info, Warning };
std::string_view to_string(Severity s) noexcept;

/// Advisory only; never alters predictions.
struct CoherenceFlag {
  std::string resource_id;
  std::string flagged_competency;
  IdSet missing_prerequisites;
  Severity severity = Severity::Warning;
};

nlohmann::json to_json(const CoherenceFlag& f);
nlohmann::json to_json(const DroppedPrediction& d);

struct ReconcileOptions {
  bool granularity = true;
  GranularityPolicy policy = GranularityPolicy::KeepMostSpecific;
  bool dedup = true;
  bool transitive_prerequisites = false;
};

/// Canonical order: evidence_start, competency_id, then the remaining fields.
void sort_predictions(std::vector<TagPrediction>& preds);

/// Within one fragment, drops a competency when one of its strict
/// descendants is also predicted (reason "ancestor-of-selected"), or the
/// reverse under KeepMostGeneral ("descendant-of-selected").
ReconciledSet granularity_filter(const std::vector<TagPrediction>& preds,
                                 const CompetencyGraph& g,
                                 GranularityPolicy policy = GranularityPolicy::KeepMostSpecific);

/// Keeps one prediction per competency: highest confidence, then earliest
/// evidence span.
ReconciledSet dedup(const std::vector<TagPrediction>& preds);

/// granularity_filter then dedup, as enabled in `opts`.
ReconciledSet reconcile_fragment(const std::string& fragment_id,
                                 const std::vector<TagPrediction>& preds,
                                 const CompetencyGraph& g, const ReconcileOptions& opts = {});

/// For every competency predicted in the resource, flags the direct (or
/// transitive) prerequisites that have no prediction anywhere in it.
/// Flags come out sorted by competency id.
std::vector<CoherenceFlag> coherence_flags(
    const std::string& resource_id,
    const std::map<std::string, std::vector<TagPrediction>>& by_fragment,
    const CompetencyGraph& g, bool transitive = false);

}  // namespace comptag
