#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/corpus.hpp"
#include "comptag/graph.hpp"
#include "comptag/reconcile.hpp"

namespace comptag {

enum class AggKind { Max, WeightedMean, WeightedSum };
std::string_view to_string(AggKind a) noexcept;
AggKind agg_kind_from_string(std::string_view s);

struct AggregationConfig {
  AggKind agg = AggKind::Max;
  std::map<ResourceKind, double> weights;  // unlisted kinds weigh 1.0
  double tau = 0.4;
  std::optional<std::size_t> topk;
  // Also drop fragment predictions below tau before aggregating.
  bool prefilter = false;

  double weight(ResourceKind kind) const;
};

struct ResourceScore {
  std::string resource_id;
  std::map<std::string, double> scores;
  IdSet mapping;
  std::optional<std::vector<std::string>> topk_mapping;
};

nlohmann::json to_json(const ResourceScore& s);
ResourceScore resource_score_from_json(const nlohmann::json& j);

/// s(r,c) = Agg over fragments of w(x) * conf(x,c), where conf is 0 for
/// fragments that did not predict c. Competencies predicted nowhere are
/// absent from the result. All fragments belong to one resource of `kind`.
std::map<std::string, double> score_resource(const std::vector<ReconciledSet>& fragments,
                                             ResourceKind kind, const AggregationConfig& cfg);

/// Inclusive threshold at tau plus the optional top-k list (ties by id).
ResourceScore map_resource(const std::string& resource_id,
                           const std::map<std::string, double>& scores,
                           const AggregationConfig& cfg);

}  // namespace comptag
