#include "comptag/aggregate.hpp"

#include <algorithm>

#include "comptag/error.hpp"
#include "comptag/retrieval.hpp"

namespace comptag {

using nlohmann::json;

std::string_view to_string(AggKind a) noexcept {
  switch (a) {
    case AggKind::Max: return "max";
    case AggKind::WeightedMean: return "weighted_mean";
    case AggKind::WeightedSum: return "weighted_sum";
  }
  return "max";
}

AggKind agg_kind_from_string(std::string_view s) {
  if (s == "max") return AggKind::Max;
  if (s == "weighted_mean") return AggKind::WeightedMean;
  if (s == "weighted_sum") return AggKind::WeightedSum;
  throw Error(ErrorCode::Config, "unknown aggregation '" + std::string(s) + "'");
}

double AggregationConfig::weight(ResourceKind kind) const {
  auto it = weights.find(kind);
  return it == weights.end() ? 1.0 : it->second;
}

json to_json(const ResourceScore& s) {
  json j = {{"resource_id", s.resource_id},
            {"scores", s.scores},
            {"mapping", std::vector<std::string>(s.mapping.begin(), s.mapping.end())}};
  j["topk"] = s.topk_mapping ? json(*s.topk_mapping) : json(nullptr);
  return j;
}

ResourceScore resource_score_from_json(const json& j) {
  try {
    ResourceScore s;
    s.resource_id = j.at("resource_id").get<std::string>();
    s.scores = j.at("scores").get<std::map<std::string, double>>();
    for (const auto& c : j.at("mapping")) s.mapping.insert(c.get<std::string>());
    if (auto it = j.find("topk"); it != j.end() && !it->is_null()) {
      s.topk_mapping = it->get<std::vector<std::string>>();
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad resource score: ") + e.what());
  }
}

std::map<std::string, double> score_resource(const std::vector<ReconciledSet>& fragments,
                                             ResourceKind kind, const AggregationConfig& cfg) {
  const double w = cfg.weight(kind);
  if (w < 0.0) throw Error(ErrorCode::Config, "fragment weights must be non-negative");
  std::map<std::string, double> out;
  if (fragments.empty()) return out;

  // conf(x,c) per fragment; repeated predictions of c in x count once (max).
  std::map<std::string, double> total;
  for (const auto& frag : fragments) {
    std::map<std::string, double> conf;
    for (const auto& p : frag.predictions) {
      if (cfg.prefilter && p.confidence < cfg.tau) continue;
      auto& v = conf[p.competency_id];
      v = std::max(v, p.confidence);
    }
    for (const auto& [c, v] : conf) {
      const double weighted = w * v;
      if (cfg.agg == AggKind::Max) {
        auto [it, inserted] = out.emplace(c, weighted);
        if (!inserted) it->second = std::max(it->second, weighted);
      } else {
        total[c] += weighted;
      }
    }
  }
  if (cfg.agg == AggKind::WeightedSum) return total;
  if (cfg.agg == AggKind::WeightedMean) {
    const double denom = w * static_cast<double>(fragments.size());
    for (const auto& [c, v] : total) out[c] = denom > 0.0 ? v / denom : 0.0;
  }
  return out;
}

ResourceScore map_resource(const std::string& resource_id,
                           const std::map<std::string, double>& scores,
                           const AggregationConfig& cfg) {
  ResourceScore rs{resource_id, scores, {}, std::nullopt};
  for (const auto& [c, s] : scores) {
    if (s >= cfg.tau) rs.mapping.insert(c);
  }
  if (cfg.topk) {
    std::vector<RankedEntry> ranked;
    for (const auto& [c, s] : scores) ranked.push_back({c, s});
    canonicalize(ranked);
    std::vector<std::string> top;
    for (std::size_t i = 0; i < ranked.size() && i < *cfg.topk; ++i) {
      top.push_back(ranked[i].competency_id);
    }
    rs.topk_mapping = std::move(top);
  }
  return rs;
}

}  // namespace comptag
