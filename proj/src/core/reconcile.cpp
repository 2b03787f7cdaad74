#include "comptag/reconcile.hpp"

#include <algorithm>
#include <tuple>

#include "comptag/error.hpp"

namespace comptag {

using nlohmann::json;

std::string_view to_string(Severity s) noexcept {
  return s == Severity::Info ? "info" : "warning";
}

json to_json(const CoherenceFlag& f) {
  return {{"resource_id", f.resource_id},
          {"competency_id", f.flagged_competency},
          {"missing_prerequisites", std::vector<std::string>(f.missing_prerequisites.begin(),
                                                             f.missing_prerequisites.end())},
          {"severity", to_string(f.severity)}};
}

json to_json(const DroppedPrediction& d) {
  json j = to_json(d.prediction);
  j["reason"] = d.reason;
  return j;
}

void sort_predictions(std::vector<TagPrediction>& preds) {
  std::sort(preds.begin(), preds.end(), [](const TagPrediction& a, const TagPrediction& b) {
    return std::tie(a.evidence_start, a.competency_id, a.evidence_end, b.confidence,
                    a.evidence_text, a.fragment_id) <
           std::tie(b.evidence_start, b.competency_id, b.evidence_end, a.confidence,
                    b.evidence_text, b.fragment_id);
  });
}

namespace {

std::string fragment_of(const std::vector<TagPrediction>& preds) {
  return preds.empty() ? std::string{} : preds.front().fragment_id;
}

}  // namespace

ReconciledSet granularity_filter(const std::vector<TagPrediction>& preds,
                                 const CompetencyGraph& g, GranularityPolicy policy) {
  IdSet predicted;
  for (const auto& p : preds) {
    if (!g.contains(p.competency_id)) {
      throw Error(ErrorCode::UnknownCompetency,
                  "prediction names unknown competency '" + p.competency_id + "'");
    }
    predicted.insert(p.competency_id);
  }
  // Competencies to drop: those related (by strict ancestry in the chosen
  // direction) to another predicted competency.
  IdSet drop;
  for (const auto& c : predicted) {
    const auto related = policy == GranularityPolicy::KeepMostSpecific ? g.ancestors(c)
                                                                       : g.descendants(c);
    for (const auto& r : related) {
      if (predicted.count(r)) drop.insert(r);
    }
  }
  const char* reason = policy == GranularityPolicy::KeepMostSpecific ? "ancestor-of-selected"
                                                                     : "descendant-of-selected";
  ReconciledSet out{fragment_of(preds), {}, {}};
  for (const auto& p : preds) {
    if (drop.count(p.competency_id)) {
      out.dropped.push_back({p, reason});
    } else {
      out.predictions.push_back(p);
    }
  }
  sort_predictions(out.predictions);
  return out;
}

ReconciledSet dedup(const std::vector<TagPrediction>& preds) {
  std::vector<TagPrediction> sorted = preds;
  // Best first within each competency.
  std::sort(sorted.begin(), sorted.end(), [](const TagPrediction& a, const TagPrediction& b) {
    return std::tie(a.competency_id, b.confidence, a.evidence_start, a.evidence_end,
                    a.evidence_text) <
           std::tie(b.competency_id, a.confidence, b.evidence_start, b.evidence_end,
                    b.evidence_text);
  });
  ReconciledSet out{fragment_of(preds), {}, {}};
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i].competency_id == sorted[i - 1].competency_id) {
      out.dropped.push_back({sorted[i], "duplicate"});
    } else {
      out.predictions.push_back(sorted[i]);
    }
  }
  sort_predictions(out.predictions);
  return out;
}

ReconciledSet reconcile_fragment(const std::string& fragment_id,
                                 const std::vector<TagPrediction>& preds,
                                 const CompetencyGraph& g, const ReconcileOptions& opts) {
  ReconciledSet out{fragment_id, preds, {}};
  if (opts.granularity) {
    auto step = granularity_filter(out.predictions, g, opts.policy);
    out.predictions = std::move(step.predictions);
    out.dropped.insert(out.dropped.end(), step.dropped.begin(), step.dropped.end());
  }
  if (opts.dedup) {
    auto step = dedup(out.predictions);
    out.predictions = std::move(step.predictions);
    out.dropped.insert(out.dropped.end(), step.dropped.begin(), step.dropped.end());
  }
  sort_predictions(out.predictions);
  out.fragment_id = fragment_id;
  return out;
}

std::vector<CoherenceFlag> coherence_flags(
    const std::string& resource_id,
    const std::map<std::string, std::vector<TagPrediction>>& by_fragment,
    const CompetencyGraph& g, bool transitive) {
  IdSet predicted;
  for (const auto& [fid, preds] : by_fragment) {
    for (const auto& p : preds) predicted.insert(p.competency_id);
  }
  std::vector<CoherenceFlag> flags;
  for (const auto& c : predicted) {
    const auto prereqs = transitive ? g.prerequisites_of(c) : g.direct_prerequisites(c);
    IdSet missing;
    for (const auto& p : prereqs) {
      if (!predicted.count(p)) missing.insert(p);
    }
    if (missing.empty()) continue;
    const auto severity = missing.size() == prereqs.size() ? Severity::Warning : Severity::Info;
    flags.push_back({resource_id, c, std::move(missing), severity});
  }
  return flags;
}

}  // namespace comptag
