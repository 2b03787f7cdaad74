#include "comptag/eval.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "comptag/error.hpp"
#include "comptag/io.hpp"

namespace comptag {

using nlohmann::json;

json to_json(const GoldAnnotation& g) {
  return {{"fragment_id", g.fragment_id},
          {"resource_id", g.resource_id},
          {"course_id", g.course_id},
          {"gold", std::vector<std::string>(g.gold.begin(), g.gold.end())}};
}

std::vector<GoldAnnotation> load_gold(const std::filesystem::path& path,
                                      const CompetencyGraph* graph) {
  std::vector<GoldAnnotation> out;
  std::set<std::string> seen;
  io::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    const auto where = path.string() + ":" + std::to_string(line_no);
    GoldAnnotation g;
    try {
      g.fragment_id = j.at("fragment_id").get<std::string>();
      g.resource_id = j.at("resource_id").get<std::string>();
      g.course_id = j.at("course_id").get<std::string>();
      for (const auto& c : j.at("gold")) g.gold.insert(c.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    }
    if (!seen.insert(g.fragment_id).second) {
      throw Error(ErrorCode::MalformedRecord,
                  where + ": fragment '" + g.fragment_id + "' annotated twice");
    }
    if (graph) {
      for (const auto& c : g.gold) {
        if (!graph->contains(c)) {
          throw Error(ErrorCode::UnknownCompetency, where + ": unknown competency '" + c + "'");
        }
      }
    }
    out.push_back(std::move(g));
  });
  return out;
}

double f1_from_counts(const Counts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

namespace {

void check_units(const LabelSets& golds, const LabelSets& preds,
                 const std::vector<std::string>& units) {
  const std::set<std::string> unit_set(units.begin(), units.end());
  if (unit_set.size() != units.size()) {
    throw Error(ErrorCode::UnitMismatch, "duplicate evaluation unit");
  }
  if (golds.size() != unit_set.size()) {
    throw Error(ErrorCode::UnitMismatch, "gold labels do not cover exactly the evaluated units");
  }
  for (const auto& [u, _] : golds) {
    if (!unit_set.count(u)) throw Error(ErrorCode::UnitMismatch, "gold for unknown unit '" + u + "'");
  }
  for (const auto& [u, _] : preds) {
    if (!unit_set.count(u)) {
      throw Error(ErrorCode::UnitMismatch, "prediction for unknown unit '" + u + "'");
    }
  }
}

const IdSet& labels_or_empty(const LabelSets& sets, const std::string& unit) {
  static const IdSet kEmpty;
  auto it = sets.find(unit);
  return it == sets.end() ? kEmpty : it->second;
}

}  // namespace

F1Report f1_report(const LabelSets& golds, const LabelSets& preds,
                   const std::vector<std::string>& units,
                   const std::vector<std::string>& competencies) {
  check_units(golds, preds, units);
  F1Report r;
  std::map<std::string, Counts> per_class;
  for (const auto& c : competencies) per_class[c];
  for (const auto& u : units) {
    const auto& g = labels_or_empty(golds, u);
    const auto& p = labels_or_empty(preds, u);
    for (const auto& c : p) {
      const bool hit = g.count(c) > 0;
      ++(hit ? r.pooled.tp : r.pooled.fp);
      if (auto it = per_class.find(c); it != per_class.end()) ++(hit ? it->second.tp : it->second.fp);
    }
    for (const auto& c : g) {
      if (p.count(c)) continue;
      ++r.pooled.fn;
      if (auto it = per_class.find(c); it != per_class.end()) ++it->second.fn;
    }
  }
  r.micro = f1_from_counts(r.pooled);
  double sum = 0.0;
  for (const auto& c : competencies) {
    const auto& counts = per_class[c];
    const double f1 = f1_from_counts(counts);
    r.per_class.push_back({c, counts, f1});
    sum += f1;
  }
  r.macro = competencies.empty() ? 0.0 : sum / static_cast<double>(competencies.size());
  return r;
}

double micro_f1(const LabelSets& golds, const LabelSets& preds,
                const std::vector<std::string>& units) {
  return f1_report(golds, preds, units, {}).micro;
}

double macro_f1(const LabelSets& golds, const LabelSets& preds,
                const std::vector<std::string>& units,
                const std::vector<std::string>& competencies) {
  return f1_report(golds, preds, units, competencies).macro;
}

LabelSets derive_resource_gold(const std::vector<GoldAnnotation>& golds) {
  LabelSets out;
  for (const auto& g : golds) out[g.resource_id].insert(g.gold.begin(), g.gold.end());
  return out;
}

double span_valid(const std::vector<RawSpan>& raw_spans,
                  const std::map<std::string, std::size_t>& fragment_lengths) {
  if (raw_spans.empty()) return 1.0;
  std::size_t valid = 0;
  for (const auto& s : raw_spans) {
    auto it = fragment_lengths.find(s.fragment_id);
    if (it == fragment_lengths.end()) {
      throw Error(ErrorCode::UnknownFragment, "span for unknown fragment '" + s.fragment_id + "'");
    }
    const auto len = static_cast<long long>(it->second);
    if (s.typed && 0 <= s.start && s.start < s.end && s.end <= len) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(raw_spans.size());
}

double mrr(const std::map<std::string, RankedList>& ranked, const LabelSets& golds, std::size_t k) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& [fid, gold] : golds) {
    if (gold.empty()) continue;
    ++n;
    auto it = ranked.find(fid);
    if (it == ranked.end()) continue;
    const auto& entries = it->second.entries;
    for (std::size_t r = 0; r < entries.size() && r < k; ++r) {
      if (gold.count(entries[r].competency_id)) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

RankedList rank_predictions(const std::string& fragment_id,
                            const std::vector<TagPrediction>& preds) {
  std::map<std::string, double> best;
  for (const auto& p : preds) {
    auto [it, inserted] = best.emplace(p.competency_id, p.confidence);
    if (!inserted) it->second = std::max(it->second, p.confidence);
  }
  RankedList rl{fragment_id, {}};
  for (const auto& [c, s] : best) rl.entries.push_back({c, s});
  canonicalize(rl.entries);
  return rl;
}

std::size_t FoldSpec::fold_of(const std::string& course_id) const {
  auto it = assignment.find(course_id);
  if (it == assignment.end()) {
    throw Error(ErrorCode::InvalidArgument, "course '" + course_id + "' has no fold");
  }
  return it->second;
}

json to_json(const FoldSpec& f) {
  return {{"n_folds", f.n_folds}, {"assignment", f.assignment}};
}

FoldSpec make_folds(const std::vector<GoldAnnotation>& golds, std::size_t n_folds,
                    std::uint64_t seed) {
  std::set<std::string> unique;
  for (const auto& g : golds) unique.insert(g.course_id);
  std::vector<std::string> courses(unique.begin(), unique.end());
  if (n_folds == 0 || n_folds > courses.size()) {
    throw Error(ErrorCode::TooFewGroups, "cannot split " + std::to_string(courses.size()) +
                                             " course units into " + std::to_string(n_folds) +
                                             " folds");
  }
  // std::shuffle is implementation-defined; this pass is portable.
  std::mt19937_64 rng(seed);
  for (std::size_t i = courses.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(courses[i - 1], courses[j]);
  }
  FoldSpec spec{n_folds, {}};
  for (std::size_t i = 0; i < courses.size(); ++i) spec.assignment[courses[i]] = i % n_folds;
  return spec;
}

json to_json(const MetricsReport& m) {
  json classes = json::array();
  for (const auto& c : m.per_class) {
    classes.push_back({{"competency_id", c.competency_id},
                       {"tp", c.counts.tp},
                       {"fp", c.counts.fp},
                       {"fn", c.counts.fn},
                       {"f1", c.f1}});
  }
  return {{"micro_f1", m.micro_f1},
          {"macro_f1", m.macro_f1},
          {"resource_macro_f1", m.resource_macro_f1},
          {"span_valid", m.span_valid},
          {"mrr", m.mrr},
          {"micro_precision", m.micro_precision},
          {"micro_recall", m.micro_recall},
          {"counts", {{"tp", m.pooled.tp}, {"fp", m.pooled.fp}, {"fn", m.pooled.fn}}},
          {"fragments", m.fragments},
          {"resources", m.resources},
          {"per_competency", std::move(classes)}};
}

MetricsReport evaluate(const EvalInputs& in) {
  MetricsReport m;
  LabelSets golds;
  std::vector<std::string> units;
  for (const auto& g : in.golds) {
    golds[g.fragment_id] = g.gold;
    units.push_back(g.fragment_id);
  }
  LabelSets preds;
  for (const auto& u : units) {
    if (auto it = in.fragment_predictions.find(u); it != in.fragment_predictions.end()) {
      preds[u] = it->second;
    }
  }
  const auto frag = f1_report(golds, preds, units, in.competencies);
  m.micro_f1 = frag.micro;
  m.macro_f1 = frag.macro;
  m.pooled = frag.pooled;
  m.per_class = frag.per_class;
  const auto predicted = m.pooled.tp + m.pooled.fp;
  const auto relevant = m.pooled.tp + m.pooled.fn;
  m.micro_precision = predicted ? static_cast<double>(m.pooled.tp) / predicted : 0.0;
  m.micro_recall = relevant ? static_cast<double>(m.pooled.tp) / relevant : 0.0;
  m.fragments = units.size();

  const auto res_gold = derive_resource_gold(in.golds);
  std::vector<std::string> res_units;
  LabelSets res_preds;
  for (const auto& [r, _] : res_gold) {
    res_units.push_back(r);
    if (auto it = in.resource_predictions.find(r); it != in.resource_predictions.end()) {
      res_preds[r] = it->second;
    }
  }
  m.resource_macro_f1 = f1_report(res_gold, res_preds, res_units, in.competencies).macro;
  m.resources = res_units.size();

  m.span_valid = span_valid(in.raw_spans, in.fragment_lengths);
  m.mrr = mrr(in.ranked, golds, in.k);
  return m;
}

// ---------------------------------------------------------------- cache

std::vector<json> to_jsonl(const FragmentRun& run) {
  std::vector<json> out;
  std::set<std::string> ids;
  for (const auto& [f, _] : run.predictions) ids.insert(f);
  for (const auto& [f, _] : run.raw_spans) ids.insert(f);
  for (const auto& f : ids) {
    json preds = json::array();
    if (auto it = run.predictions.find(f); it != run.predictions.end()) {
      for (const auto& p : it->second) preds.push_back(to_json(p));
    }
    json spans = json::array();
    if (auto it = run.raw_spans.find(f); it != run.raw_spans.end()) {
      for (const auto& s : it->second) spans.push_back(to_json(s));
    }
    out.push_back({{"fragment_id", f}, {"predictions", std::move(preds)}, {"raw_spans", std::move(spans)}});
  }
  out.push_back({{"discarded", run.discarded}});
  return out;
}

FragmentRun fragment_run_from_jsonl(const std::vector<json>& lines) {
  FragmentRun run;
  for (const auto& j : lines) {
    if (j.contains("discarded")) {
      run.discarded = j["discarded"].get<std::size_t>();
      continue;
    }
    const auto f = j.at("fragment_id").get<std::string>();
    auto& preds = run.predictions[f];
    for (const auto& p : j.at("predictions")) preds.push_back(tag_prediction_from_json(p));
    auto& spans = run.raw_spans[f];
    for (const auto& s : j.at("raw_spans")) spans.push_back(raw_span_from_json(s));
  }
  return run;
}

std::filesystem::path PredictionCache::file_for(const CacheKey& key) const {
  std::string name = "predictions_K" + std::to_string(key.k);
  if (key.fold) name += "_fold" + std::to_string(*key.fold);
  return (dir_ ? *dir_ : std::filesystem::path{}) / (name + ".jsonl");
}

const FragmentRun& PredictionCache::get(const CacheKey& key) {
  if (auto it = runs_.find(key); it != runs_.end()) {
    ++hits_;
    return it->second;
  }
  if (dir_ && std::filesystem::exists(file_for(key))) {
    std::vector<json> lines;
    io::for_each_jsonl(file_for(key), [&](std::size_t, const json& j) { lines.push_back(j); });
    ++disk_loads_;
    return runs_.emplace(key, fragment_run_from_jsonl(lines)).first->second;
  }
  if (!producer_) {
    throw Error(ErrorCode::MissingCache, "no cached predictions for K=" + std::to_string(key.k) +
                                             (key.fold ? " fold " + std::to_string(*key.fold) : ""));
  }
  ++misses_;
  FragmentRun run = producer_(key);
  if (dir_) io::write_jsonl(file_for(key), to_jsonl(run));
  return runs_.emplace(key, std::move(run)).first->second;
}

const FragmentRun& PredictionCache::peek(const CacheKey& key) const {
  auto it = runs_.find(key);
  if (it == runs_.end()) throw Error(ErrorCode::MissingCache, "cache entry not materialized");
  return it->second;
}

void PredictionCache::put(const CacheKey& key, FragmentRun run) {
  if (!runs_.emplace(key, std::move(run)).second) {
    throw Error(ErrorCode::Internal, "prediction cache entries are write-once");
  }
}

// ---------------------------------------------------------------- sweep

MetricsReport evaluate_run(const SweepSetup& setup, const FragmentRun& run,
                           const std::vector<GoldAnnotation>& units, std::size_t k, double tau) {
  static const std::vector<TagPrediction> kNone;
  auto preds_of = [&](const std::string& f) -> const std::vector<TagPrediction>& {
    auto it = run.predictions.find(f);
    return it == run.predictions.end() ? kNone : it->second;
  };

  EvalInputs in;
  in.golds = units;
  in.k = k;
  in.competencies = setup.competencies;
  in.fragment_lengths = setup.fragment_lengths;
  std::set<std::string> resources;
  for (const auto& u : units) {
    std::vector<TagPrediction> kept;
    for (const auto& p : preds_of(u.fragment_id)) {
      if (p.confidence >= tau) kept.push_back(p);
    }
    auto& labels = in.fragment_predictions[u.fragment_id];
    for (const auto& p : kept) labels.insert(p.competency_id);
    in.ranked[u.fragment_id] = rank_predictions(u.fragment_id, kept);
    if (auto it = run.raw_spans.find(u.fragment_id); it != run.raw_spans.end()) {
      in.raw_spans.insert(in.raw_spans.end(), it->second.begin(), it->second.end());
    }
    resources.insert(u.resource_id);
  }
  AggregationConfig cfg = setup.aggregation;
  cfg.tau = tau;
  for (const auto& r : resources) {
    std::vector<ReconciledSet> frags;
    if (auto it = setup.resource_fragments.find(r); it != setup.resource_fragments.end()) {
      for (const auto& f : it->second) frags.push_back({f, preds_of(f), {}});
    }
    const auto kind_it = setup.resource_kinds.find(r);
    const auto kind = kind_it == setup.resource_kinds.end() ? ResourceKind::Page : kind_it->second;
    in.resource_predictions[r] = map_resource(r, score_resource(frags, kind, cfg), cfg).mapping;
  }
  return evaluate(in);
}

namespace {

std::vector<GoldAnnotation> units_where(const std::vector<GoldAnnotation>& golds,
                                        const FoldSpec& folds, std::size_t fold, bool held_out) {
  std::vector<GoldAnnotation> out;
  for (const auto& g : golds) {
    if ((folds.fold_of(g.course_id) == fold) == held_out) out.push_back(g);
  }
  return out;
}

}  // namespace

SweepReport sweep_grid(const SweepSetup& setup, PredictionCache& cache) {
  if (setup.k_grid.empty() || setup.tau_grid.empty()) {
    throw Error(ErrorCode::Config, "sweep grids must be non-empty");
  }
  SweepReport report;
  const std::size_t hits0 = cache.hits();
  const std::size_t misses0 = cache.misses() + cache.disk_loads();

  for (std::size_t fold = 0; fold < setup.folds.n_folds; ++fold) {
    const auto test = units_where(setup.golds, setup.folds, fold, true);
    const auto train = units_where(setup.golds, setup.folds, fold, false);
    FoldSelection best;
    best.fold = fold;
    bool have_best = false;
    for (auto k : setup.k_grid) {
      for (auto tau : setup.tau_grid) {
        const CacheKey key{setup.fold_specific ? std::optional<std::size_t>(fold) : std::nullopt, k};
        const FragmentRun& run = cache.get(key);
        auto held = evaluate_run(setup, run, test, k, tau);
        const double train_micro =
            train.empty() ? 0.0 : evaluate_run(setup, run, train, k, tau).micro_f1;
        if (!have_best || train_micro > best.train_micro_f1) {
          best = {fold, k, tau, train_micro, held};
          have_best = true;
        }
        report.rows.push_back({std::to_string(fold), k, tau, std::move(held)});
      }
    }
    report.selections.push_back(std::move(best));
  }
  report.cache_hits = cache.hits() - hits0;
  report.cache_misses = cache.misses() + cache.disk_loads() - misses0;

  // Pooled: every unit is scored by the run of the fold that held it out.
  for (auto k : setup.k_grid) {
    FragmentRun merged;
    for (std::size_t fold = 0; fold < setup.folds.n_folds; ++fold) {
      const CacheKey key{setup.fold_specific ? std::optional<std::size_t>(fold) : std::nullopt, k};
      const FragmentRun& run = cache.peek(key);
      for (const auto& [r, frags] : setup.resource_fragments) {
        auto course = setup.resource_courses.find(r);
        if (course == setup.resource_courses.end()) continue;
        auto assigned = setup.folds.assignment.find(course->second);
        if (assigned == setup.folds.assignment.end() || assigned->second != fold) continue;
        for (const auto& f : frags) {
          if (auto it = run.predictions.find(f); it != run.predictions.end()) {
            merged.predictions[f] = it->second;
          }
          if (auto it = run.raw_spans.find(f); it != run.raw_spans.end()) {
            merged.raw_spans[f] = it->second;
          }
        }
      }
    }
    for (auto tau : setup.tau_grid) {
      report.rows.push_back({"pooled", k, tau, evaluate_run(setup, merged, setup.golds, k, tau)});
    }
  }
  return report;
}

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "fold,K,tau,micro_f1,macro_f1,resource_macro_f1,span_valid,mrr\n";
  for (const auto& r : report.rows) {
    const auto& m = r.metrics;
    out << r.fold << ',' << r.k << ',' << r.tau << ',' << m.micro_f1 << ',' << m.macro_f1 << ','
        << m.resource_macro_f1 << ',' << m.span_valid << ',' << m.mrr << '\n';
  }
  return out.str();
}

json sweep_summary(const SweepReport& report) {
  json selections = json::array();
  MetricsReport mean;
  mean.span_valid = 0.0;
  for (const auto& s : report.selections) {
    selections.push_back({{"fold", s.fold},
                          {"K", s.k},
                          {"tau", s.tau},
                          {"train_micro_f1", s.train_micro_f1},
                          {"held_out", to_json(s.held_out)}});
    mean.micro_f1 += s.held_out.micro_f1;
    mean.macro_f1 += s.held_out.macro_f1;
    mean.resource_macro_f1 += s.held_out.resource_macro_f1;
    mean.span_valid += s.held_out.span_valid;
    mean.mrr += s.held_out.mrr;
  }
  const double n = report.selections.empty() ? 1.0 : static_cast<double>(report.selections.size());
  json pooled = json::array();
  const SweepRow* best = nullptr;
  for (const auto& r : report.rows) {
    if (r.fold != "pooled") continue;
    pooled.push_back({{"K", r.k}, {"tau", r.tau}, {"metrics", to_json(r.metrics)}});
    if (!best || r.metrics.micro_f1 > best->metrics.micro_f1) best = &r;
  }
  json summary = {
      {"selections", std::move(selections)},
      {"selected_mean",
       {{"micro_f1", mean.micro_f1 / n},
        {"macro_f1", mean.macro_f1 / n},
        {"resource_macro_f1", mean.resource_macro_f1 / n},
        {"span_valid", mean.span_valid / n},
        {"mrr", mean.mrr / n}}},
      {"pooled", std::move(pooled)},
      {"cache", {{"hits", report.cache_hits}, {"misses", report.cache_misses}}},
      {"conventions",
       {{"zero_denominator_f1", 0.0},
        {"macro_over", "all competencies in the graph"},
        {"mrr_excludes_empty_gold", true},
        {"span_valid_over", "raw provider spans before validation"},
        {"fragment_predictions", "reconciled predictions with confidence >= tau"}}}};
  if (best) summary["best_pooled"] = {{"K", best->k}, {"tau", best->tau}};
  return summary;
}

}  // namespace comptag
