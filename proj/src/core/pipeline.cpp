#include "comptag/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <set>

#include "comptag/error.hpp"
#include "comptag/eval.hpp"
#include "comptag/graph.hpp"
#include "comptag/io.hpp"
#include "comptag/provider.hpp"
#include "comptag/text.hpp"

namespace comptag {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(RetrievalMethod m) noexcept {
  switch (m) {
    case RetrievalMethod::Bm25: return "bm25";
    case RetrievalMethod::Cosine: return "cosine";
    case RetrievalMethod::Pairs: return "pairs";
    case RetrievalMethod::Rrf: return "rrf";
  }
  return "bm25";
}

RetrievalMethod retrieval_method_from_string(std::string_view s) {
  if (s == "bm25") return RetrievalMethod::Bm25;
  if (s == "cosine") return RetrievalMethod::Cosine;
  if (s == "pairs") return RetrievalMethod::Pairs;
  if (s == "rrf") return RetrievalMethod::Rrf;
  throw Error(ErrorCode::Config, "unknown retrieval method '" + std::string(s) + "'");
}

std::string_view to_string(ProviderKind p) noexcept {
  switch (p) {
    case ProviderKind::Mock: return "mock";
    case ProviderKind::Http: return "http";
    case ProviderKind::Replay: return "replay";
  }
  return "mock";
}

ProviderKind provider_kind_from_string(std::string_view s) {
  if (s == "mock") return ProviderKind::Mock;
  if (s == "http") return ProviderKind::Http;
  if (s == "replay") return ProviderKind::Replay;
  throw Error(ErrorCode::Config, "unknown provider '" + std::string(s) + "'");
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Fragment: return "fragment";
    case Stage::Retrieve: return "retrieve";
    case Stage::Tag: return "tag";
    case Stage::Reconcile: return "reconcile";
    case Stage::Aggregate: return "aggregate";
    case Stage::Evaluate: return "evaluate";
    case Stage::Sweep: return "sweep";
  }
  return "ingest";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : {Stage::Ingest, Stage::Fragment, Stage::Retrieve, Stage::Tag, Stage::Reconcile,
                  Stage::Aggregate, Stage::Evaluate, Stage::Sweep}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::Config, "unknown stage '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- config

namespace {

const json& section(const json& j, const char* name, std::initializer_list<const char*> keys) {
  static const json kEmpty = json::object();
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return kEmpty;
  if (!it->is_object()) throw Error(ErrorCode::Config, std::string("'") + name + "' must be an object");
  for (const auto& [k, _] : it->items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
      throw Error(ErrorCode::Config, "unknown key '" + k + "' in '" + name + "'");
    }
  }
  return *it;
}

template <typename T>
void read(const json& s, const char* key, T& into) {
  if (auto it = s.find(key); it != s.end() && !it->is_null()) {
    try {
      into = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

void read_path(const json& s, const char* key, const fs::path& base, fs::path& into) {
  std::string v;
  read(s, key, v);
  if (v.empty()) return;
  fs::path p(v);
  into = p.is_relative() && !base.empty() ? base / p : p;
}

std::string str(const fs::path& p) { return p.string(); }

std::string_view to_string(GranularityPolicy p) {
  return p == GranularityPolicy::KeepMostSpecific ? "keep_most_specific" : "keep_most_general";
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
  static const std::set<std::string> kTop{"paths",     "fragmentation", "retrieval", "tagger",
                                          "reconcile", "aggregate",     "eval",      "seed"};
  for (const auto& [k, _] : j.items()) {
    if (!kTop.count(k)) throw Error(ErrorCode::Config, "unknown config key '" + k + "'");
  }
  RunConfig c;
  const auto& p = section(j, "paths", {"corpus", "graph", "gold", "vectors", "pair_scores", "out"});
  read_path(p, "corpus", base_dir, c.paths.corpus);
  read_path(p, "graph", base_dir, c.paths.graph);
  read_path(p, "gold", base_dir, c.paths.gold);
  read_path(p, "vectors", base_dir, c.paths.vectors);
  read_path(p, "pair_scores", base_dir, c.paths.pair_scores);
  read_path(p, "out", base_dir, c.paths.out);

  read(section(j, "fragmentation", {"max_tokens"}), "max_tokens", c.fragmentation.max_tokens);
  if (c.fragmentation.max_tokens == 0) throw Error(ErrorCode::Config, "max_tokens must be positive");

  const auto& r = section(j, "retrieval", {"method", "k", "k1", "b", "k_rrf", "fuse"});
  std::string method;
  read(r, "method", method);
  if (!method.empty()) c.retrieval.method = retrieval_method_from_string(method);
  read(r, "k", c.retrieval.k);
  read(r, "k1", c.retrieval.bm25.k1);
  read(r, "b", c.retrieval.bm25.b);
  read(r, "k_rrf", c.retrieval.k_rrf);
  std::vector<std::string> fuse;
  read(r, "fuse", fuse);
  if (!fuse.empty()) {
    c.retrieval.fuse.clear();
    for (const auto& m : fuse) c.retrieval.fuse.push_back(retrieval_method_from_string(m));
  }
  if (c.retrieval.k == 0) throw Error(ErrorCode::Config, "retrieval.k must be positive");

  const auto& t = section(j, "tagger", {"mode", "provider", "model", "temperature", "retries",
                                        "concurrency", "language", "demonstrations",
                                        "full_inventory_limit", "base_url", "max_attempts",
                                        "replay_log"});
  std::string s;
  read(t, "mode", s);
  if (!s.empty()) c.tagger.mode = tag_mode_from_string(s);
  s.clear();
  read(t, "provider", s);
  if (!s.empty()) c.tagger.provider = provider_kind_from_string(s);
  read(t, "model", c.tagger.settings.model);
  read(t, "temperature", c.tagger.settings.temperature);
  read(t, "retries", c.tagger.settings.retries);
  read(t, "concurrency", c.tagger.settings.concurrency);
  s.clear();
  read(t, "language", s);
  if (!s.empty()) c.tagger.language = prompt_language_from_string(s);
  read(t, "demonstrations", c.tagger.demonstrations);
  read(t, "full_inventory_limit", c.tagger.full_inventory_limit);
  read(t, "base_url", c.tagger.base_url);
  read(t, "max_attempts", c.tagger.max_attempts);
  read_path(t, "replay_log", base_dir, c.tagger.replay_log);

  const auto& rc = section(j, "reconcile", {"granularity", "policy", "dedup", "transitive_prerequisites"});
  read(rc, "granularity", c.reconcile.granularity);
  read(rc, "dedup", c.reconcile.dedup);
  read(rc, "transitive_prerequisites", c.reconcile.transitive_prerequisites);
  s.clear();
  read(rc, "policy", s);
  if (s == "keep_most_general") {
    c.reconcile.policy = GranularityPolicy::KeepMostGeneral;
  } else if (!s.empty() && s != "keep_most_specific") {
    throw Error(ErrorCode::Config, "unknown granularity policy '" + s + "'");
  }

  const auto& a = section(j, "aggregate", {"agg", "weights", "tau", "topk", "prefilter"});
  s.clear();
  read(a, "agg", s);
  if (!s.empty()) c.aggregation.agg = agg_kind_from_string(s);
  std::map<std::string, double> weights;
  read(a, "weights", weights);
  for (const auto& [kind, w] : weights) {
    if (w < 0.0) throw Error(ErrorCode::Config, "weight for '" + kind + "' is negative");
    c.aggregation.weights[resource_kind_from_string(kind)] = w;
  }
  read(a, "tau", c.aggregation.tau);
  if (c.aggregation.tau < 0.0 || c.aggregation.tau > 1.0) {
    throw Error(ErrorCode::Config, "aggregate.tau must lie in [0, 1]");
  }
  if (auto it = a.find("topk"); it != a.end() && !it->is_null()) {
    c.aggregation.topk = it->get<std::size_t>();
  }
  read(a, "prefilter", c.aggregation.prefilter);

  const auto& e = section(j, "eval", {"source", "n_folds", "k_grid", "tau_grid"});
  s.clear();
  read(e, "source", s);
  if (s == "ranking") {
    c.eval.source = EvalSource::Ranking;
  } else if (!s.empty() && s != "pipeline") {
    throw Error(ErrorCode::Config, "eval.source must be 'pipeline' or 'ranking'");
  }
  read(e, "n_folds", c.eval.n_folds);
  read(e, "k_grid", c.eval.k_grid);
  read(e, "tau_grid", c.eval.tau_grid);

  read(j, "seed", c.seed);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
  json weights = json::object();
  for (const auto& [kind, w] : aggregation.weights) weights[std::string(comptag::to_string(kind))] = w;
  std::vector<std::string> fuse;
  for (auto m : retrieval.fuse) fuse.emplace_back(comptag::to_string(m));
  return {
      {"paths",
       {{"corpus", str(paths.corpus)},
        {"graph", str(paths.graph)},
        {"gold", str(paths.gold)},
        {"vectors", str(paths.vectors)},
        {"pair_scores", str(paths.pair_scores)},
        {"out", str(paths.out)}}},
      {"fragmentation", {{"max_tokens", fragmentation.max_tokens}}},
      {"retrieval",
       {{"method", comptag::to_string(retrieval.method)},
        {"k", retrieval.k},
        {"k1", retrieval.bm25.k1},
        {"b", retrieval.bm25.b},
        {"k_rrf", retrieval.k_rrf},
        {"fuse", fuse}}},
      {"tagger",
       {{"mode", comptag::to_string(tagger.mode)},
        {"provider", comptag::to_string(tagger.provider)},
        {"model", tagger.settings.model},
        {"temperature", tagger.settings.temperature},
        {"retries", tagger.settings.retries},
        {"concurrency", tagger.settings.concurrency},
        {"language", comptag::to_string(tagger.language)},
        {"demonstrations", tagger.demonstrations},
        {"full_inventory_limit", tagger.full_inventory_limit},
        {"base_url", tagger.base_url},
        {"max_attempts", tagger.max_attempts},
        {"replay_log", str(tagger.replay_log)}}},
      {"reconcile",
       {{"granularity", reconcile.granularity},
        {"policy", to_string(reconcile.policy)},
        {"dedup", reconcile.dedup},
        {"transitive_prerequisites", reconcile.transitive_prerequisites}}},
      {"aggregate",
       {{"agg", comptag::to_string(aggregation.agg)},
        {"weights", weights},
        {"tau", aggregation.tau},
        {"topk", aggregation.topk ? json(*aggregation.topk) : json(nullptr)},
        {"prefilter", aggregation.prefilter}}},
      {"eval",
       {{"source", eval.source == EvalSource::Pipeline ? "pipeline" : "ranking"},
        {"n_folds", eval.n_folds},
        {"k_grid", eval.k_grid},
        {"tau_grid", eval.tau_grid}}},
      {"seed", seed}};
}

// ---------------------------------------------------------------- helpers

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  io::for_each_jsonl(path, [&](std::size_t, const json& j) { out.push_back(j); });
  return out;
}

std::vector<Fragment> load_fragments(const fs::path& path) {
  std::vector<Fragment> out;
  io::for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(fragment_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

CompetencyGraph load_checked_graph(const fs::path& path) {
  auto g = load_graph(path);
  require_acyclic(g);
  return g;
}

/// Full ranking (every competency with a positive score) per fragment.
std::map<std::string, RankedList> rank_fragments(const RunConfig& cfg,
                                                 const std::vector<Fragment>& frags,
                                                 const CompetencyGraph& g) {
  std::optional<Bm25Index> bm25;
  std::optional<VectorStore> vectors;
  std::optional<PairScores> pairs;
  auto list_for = [&](RetrievalMethod m, const Fragment& f) -> RankedList {
    switch (m) {
      case RetrievalMethod::Bm25:
        if (!bm25) bm25 = Bm25Index::build(build_profiles(g), default_analyzer(), cfg.retrieval.bm25);
        return bm25_rank(*bm25, f.text, f.fragment_id);
      case RetrievalMethod::Cosine:
        if (!vectors) {
          if (cfg.paths.vectors.empty()) throw Error(ErrorCode::Config, "paths.vectors is required for cosine retrieval");
          vectors = VectorStore::load(cfg.paths.vectors);
        }
        return cosine_rank(*vectors, g.ids(), f.fragment_id);
      case RetrievalMethod::Pairs: {
        if (!pairs) {
          if (cfg.paths.pair_scores.empty()) throw Error(ErrorCode::Config, "paths.pair_scores is required for pair retrieval");
          pairs = PairScores::load(cfg.paths.pair_scores);
        }
        auto rl = pairs->rank(f.fragment_id);
        rl.fragment_id = f.fragment_id;
        return rl;
      }
      case RetrievalMethod::Rrf: break;
    }
    throw Error(ErrorCode::Config, "rrf cannot fuse itself");
  };
  std::map<std::string, RankedList> out;
  for (const auto& f : frags) {
    if (cfg.retrieval.method == RetrievalMethod::Rrf) {
      std::vector<RankedList> lists;
      for (auto m : cfg.retrieval.fuse) lists.push_back(list_for(m, f));
      out[f.fragment_id] = rrf_fuse(lists, cfg.retrieval.k_rrf);
    } else {
      out[f.fragment_id] = list_for(cfg.retrieval.method, f);
    }
  }
  return out;
}

std::unique_ptr<Provider> make_provider(const RunConfig& cfg, const CompetencyGraph& g,
                                        const fs::path& default_log) {
  switch (cfg.tagger.provider) {
    case ProviderKind::Mock: return std::make_unique<MockProvider>(g);
    case ProviderKind::Http: {
      const char* key = std::getenv("COMPTAG_API_KEY");
      if (!key || !*key) throw Error(ErrorCode::Config, "COMPTAG_API_KEY is not set");
      HttpProviderConfig hc;
      hc.base_url = cfg.tagger.base_url;
      hc.api_key = key;
      hc.max_attempts = cfg.tagger.max_attempts;
      return std::make_unique<HttpChatProvider>(hc);
    }
    case ProviderKind::Replay: {
      const auto log = cfg.tagger.replay_log.empty() ? default_log : cfg.tagger.replay_log;
      if (!fs::exists(log)) {
        throw Error(ErrorCode::MissingStageInput, "replay log not found: " + log.string());
      }
      return std::make_unique<ReplayProvider>(read_jsonl(log));
    }
  }
  throw Error(ErrorCode::Internal, "unhandled provider");
}

struct TagBatch {
  std::vector<TaggerOutcome> outcomes;  // aligned with the input fragments
  std::size_t skipped = 0;              // fragments with an empty candidate list
};

TagBatch tag_fragments(const RunConfig& cfg, const std::vector<const Fragment*>& frags,
                       const std::map<std::string, RankedList>& ranked, std::size_t k,
                       const CompetencyGraph& g, const DemonstrationPool* pool,
                       Provider& provider) {
  TagBatch batch;
  batch.outcomes.resize(frags.size());
  std::vector<TagRequest> requests;
  std::vector<std::size_t> slot;
  for (std::size_t i = 0; i < frags.size(); ++i) {
    const auto& f = *frags[i];
    if (cfg.tagger.mode == TagMode::ZeroShot) {
      requests.push_back(make_zero_shot_request(f, g));
      slot.push_back(i);
      continue;
    }
    auto it = ranked.find(f.fragment_id);
    if (it == ranked.end()) {
      throw Error(ErrorCode::MissingStageInput, "no candidates for fragment '" + f.fragment_id + "'");
    }
    auto cand = topk_candidates(it->second, k);
    if (cand.candidates.empty()) {
      ++batch.skipped;
      continue;
    }
    if (cfg.tagger.mode == TagMode::FewShot) {
      auto demos = pool ? pool->select(f.text, cfg.tagger.demonstrations, f.fragment_id)
                        : std::vector<Demonstration>{};
      requests.push_back(make_few_shot_request(f, cand, std::move(demos)));
    } else {
      requests.push_back(make_constrained_request(f, cand));
    }
    slot.push_back(i);
  }
  const PromptBuilder prompts(g, cfg.tagger.language, cfg.tagger.full_inventory_limit);
  auto outcomes = tag_all(requests, prompts, provider, cfg.tagger.settings);
  for (std::size_t i = 0; i < outcomes.size(); ++i) batch.outcomes[slot[i]] = std::move(outcomes[i]);
  return batch;
}

DemonstrationPool make_pool(const std::vector<GoldAnnotation>& gold,
                            const std::map<std::string, const Fragment*>& by_id,
                            const std::function<bool(const GoldAnnotation&)>& keep) {
  std::vector<DemonstrationPool::Item> items;
  for (const auto& g : gold) {
    if (!keep(g)) continue;
    auto it = by_id.find(g.fragment_id);
    if (it == by_id.end()) continue;
    items.push_back({g.fragment_id, it->second->text, {g.gold.begin(), g.gold.end()}});
  }
  return DemonstrationPool(std::move(items));
}

std::map<std::string, std::size_t> fragment_lengths(const std::vector<Fragment>& frags) {
  std::map<std::string, std::size_t> out;
  for (const auto& f : frags) out[f.fragment_id] = text::char_length(f.text);
  return out;
}

void check_gold_fragments(const std::vector<GoldAnnotation>& gold,
                          const std::map<std::string, std::size_t>& lengths) {
  for (const auto& g : gold) {
    if (!lengths.count(g.fragment_id)) {
      throw Error(ErrorCode::UnknownFragment, "gold names unknown fragment '" + g.fragment_id + "'");
    }
  }
}

json conventions(const RunConfig& cfg) {
  return {{"zero_denominator_f1", 0.0},
          {"macro_over", "all competencies in the graph"},
          {"mrr_excludes_empty_gold", true},
          {"mrr_k", cfg.retrieval.k},
          {"span_valid_over", "raw provider spans before validation"},
          {"fragment_predictions",
           cfg.eval.source == EvalSource::Pipeline ? "reconciled predictions with confidence >= tau"
                                                   : "top-K of the retrieval ranking"},
          {"aggregation_prefilter", cfg.aggregation.prefilter}};
}

}  // namespace

// ---------------------------------------------------------------- stages

fs::path Pipeline::require(const fs::path& p, std::string_view what) {
  if (p.empty()) throw Error(ErrorCode::Config, "no path configured for " + std::string(what));
  if (!fs::exists(p)) {
    throw Error(ErrorCode::MissingStageInput,
                "missing " + std::string(what) + " (" + p.string() + ")");
  }
  inputs_.push_back(p);
  return p;
}

json Pipeline::run(Stage stage) {
  inputs_.clear();
  outputs_.clear();
  json report;
  switch (stage) {
    case Stage::Ingest: report = ingest(); break;
    case Stage::Fragment: report = fragment(); break;
    case Stage::Retrieve: report = retrieve(); break;
    case Stage::Tag: report = tag(); break;
    case Stage::Reconcile: report = reconcile(); break;
    case Stage::Aggregate: report = aggregate(); break;
    case Stage::Evaluate: report = evaluate(); break;
    case Stage::Sweep: report = sweep(); break;
  }
  report["stage"] = to_string(stage);
  write_manifest(stage, report);
  return report;
}

void Pipeline::write_manifest(Stage stage, const json& report) {
  json inputs = json::object();
  for (const auto& p : inputs_) {
    if (fs::is_regular_file(p)) inputs[p.string()] = io::sha256_hex(io::read_file(p));
  }
  json outputs = json::object();
  for (const auto& p : outputs_) outputs[p.string()] = io::sha256_hex(io::read_file(p));
  const json manifest = {{"stage", to_string(stage)},
                         {"version", kVersion},
                         {"seed", config_.seed},
                         {"config", config_.to_json()},
                         {"inputs", inputs},
                         {"outputs", outputs},
                         {"report", report}};
  io::write_file(out("manifest_" + std::string(to_string(stage)) + ".json"), manifest.dump(2) + "\n");
}

json Pipeline::ingest() {
  const auto resources = ingest_resources(require(config_.paths.corpus, "corpus"));
  json report = {{"resources", resources.size()}};
  if (!config_.paths.graph.empty()) {
    const auto g = load_graph(require(config_.paths.graph, "competency graph"));
    const auto violations = validate_hierarchy(g);
    json v = json::array();
    for (const auto& x : violations) {
      v.push_back({{"kind", x.kind == Violation::Kind::HierarchyCycle ? "hierarchy_cycle"
                                                                       : "prerequisite_cycle"},
                   {"members", x.members}});
    }
    report["graph"] = {{"competencies", g.size()}, {"edges", g.edges().size()}, {"violations", v}};
    if (!violations.empty()) require_acyclic(g);
  }
  std::vector<json> lines;
  for (const auto& r : resources) lines.push_back(to_json(r));
  io::write_jsonl(out("resources.jsonl"), lines);
  outputs_.push_back(out("resources.jsonl"));
  return report;
}

json Pipeline::fragment() {
  const auto resources = ingest_resources(require(out("resources.jsonl"), "ingested resources"));
  std::vector<json> lines;
  std::size_t fallback = 0;
  for (const auto& r : resources) {
    for (const auto& f : fragment_resource(r, config_.fragmentation)) {
      if (text::count_tokens(text::decode_utf8(f.text)) > config_.fragmentation.max_tokens) {
        throw Error(ErrorCode::Internal, "fragment '" + f.fragment_id + "' exceeds the token budget");
      }
      fallback += f.section_title ? 0 : 1;
      lines.push_back(to_json(f));
    }
  }
  io::write_jsonl(out("fragments.jsonl"), lines);
  outputs_.push_back(out("fragments.jsonl"));
  return {{"resources", resources.size()}, {"fragments", lines.size()}, {"untitled", fallback}};
}

json Pipeline::retrieve() {
  const auto frags = load_fragments(require(out("fragments.jsonl"), "fragments"));
  const auto g = load_checked_graph(require(config_.paths.graph, "competency graph"));
  if (config_.retrieval.method == RetrievalMethod::Cosine) require(config_.paths.vectors, "vectors");
  if (config_.retrieval.method == RetrievalMethod::Pairs) require(config_.paths.pair_scores, "pair scores");
  const auto ranked = rank_fragments(config_, frags, g);
  std::vector<json> lines;
  std::size_t empty = 0;
  for (const auto& f : frags) {
    const auto& rl = ranked.at(f.fragment_id);
    empty += rl.entries.empty() ? 1 : 0;
    lines.push_back(to_json(rl));
  }
  io::write_jsonl(out("candidates.jsonl"), lines);
  outputs_.push_back(out("candidates.jsonl"));
  return {{"fragments", frags.size()},
          {"method", to_string(config_.retrieval.method)},
          {"k", config_.retrieval.k},
          {"empty_rankings", empty}};
}

json Pipeline::tag() {
  const auto frags = load_fragments(require(out("fragments.jsonl"), "fragments"));
  const auto g = load_checked_graph(require(config_.paths.graph, "competency graph"));
  std::map<std::string, RankedList> ranked;
  if (config_.tagger.mode != TagMode::ZeroShot) {
    for (const auto& j : read_jsonl(require(out("candidates.jsonl"), "candidates"))) {
      auto rl = ranked_list_from_json(j);
      ranked[rl.fragment_id] = std::move(rl);
    }
  }
  std::map<std::string, const Fragment*> by_id;
  std::vector<const Fragment*> all;
  for (const auto& f : frags) {
    by_id[f.fragment_id] = &f;
    all.push_back(&f);
  }
  std::optional<DemonstrationPool> pool;
  if (config_.tagger.mode == TagMode::FewShot) {
    const auto gold = load_gold(require(config_.paths.gold, "gold annotations"), &g);
    pool = make_pool(gold, by_id, [](const GoldAnnotation&) { return true; });
  }
  auto provider = make_provider(config_, g, out("raw_log.jsonl"));
  if (config_.tagger.provider == ProviderKind::Replay) {
    inputs_.push_back(config_.tagger.replay_log.empty() ? out("raw_log.jsonl") : config_.tagger.replay_log);
  }
  const auto batch = tag_fragments(config_, all, ranked, config_.retrieval.k, g,
                                   pool ? &*pool : nullptr, *provider);

  std::vector<json> preds, spans, log;
  std::size_t discarded = 0;
  for (const auto& o : batch.outcomes) {
    for (const auto& p : o.predictions) preds.push_back(to_json(p));
    for (const auto& s : o.raw_spans) spans.push_back(to_json(s));
    log.insert(log.end(), o.raw_log.begin(), o.raw_log.end());
    discarded += o.discarded;
  }
  const json summary = {{"fragments", frags.size()},
                        {"tagged", frags.size() - batch.skipped},
                        {"skipped_no_candidates", batch.skipped},
                        {"predictions", preds.size()},
                        {"raw_spans", spans.size()},
                        {"discarded", discarded},
                        {"mode", to_string(config_.tagger.mode)},
                        {"provider", to_string(config_.tagger.provider)},
                        {"model", config_.tagger.settings.model},
                        {"k", config_.retrieval.k}};
  io::write_jsonl(out("predictions.jsonl"), preds);
  io::write_jsonl(out("raw_spans.jsonl"), spans);
  io::write_jsonl(out("raw_log.jsonl"), log);
  io::write_file(out("tag_summary.json"), summary.dump(2) + "\n");
  for (const char* name : {"predictions.jsonl", "raw_spans.jsonl", "raw_log.jsonl", "tag_summary.json"}) {
    outputs_.push_back(out(name));
  }
  return summary;
}

json Pipeline::reconcile() {
  const auto frags = load_fragments(require(out("fragments.jsonl"), "fragments"));
  const auto g = load_checked_graph(require(config_.paths.graph, "competency graph"));
  std::map<std::string, std::vector<TagPrediction>> raw;
  for (const auto& j : read_jsonl(require(out("predictions.jsonl"), "predictions"))) {
    auto p = tag_prediction_from_json(j);
    raw[p.fragment_id].push_back(std::move(p));
  }
  std::vector<json> reconciled, dropped, flag_lines;
  std::map<std::string, std::map<std::string, std::vector<TagPrediction>>> by_resource;
  std::size_t kept = 0;
  for (const auto& f : frags) {
    auto rs = reconcile_fragment(f.fragment_id, raw[f.fragment_id], g, config_.reconcile);
    kept += rs.predictions.size();
    json preds = json::array();
    for (const auto& p : rs.predictions) preds.push_back(to_json(p));
    reconciled.push_back({{"fragment_id", f.fragment_id},
                          {"resource_id", f.resource_id},
                          {"predictions", std::move(preds)}});
    for (const auto& d : rs.dropped) dropped.push_back(to_json(d));
    by_resource[f.resource_id][f.fragment_id] = std::move(rs.predictions);
  }
  for (const auto& [rid, by_frag] : by_resource) {
    for (const auto& flag :
         coherence_flags(rid, by_frag, g, config_.reconcile.transitive_prerequisites)) {
      flag_lines.push_back(to_json(flag));
    }
  }
  io::write_jsonl(out("reconciled.jsonl"), reconciled);
  io::write_jsonl(out("dropped.jsonl"), dropped);
  io::write_jsonl(out("flags.jsonl"), flag_lines);
  for (const char* name : {"reconciled.jsonl", "dropped.jsonl", "flags.jsonl"}) outputs_.push_back(out(name));
  return {{"fragments", frags.size()},
          {"kept", kept},
          {"dropped", dropped.size()},
          {"flags", flag_lines.size()}};
}

json Pipeline::aggregate() {
  const auto resources = ingest_resources(require(out("resources.jsonl"), "ingested resources"));
  std::map<std::string, std::vector<ReconciledSet>> by_resource;
  for (const auto& j : read_jsonl(require(out("reconciled.jsonl"), "reconciled predictions"))) {
    ReconciledSet rs{j.at("fragment_id").get<std::string>(), {}, {}};
    for (const auto& p : j.at("predictions")) rs.predictions.push_back(tag_prediction_from_json(p));
    by_resource[j.at("resource_id").get<std::string>()].push_back(std::move(rs));
  }
  std::vector<json> lines;
  std::size_t mapped = 0;
  for (const auto& r : resources) {
    const auto scores = score_resource(by_resource[r.resource_id], r.kind, config_.aggregation);
    const auto rs = map_resource(r.resource_id, scores, config_.aggregation);
    mapped += rs.mapping.size();
    lines.push_back(to_json(rs));
  }
  io::write_jsonl(out("resource_scores.jsonl"), lines);
  outputs_.push_back(out("resource_scores.jsonl"));
  return {{"resources", resources.size()},
          {"mapped_pairs", mapped},
          {"agg", to_string(config_.aggregation.agg)},
          {"tau", config_.aggregation.tau}};
}

json Pipeline::evaluate() {
  const auto frags = load_fragments(require(out("fragments.jsonl"), "fragments"));
  const auto g = load_checked_graph(require(config_.paths.graph, "competency graph"));
  const auto gold = load_gold(require(config_.paths.gold, "gold annotations"), &g);
  const auto lengths = fragment_lengths(frags);
  check_gold_fragments(gold, lengths);
  const double tau = config_.aggregation.tau;
  const std::size_t k = config_.retrieval.k;

  EvalInputs in;
  in.golds = gold;
  in.k = k;
  in.competencies = g.ids();
  in.fragment_lengths = lengths;
  std::set<std::string> units;
  for (const auto& a : gold) units.insert(a.fragment_id);

  if (config_.eval.source == EvalSource::Pipeline) {
    const auto rec_path = require(out("reconciled.jsonl"), "reconciled predictions");
    const auto score_path = require(out("resource_scores.jsonl"), "resource scores");
    const auto span_path = require(out("raw_spans.jsonl"), "raw spans");
    for (const auto& j : read_jsonl(rec_path)) {
      const auto fid = j.at("fragment_id").get<std::string>();
      if (!units.count(fid)) continue;
      std::vector<TagPrediction> kept;
      for (const auto& pj : j.at("predictions")) {
        auto p = tag_prediction_from_json(pj);
        if (p.confidence >= tau) kept.push_back(std::move(p));
      }
      auto& labels = in.fragment_predictions[fid];
      for (const auto& p : kept) labels.insert(p.competency_id);
      in.ranked[fid] = rank_predictions(fid, kept);
    }
    for (const auto& j : read_jsonl(score_path)) {
      const auto rs = resource_score_from_json(j);
      in.resource_predictions[rs.resource_id] = rs.mapping;
    }
    for (const auto& j : read_jsonl(span_path)) {
      auto s = raw_span_from_json(j);
      if (units.count(s.fragment_id)) in.raw_spans.push_back(std::move(s));
    }
  } else {
    std::map<std::string, std::string> resource_of;
    for (const auto& f : frags) resource_of[f.fragment_id] = f.resource_id;
    for (const auto& j : read_jsonl(require(out("candidates.jsonl"), "candidates"))) {
      auto rl = ranked_list_from_json(j);
      const auto top = rank_to_multilabel(rl, k);
      auto r = resource_of.find(rl.fragment_id);
      if (r != resource_of.end()) in.resource_predictions[r->second].insert(top.begin(), top.end());
      if (!units.count(rl.fragment_id)) continue;
      in.fragment_predictions[rl.fragment_id] = top;
      in.ranked[rl.fragment_id] = std::move(rl);
    }
  }
  const auto m = comptag::evaluate(in);
  json report = to_json(m);
  report["source"] = config_.eval.source == EvalSource::Pipeline ? "pipeline" : "ranking";
  report["k"] = k;
  report["tau"] = tau;
  report["conventions"] = conventions(config_);
  io::write_file(out("metrics.json"), report.dump(2) + "\n");
  outputs_.push_back(out("metrics.json"));
  return {{"micro_f1", m.micro_f1},
          {"macro_f1", m.macro_f1},
          {"resource_macro_f1", m.resource_macro_f1},
          {"span_valid", m.span_valid},
          {"mrr", m.mrr},
          {"fragments", m.fragments},
          {"resources", m.resources}};
}

json Pipeline::sweep() {
  const auto resources = ingest_resources(require(out("resources.jsonl"), "ingested resources"));
  const auto frags = load_fragments(require(out("fragments.jsonl"), "fragments"));
  const auto g = load_checked_graph(require(config_.paths.graph, "competency graph"));
  const auto gold = load_gold(require(config_.paths.gold, "gold annotations"), &g);
  if (config_.tagger.provider == ProviderKind::Replay) {
    inputs_.push_back(config_.tagger.replay_log.empty() ? out("raw_log.jsonl") : config_.tagger.replay_log);
  }

  SweepSetup setup;
  setup.golds = gold;
  setup.fragment_lengths = fragment_lengths(frags);
  check_gold_fragments(gold, setup.fragment_lengths);
  setup.competencies = g.ids();
  setup.folds = make_folds(gold, config_.eval.n_folds, config_.seed);
  setup.k_grid = config_.eval.k_grid;
  setup.tau_grid = config_.eval.tau_grid;
  setup.aggregation = config_.aggregation;
  setup.fold_specific = config_.tagger.mode == TagMode::FewShot;
  std::set<std::string> gold_resources;
  for (const auto& a : gold) gold_resources.insert(a.resource_id);
  for (const auto& r : resources) {
    setup.resource_kinds[r.resource_id] = r.kind;
    setup.resource_courses[r.resource_id] = r.course_id;
  }
  std::map<std::string, const Fragment*> by_id;
  std::vector<const Fragment*> to_tag;
  std::vector<Fragment> tag_subset;
  for (const auto& f : frags) {
    by_id[f.fragment_id] = &f;
    setup.resource_fragments[f.resource_id].push_back(f.fragment_id);
    if (gold_resources.count(f.resource_id)) to_tag.push_back(&f);
  }
  for (const auto* f : to_tag) tag_subset.push_back(*f);
  const auto ranked = config_.tagger.mode == TagMode::ZeroShot
                          ? std::map<std::string, RankedList>{}
                          : rank_fragments(config_, tag_subset, g);
  auto provider = make_provider(config_, g, out("raw_log.jsonl"));

  // Cached runs are only valid for the inputs and settings that made them.
  json key_material = config_.to_json();
  key_material.erase("aggregate");
  key_material.erase("eval");
  key_material["paths"].erase("out");
  key_material["inputs"] = {io::sha256_hex(io::read_file(out("fragments.jsonl"))),
                            io::sha256_hex(io::read_file(config_.paths.graph)),
                            io::sha256_hex(io::read_file(config_.paths.gold))};
  const auto cache_dir = out("cache") / io::sha256_hex(key_material.dump()).substr(0, 16);

  PredictionCache cache(
      [&](const CacheKey& key) {
        std::optional<DemonstrationPool> pool;
        if (config_.tagger.mode == TagMode::FewShot) {
          pool = make_pool(gold, by_id, [&](const GoldAnnotation& a) {
            return !key.fold || setup.folds.fold_of(a.course_id) != *key.fold;
          });
        }
        const auto batch =
            tag_fragments(config_, to_tag, ranked, key.k, g, pool ? &*pool : nullptr, *provider);
        FragmentRun run;
        for (std::size_t i = 0; i < to_tag.size(); ++i) {
          const auto& o = batch.outcomes[i];
          const auto& fid = to_tag[i]->fragment_id;
          run.predictions[fid] = reconcile_fragment(fid, o.predictions, g, config_.reconcile).predictions;
          run.raw_spans[fid] = o.raw_spans;
          run.discarded += o.discarded;
        }
        return run;
      },
      cache_dir);

  const auto report = sweep_grid(setup, cache);
  io::write_file(out("sweep.csv"), sweep_csv(report));
  json summary = sweep_summary(report);
  summary["folds"] = to_json(setup.folds);
  summary["seed"] = config_.seed;
  summary["mode"] = to_string(config_.tagger.mode);
  io::write_file(out("sweep_summary.json"), summary.dump(2) + "\n");
  outputs_.push_back(out("sweep.csv"));
  outputs_.push_back(out("sweep_summary.json"));

  std::map<std::string, std::size_t> cells;
  for (const auto& row : report.rows) ++cells[row.fold];
  return {{"cells_per_fold", cells},
          {"cache_hits", report.cache_hits},
          {"cache_misses", report.cache_misses},
          {"folds", setup.folds.n_folds},
          {"courses", setup.folds.assignment.size()}};
}

}  // namespace comptag
