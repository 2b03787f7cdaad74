#include "comptag/comptag.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>

#include "comptag/corpus.hpp"
#include "comptag/error.hpp"
#include "comptag/fixture.hpp"
#include "comptag/graph.hpp"
#include "comptag/io.hpp"
#include "comptag/pipeline.hpp"
#include "comptag/retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct ct_graph {
  comptag::CompetencyGraph graph;
};

struct ct_index {
  comptag::Bm25Index index;
};

struct ct_pipeline {
  comptag::Pipeline pipeline;
};

namespace {

thread_local std::string g_last_error;

ct_status fail(ct_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

template <typename F>
ct_status guarded(F&& f) noexcept {
  try {
    g_last_error.clear();
    f();
    return CT_OK;
  } catch (const comptag::Error& e) {
    return fail(static_cast<ct_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(CT_MALFORMED_RECORD, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CT_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CT_INTERNAL, e.what());
  } catch (...) {
    return fail(CT_INTERNAL, "unknown exception");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) throw comptag::Error(comptag::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

void absolutize(json& obj, const char* key) {
  if (auto it = obj.find(key); it != obj.end() && it->is_string()) {
    const fs::path p(it->get<std::string>());
    if (!p.empty() && p.is_relative()) *it = fs::absolute(p).string();
  }
}

}  // namespace

extern "C" {

const char* ct_last_error(void) { return g_last_error.c_str(); }

const char* ct_status_name(ct_status status) {
  return comptag::error_code_name(static_cast<comptag::ErrorCode>(status));
}

const char* ct_version(void) { return comptag::kVersion.data(); }

void ct_string_free(char* s) { std::free(s); }

ct_status ct_graph_load(const char* path, ct_graph** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ct_graph{comptag::load_graph(path)};
  });
}

ct_status ct_graph_from_json(const char* text, ct_graph** out) {
  return guarded([&] {
    need(text, "json");
    need(out, "out");
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw comptag::Error(comptag::ErrorCode::MalformedRecord, e.what());
    }
    *out = new ct_graph{comptag::CompetencyGraph::from_json(j)};
  });
}

void ct_graph_free(ct_graph* g) { delete g; }

ct_status ct_graph_counts(const ct_graph* g, size_t* nodes, size_t* edges) {
  return guarded([&] {
    need(g, "graph");
    if (nodes) *nodes = g->graph.size();
    if (edges) *edges = g->graph.edges().size();
  });
}

ct_status ct_graph_validate(const ct_graph* g, char** violations_json) {
  return guarded([&] {
    need(g, "graph");
    need(violations_json, "violations_json");
    json out = json::array();
    for (const auto& v : comptag::validate_hierarchy(g->graph)) {
      out.push_back({{"kind", v.kind == comptag::Violation::Kind::HierarchyCycle ? "hierarchy_cycle"
                                                                                 : "prerequisite_cycle"},
                     {"members", v.members}});
    }
    *violations_json = dup(out.dump());
  });
}

ct_status ct_graph_profile(const ct_graph* g, const char* competency_id, char** text) {
  return guarded([&] {
    need(g, "graph");
    need(competency_id, "competency_id");
    need(text, "text");
    *text = dup(comptag::build_profile(g->graph, competency_id).profile_text);
  });
}

ct_status ct_graph_query(const ct_graph* g, const char* competency_id, ct_query query,
                         char** ids_json) {
  return guarded([&] {
    need(g, "graph");
    need(competency_id, "competency_id");
    need(ids_json, "ids_json");
    comptag::IdSet ids;
    switch (query) {
      case CT_QUERY_ANCESTORS: ids = g->graph.ancestors(competency_id); break;
      case CT_QUERY_DESCENDANTS: ids = g->graph.descendants(competency_id); break;
      case CT_QUERY_PREREQUISITES: ids = g->graph.prerequisites_of(competency_id); break;
      case CT_QUERY_DIRECT_PREREQUISITES: ids = g->graph.direct_prerequisites(competency_id); break;
      default:
        throw comptag::Error(comptag::ErrorCode::InvalidArgument, "unknown query kind");
    }
    *ids_json = dup(json(std::vector<std::string>(ids.begin(), ids.end())).dump());
  });
}

ct_status ct_index_build(const ct_graph* g, double k1, double b, ct_index** out) {
  return guarded([&] {
    need(g, "graph");
    need(out, "out");
    *out = new ct_index{comptag::Bm25Index::build(comptag::build_profiles(g->graph),
                                                  comptag::default_analyzer(), {k1, b})};
  });
}

void ct_index_free(ct_index* idx) { delete idx; }

ct_status ct_index_rank(const ct_index* idx, const char* text, size_t k, char** ranked_json) {
  return guarded([&] {
    need(idx, "index");
    need(text, "text");
    need(ranked_json, "ranked_json");
    auto rl = comptag::bm25_rank(idx->index, text);
    if (k > 0 && rl.entries.size() > k) rl.entries.resize(k);
    *ranked_json = dup(comptag::to_json(rl).dump());
  });
}

ct_status ct_fragment_resource(const char* resource_json, size_t max_tokens, char** fragments_json) {
  return guarded([&] {
    need(resource_json, "resource_json");
    need(fragments_json, "fragments_json");
    json j;
    try {
      j = json::parse(resource_json);
    } catch (const json::exception& e) {
      throw comptag::Error(comptag::ErrorCode::MalformedRecord, e.what());
    }
    const auto r = comptag::resource_from_json(j);
    json out = json::array();
    for (const auto& f : comptag::fragment_resource(r, {max_tokens})) out.push_back(comptag::to_json(f));
    *fragments_json = dup(out.dump());
  });
}

ct_status ct_pipeline_create(const char* config_path, const char* overrides_json, ct_pipeline** out) {
  return guarded([&] {
    need(out, "out");
    json j = json::object();
    fs::path base;
    if (config_path) {
      try {
        j = json::parse(comptag::io::read_file(config_path));
      } catch (const json::exception& e) {
        throw comptag::Error(comptag::ErrorCode::Config, std::string(config_path) + ": " + e.what());
      }
      base = fs::path(config_path).parent_path();
    }
    if (overrides_json) {
      json patch;
      try {
        patch = json::parse(overrides_json);
      } catch (const json::exception& e) {
        throw comptag::Error(comptag::ErrorCode::Config, std::string("overrides: ") + e.what());
      }
      if (!patch.is_object()) throw comptag::Error(comptag::ErrorCode::Config, "overrides must be an object");
      if (auto it = patch.find("paths"); it != patch.end() && it->is_object()) {
        for (const char* k : {"corpus", "graph", "gold", "vectors", "pair_scores", "out"}) absolutize(*it, k);
      }
      if (auto it = patch.find("tagger"); it != patch.end() && it->is_object()) absolutize(*it, "replay_log");
      j.merge_patch(patch);
    }
    *out = new ct_pipeline{comptag::Pipeline(comptag::RunConfig::from_json(j, base))};
  });
}

void ct_pipeline_free(ct_pipeline* p) { delete p; }

ct_status ct_pipeline_run(ct_pipeline* p, ct_stage stage, char** report_json) {
  return guarded([&] {
    need(p, "pipeline");
    if (stage < CT_STAGE_INGEST || stage > CT_STAGE_SWEEP) {
      throw comptag::Error(comptag::ErrorCode::InvalidArgument, "unknown stage");
    }
    const auto report = p->pipeline.run(static_cast<comptag::Stage>(stage));
    if (report_json) *report_json = dup(report.dump());
  });
}

ct_status ct_pipeline_config(const ct_pipeline* p, char** config_json) {
  return guarded([&] {
    need(p, "pipeline");
    need(config_json, "config_json");
    *config_json = dup(p->pipeline.config().to_json().dump(2));
  });
}

ct_status ct_stage_from_name(const char* name, ct_stage* out) {
  return guarded([&] {
    need(name, "name");
    need(out, "out");
    *out = static_cast<ct_stage>(comptag::stage_from_string(name));
  });
}

ct_status ct_generate_fixture(const char* out_dir, uint64_t seed) {
  return guarded([&] {
    need(out_dir, "out_dir");
    comptag::fixture::SyntheticOptions opts;
    opts.seed = seed;
    comptag::fixture::write_dataset(comptag::fixture::generate(opts), out_dir, seed);
  });
}

}  // extern "C"
