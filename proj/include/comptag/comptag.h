#ifndef COMPTAG_COMPTAG_H
#define COMPTAG_COMPTAG_H

#include <stddef.h>
#include <stdint.h>

#if defined(COMPTAG_BUILDING_LIBRARY)
#define CT_API __attribute__((visibility("default")))
#else
#define CT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every function returning ct_status leaves a message for
 * ct_last_error() on failure. */
typedef enum ct_status {
  CT_OK = 0,
  CT_INVALID_ARGUMENT = 1,
  CT_IO = 2,
  CT_MALFORMED_RECORD = 3,
  CT_DUPLICATE_RESOURCE_ID = 4,
  CT_UNKNOWN_ENDPOINT = 5,
  CT_SELF_LOOP = 6,
  CT_DUPLICATE_EDGE = 7,
  CT_UNKNOWN_COMPETENCY = 8,
  CT_EMPTY_PROFILE_SET = 9,
  CT_DIMENSION_MISMATCH = 10,
  CT_MISSING_VECTOR = 11,
  CT_FRAGMENT_MISMATCH = 12,
  CT_EMPTY_CANDIDATE_LIST = 13,
  CT_PROVIDER_UNAVAILABLE = 14,
  CT_UNIT_MISMATCH = 15,
  CT_UNKNOWN_FRAGMENT = 16,
  CT_TOO_FEW_GROUPS = 17,
  CT_MISSING_CACHE = 18,
  CT_MISSING_STAGE_INPUT = 19,
  CT_CONFIG = 20,
  CT_HIERARCHY_CYCLE = 21,
  CT_INTERNAL = 22
} ct_status;

typedef enum ct_stage {
  CT_STAGE_INGEST = 0,
  CT_STAGE_FRAGMENT = 1,
  CT_STAGE_RETRIEVE = 2,
  CT_STAGE_TAG = 3,
  CT_STAGE_RECONCILE = 4,
  CT_STAGE_AGGREGATE = 5,
  CT_STAGE_EVALUATE = 6,
  CT_STAGE_SWEEP = 7
} ct_stage;

typedef enum ct_query {
  CT_QUERY_ANCESTORS = 0,
  CT_QUERY_DESCENDANTS = 1,
  CT_QUERY_PREREQUISITES = 2, /* transitive */
  CT_QUERY_DIRECT_PREREQUISITES = 3
} ct_query;

typedef struct ct_graph ct_graph;
typedef struct ct_index ct_index;
typedef struct ct_pipeline ct_pipeline;

/* Message of the last failure on the calling thread; never NULL. */
CT_API const char* ct_last_error(void);
CT_API const char* ct_status_name(ct_status status);
CT_API const char* ct_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
CT_API void ct_string_free(char* s);

CT_API ct_status ct_graph_load(const char* path, ct_graph** out);
CT_API ct_status ct_graph_from_json(const char* json, ct_graph** out);
CT_API void ct_graph_free(ct_graph* g);
CT_API ct_status ct_graph_counts(const ct_graph* g, size_t* nodes, size_t* edges);
/* JSON array of {"kind","members"}; "[]" for an acyclic graph. */
CT_API ct_status ct_graph_validate(const ct_graph* g, char** violations_json);
CT_API ct_status ct_graph_profile(const ct_graph* g, const char* competency_id, char** text);
/* JSON array of ids, ascending. */
CT_API ct_status ct_graph_query(const ct_graph* g, const char* competency_id, ct_query query,
                                char** ids_json);

/* BM25 index over the graph's competency profiles. The graph may be freed
 * afterwards. */
CT_API ct_status ct_index_build(const ct_graph* g, double k1, double b, ct_index** out);
CT_API void ct_index_free(ct_index* idx);
/* {"fragment_id":"","ranked":[{"competency_id","score"}...]} truncated to k
 * entries (k == 0 keeps all). */
CT_API ct_status ct_index_rank(const ct_index* idx, const char* text, size_t k, char** ranked_json);

/* Fragments (JSON array) of one resource record given as JSON. */
CT_API ct_status ct_fragment_resource(const char* resource_json, size_t max_tokens,
                                      char** fragments_json);

/* config_path may be NULL (all defaults). overrides_json, if not NULL, is
 * merge-patched onto the file contents; its relative paths resolve against
 * the working directory. */
CT_API ct_status ct_pipeline_create(const char* config_path, const char* overrides_json,
                                    ct_pipeline** out);
CT_API void ct_pipeline_free(ct_pipeline* p);
CT_API ct_status ct_pipeline_run(ct_pipeline* p, ct_stage stage, char** report_json);
/* Effective configuration with every default filled in. */
CT_API ct_status ct_pipeline_config(const ct_pipeline* p, char** config_json);
CT_API ct_status ct_stage_from_name(const char* name, ct_stage* out);

/* Synthetic dataset (graph.json, resources.jsonl, gold.jsonl, config.json). */
CT_API ct_status ct_generate_fixture(const char* out_dir, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* COMPTAG_COMPTAG_H */
