#ifndef CBRSUBG_H
#define CBRSUBG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CBRSUBG_API __declspec(dllexport)
#else
#define CBRSUBG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cbrsubg_status {
    CBRSUBG_OK = 0,
    CBRSUBG_INVALID_ARGUMENT = 1, /* bad key, value, command or input */
    CBRSUBG_IO = 2,               /* missing or unreadable file */
    CBRSUBG_FORMAT = 3,           /* malformed input file */
    CBRSUBG_NUMERIC = 4,          /* non-finite loss or similar */
    CBRSUBG_INTERNAL = 5
} cbrsubg_status;

typedef struct cbrsubg_config cbrsubg_config;
typedef struct cbrsubg_graph cbrsubg_graph;
typedef struct cbrsubg_model cbrsubg_model;

/* Library version and build stamp. */
CBRSUBG_API const char* cbrsubg_version(void);

/* Message of the last failed call on this thread ("" if none). */
CBRSUBG_API const char* cbrsubg_last_error(void);

/* Experiment configuration: defaults, then a file, then key/value overrides. */
CBRSUBG_API cbrsubg_status cbrsubg_config_new(cbrsubg_config** out);
CBRSUBG_API void cbrsubg_config_free(cbrsubg_config* cfg);
CBRSUBG_API cbrsubg_status cbrsubg_config_load(cbrsubg_config* cfg, const char* path);
CBRSUBG_API cbrsubg_status cbrsubg_config_set(cbrsubg_config* cfg, const char* key, const char* value);

/* Copies the value (or the whole resolved config as INI text when key is
 * NULL) into buf. *needed receives the size including the terminator; a
 * too-small buffer is not an error, the text is just cut. */
CBRSUBG_API cbrsubg_status cbrsubg_config_get(const cbrsubg_config* cfg, const char* key, char* buf,
                                              size_t len, size_t* needed);

/* Runs gen-data, train, eval, sweep-knn, ablate-distance, collect, stats or
 * baseline. Progress goes to stdout. */
CBRSUBG_API cbrsubg_status cbrsubg_run(const cbrsubg_config* cfg, const char* command);

/* Number of command names; cbrsubg_command_name(i) for i below it. */
CBRSUBG_API size_t cbrsubg_command_count(void);
CBRSUBG_API const char* cbrsubg_command_name(size_t i);

/* Knowledge graph from a head<TAB>relation<TAB>tail file. */
CBRSUBG_API cbrsubg_status cbrsubg_graph_load_tsv(const char* path, cbrsubg_graph** out);
CBRSUBG_API void cbrsubg_graph_free(cbrsubg_graph* g);
CBRSUBG_API cbrsubg_status cbrsubg_graph_counts(const cbrsubg_graph* g, uint64_t* entities,
                                                uint64_t* relations, uint64_t* triples);

/* Model checkpoints. */
CBRSUBG_API cbrsubg_status cbrsubg_model_load(const char* path, cbrsubg_model** out);
CBRSUBG_API cbrsubg_status cbrsubg_model_save(const cbrsubg_model* m, const char* path);
CBRSUBG_API void cbrsubg_model_free(cbrsubg_model* m);
CBRSUBG_API cbrsubg_status cbrsubg_model_info(const cbrsubg_model* m, uint32_t* layers, uint32_t* hidden,
                                              uint32_t* num_relations, uint64_t* num_params);

#ifdef __cplusplus
}
#endif

#endif
