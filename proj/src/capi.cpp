#include "cbrsubg.h"

#include <cstring>
#include <iostream>
#include <new>
#include <string>

#include "cbrsubg/error.hpp"
#include "cbrsubg/gnn.hpp"
#include "cbrsubg/harness.hpp"

struct cbrsubg_config {
    cbrsubg::ExperimentConfig cfg;
};

struct cbrsubg_graph {
    cbrsubg::LoadedGraph kg;
};

struct cbrsubg_model {
    cbrsubg::GnnModel model;
    cbrsubg::RelationTable relations;
    bool has_relations = false;
};

namespace {

thread_local std::string last_error;

cbrsubg_status status_of(cbrsubg::ErrorKind k) {
    switch (k) {
    case cbrsubg::ErrorKind::InvalidArgument: return CBRSUBG_INVALID_ARGUMENT;
    case cbrsubg::ErrorKind::Io: return CBRSUBG_IO;
    case cbrsubg::ErrorKind::Format: return CBRSUBG_FORMAT;
    case cbrsubg::ErrorKind::Numeric: return CBRSUBG_NUMERIC;
    case cbrsubg::ErrorKind::Internal: return CBRSUBG_INTERNAL;
    }
    return CBRSUBG_INTERNAL;
}

template <class F>
cbrsubg_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return CBRSUBG_OK;
    } catch (const cbrsubg::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return CBRSUBG_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return CBRSUBG_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    if (p == nullptr) cbrsubg::fail(cbrsubg::ErrorKind::InvalidArgument, std::string(what) + " is null");
}

} // namespace

extern "C" {

const char* cbrsubg_version(void) {
    static const std::string v = cbrsubg::version_string();
    return v.c_str();
}

const char* cbrsubg_last_error(void) { return last_error.c_str(); }

cbrsubg_status cbrsubg_config_new(cbrsubg_config** out) {
    return guarded([&] {
        need(out, "out");
        *out = new cbrsubg_config();
    });
}

void cbrsubg_config_free(cbrsubg_config* cfg) { delete cfg; }

cbrsubg_status cbrsubg_config_load(cbrsubg_config* cfg, const char* path) {
    return guarded([&] {
        need(cfg, "config");
        need(path, "path");
        cfg->cfg.load_file(path);
    });
}

cbrsubg_status cbrsubg_config_set(cbrsubg_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        need(cfg, "config");
        need(key, "key");
        need(value, "value");
        cfg->cfg.set(key, value);
    });
}

cbrsubg_status cbrsubg_config_get(const cbrsubg_config* cfg, const char* key, char* buf, size_t len,
                                  size_t* needed) {
    return guarded([&] {
        need(cfg, "config");
        const std::string v = key ? cfg->cfg.get(key) : cfg->cfg.to_ini();
        if (needed) *needed = v.size() + 1;
        if (buf && len > 0) {
            const size_t n = std::min(len - 1, v.size());
            std::memcpy(buf, v.data(), n);
            buf[n] = '\0';
        }
    });
}

cbrsubg_status cbrsubg_run(const cbrsubg_config* cfg, const char* command) {
    return guarded([&] {
        need(cfg, "config");
        need(command, "command");
        cbrsubg::run_command(command, cfg->cfg, std::cout);
        std::cout.flush();
    });
}

size_t cbrsubg_command_count(void) { return cbrsubg::command_names().size(); }

const char* cbrsubg_command_name(size_t i) {
    const auto& names = cbrsubg::command_names();
    return i < names.size() ? names[i].c_str() : nullptr;
}

cbrsubg_status cbrsubg_graph_load_tsv(const char* path, cbrsubg_graph** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        auto* g = new cbrsubg_graph{cbrsubg::load_triples_tsv(path)};
        *out = g;
    });
}

void cbrsubg_graph_free(cbrsubg_graph* g) { delete g; }

cbrsubg_status cbrsubg_graph_counts(const cbrsubg_graph* g, uint64_t* entities, uint64_t* relations,
                                    uint64_t* triples) {
    return guarded([&] {
        need(g, "graph");
        if (entities) *entities = g->kg.graph.num_entities();
        if (relations) *relations = g->kg.graph.num_relations();
        if (triples) *triples = g->kg.graph.num_triples();
    });
}

cbrsubg_status cbrsubg_model_load(const char* path, cbrsubg_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        auto* m = new cbrsubg_model();
        try {
            m->model = cbrsubg::load_checkpoint(path, &m->relations);
        } catch (...) {
            delete m;
            throw;
        }
        m->has_relations = m->relations.rows > 0;
        *out = m;
    });
}

cbrsubg_status cbrsubg_model_save(const cbrsubg_model* m, const char* path) {
    return guarded([&] {
        need(m, "model");
        need(path, "path");
        cbrsubg::save_checkpoint(path, m->model, m->has_relations ? &m->relations : nullptr);
    });
}

void cbrsubg_model_free(cbrsubg_model* m) { delete m; }

cbrsubg_status cbrsubg_model_info(const cbrsubg_model* m, uint32_t* layers, uint32_t* hidden,
                                  uint32_t* num_relations, uint64_t* num_params) {
    return guarded([&] {
        need(m, "model");
        const auto& c = m->model.config();
        if (layers) *layers = static_cast<uint32_t>(c.layers);
        if (hidden) *hidden = static_cast<uint32_t>(c.hidden);
        if (num_relations) *num_relations = static_cast<uint32_t>(c.num_relations);
        if (num_params) *num_params = m->model.num_params();
    });
}

} // extern "C"
