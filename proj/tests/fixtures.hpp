#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cbrsubg/kg.hpp"

namespace fixtures {

using cbrsubg::EntityId;
using cbrsubg::KnowledgeGraph;
using cbrsubg::RelationId;
using cbrsubg::Triple;

inline std::vector<Triple> random_triples(std::mt19937_64& rng, std::size_t n, std::size_t r, std::size_t m) {
    std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(n - 1));
    std::uniform_int_distribution<RelationId> rel(0, static_cast<RelationId>(r - 1));
    std::vector<Triple> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back({ent(rng), rel(rng), ent(rng)});
    return out;
}

inline KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t r, std::size_t m) {
    return KnowledgeGraph::build(random_triples(rng, n, r, m), n, r);
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("cbrsubg_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::filesystem::path data_dir() { return std::filesystem::path(CBRSUBG_TEST_DATA); }

} // namespace fixtures
