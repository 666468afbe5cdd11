#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cbrsubg/kg.hpp"

namespace cbrsubg {

struct ChainStep {
    RelationId relation = 0;
    Direction dir = Direction::Forward;

    friend auto operator<=>(const ChainStep&, const ChainStep&) = default;
};

/// Relation sequence of a path with per-step direction, entities erased.
using ChainType = std::vector<ChainStep>;

std::string chain_to_string(const ChainType& chain);

inline constexpr std::uint32_t kDistanceBuckets = 4; // 0, 1, 2, 3+

/// Per-query slice of a larger graph, re-indexed to local ids 0..n-1.
struct QuerySubgraph {
    std::string query_id;
    std::vector<EntityId> entities;       // local id -> source-graph id, ascending
    KnowledgeGraph graph;                 // over local ids, same relation space
    std::vector<EntityId> query_entities; // local ids
    std::vector<std::uint32_t> distance;  // per local node, bucket in [0, kDistanceBuckets)
    std::optional<std::vector<EntityId>> answers; // local ids of gold answers present
    std::size_t num_gold = 0;                     // gold answers before slicing
    bool fallback = false;
    bool truncated = false;

    std::size_t num_nodes() const noexcept { return entities.size(); }
    bool covers_all_answers() const noexcept {
        return answers.has_value() && answers->size() == num_gold;
    }
};

/// Builds a subgraph from source-graph triples. Nodes are the query entities
/// plus every triple endpoint; distances are undirected BFS over the
/// subgraph's own edges, bucketed.
QuerySubgraph make_subgraph(const KnowledgeGraph& source, std::span<const Triple> triples,
                            std::span<const EntityId> query_entities,
                            std::optional<std::span<const EntityId>> gold_answers = std::nullopt);

/// Wraps a whole graph (the synthetic setting: one graph per query).
QuerySubgraph whole_graph_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                   std::optional<std::span<const EntityId>> gold_answers);

/// Chain types of all simple paths (up to max_hops) linking any query entity
/// to any answer. Out-of-range entities are skipped.
std::set<ChainType> mine_chain_types(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                     std::span<const EntityId> answers, std::size_t max_hops = 3);

/// Like mine_chain_types, but counts the (query entity, answer) pairs each
/// chain type links.
std::map<ChainType, std::size_t> mine_chain_counts(const KnowledgeGraph& g,
                                                   std::span<const EntityId> query_entities,
                                                   std::span<const EntityId> answers,
                                                   std::size_t max_hops = 3);

/// Entities reached at the end of some complete walk of the chain from start.
std::vector<EntityId> chain_endpoints(const KnowledgeGraph& g, EntityId start, const ChainType& chain);

struct ReplayOptions {
    std::size_t edge_budget = 0; // 0 = unlimited
};

/// Follows every chain from every query entity and keeps the edges lying on
/// some complete instantiation. Chains that cannot be completed contribute
/// nothing. With an edge budget, hub fan-out is cut to the lowest-id
/// neighbors once the budget would be exceeded.
QuerySubgraph replay_chains(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                            const std::set<ChainType>& chains, const ReplayOptions& opts = {});

/// Edges of replay_chains in source ids (sorted); sets *truncated if cut.
std::vector<Triple> replay_edges(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                 const std::set<ChainType>& chains, const ReplayOptions& opts = {},
                                 bool* truncated = nullptr);

/// All edges with both endpoints within `hops` undirected hops of a query
/// entity. A non-zero edge_budget keeps a seeded, degree-weighted sample.
std::vector<Triple> khop_edges(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                               std::uint32_t hops, std::size_t edge_budget = 0,
                               std::uint64_t seed = 0);

QuerySubgraph khop_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                            std::uint32_t hops);

struct CollectOptions {
    std::size_t max_hops = 3;
    std::size_t edge_budget = 50000;
    std::uint32_t fallback_hops = 2;
    std::size_t fallback_budget = 5000;
    std::uint64_t seed = 0;
};

/// Adaptive collection for one query: replay the chains; when nothing
/// replays, fall back to a capped k-hop neighborhood (flagged).
QuerySubgraph collect_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                               const std::set<ChainType>& chains,
                               std::optional<std::span<const EntityId>> gold_answers,
                               const CollectOptions& opts);

struct SubgraphStats {
    std::size_t queries = 0;
    double mean_edges = 0.0;
    double mean_relations = 0.0;
    double mean_entities = 0.0;
    double answer_coverage = 0.0; // fraction of queries with every gold answer present
    std::size_t fallbacks = 0;
};

SubgraphStats subgraph_stats(std::span<const QuerySubgraph> subgraphs);

} // namespace cbrsubg
