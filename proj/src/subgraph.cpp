#include "cbrsubg/subgraph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

std::string chain_to_string(const ChainType& chain) {
    std::ostringstream os;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (i) os << ' ';
        os << (chain[i].dir == Direction::Forward ? '+' : '-') << chain[i].relation;
    }
    return os.str();
}

namespace {

std::vector<EntityId> sorted_unique(std::span<const EntityId> ids) {
    std::vector<EntityId> out(ids.begin(), ids.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::span<const EntityId> step_targets(const KnowledgeGraph& g, EntityId u, const ChainStep& s) {
    return s.dir == Direction::Forward ? g.out_neighbors(u, s.relation)
                                       : g.in_neighbors(u, s.relation);
}

Triple step_triple(EntityId from, EntityId to, const ChainStep& s) {
    return s.dir == Direction::Forward ? Triple{from, s.relation, to} : Triple{to, s.relation, from};
}

} // namespace

QuerySubgraph make_subgraph(const KnowledgeGraph& source, std::span<const Triple> triples,
                            std::span<const EntityId> query_entities,
                            std::optional<std::span<const EntityId>> gold_answers) {
    require(!query_entities.empty(), "make_subgraph: no query entities");
    QuerySubgraph sg;
    std::vector<EntityId> nodes(query_entities.begin(), query_entities.end());
    for (const auto& t : triples) {
        nodes.push_back(t.head);
        nodes.push_back(t.tail);
    }
    sg.entities = sorted_unique(nodes);
    auto local = [&](EntityId e) {
        auto it = std::lower_bound(sg.entities.begin(), sg.entities.end(), e);
        return static_cast<EntityId>(it - sg.entities.begin());
    };
    std::vector<Triple> local_triples;
    local_triples.reserve(triples.size());
    for (const auto& t : triples) local_triples.push_back({local(t.head), t.relation, local(t.tail)});

    std::vector<std::uint32_t> types;
    if (source.has_entity_types()) {
        for (EntityId e : sg.entities) types.push_back(source.entity_types()[e]);
    }
    sg.graph = KnowledgeGraph::build(std::move(local_triples), sg.entities.size(),
                                     source.num_relations(), std::move(types));
    for (EntityId q : sorted_unique(query_entities)) sg.query_entities.push_back(local(q));

    auto dist = multi_source_bfs(sg.graph, sg.query_entities, kDistanceBuckets - 1);
    sg.distance.resize(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) sg.distance[i] = std::min(dist[i], kDistanceBuckets - 1);

    if (gold_answers) {
        auto gold = sorted_unique(*gold_answers);
        sg.num_gold = gold.size();
        std::vector<EntityId> present;
        for (EntityId a : gold) {
            if (std::binary_search(sg.entities.begin(), sg.entities.end(), a)) present.push_back(local(a));
        }
        sg.answers = std::move(present);
    }
    return sg;
}

QuerySubgraph whole_graph_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                   std::optional<std::span<const EntityId>> gold_answers) {
    require(!query_entities.empty(), "whole_graph_subgraph: no query entities");
    QuerySubgraph sg;
    sg.entities.resize(g.num_entities());
    for (EntityId e = 0; e < g.num_entities(); ++e) sg.entities[e] = e;
    sg.graph = g;
    sg.query_entities = sorted_unique(query_entities);
    auto dist = multi_source_bfs(g, sg.query_entities, kDistanceBuckets - 1);
    sg.distance.resize(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) sg.distance[i] = std::min(dist[i], kDistanceBuckets - 1);
    if (gold_answers) {
        auto gold = sorted_unique(*gold_answers);
        sg.num_gold = gold.size();
        std::vector<EntityId> present;
        for (EntityId a : gold) {
            if (a < g.num_entities()) present.push_back(a);
        }
        sg.answers = std::move(present);
    }
    return sg;
}

std::map<ChainType, std::size_t> mine_chain_counts(const KnowledgeGraph& g,
                                                   std::span<const EntityId> query_entities,
                                                   std::span<const EntityId> answers,
                                                   std::size_t max_hops) {
    std::map<ChainType, std::size_t> counts;
    std::vector<EntityId> goals;
    for (EntityId a : answers) {
        if (a < g.num_entities()) goals.push_back(a);
    }
    goals = sorted_unique(goals);
    for (EntityId q : sorted_unique(query_entities)) {
        if (q >= g.num_entities()) continue;
        // Pair-level dedup: a chain counts once per (query entity, answer).
        std::set<std::pair<EntityId, ChainType>> seen;
        for (const auto& path : dfs_paths(g, q, goals, max_hops)) {
            if (path.steps.empty()) continue;
            ChainType chain;
            chain.reserve(path.steps.size());
            for (const auto& s : path.steps) chain.push_back({s.relation, s.dir});
            if (seen.emplace(path.end(), chain).second) ++counts[chain];
        }
    }
    return counts;
}

std::set<ChainType> mine_chain_types(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                     std::span<const EntityId> answers, std::size_t max_hops) {
    std::set<ChainType> out;
    for (auto& [chain, count] : mine_chain_counts(g, query_entities, answers, max_hops)) {
        out.insert(chain);
    }
    return out;
}

namespace {

struct LevelEdge {
    EntityId from;
    EntityId to;
};

// Forward expansion followed by backward pruning to complete walks. Returns
// the kept edges per step; empty if the chain cannot be completed.
std::vector<std::vector<LevelEdge>> instantiate(const KnowledgeGraph& g, EntityId start,
                                                const ChainType& chain, std::size_t budget,
                                                std::size_t& expanded, bool& truncated) {
    std::vector<std::vector<EntityId>> levels{{start}};
    std::vector<std::vector<LevelEdge>> edges(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) {
        std::vector<EntityId> next;
        for (EntityId u : levels[i]) {
            auto targets = step_targets(g, u, chain[i]);
            std::size_t take = targets.size();
            if (budget != 0 && expanded + take > budget) {
                take = budget > expanded ? budget - expanded : 0;
                truncated = true;
            }
            expanded += take;
            for (std::size_t k = 0; k < take; ++k) {
                edges[i].push_back({u, targets[k]});
                next.push_back(targets[k]);
            }
        }
        levels.push_back(sorted_unique(next));
        if (levels.back().empty()) return {};
    }
    std::vector<EntityId> alive = levels.back();
    for (std::size_t i = chain.size(); i-- > 0;) {
        std::vector<LevelEdge> kept;
        std::vector<EntityId> from;
        for (const auto& e : edges[i]) {
            if (std::binary_search(alive.begin(), alive.end(), e.to)) {
                kept.push_back(e);
                from.push_back(e.from);
            }
        }
        edges[i] = std::move(kept);
        alive = sorted_unique(from);
    }
    return edges;
}

} // namespace

std::vector<EntityId> chain_endpoints(const KnowledgeGraph& g, EntityId start, const ChainType& chain) {
    require(start < g.num_entities(), "chain_endpoints: start out of range");
    std::size_t expanded = 0;
    bool truncated = false;
    auto edges = instantiate(g, start, chain, 0, expanded, truncated);
    if (chain.empty()) return {start};
    std::vector<EntityId> ends;
    if (edges.empty()) return ends;
    for (const auto& e : edges.back()) ends.push_back(e.to);
    return sorted_unique(ends);
}

std::vector<Triple> replay_edges(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                 const std::set<ChainType>& chains, const ReplayOptions& opts,
                                 bool* truncated) {
    std::vector<Triple> out;
    std::size_t expanded = 0;
    bool cut = false;
    for (EntityId q : sorted_unique(query_entities)) {
        if (q >= g.num_entities()) continue;
        for (const auto& chain : chains) {
            auto edges = instantiate(g, q, chain, opts.edge_budget, expanded, cut);
            for (std::size_t i = 0; i < edges.size(); ++i) {
                for (const auto& e : edges[i]) out.push_back(step_triple(e.from, e.to, chain[i]));
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (truncated) *truncated = cut;
    return out;
}

QuerySubgraph replay_chains(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                            const std::set<ChainType>& chains, const ReplayOptions& opts) {
    bool truncated = false;
    auto edges = replay_edges(g, query_entities, chains, opts, &truncated);
    auto sg = make_subgraph(g, edges, query_entities);
    sg.truncated = truncated;
    return sg;
}

std::vector<Triple> khop_edges(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                               std::uint32_t hops, std::size_t edge_budget, std::uint64_t seed) {
    auto dist = multi_source_bfs(g, query_entities, hops);
    std::vector<Triple> out;
    for (EntityId u = 0; u < g.num_entities(); ++u) {
        if (dist[u] == kBeyond) continue;
        for (const auto& inc : g.incident(u)) {
            if (inc.dir == Direction::Forward && dist[inc.neighbor] != kBeyond) {
                out.push_back({u, inc.relation, inc.neighbor});
            }
        }
    }
    if (edge_budget != 0 && out.size() > edge_budget) {
        // Weighted sampling without replacement (exponential keys), weight =
        // sum of endpoint degrees.
        Rng rng(derive_seed(seed, 0xfa11));
        std::vector<std::pair<double, std::size_t>> keys;
        keys.reserve(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double w = static_cast<double>(g.degree(out[i].head) + g.degree(out[i].tail));
            const double u = std::max(uniform01(rng), 1e-300);
            keys.emplace_back(std::log(u) / w, i);
        }
        std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(edge_budget),
                          keys.end(), [](const auto& a, const auto& b) {
                              return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        std::vector<Triple> kept;
        kept.reserve(edge_budget);
        for (std::size_t i = 0; i < edge_budget; ++i) kept.push_back(out[keys[i].second]);
        std::sort(kept.begin(), kept.end());
        out = std::move(kept);
    }
    return out;
}

QuerySubgraph khop_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                            std::uint32_t hops) {
    auto edges = khop_edges(g, query_entities, hops);
    return make_subgraph(g, edges, query_entities);
}

QuerySubgraph collect_subgraph(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                               const std::set<ChainType>& chains,
                               std::optional<std::span<const EntityId>> gold_answers,
                               const CollectOptions& opts) {
    bool truncated = false;
    auto edges = replay_edges(g, query_entities, chains, ReplayOptions{opts.edge_budget}, &truncated);
    bool fallback = false;
    if (edges.empty()) {
        edges = khop_edges(g, query_entities, opts.fallback_hops, opts.fallback_budget, opts.seed);
        fallback = true;
    }
    auto sg = make_subgraph(g, edges, query_entities, gold_answers);
    sg.truncated = truncated;
    sg.fallback = fallback;
    return sg;
}

SubgraphStats subgraph_stats(std::span<const QuerySubgraph> subgraphs) {
    SubgraphStats s;
    s.queries = subgraphs.size();
    if (subgraphs.empty()) return s;
    std::size_t covered = 0;
    for (const auto& sg : subgraphs) {
        s.mean_edges += static_cast<double>(sg.graph.num_triples());
        s.mean_entities += static_cast<double>(sg.num_nodes());
        std::vector<RelationId> rels;
        for (const auto& t : sg.graph.triples()) rels.push_back(t.relation);
        std::sort(rels.begin(), rels.end());
        s.mean_relations += static_cast<double>(std::unique(rels.begin(), rels.end()) - rels.begin());
        covered += sg.covers_all_answers() ? 1 : 0;
        s.fallbacks += sg.fallback ? 1 : 0;
    }
    const double n = static_cast<double>(subgraphs.size());
    s.mean_edges /= n;
    s.mean_entities /= n;
    s.mean_relations /= n;
    s.answer_coverage = static_cast<double>(covered) / n;
    return s;
}

} // namespace cbrsubg
