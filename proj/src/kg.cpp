#include "cbrsubg/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cbrsubg/error.hpp"

namespace cbrsubg {

namespace {

std::string describe(const Triple& t) {
    std::ostringstream os;
    os << "(" << t.head << ", " << t.relation << ", " << t.tail << ")";
    return os.str();
}

} // namespace

KnowledgeGraph KnowledgeGraph::build(std::vector<Triple> triples, std::size_t num_entities,
                                     std::size_t num_relations,
                                     std::vector<std::uint32_t> entity_types) {
    for (const auto& t : triples) {
        if (t.head >= num_entities || t.tail >= num_entities || t.relation >= num_relations) {
            fail(ErrorKind::InvalidArgument,
                 "triple " + describe(t) + " out of range (entities=" +
                     std::to_string(num_entities) + ", relations=" +
                     std::to_string(num_relations) + ")");
        }
    }
    require(entity_types.empty() || entity_types.size() == num_entities,
            "entity_types must be empty or have one entry per entity");

    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

    KnowledgeGraph g;
    g.num_entities_ = num_entities;
    g.num_relations_ = num_relations;
    g.entity_types_ = std::move(entity_types);

    auto fill = [num_entities](HalfAdjacency& adj, std::vector<Triple> keyed) {
        // keyed: head = owner, relation, tail = neighbor; sorted.
        std::sort(keyed.begin(), keyed.end());
        adj.offsets.assign(num_entities + 1, 0);
        for (const auto& t : keyed) ++adj.offsets[t.head + 1];
        for (std::size_t e = 0; e < num_entities; ++e) adj.offsets[e + 1] += adj.offsets[e];
        adj.relations.reserve(keyed.size());
        adj.neighbors.reserve(keyed.size());
        for (const auto& t : keyed) {
            adj.relations.push_back(t.relation);
            adj.neighbors.push_back(t.tail);
        }
    };

    std::vector<Triple> reversed;
    reversed.reserve(triples.size());
    for (const auto& t : triples) reversed.push_back({t.tail, t.relation, t.head});
    fill(g.out_, triples);
    fill(g.in_, std::move(reversed));

    std::vector<std::vector<Incidence>> per_entity(num_entities);
    for (const auto& t : triples) {
        per_entity[t.head].push_back({t.relation, Direction::Forward, t.tail});
        per_entity[t.tail].push_back({t.relation, Direction::Backward, t.head});
    }
    g.incident_offsets_.assign(num_entities + 1, 0);
    g.incident_.reserve(2 * triples.size());
    for (std::size_t e = 0; e < num_entities; ++e) {
        auto& list = per_entity[e];
        std::sort(list.begin(), list.end());
        g.incident_.insert(g.incident_.end(), list.begin(), list.end());
        g.incident_offsets_[e + 1] = g.incident_.size();
    }
    g.triples_ = std::move(triples);
    return g;
}

std::span<const EntityId> KnowledgeGraph::HalfAdjacency::range(EntityId e, RelationId r) const {
    auto first = relations.begin() + static_cast<std::ptrdiff_t>(offsets[e]);
    auto last = relations.begin() + static_cast<std::ptrdiff_t>(offsets[e + 1]);
    auto [lo, hi] = std::equal_range(first, last, r);
    auto base = neighbors.data();
    return {base + (lo - relations.begin()), base + (hi - relations.begin())};
}

std::span<const EntityId> KnowledgeGraph::out_neighbors(EntityId e, RelationId r) const {
    require(e < num_entities_, "entity out of range");
    return out_.range(e, r);
}

std::span<const EntityId> KnowledgeGraph::in_neighbors(EntityId e, RelationId r) const {
    require(e < num_entities_, "entity out of range");
    return in_.range(e, r);
}

bool KnowledgeGraph::has_edge(EntityId head, RelationId r, EntityId tail) const {
    if (head >= num_entities_ || tail >= num_entities_) return false;
    auto tails = out_.range(head, r);
    return std::binary_search(tails.begin(), tails.end(), tail);
}

std::vector<std::uint32_t> multi_source_bfs(const KnowledgeGraph& g,
                                            std::span<const EntityId> sources,
                                            std::uint32_t max_hops) {
    require(!sources.empty(), "multi_source_bfs: empty source set");
    std::vector<std::uint32_t> dist(g.num_entities(), kBeyond);
    std::vector<EntityId> frontier;
    for (EntityId s : sources) {
        require(s < g.num_entities(), "multi_source_bfs: source out of range");
        if (dist[s] != 0) {
            dist[s] = 0;
            frontier.push_back(s);
        }
    }
    std::vector<EntityId> next;
    for (std::uint32_t d = 1; d <= max_hops && !frontier.empty(); ++d) {
        next.clear();
        for (EntityId u : frontier) {
            for (const auto& inc : g.incident(u)) {
                if (dist[inc.neighbor] == kBeyond) {
                    dist[inc.neighbor] = d;
                    next.push_back(inc.neighbor);
                }
            }
        }
        frontier.swap(next);
    }
    return dist;
}

namespace {

struct PathSearch {
    const KnowledgeGraph& g;
    std::vector<char> is_goal;
    std::vector<char> on_path;
    std::size_t max_len;
    Path current;
    std::vector<Path> out;

    void visit(EntityId u) {
        if (is_goal[u]) out.push_back(current);
        if (current.steps.size() == max_len) return;
        for (const auto& inc : g.incident(u)) {
            if (on_path[inc.neighbor]) continue;
            on_path[inc.neighbor] = 1;
            current.steps.push_back({inc.relation, inc.dir, inc.neighbor});
            visit(inc.neighbor);
            current.steps.pop_back();
            on_path[inc.neighbor] = 0;
        }
    }
};

} // namespace

std::vector<Path> dfs_paths(const KnowledgeGraph& g, EntityId start,
                            std::span<const EntityId> goals, std::size_t max_len) {
    require(start < g.num_entities(), "dfs_paths: start out of range");
    PathSearch search{g, std::vector<char>(g.num_entities(), 0),
                      std::vector<char>(g.num_entities(), 0), max_len, Path{start, {}}, {}};
    for (EntityId goal : goals) {
        if (goal < g.num_entities()) search.is_goal[goal] = 1;
    }
    search.on_path[start] = 1;
    search.visit(start);
    return std::move(search.out);
}

std::uint32_t Vocabulary::intern(const std::string& s) {
    auto [it, inserted] = ids_.try_emplace(s, static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.push_back(s);
    return it->second;
}

std::uint32_t Vocabulary::lookup(const std::string& s) const {
    auto it = ids_.find(s);
    return it == ids_.end() ? kBeyond : it->second;
}

void Vocabulary::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::Io, "cannot write vocabulary " + path.string());
    for (std::size_t i = 0; i < names_.size(); ++i) os << names_[i] << '\t' << i << '\n';
}

LoadedGraph load_triples_tsv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "cannot read triples file " + path.string());
    LoadedGraph out;
    std::vector<Triple> triples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) +
                                        ": expected head<TAB>relation<TAB>tail");
        }
        Triple t;
        t.head = out.entities.intern(line.substr(0, t1));
        t.relation = out.relations.intern(line.substr(t1 + 1, t2 - t1 - 1));
        t.tail = out.entities.intern(line.substr(t2 + 1));
        triples.push_back(t);
    }
    out.graph = KnowledgeGraph::build(std::move(triples), out.entities.size(),
                                      out.relations.size());
    return out;
}

} // namespace cbrsubg
