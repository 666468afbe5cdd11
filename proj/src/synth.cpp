#include "cbrsubg/synth.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

using json = nlohmann::json;

// --- Shapes ----------------------------------------------------------------

namespace {

constexpr AbstractEdge kEdges2p[] = {{Var::E1, Var::V1}, {Var::V1, Var::Ans}};
constexpr AbstractEdge kEdges3p[] = {{Var::E1, Var::V1}, {Var::V1, Var::V2}, {Var::V2, Var::Ans}};
constexpr AbstractEdge kEdges2i[] = {{Var::E1, Var::Ans}, {Var::E2, Var::Ans}};
constexpr AbstractEdge kEdgesIp[] = {{Var::E1, Var::V1}, {Var::E2, Var::V1}, {Var::V1, Var::Ans}};
constexpr AbstractEdge kEdgesPi[] = {{Var::E1, Var::V1}, {Var::V1, Var::Ans}, {Var::E2, Var::Ans}};

constexpr std::size_t idx(Var v) { return static_cast<std::size_t>(v); }

} // namespace

std::string_view shape_tag(Shape s) noexcept {
    switch (s) {
    case Shape::P2: return "2p";
    case Shape::P3: return "3p";
    case Shape::I2: return "2i";
    case Shape::IP: return "ip";
    case Shape::PI: return "pi";
    }
    return "?";
}

Shape parse_shape(std::string_view tag) {
    for (Shape s : kAllShapes) {
        if (shape_tag(s) == tag) return s;
    }
    fail(ErrorKind::Format, "unknown pattern shape '" + std::string(tag) + "'");
}

std::span<const AbstractEdge> shape_edges(Shape s) noexcept {
    switch (s) {
    case Shape::P2: return kEdges2p;
    case Shape::P3: return kEdges3p;
    case Shape::I2: return kEdges2i;
    case Shape::IP: return kEdgesIp;
    case Shape::PI: return kEdgesPi;
    }
    return {};
}

std::size_t num_query_entities(Shape s) noexcept {
    return (s == Shape::P2 || s == Shape::P3) ? 1 : 2;
}

bool shape_uses(Shape s, Var v) noexcept {
    for (const auto& e : shape_edges(s)) {
        if (e.head == v || e.tail == v) return true;
    }
    return false;
}

// --- Type system -----------------------------------------------------------

std::vector<RelationId> TypeSystem::outgoing(std::uint32_t type) const {
    std::vector<RelationId> out;
    for (RelationId r = 0; r < relations.size(); ++r) {
        if (relations[r].head_type == type) out.push_back(r);
    }
    return out;
}

std::vector<RelationId> TypeSystem::incoming(std::uint32_t type) const {
    std::vector<RelationId> out;
    for (RelationId r = 0; r < relations.size(); ++r) {
        if (relations[r].tail_type == type) out.push_back(r);
    }
    return out;
}

std::vector<RelationId> TypeSystem::between(std::uint32_t head_type,
                                            std::uint32_t tail_type) const {
    std::vector<RelationId> out;
    for (RelationId r = 0; r < relations.size(); ++r) {
        if (relations[r].head_type == head_type && relations[r].tail_type == tail_type) {
            out.push_back(r);
        }
    }
    return out;
}

TypeSystem sample_type_system(std::uint64_t seed, std::uint32_t num_entity_types,
                              double edge_prob) {
    Rng rng(derive_seed(seed, 0x7e9e));
    TypeSystem ts;
    ts.num_entity_types = num_entity_types;
    for (std::uint32_t h = 0; h < num_entity_types; ++h) {
        for (std::uint32_t t = 0; t < num_entity_types; ++t) {
            if (uniform01(rng) < edge_prob) ts.relations.push_back({h, t});
        }
    }
    return ts;
}

// --- Grounding -------------------------------------------------------------

PatternType ground_pattern(const TypeSystem& ts, Shape shape, std::uint64_t seed,
                           std::uint32_t id, std::size_t max_retries) {
    require(ts.num_entity_types > 0, "ground_pattern: type system has no entity types");
    Rng rng(derive_seed(seed, 0x9a77));
    const auto edges = shape_edges(shape);
    for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
        PatternType pt;
        pt.id = id;
        pt.shape = shape;
        pt.node_types.fill(kUnusedType);
        pt.node_types[idx(Var::E1)] =
            static_cast<std::uint32_t>(uniform_index(rng, ts.num_entity_types));
        bool dead_end = false;
        for (const auto& e : edges) {
            const bool head_known = pt.node_types[idx(e.head)] != kUnusedType;
            const bool tail_known = pt.node_types[idx(e.tail)] != kUnusedType;
            std::vector<RelationId> options;
            if (head_known && tail_known) {
                options = ts.between(pt.node_types[idx(e.head)], pt.node_types[idx(e.tail)]);
            } else if (head_known) {
                options = ts.outgoing(pt.node_types[idx(e.head)]);
            } else {
                options = ts.incoming(pt.node_types[idx(e.tail)]);
            }
            if (options.empty()) {
                dead_end = true;
                break;
            }
            RelationId r = options[uniform_index(rng, options.size())];
            pt.edge_relations.push_back(r);
            pt.node_types[idx(e.head)] = ts.relations[r].head_type;
            pt.node_types[idx(e.tail)] = ts.relations[r].tail_type;
        }
        if (!dead_end) return pt;
    }
    fail(ErrorKind::InvalidArgument, "ungroundable shape " + std::string(shape_tag(shape)) +
                                         " under this type system");
}

// --- Pattern execution -----------------------------------------------------

namespace {

struct Matcher {
    const KnowledgeGraph& g;
    const PatternType& pt;
    std::span<const AbstractEdge> edges;
    std::array<EntityId, kNumVars> binding{};
    std::array<bool, kNumVars> bound{};
    std::vector<Var> order;
    std::vector<EntityId> answers;

    bool consistent(Var just_bound) const {
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto& e = edges[i];
            if (e.head != just_bound && e.tail != just_bound) continue;
            if (!bound[idx(e.head)] || !bound[idx(e.tail)]) continue;
            if (!g.has_edge(binding[idx(e.head)], pt.edge_relations[i], binding[idx(e.tail)])) {
                return false;
            }
        }
        return true;
    }

    // Candidates for v from one edge to an already-bound variable.
    std::span<const EntityId> candidates(Var v) const {
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto& e = edges[i];
            if (e.tail == v && bound[idx(e.head)]) {
                return g.out_neighbors(binding[idx(e.head)], pt.edge_relations[i]);
            }
            if (e.head == v && bound[idx(e.tail)]) {
                return g.in_neighbors(binding[idx(e.tail)], pt.edge_relations[i]);
            }
        }
        return {};
    }

    void search(std::size_t depth) {
        if (depth == order.size()) {
            answers.push_back(binding[idx(Var::Ans)]);
            return;
        }
        Var v = order[depth];
        for (EntityId c : candidates(v)) {
            binding[idx(v)] = c;
            bound[idx(v)] = true;
            if (consistent(v)) search(depth + 1);
            bound[idx(v)] = false;
        }
    }
};

} // namespace

std::vector<EntityId> execute_pattern(const KnowledgeGraph& g, const PatternType& pt,
                                      std::span<const EntityId> query_bindings) {
    const std::size_t nq = num_query_entities(pt.shape);
    require(query_bindings.size() == nq, "execute_pattern: expected " + std::to_string(nq) +
                                             " query bindings");
    Matcher m{g, pt, shape_edges(pt.shape), {}, {}, {}, {}};
    for (std::size_t i = 0; i < nq; ++i) {
        require(query_bindings[i] < g.num_entities(), "execute_pattern: binding out of range");
        m.binding[i] = query_bindings[i];
        m.bound[i] = true;
    }
    if (!m.consistent(Var::E1) || (nq == 2 && !m.consistent(Var::E2))) return {};
    // Bind free variables in edge order; each has an edge to an earlier one.
    for (const auto& e : m.edges) {
        for (Var v : {e.head, e.tail}) {
            if (idx(v) >= nq && std::find(m.order.begin(), m.order.end(), v) == m.order.end()) {
                m.order.push_back(v);
            }
        }
    }
    m.search(0);
    std::sort(m.answers.begin(), m.answers.end());
    m.answers.erase(std::unique(m.answers.begin(), m.answers.end()), m.answers.end());
    return m.answers;
}

// --- Graph sampling --------------------------------------------------------

std::string_view split_name(Split s) noexcept {
    switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        if (split_name(s) == name) return s;
    }
    fail(ErrorKind::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

std::string_view edge_model_name(EdgeModel m) noexcept {
    switch (m) {
    case EdgeModel::HeadDraw: return "head-draw";
    case EdgeModel::Pair: return "pair";
    case EdgeModel::Outward: return "outward";
    }
    return "?";
}

EdgeModel parse_edge_model(std::string_view name) {
    for (EdgeModel m : {EdgeModel::HeadDraw, EdgeModel::Pair, EdgeModel::Outward}) {
        if (edge_model_name(m) == name) return m;
    }
    fail(ErrorKind::InvalidArgument, "unknown edge model '" + std::string(name) + "'");
}

namespace {

struct GraphDraft {
    std::vector<std::uint32_t> types;
    std::vector<Triple> triples;
};

// Proposes edges h->t for an ordered pair: a relation is drawn uniformly from
// the relations the head type may emit and kept with probability edge_prob if
// its tail type matches.
bool propose(const TypeSystem& ts, const std::vector<std::vector<RelationId>>& outgoing,
             GraphDraft& d, EntityId h, EntityId t, double edge_prob, Rng& rng) {
    const auto& opts = outgoing[d.types[h]];
    if (opts.empty()) return false;
    RelationId r = opts[uniform_index(rng, opts.size())];
    const bool hit = uniform01(rng) < edge_prob;
    if (!hit || ts.relations[r].tail_type != d.types[t]) return false;
    d.triples.push_back({h, r, t});
    return true;
}

// Links u -> v with probability edge_prob when the types allow it.
bool propose_outward(const TypeSystem& ts, GraphDraft& d, EntityId u, EntityId v, double edge_prob, Rng& rng) {
    if (uniform01(rng) >= edge_prob) return false;
    const auto rels = ts.between(d.types[u], d.types[v]);
    if (rels.empty()) return false;
    d.triples.push_back({u, rels[uniform_index(rng, rels.size())], v});
    return true;
}

// Links an unordered pair with probability edge_prob, using a relation drawn
// uniformly from those the two types allow in either direction.
bool propose_pair(const TypeSystem& ts, GraphDraft& d, EntityId u, EntityId v, double edge_prob, Rng& rng) {
    if (uniform01(rng) >= edge_prob) return false;
    const auto fwd = ts.between(d.types[u], d.types[v]);
    const auto bwd = ts.between(d.types[v], d.types[u]);
    const std::size_t total = fwd.size() + bwd.size();
    if (total == 0) return false;
    const std::size_t k = uniform_index(rng, total);
    if (k < fwd.size()) {
        d.triples.push_back({u, fwd[k], v});
    } else {
        d.triples.push_back({v, bwd[k - fwd.size()], u});
    }
    return true;
}

std::optional<SyntheticExample> try_sample(const TypeSystem& ts, const PatternType& pt,
                                           std::uint64_t seed, const GeneratorConfig& cfg) {
    Rng rng(seed);
    const std::uint32_t n = cfg.num_entities;
    const std::size_t nq = num_query_entities(pt.shape);
    std::vector<std::vector<RelationId>> outgoing(ts.num_entity_types);
    for (std::uint32_t t = 0; t < ts.num_entity_types; ++t) outgoing[t] = ts.outgoing(t);

    GraphDraft d;
    d.types.resize(n);
    for (auto& t : d.types) t = static_cast<std::uint32_t>(uniform_index(rng, ts.num_entity_types));

    // Query entities sit at random positions with their pattern-imposed types.
    std::vector<EntityId> perm(n);
    for (EntityId i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::array<EntityId, kNumVars> bindings{};
    for (std::size_t q = 0; q < nq; ++q) {
        bindings[q] = perm[q];
        d.types[perm[q]] = pt.node_types[q];
    }

    // Grow outward from the query entities in BFS-frontier order. Every pair
    // with an endpoint at depth < max_hops is proposed once when that endpoint
    // is on the frontier, then pairs at the boundary depth.
    std::vector<std::uint32_t> depth(n, kBeyond);
    std::vector<EntityId> frontier;
    for (std::size_t q = 0; q < nq; ++q) {
        depth[bindings[q]] = 0;
        frontier.push_back(bindings[q]);
    }
    std::vector<char> considered(static_cast<std::size_t>(n) * n, 0);
    auto mark = [&](EntityId a, EntityId b) {
        char& c = considered[static_cast<std::size_t>(std::min(a, b)) * n + std::max(a, b)];
        if (c) return false;
        c = 1;
        return true;
    };
    for (std::uint32_t level = 0; level < cfg.max_hops; ++level) {
        std::vector<EntityId> next;
        for (EntityId u : frontier) {
            for (EntityId v = 0; v < n; ++v) {
                if (v == u || !mark(u, v)) continue;
                bool linked = false;
                if (cfg.edge_model == EdgeModel::Pair) {
                    linked = propose_pair(ts, d, u, v, cfg.edge_prob, rng);
                } else if (cfg.edge_model == EdgeModel::Outward) {
                    linked = propose_outward(ts, d, u, v, cfg.edge_prob, rng);
                } else {
                    linked = propose(ts, outgoing, d, u, v, cfg.edge_prob, rng);
                    linked = propose(ts, outgoing, d, v, u, cfg.edge_prob, rng) || linked;
                }
                if (linked && depth[v] == kBeyond) {
                    depth[v] = level + 1;
                    next.push_back(v);
                }
            }
        }
        frontier = std::move(next);
    }
    for (EntityId u : frontier) {
        if (cfg.edge_model == EdgeModel::Outward) break;
        for (EntityId v : frontier) {
            if (v <= u || !mark(u, v)) continue;
            if (cfg.edge_model == EdgeModel::Pair) {
                propose_pair(ts, d, u, v, cfg.edge_prob, rng);
            } else {
                propose(ts, outgoing, d, u, v, cfg.edge_prob, rng);
                propose(ts, outgoing, d, v, u, cfg.edge_prob, rng);
            }
        }
    }
    // Entities the growth never reached are attached to one random compatible
    // entity strictly inside the radius.
    for (EntityId v = 0; v < n; ++v) {
        if (depth[v] != kBeyond) continue;
        std::vector<Triple> options;
        for (EntityId u = 0; u < n; ++u) {
            if (depth[u] == kBeyond || depth[u] >= cfg.max_hops) continue;
            for (RelationId r : ts.between(d.types[u], d.types[v])) options.push_back({u, r, v});
            for (RelationId r : ts.between(d.types[v], d.types[u])) options.push_back({v, r, u});
        }
        if (options.empty()) return std::nullopt;
        const Triple& t = options[uniform_index(rng, options.size())];
        d.triples.push_back(t);
        depth[v] = depth[t.head == v ? t.tail : t.head] + 1;
    }

    // Ground the free variables on distinct entities of the required types
    // and insert the pattern's edges.
    std::vector<char> taken(n, 0);
    for (std::size_t q = 0; q < nq; ++q) taken[bindings[q]] = 1;
    for (Var v : {Var::V1, Var::V2, Var::Ans}) {
        if (!shape_uses(pt.shape, v)) continue;
        std::vector<EntityId> pool;
        for (EntityId e = 0; e < n; ++e) {
            if (!taken[e] && d.types[e] == pt.node_types[idx(v)]) pool.push_back(e);
        }
        if (pool.empty()) return std::nullopt;
        bindings[idx(v)] = pool[uniform_index(rng, pool.size())];
        taken[bindings[idx(v)]] = 1;
    }
    const auto edges = shape_edges(pt.shape);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        d.triples.push_back(
            {bindings[idx(edges[i].head)], pt.edge_relations[i], bindings[idx(edges[i].tail)]});
    }

    SyntheticExample ex;
    ex.pattern_type = pt.id;
    ex.shape = pt.shape;
    ex.bindings = bindings;
    ex.query_entities.assign(bindings.begin(), bindings.begin() + static_cast<std::ptrdiff_t>(nq));
    ex.graph = KnowledgeGraph::build(std::move(d.triples), n, ts.num_relations(), d.types);
    ex.answers = execute_pattern(ex.graph, pt, ex.query_entities);

    std::size_t answer_typed = 0;
    for (EntityId e = 0; e < n; ++e) answer_typed += d.types[e] == pt.node_types[idx(Var::Ans)];
    if (ex.answers.empty() || ex.answers.size() == answer_typed) return std::nullopt;
    return ex;
}

} // namespace

SyntheticExample sample_graph_with_pattern(const TypeSystem& ts, const PatternType& pt,
                                           std::uint64_t seed, const GeneratorConfig& cfg) {
    require(cfg.num_entities >= kNumVars, "sample_graph_with_pattern: too few entities");
    for (std::uint32_t attempt = 0; attempt <= cfg.max_resamples; ++attempt) {
        if (auto ex = try_sample(ts, pt, seed + attempt, cfg)) return std::move(*ex);
    }
    fail(ErrorKind::Internal, "pattern type " + std::to_string(pt.id) +
                                  ": no non-degenerate graph within the resample budget");
}

// --- Dataset assembly ------------------------------------------------------

std::vector<const SyntheticExample*> SyntheticDataset::split(Split s) const {
    std::vector<const SyntheticExample*> out;
    for (const auto& ex : examples) {
        if (ex.split == s) out.push_back(&ex);
    }
    return out;
}

SyntheticDataset assemble_dataset(const GeneratorConfig& cfg) {
    require(cfg.num_pattern_types > 0 && cfg.graphs_per_split > 0,
            "assemble_dataset: empty dataset requested");
    SyntheticDataset ds;
    ds.config = cfg;
    ds.types = sample_type_system(cfg.seed, cfg.num_entity_types, cfg.type_edge_prob);
    require(!ds.types.relations.empty(), "assemble_dataset: type system has no relations");

    Rng shape_rng(derive_seed(cfg.seed, 0x5a9e));
    for (std::uint32_t p = 0; p < cfg.num_pattern_types; ++p) {
        Shape s = kAllShapes[uniform_index(shape_rng, kAllShapes.size())];
        ds.patterns.push_back(ground_pattern(ds.types, s, derive_seed(cfg.seed, 0x10000 + p), p));
    }

    const std::uint32_t per_split = cfg.num_pattern_types * cfg.graphs_per_split;
    ds.examples.resize(static_cast<std::size_t>(per_split) * 3);
    for (Split split : {Split::Train, Split::Valid, Split::Test}) {
        for (std::uint32_t p = 0; p < cfg.num_pattern_types; ++p) {
            for (std::uint32_t k = 0; k < cfg.graphs_per_split; ++k) {
                const std::uint32_t id = static_cast<std::uint32_t>(split) * per_split +
                                         p * cfg.graphs_per_split + k;
                auto ex = sample_graph_with_pattern(ds.types, ds.patterns[p],
                                                    derive_seed(cfg.seed, 0x100000000ULL + id), cfg);
                ex.id = id;
                ex.split = split;
                ex.entity_offset = id * cfg.num_entities;
                for (std::uint32_t j = 0; j < cfg.graphs_per_split; ++j) {
                    const std::uint32_t nb = p * cfg.graphs_per_split + j;
                    if (nb != id) ex.knn.push_back(nb);
                }
                ds.examples[id] = std::move(ex);
            }
        }
    }
    return ds;
}

// --- Serialization ---------------------------------------------------------

namespace {

json pattern_json(const PatternType& pt) {
    json types = json::array();
    for (std::size_t v = 0; v < kNumVars; ++v) {
        types.push_back(pt.node_types[v] == kUnusedType ? json(nullptr) : json(pt.node_types[v]));
    }
    return json{{"id", pt.id},
                {"shape", std::string(shape_tag(pt.shape))},
                {"edge_relations", pt.edge_relations},
                {"node_types", types}};
}

PatternType pattern_from_json(const json& j) {
    PatternType pt;
    pt.id = j.at("id").get<std::uint32_t>();
    pt.shape = parse_shape(j.at("shape").get<std::string>());
    pt.edge_relations = j.at("edge_relations").get<std::vector<RelationId>>();
    const auto& types = j.at("node_types");
    for (std::size_t v = 0; v < kNumVars; ++v) {
        pt.node_types[v] = types.at(v).is_null() ? kUnusedType : types.at(v).get<std::uint32_t>();
    }
    require(pt.edge_relations.size() == shape_edges(pt.shape).size(),
            "pattern " + std::to_string(pt.id) + ": edge count does not match shape");
    return pt;
}

json example_json(const SyntheticExample& ex) {
    const EntityId off = ex.entity_offset;
    json triples = json::array();
    for (const auto& t : ex.graph.triples()) triples.push_back({t.head + off, t.relation, t.tail + off});
    auto shift = [off](std::span<const EntityId> ids) {
        std::vector<EntityId> out(ids.begin(), ids.end());
        for (auto& e : out) e += off;
        return out;
    };
    json bindings = json::array();
    for (std::size_t v = 0; v < kNumVars; ++v) {
        bindings.push_back(shape_uses(ex.shape, static_cast<Var>(v)) ? json(ex.bindings[v] + off)
                                                                     : json(nullptr));
    }
    return json{{"id", ex.id},
                {"split", std::string(split_name(ex.split))},
                {"pattern_type", ex.pattern_type},
                {"shape", std::string(shape_tag(ex.shape))},
                {"entity_offset", off},
                {"num_entities", ex.graph.num_entities()},
                {"entity_types", std::vector<std::uint32_t>(ex.graph.entity_types().begin(),
                                                            ex.graph.entity_types().end())},
                {"triples", triples},
                {"query_entities", shift(ex.query_entities)},
                {"bindings", bindings},
                {"answers", shift(ex.answers)},
                {"knn", ex.knn}};
}

SyntheticExample example_from_json(const json& j, std::size_t num_relations) {
    SyntheticExample ex;
    ex.id = j.at("id").get<std::uint32_t>();
    ex.split = parse_split(j.at("split").get<std::string>());
    ex.pattern_type = j.at("pattern_type").get<std::uint32_t>();
    ex.shape = parse_shape(j.at("shape").get<std::string>());
    ex.entity_offset = j.at("entity_offset").get<EntityId>();
    const auto n = j.at("num_entities").get<std::size_t>();
    const EntityId off = ex.entity_offset;
    auto local = [&](EntityId e) {
        if (e < off || e - off >= n) {
            fail(ErrorKind::Format, "example " + std::to_string(ex.id) + ": entity " +
                                        std::to_string(e) + " outside its id range");
        }
        return e - off;
    };
    std::vector<Triple> triples;
    for (const auto& t : j.at("triples")) {
        triples.push_back({local(t.at(0).get<EntityId>()), t.at(1).get<RelationId>(),
                           local(t.at(2).get<EntityId>())});
    }
    ex.graph = KnowledgeGraph::build(std::move(triples), n, num_relations,
                                     j.at("entity_types").get<std::vector<std::uint32_t>>());
    for (auto e : j.at("query_entities").get<std::vector<EntityId>>()) ex.query_entities.push_back(local(e));
    for (auto e : j.at("answers").get<std::vector<EntityId>>()) ex.answers.push_back(local(e));
    const auto& b = j.at("bindings");
    for (std::size_t v = 0; v < kNumVars; ++v) {
        ex.bindings[v] = b.at(v).is_null() ? 0 : local(b.at(v).get<EntityId>());
    }
    ex.knn = j.at("knn").get<std::vector<std::uint32_t>>();
    return ex;
}

json config_json(const GeneratorConfig& c) {
    return json{{"seed", c.seed},
                {"num_entity_types", c.num_entity_types},
                {"type_edge_prob", c.type_edge_prob},
                {"num_pattern_types", c.num_pattern_types},
                {"graphs_per_split", c.graphs_per_split},
                {"num_entities", c.num_entities},
                {"edge_prob", c.edge_prob},
                {"edge_model", edge_model_name(c.edge_model)},
                {"max_hops", c.max_hops},
                {"max_resamples", c.max_resamples}};
}

GeneratorConfig config_from_json(const json& j) {
    GeneratorConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.num_entity_types = j.at("num_entity_types").get<std::uint32_t>();
    c.type_edge_prob = j.at("type_edge_prob").get<double>();
    c.num_pattern_types = j.at("num_pattern_types").get<std::uint32_t>();
    c.graphs_per_split = j.at("graphs_per_split").get<std::uint32_t>();
    c.num_entities = j.at("num_entities").get<std::uint32_t>();
    c.edge_prob = j.at("edge_prob").get<double>();
    c.edge_model = parse_edge_model(j.at("edge_model").get<std::string>());
    c.max_hops = j.at("max_hops").get<std::uint32_t>();
    c.max_resamples = j.at("max_resamples").get<std::uint32_t>();
    return c;
}

json parse_line(const std::string& line, const std::filesystem::path& file, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
}

} // namespace

std::string write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        fail(ErrorKind::Io, "cannot create output directory " + dir.string());
    }
    std::map<std::string, std::string> files;

    json types{{"num_entity_types", ds.types.num_entity_types}, {"relations", json::array()}};
    for (const auto& r : ds.types.relations) types["relations"].push_back({r.head_type, r.tail_type});
    files["types.json"] = types.dump() + "\n";

    std::string patterns;
    for (const auto& pt : ds.patterns) patterns += pattern_json(pt).dump() + "\n";
    files["patterns.jsonl"] = std::move(patterns);

    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        std::string body;
        for (const auto* ex : ds.split(s)) body += example_json(*ex).dump() + "\n";
        files[std::string(split_name(s)) + ".jsonl"] = std::move(body);
    }

    json manifest{{"generator", std::string(kGeneratorVersion)},
                  {"config", config_json(ds.config)},
                  {"counts",
                   {{"relations", ds.types.num_relations()},
                    {"pattern_types", ds.patterns.size()},
                    {"train", ds.split(Split::Train).size()},
                    {"valid", ds.split(Split::Valid).size()},
                    {"test", ds.split(Split::Test).size()}}},
                  {"files", json::object()}};
    std::uint64_t h = fnv1a64(kGeneratorVersion);
    for (const auto& [name, body] : files) {
        const auto fh = fnv1a64(body);
        manifest["files"][name] = hex64(fh);
        h = fnv1a64(name, h);
        h = fnv1a64(hex64(fh), h);
        write_file(dir / name, body);
    }
    const std::string hash = hex64(h);
    manifest["hash"] = hash;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return hash;
}

SyntheticDataset read_dataset(const std::filesystem::path& dir) {
    SyntheticDataset ds;
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
        ds.config = config_from_json(manifest.at("config"));
        auto types = json::parse(read_file(dir / "types.json"));
        ds.types.num_entity_types = types.at("num_entity_types").get<std::uint32_t>();
        for (const auto& r : types.at("relations")) {
            ds.types.relations.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>()});
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, "dataset " + dir.string() + ": " + e.what());
    }
    auto each_line = [&](const std::string& name, auto&& fn) {
        std::istringstream is(read_file(dir / name));
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto j = parse_line(line, dir / name, lineno);
            try {
                fn(j);
            } catch (const json::exception& e) {
                fail(ErrorKind::Format, (dir / name).string() + ":" + std::to_string(lineno) +
                                            ": " + e.what());
            }
        }
    };
    each_line("patterns.jsonl", [&](const json& j) { ds.patterns.push_back(pattern_from_json(j)); });
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        each_line(std::string(split_name(s)) + ".jsonl", [&](const json& j) {
            ds.examples.push_back(example_from_json(j, ds.types.num_relations()));
        });
    }
    std::sort(ds.examples.begin(), ds.examples.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        if (ds.examples[i].id != i) {
            fail(ErrorKind::Format, "dataset " + dir.string() + ": example ids are not dense");
        }
        if (ds.examples[i].pattern_type >= ds.patterns.size()) {
            fail(ErrorKind::Format, "dataset " + dir.string() + ": unknown pattern type");
        }
    }
    return ds;
}

} // namespace cbrsubg
