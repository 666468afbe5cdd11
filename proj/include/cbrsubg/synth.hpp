#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbrsubg/kg.hpp"

namespace cbrsubg {

// --- Pattern shapes --------------------------------------------------------

enum class Shape : std::uint8_t { P2, P3, I2, IP, PI };

inline constexpr std::array<Shape, 5> kAllShapes{Shape::P2, Shape::P3, Shape::I2, Shape::IP,
                                                 Shape::PI};

std::string_view shape_tag(Shape s) noexcept;
Shape parse_shape(std::string_view tag);

// Pattern variables. Query entities come first.
enum class Var : std::uint8_t { E1 = 0, E2 = 1, V1 = 2, V2 = 3, Ans = 4 };
inline constexpr std::size_t kNumVars = 5;

struct AbstractEdge {
    Var head;
    Var tail;
};

/// Edge list of a shape, in the order types are assigned during grounding.
std::span<const AbstractEdge> shape_edges(Shape s) noexcept;
std::size_t num_query_entities(Shape s) noexcept;
bool shape_uses(Shape s, Var v) noexcept;

// --- Type system -----------------------------------------------------------

struct TypedRelation {
    std::uint32_t head_type = 0;
    std::uint32_t tail_type = 0;
};

/// Entity types plus the relation types allowed between them. Relation ids are
/// dense; relation r connects relations[r].head_type to relations[r].tail_type.
struct TypeSystem {
    std::uint32_t num_entity_types = 0;
    std::vector<TypedRelation> relations;

    std::size_t num_relations() const noexcept { return relations.size(); }
    std::vector<RelationId> outgoing(std::uint32_t type) const;
    std::vector<RelationId> incoming(std::uint32_t type) const;
    std::vector<RelationId> between(std::uint32_t head_type, std::uint32_t tail_type) const;
};

/// Erdos-Renyi over ordered type pairs: each pair receives its own relation
/// type with probability edge_prob.
TypeSystem sample_type_system(std::uint64_t seed, std::uint32_t num_entity_types = 16,
                              double edge_prob = 0.3);

// --- Pattern types ---------------------------------------------------------

inline constexpr std::uint32_t kUnusedType = 0xffffffffu;

struct PatternType {
    std::uint32_t id = 0;
    Shape shape = Shape::P2;
    std::vector<RelationId> edge_relations;            // parallel to shape_edges(shape)
    std::array<std::uint32_t, kNumVars> node_types{}; // kUnusedType for absent vars
};

/// Assigns relation and entity types by forward sampling along the shape's
/// edges: the first query entity's type is drawn uniformly, and each later edge
/// picks an allowed relation leaving (or entering) its already-typed endpoint.
/// Dead ends restart the walk; throws once the retry budget is spent.
PatternType ground_pattern(const TypeSystem& ts, Shape shape, std::uint64_t seed,
                           std::uint32_t id = 0, std::size_t max_retries = 1000);

/// Exhaustive evaluation of the pattern under homomorphism semantics (free
/// variables may coincide). query_bindings holds E1 and, for two-anchor
/// shapes, E2. Returns the sorted set of Ans bindings.
std::vector<EntityId> execute_pattern(const KnowledgeGraph& g, const PatternType& pt,
                                      std::span<const EntityId> query_bindings);

// --- Examples and datasets -------------------------------------------------

enum class Split : std::uint8_t { Train = 0, Valid = 1, Test = 2 };
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view name);

/// How random edges are proposed while growing a graph from its query
/// entities. Outward: each ordered (frontier, candidate) pair gets an edge
/// with probability edge_prob, relation uniform among those the two types
/// allow. Pair: the same per unordered pair, either direction. HeadDraw: the
/// relation is drawn from the head type's relations first and kept only when
/// the tail type matches.
enum class EdgeModel : std::uint8_t { HeadDraw, Pair, Outward };

std::string_view edge_model_name(EdgeModel m) noexcept;
EdgeModel parse_edge_model(std::string_view name);

struct GeneratorConfig {
    std::uint64_t seed = 7;
    std::uint32_t num_entity_types = 16;
    double type_edge_prob = 0.3;
    std::uint32_t num_pattern_types = 200;
    std::uint32_t graphs_per_split = 5; // per pattern type
    std::uint32_t num_entities = 120;
    double edge_prob = 0.4;
    EdgeModel edge_model = EdgeModel::Outward;
    std::uint32_t max_hops = 3;
    std::uint32_t max_resamples = 100;
};

struct SyntheticExample {
    std::uint32_t id = 0;
    Split split = Split::Train;
    std::uint32_t pattern_type = 0;
    Shape shape = Shape::P2;
    EntityId entity_offset = 0; // local id + offset = dataset-wide entity id
    KnowledgeGraph graph;       // local ids 0..num_entities-1, typed
    std::vector<EntityId> query_entities;
    std::array<EntityId, kNumVars> bindings{}; // the inserted grounding
    std::vector<EntityId> answers;             // sorted, local ids
    std::vector<std::uint32_t> knn;            // example ids of train neighbors
};

/// One graph with the pattern inserted. Degenerate draws (no answer, or every
/// entity of the answer type an answer) are retried with an incremented seed.
SyntheticExample sample_graph_with_pattern(const TypeSystem& ts, const PatternType& pt,
                                           std::uint64_t seed, const GeneratorConfig& cfg);

struct SyntheticDataset {
    GeneratorConfig config;
    TypeSystem types;
    std::vector<PatternType> patterns;
    std::vector<SyntheticExample> examples; // ordered by id

    std::vector<const SyntheticExample*> split(Split s) const;
};

SyntheticDataset assemble_dataset(const GeneratorConfig& cfg);

inline constexpr std::string_view kGeneratorVersion = "cbrsubg-synth/1";

/// Writes types.json, patterns.jsonl, {train,valid,test}.jsonl and
/// manifest.json into dir. Returns the manifest hash.
std::string write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

} // namespace cbrsubg
