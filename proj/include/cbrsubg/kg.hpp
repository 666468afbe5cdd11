#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cbrsubg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

enum class Direction : std::uint8_t { Forward = 0, Backward = 1 };

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    friend auto operator<=>(const Triple&, const Triple&) = default;
};

// One edge seen from one of its endpoints. Forward means the owning entity is
// the head.
struct Incidence {
    RelationId relation = 0;
    Direction dir = Direction::Forward;
    EntityId neighbor = 0;

    friend auto operator<=>(const Incidence&, const Incidence&) = default;
};

inline constexpr std::uint32_t kBeyond = std::numeric_limits<std::uint32_t>::max();

/// Immutable typed multigraph over dense entity and relation ids.
///
/// Triples are stored once, deduplicated and sorted. Every relation r has a
/// materialized inverse r + num_relations() in the message-relation space, so
/// code that needs to walk edges backward can treat them as ordinary forward
/// edges of the inverse relation.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Throws Error(InvalidArgument) naming the first triple with an
    /// out-of-range id.
    static KnowledgeGraph build(std::vector<Triple> triples, std::size_t num_entities,
                                std::size_t num_relations,
                                std::vector<std::uint32_t> entity_types = {});

    std::size_t num_entities() const noexcept { return num_entities_; }
    std::size_t num_relations() const noexcept { return num_relations_; }
    std::size_t num_message_relations() const noexcept { return 2 * num_relations_; }
    std::size_t num_triples() const noexcept { return triples_.size(); }

    RelationId inverse_of(RelationId message_relation) const noexcept {
        return message_relation < num_relations_
                   ? message_relation + static_cast<RelationId>(num_relations_)
                   : message_relation - static_cast<RelationId>(num_relations_);
    }

    std::span<const Triple> triples() const noexcept { return triples_; }

    /// Tails of (e, r, *), ascending.
    std::span<const EntityId> out_neighbors(EntityId e, RelationId r) const;
    /// Heads of (*, r, e), ascending.
    std::span<const EntityId> in_neighbors(EntityId e, RelationId r) const;

    /// All edges touching e, ordered by (relation, direction, neighbor).
    std::span<const Incidence> incident(EntityId e) const noexcept {
        return {incident_.data() + incident_offsets_[e],
                incident_.data() + incident_offsets_[e + 1]};
    }

    std::size_t degree(EntityId e) const noexcept {
        return incident_offsets_[e + 1] - incident_offsets_[e];
    }

    bool has_edge(EntityId head, RelationId r, EntityId tail) const;

    bool has_entity_types() const noexcept { return !entity_types_.empty(); }
    std::span<const std::uint32_t> entity_types() const noexcept { return entity_types_; }

private:
    struct HalfAdjacency {
        std::vector<std::size_t> offsets; // per entity into relations/neighbors
        std::vector<RelationId> relations;
        std::vector<EntityId> neighbors;
        std::span<const EntityId> range(EntityId e, RelationId r) const;
    };

    std::size_t num_entities_ = 0;
    std::size_t num_relations_ = 0;
    std::vector<Triple> triples_;
    HalfAdjacency out_;
    HalfAdjacency in_;
    std::vector<std::size_t> incident_offsets_{0};
    std::vector<Incidence> incident_;
    std::vector<std::uint32_t> entity_types_;
};

/// Shortest undirected hop distance to the nearest source; kBeyond past
/// max_hops. Throws on an empty source set.
std::vector<std::uint32_t> multi_source_bfs(const KnowledgeGraph& g,
                                            std::span<const EntityId> sources,
                                            std::uint32_t max_hops);

struct PathStep {
    RelationId relation = 0;
    Direction dir = Direction::Forward;
    EntityId entity = 0; // entity reached by this step

    friend bool operator==(const PathStep&, const PathStep&) = default;
};

struct Path {
    EntityId start = 0;
    std::vector<PathStep> steps;

    EntityId end() const noexcept { return steps.empty() ? start : steps.back().entity; }
    friend bool operator==(const Path&, const Path&) = default;
};

/// Every simple path of at most max_len edges from start to any goal, with
/// edges usable in either direction. Branches are explored in incidence order,
/// so the output order is deterministic.
std::vector<Path> dfs_paths(const KnowledgeGraph& g, EntityId start,
                            std::span<const EntityId> goals, std::size_t max_len);

// --- TSV ingestion ---------------------------------------------------------

class Vocabulary {
public:
    std::uint32_t intern(const std::string& s);
    std::uint32_t lookup(const std::string& s) const; // kBeyond if absent
    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const noexcept { return names_.size(); }
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

struct LoadedGraph {
    KnowledgeGraph graph;
    Vocabulary entities;
    Vocabulary relations;
};

/// Reads head<TAB>relation<TAB>tail lines, interning names in order of first
/// appearance.
LoadedGraph load_triples_tsv(const std::filesystem::path& path);

} // namespace cbrsubg
