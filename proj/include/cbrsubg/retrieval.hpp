#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbrsubg {

/// A solved (or to-be-solved) query. Dense cases carry an embedding of the
/// entity-masked question; synthetic cases carry their pattern type instead.
struct Case {
    std::string case_id;
    std::string split = "train";
    std::optional<std::string> query_text;
    std::vector<std::string> query_entities;
    std::vector<std::string> answers;
    std::vector<double> embedding;
    std::optional<std::uint32_t> pattern_type;
};

struct Neighbor {
    std::size_t index = 0; // position in CaseBase::cases()
    std::string case_id;
    double score = 0.0;
};

/// Retrieval index over train cases. Embeddings are stored row-major with unit
/// L2 norm.
class CaseBase {
public:
    /// Throws on zero-norm embeddings, mixed dimensionalities, or cases with
    /// neither an embedding nor a pattern type.
    static CaseBase normalize_and_index(std::vector<Case> cases);

    const std::vector<Case>& cases() const noexcept { return cases_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> row(std::size_t i) const { return {unit_.data() + i * dim_, dim_}; }
    bool has_embedding(std::size_t i) const noexcept { return has_row_[i] != 0; }

    /// Top-k cases for the query, best first, never including a case with the
    /// query's own case_id. Dense mode (query has an embedding) ranks by
    /// cosine with ties broken by ascending case_id; synthetic mode returns
    /// cases sharing the pattern type in case-base order with score 1.
    std::vector<Neighbor> knn(const Case& query, long k) const;

private:
    std::vector<Case> cases_;
    std::size_t dim_ = 0;
    std::vector<double> unit_;
    std::vector<char> has_row_;
};

/// L2-normalized copy; throws on a zero vector.
std::vector<double> l2_normalized(std::span<const double> v, const std::string& what);

// --- File formats ----------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingMagic = 0x45425243; // "CRBE" little-endian

struct EmbeddingMatrix {
    std::uint32_t count = 0;
    std::uint32_t dim = 0;
    std::vector<float> values; // row-major
};

/// Binary layout: magic, count, dim as little-endian uint32, then count*dim
/// little-endian float32 values.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
std::vector<std::string> read_id_lines(const std::filesystem::path& path);

/// Line-delimited JSON records with keys id, split, question, entities,
/// answers and optionally pattern_type.
std::vector<Case> read_cases(const std::filesystem::path& path);

/// Attaches embedding rows to cases by id. Throws if a case has no row.
void attach_embeddings(std::vector<Case>& cases, const EmbeddingMatrix& m,
                       const std::vector<std::string>& row_ids);

} // namespace cbrsubg
