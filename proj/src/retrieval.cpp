#include "cbrsubg/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

static_assert(std::endian::native == std::endian::little,
              "embedding I/O assumes a little-endian host");

std::vector<double> l2_normalized(std::span<const double> v, const std::string& what) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        fail(ErrorKind::InvalidArgument, what + ": embedding has zero or non-finite norm");
    }
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= norm;
    return out;
}

CaseBase CaseBase::normalize_and_index(std::vector<Case> cases) {
    CaseBase cb;
    for (const auto& c : cases) {
        if (c.embedding.empty()) {
            require(c.pattern_type.has_value(),
                    "case " + c.case_id + " has neither an embedding nor a pattern type");
            continue;
        }
        if (cb.dim_ == 0) cb.dim_ = c.embedding.size();
        require(c.embedding.size() == cb.dim_,
                "case " + c.case_id + ": embedding dimension " +
                    std::to_string(c.embedding.size()) + " differs from " +
                    std::to_string(cb.dim_));
    }
    cb.unit_.assign(cases.size() * cb.dim_, 0.0);
    cb.has_row_.assign(cases.size(), 0);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].embedding.empty()) continue;
        auto unit = l2_normalized(cases[i].embedding, "case " + cases[i].case_id);
        std::copy(unit.begin(), unit.end(), cb.unit_.begin() + static_cast<std::ptrdiff_t>(i * cb.dim_));
        cb.has_row_[i] = 1;
    }
    cb.cases_ = std::move(cases);
    return cb;
}

std::vector<Neighbor> CaseBase::knn(const Case& query, long k) const {
    require(k > 0, "knn: k must be positive");
    std::vector<Neighbor> out;
    if (!query.embedding.empty()) {
        require(query.embedding.size() == dim_, "knn: query embedding dimension mismatch");
        auto q = l2_normalized(query.embedding, "query " + query.case_id);
        for (std::size_t i = 0; i < cases_.size(); ++i) {
            if (!has_row_[i] || cases_[i].case_id == query.case_id) continue;
            auto r = row(i);
            double dot = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) dot += q[d] * r[d];
            out.push_back({i, cases_[i].case_id, std::clamp(dot, -1.0, 1.0)});
        }
        auto better = [](const Neighbor& a, const Neighbor& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.case_id < b.case_id;
        };
        const auto keep = std::min(out.size(), static_cast<std::size_t>(k));
        std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), better);
        out.resize(keep);
        return out;
    }
    require(query.pattern_type.has_value(), "knn: query " + query.case_id +
                                                " has neither an embedding nor a pattern type");
    for (std::size_t i = 0; i < cases_.size() && out.size() < static_cast<std::size_t>(k); ++i) {
        if (cases_[i].pattern_type == query.pattern_type && cases_[i].case_id != query.case_id) {
            out.push_back({i, cases_[i].case_id, 1.0});
        }
    }
    return out;
}

// --- File formats ----------------------------------------------------------

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 12) fail(ErrorKind::Format, path.string() + ": truncated header");
    std::uint32_t header[3];
    std::memcpy(header, bytes.data(), sizeof header);
    if (header[0] != kEmbeddingMagic) fail(ErrorKind::Format, path.string() + ": bad magic");
    EmbeddingMatrix m;
    m.count = header[1];
    m.dim = header[2];
    const std::size_t n = static_cast<std::size_t>(m.count) * m.dim;
    if (bytes.size() != 12 + n * sizeof(float)) {
        fail(ErrorKind::Format, path.string() + ": size does not match count*dim");
    }
    m.values.resize(n);
    std::memcpy(m.values.data(), bytes.data() + 12, n * sizeof(float));
    return m;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    require(m.values.size() == static_cast<std::size_t>(m.count) * m.dim,
            "write_embeddings: value count mismatch");
    std::string bytes(12 + m.values.size() * sizeof(float), '\0');
    const std::uint32_t header[3] = {kEmbeddingMagic, m.count, m.dim};
    std::memcpy(bytes.data(), header, sizeof header);
    std::memcpy(bytes.data() + 12, m.values.data(), m.values.size() * sizeof(float));
    write_file(path, bytes);
}

std::vector<std::string> read_id_lines(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

std::vector<Case> read_cases(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    std::vector<Case> cases;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            Case c;
            c.case_id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                               : j.at("id").dump();
            c.split = j.value("split", std::string("train"));
            if (j.contains("question")) c.query_text = j.at("question").get<std::string>();
            c.query_entities = j.at("entities").get<std::vector<std::string>>();
            c.answers = j.value("answers", std::vector<std::string>{});
            if (j.contains("pattern_type")) c.pattern_type = j.at("pattern_type").get<std::uint32_t>();
            if (c.split == "train" && c.answers.empty()) {
                fail(ErrorKind::Format, "train case " + c.case_id + " has no answers");
            }
            cases.push_back(std::move(c));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cases;
}

void attach_embeddings(std::vector<Case>& cases, const EmbeddingMatrix& m,
                       const std::vector<std::string>& row_ids) {
    require(row_ids.size() == m.count, "embedding id file has " + std::to_string(row_ids.size()) +
                                           " rows, matrix has " + std::to_string(m.count));
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < row_ids.size(); ++i) row_of.emplace(row_ids[i], i);
    for (auto& c : cases) {
        auto it = row_of.find(c.case_id);
        if (it == row_of.end()) fail(ErrorKind::Format, "no embedding row for case " + c.case_id);
        const float* src = m.values.data() + it->second * m.dim;
        c.embedding.assign(src, src + m.dim);
    }
}

} // namespace cbrsubg
