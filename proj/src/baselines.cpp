#include "cbrsubg/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

PathVoteTable path_vote_table(std::span<const PathCase> cases, const PathVoteOptions& opts) {
    PathVoteTable table;
    for (const auto& c : cases) {
        require(c.graph != nullptr, "path_vote_table: case without graph");
        if (c.answers.empty()) continue;
        if (!opts.precision_weighting) {
            for (const auto& [chain, n] : mine_chain_counts(*c.graph, c.query_entities, c.answers, opts.max_hops)) {
                table[chain] += static_cast<double>(n);
            }
            continue;
        }
        std::vector<EntityId> answers(c.answers.begin(), c.answers.end());
        std::sort(answers.begin(), answers.end());
        for (EntityId q : c.query_entities) {
            if (q >= c.graph->num_entities()) continue;
            const EntityId one[] = {q};
            for (const auto& [chain, n] : mine_chain_counts(*c.graph, one, answers, opts.max_hops)) {
                const auto ends = chain_endpoints(*c.graph, q, chain);
                std::size_t hits = 0;
                for (EntityId e : ends) hits += std::binary_search(answers.begin(), answers.end(), e) ? 1 : 0;
                table[chain] += static_cast<double>(n) * static_cast<double>(hits) /
                                static_cast<double>(ends.size());
            }
        }
    }
    return table;
}

std::vector<double> cbr_path_scores(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                    const PathVoteTable& table) {
    std::vector<double> scores(g.num_entities(), 0.0);
    std::vector<EntityId> starts(query_entities.begin(), query_entities.end());
    std::sort(starts.begin(), starts.end());
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
    for (const auto& [chain, weight] : table) {
        for (EntityId q : starts) {
            if (q >= g.num_entities()) continue;
            for (EntityId e : chain_endpoints(g, q, chain)) scores[e] += weight;
        }
    }
    return scores;
}

std::vector<RankedNode> cbr_path_predict(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                         std::span<const PathCase> cases, const PathVoteOptions& opts,
                                         std::size_t top_n) {
    const auto table = path_vote_table(cases, opts);
    auto ranked = rank_nodes(cbr_path_scores(g, query_entities, table), 0);
    // Nodes no chain reaches are not predictions.
    std::erase_if(ranked, [](const RankedNode& r) { return r.score <= 0.0; });
    if (top_n != 0 && ranked.size() > top_n) ranked.resize(top_n);
    return ranked;
}

// --- GNN + TransE ------------------------------------------------------------

TransEModel::TransEModel(const GnnConfig& cfg, std::size_t num_pattern_types, TransELoss l)
    : gnn(cfg), loss(l) {
    require(num_pattern_types > 0, "TransEModel: no pattern types");
    relations.rows = num_pattern_types;
    relations.dim = cfg.hidden;
    relations.values.resize(num_pattern_types * cfg.hidden);
    Rng rng(derive_seed(cfg.seed, 0x7e1a));
    const double limit = std::sqrt(6.0 / static_cast<double>(num_pattern_types + cfg.hidden));
    for (auto& v : relations.values) v = (2.0 * uniform01(rng) - 1.0) * limit;
}

std::span<const double> TransEModel::relation(std::uint32_t pattern_type) const {
    if (pattern_type >= relations.rows) {
        fail(ErrorKind::InvalidArgument, "unseen pattern type " + std::to_string(pattern_type));
    }
    return {relations.values.data() + pattern_type * relations.dim, relations.dim};
}

namespace {

std::vector<double> query_center(const Matrix& h, std::span<const EntityId> query_entities) {
    require(!query_entities.empty(), "transe: query without entities");
    std::vector<double> c(h.cols, 0.0);
    for (EntityId q : query_entities) {
        require(q < h.rows, "transe: query entity outside subgraph");
        for (std::size_t i = 0; i < h.cols; ++i) c[i] += h(q, i);
    }
    for (auto& x : c) x /= static_cast<double>(query_entities.size());
    return c;
}

// d(score)/d(h_q + r - h_x) for score = -|h_q + r - h_x|.
void distance_grad(std::span<const double> diff, double norm, std::span<double> out) {
    for (std::size_t i = 0; i < diff.size(); ++i) out[i] = norm > 0.0 ? -diff[i] / norm : 0.0;
}

double margin_loss(std::span<const double> scores, std::span<const EntityId> answers, double margin,
                   std::span<double> d_scores) {
    require(!answers.empty(), "transe: query has no labeled answer");
    std::vector<char> is_answer(scores.size(), 0);
    for (EntityId a : answers) {
        require(a < scores.size(), "transe: answer outside subgraph");
        is_answer[a] = 1;
    }
    std::size_t negatives = 0;
    for (char c : is_answer) negatives += c ? 0 : 1;
    if (negatives == 0) return 0.0;
    const double scale = 1.0 / static_cast<double>(answers.size() * negatives);
    double loss = 0.0;
    for (EntityId a : answers) {
        for (std::size_t n = 0; n < scores.size(); ++n) {
            if (is_answer[n]) continue;
            const double v = margin - scores[a] + scores[n];
            if (v <= 0.0) continue;
            loss += v * scale;
            if (!d_scores.empty()) {
                d_scores[a] -= scale;
                d_scores[n] += scale;
            }
        }
    }
    return loss;
}

} // namespace

std::vector<double> transe_scores(const Matrix& h, std::span<const EntityId> query_entities,
                                  std::span<const double> relation) {
    require(relation.size() == h.cols, "transe: relation dimension mismatch");
    const auto c = query_center(h, query_entities);
    std::vector<double> scores(h.rows);
    for (std::size_t x = 0; x < h.rows; ++x) {
        double sq = 0.0;
        for (std::size_t i = 0; i < h.cols; ++i) {
            const double d = c[i] + relation[i] - h(x, i);
            sq += d * d;
        }
        scores[x] = -std::sqrt(sq);
    }
    return scores;
}

std::vector<double> transe_infer_scores(const TransEModel& model, const TransEEpisode& ep) {
    require(ep.graph && ep.query_entities, "transe: incomplete episode");
    return transe_scores(forward_embeddings(model.gnn, *ep.graph), *ep.query_entities,
                         model.relation(ep.pattern_type));
}

double transe_episode_loss(const TransEModel& model, const TransEEpisode& ep, std::span<double> grad) {
    require(ep.graph && ep.query_entities && ep.answers, "transe: incomplete episode");
    const auto rel = model.relation(ep.pattern_type);
    auto trace = forward(model.gnn, *ep.graph);
    const Matrix& h = trace.output();
    const auto scores = transe_scores(h, *ep.query_entities, rel);
    std::vector<double> d_scores(grad.empty() ? 0 : scores.size(), 0.0);
    const double loss = model.loss == TransELoss::Softmax
                            ? contrastive_loss(scores, *ep.answers, 1.0, d_scores)
                            : margin_loss(scores, *ep.answers, model.margin, d_scores);
    if (grad.empty()) return loss;
    require(grad.size() >= model.num_params(), "transe: gradient buffer too small");

    const std::size_t dim = h.cols;
    const auto c = query_center(h, *ep.query_entities);
    Matrix dh(h.rows, dim);
    std::vector<double> d_center(dim, 0.0);
    std::vector<double> diff(dim);
    std::vector<double> g(dim);
    for (std::size_t x = 0; x < h.rows; ++x) {
        if (d_scores[x] == 0.0) continue;
        for (std::size_t i = 0; i < dim; ++i) diff[i] = c[i] + rel[i] - h(x, i);
        distance_grad(diff, -scores[x], g);
        for (std::size_t i = 0; i < dim; ++i) {
            const double v = d_scores[x] * g[i];
            d_center[i] += v;
            dh(x, i) -= v;
        }
    }
    double* d_rel = grad.data() + model.gnn.num_params() + ep.pattern_type * dim;
    const double inv = 1.0 / static_cast<double>(ep.query_entities->size());
    for (std::size_t i = 0; i < dim; ++i) d_rel[i] += d_center[i];
    for (EntityId q : *ep.query_entities) {
        for (std::size_t i = 0; i < dim; ++i) dh(q, i) += d_center[i] * inv;
    }
    backward(model.gnn, *ep.graph, trace, dh, grad.first(model.gnn.num_params()));
    return loss;
}

TrainResult transe_train(TransEModel& model, std::span<const TransEEpisode> train_set,
                         std::span<const TransEEpisode> valid_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
    std::vector<std::span<double>> blocks{model.gnn.params(), model.relations.values};
    auto item_loss = [&](std::size_t i, std::span<double> g) { return transe_episode_loss(model, train_set[i], g); };
    std::function<double()> validate;
    if (!valid_set.empty()) validate = [&] { return transe_strict_hits_at_1(model, valid_set, cfg.threads); };
    return train_loop(blocks, train_set.size(), item_loss, validate, cfg, on_epoch);
}

double transe_strict_hits_at_1(const TransEModel& model, std::span<const TransEEpisode> episodes,
                               unsigned threads) {
    if (episodes.empty()) return 0.0;
    std::vector<char> hit(episodes.size(), 0);
    parallel_for(episodes.size(), threads, [&](std::size_t e) {
        hit[e] = strict_hit(transe_infer_scores(model, episodes[e]), *episodes[e].answers) ? 1 : 0;
    });
    return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(episodes.size());
}

} // namespace cbrsubg
