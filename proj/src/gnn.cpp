#include "cbrsubg/gnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

// --- Featurization ---------------------------------------------------------

std::size_t feature_dim(std::size_t num_relations, bool use_distance) noexcept {
    return num_relations + (use_distance ? kDistanceBuckets : 0);
}

Matrix featurize(const QuerySubgraph& sg, std::size_t num_relations, bool use_distance) {
    require(sg.graph.num_relations() <= num_relations,
            "featurize: subgraph uses more relations than the feature space");
    require(sg.distance.size() == sg.num_nodes(), "featurize: distances missing");
    Matrix x(sg.num_nodes(), feature_dim(num_relations, use_distance));
    for (EntityId v = 0; v < sg.num_nodes(); ++v) {
        for (const auto& inc : sg.graph.incident(v)) {
            if (inc.dir == Direction::Forward) x(v, inc.relation) = 1.0;
        }
        if (use_distance) {
            x(v, num_relations + std::min(sg.distance[v], kDistanceBuckets - 1)) = 1.0;
        }
    }
    return x;
}

GraphBatch prepare_graph(const QuerySubgraph& sg, std::size_t num_relations, bool use_distance) {
    GraphBatch b;
    b.num_nodes = sg.num_nodes();
    b.features = featurize(sg, num_relations, use_distance);
    const auto R = static_cast<RelationId>(num_relations);
    b.group_offsets.assign(b.num_nodes + 1, 0);
    std::vector<std::pair<RelationId, EntityId>> msgs;
    for (EntityId v = 0; v < b.num_nodes; ++v) {
        msgs.clear();
        // (s, r, v) sends along r; (v, r, s) sends back along r's inverse.
        for (const auto& inc : sg.graph.incident(v)) {
            msgs.emplace_back(inc.dir == Direction::Backward ? inc.relation : inc.relation + R,
                              inc.neighbor);
        }
        std::sort(msgs.begin(), msgs.end());
        for (std::size_t i = 0; i < msgs.size();) {
            std::size_t j = i;
            GraphBatch::Group g;
            g.relation = msgs[i].first;
            g.begin = static_cast<std::uint32_t>(b.sources.size());
            while (j < msgs.size() && msgs[j].first == msgs[i].first) b.sources.push_back(msgs[j++].second);
            g.end = static_cast<std::uint32_t>(b.sources.size());
            b.groups.push_back(g);
            i = j;
        }
        b.group_offsets[v + 1] = static_cast<std::uint32_t>(b.groups.size());
    }
    return b;
}

// --- Model -----------------------------------------------------------------

GnnModel::GnnModel(const GnnConfig& cfg) : cfg_(cfg) {
    require(cfg.num_relations > 0, "GnnModel: num_relations must be positive");
    require(cfg.layers > 0 && cfg.hidden > 0, "GnnModel: layers and hidden must be positive");
    require(cfg.tau > 0.0 && std::isfinite(cfg.tau), "GnnModel: tau must be positive");
    std::size_t total = 0;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        layer_offsets_.push_back(total);
        total += num_matrices_per_layer() * layer_in(l) * cfg.hidden;
    }
    layer_offsets_.push_back(total);
    params_.resize(total);
    Rng rng(derive_seed(cfg.seed, 0x6e17));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer_in(l) + cfg.hidden));
        for (std::size_t i = layer_offsets_[l]; i < layer_offsets_[l + 1]; ++i) {
            params_[i] = (2.0 * uniform01(rng) - 1.0) * limit;
        }
    }
}

std::size_t GnnModel::offset(std::size_t layer, std::size_t slot) const noexcept {
    return layer_offsets_[layer] + slot * layer_in(layer) * cfg_.hidden;
}

void GnnModel::set_tau(double tau) {
    require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
    cfg_.tau = tau;
}

namespace {

// y += W x for W (rows x cols). Skips zero inputs, which dominate layer 0.
void gemv_acc(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y,
              bool sparse_input) {
    if (sparse_input) {
        for (std::size_t i = 0; i < cols; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (std::size_t o = 0; o < rows; ++o) y[o] += w[o * cols + i] * xi;
        }
        return;
    }
    for (std::size_t o = 0; o < rows; ++o) {
        const double* wr = w + o * cols;
        double acc = 0.0;
        for (std::size_t i = 0; i < cols; ++i) acc += wr[i] * x[i];
        y[o] += acc;
    }
}

// x += W^T d
void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* d, double* x) {
    for (std::size_t o = 0; o < rows; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wr = w + o * cols;
        for (std::size_t i = 0; i < cols; ++i) x[i] += wr[i] * dv;
    }
}

// G += d x^T
void outer_acc(double* g, std::size_t rows, std::size_t cols, const double* d, const double* x,
               bool sparse_input) {
    for (std::size_t o = 0; o < rows; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        double* gr = g + o * cols;
        if (sparse_input) {
            for (std::size_t i = 0; i < cols; ++i) {
                if (x[i] != 0.0) gr[i] += dv * x[i];
            }
        } else {
            for (std::size_t i = 0; i < cols; ++i) gr[i] += dv * x[i];
        }
    }
}

bool row_less(std::span<const double> a, std::span<const double> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

} // namespace

ForwardTrace forward(const GnnModel& model, const GraphBatch& graph) {
    const auto& cfg = model.config();
    require(graph.features.cols == model.input_dim(),
            "forward: feature dimension " + std::to_string(graph.features.cols) +
                " does not match model input " + std::to_string(model.input_dim()));
    for (const auto& g : graph.groups) {
        require(g.relation < 2 * cfg.num_relations, "forward: relation outside the model");
    }
    ForwardTrace t;
    t.h.reserve(cfg.layers + 1);
    t.h.push_back(graph.features);
    const std::size_t n = graph.num_nodes;
    std::vector<std::uint32_t> order;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const Matrix& in = t.h[l];
        const std::size_t din = model.layer_in(l);
        const std::size_t dout = cfg.hidden;
        const bool sparse = l == 0;
        Matrix mean(graph.groups.size(), din);
        for (std::size_t gi = 0; gi < graph.groups.size(); ++gi) {
            const auto& g = graph.groups[gi];
            auto dst = mean.row(gi);
            // Sum in a value-determined order so the result does not depend
            // on node numbering.
            order.assign(graph.sources.begin() + g.begin, graph.sources.begin() + g.end);
            if (order.size() > 1) {
                std::sort(order.begin(), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) { return row_less(in.row(a), in.row(b)); });
            }
            for (auto s : order) {
                auto src = in.row(s);
                for (std::size_t i = 0; i < din; ++i) dst[i] += src[i];
            }
            const double inv = 1.0 / static_cast<double>(order.size());
            for (auto& x : dst) x *= inv;
        }
        Matrix out(n, dout);
        const double* w = model.params().data();
        for (std::size_t v = 0; v < n; ++v) {
            double* y = out.row(v).data();
            gemv_acc(w + model.offset(l, 0), dout, din, in.row(v).data(), y, sparse);
            for (auto gi = graph.group_offsets[v]; gi < graph.group_offsets[v + 1]; ++gi) {
                gemv_acc(w + model.offset(l, 1 + graph.groups[gi].relation), dout, din,
                         mean.row(gi).data(), y, sparse);
            }
            for (std::size_t o = 0; o < dout; ++o) y[o] = y[o] > 0.0 ? y[o] : 0.0;
        }
        t.mean.push_back(std::move(mean));
        t.h.push_back(std::move(out));
    }
    return t;
}

Matrix forward_embeddings(const GnnModel& model, const GraphBatch& graph) {
    auto t = forward(model, graph);
    return std::move(t.h.back());
}

void backward(const GnnModel& model, const GraphBatch& graph, const ForwardTrace& trace,
              const Matrix& d_output, std::span<double> grad) {
    const auto& cfg = model.config();
    require(grad.size() >= model.num_params(), "backward: gradient buffer too small");
    const std::size_t n = graph.num_nodes;
    const double* w = model.params().data();
    Matrix d_h = d_output;
    std::vector<double> delta(cfg.hidden);
    std::vector<double> d_mean;
    for (std::size_t l = cfg.layers; l-- > 0;) {
        const Matrix& in = trace.h[l];
        const Matrix& out = trace.h[l + 1];
        const Matrix& mean = trace.mean[l];
        const std::size_t din = model.layer_in(l);
        const std::size_t dout = cfg.hidden;
        const bool sparse = l == 0;
        const bool need_input_grad = l > 0;
        Matrix d_in = need_input_grad ? Matrix(n, din) : Matrix();
        d_mean.assign(din, 0.0);
        for (std::size_t v = 0; v < n; ++v) {
            bool any = false;
            for (std::size_t o = 0; o < dout; ++o) {
                delta[o] = out(v, o) > 0.0 ? d_h(v, o) : 0.0;
                any = any || delta[o] != 0.0;
            }
            if (!any) continue;
            outer_acc(grad.data() + model.offset(l, 0), dout, din, delta.data(), in.row(v).data(), sparse);
            if (need_input_grad) gemv_t_acc(w + model.offset(l, 0), dout, din, delta.data(), d_in.row(v).data());
            for (auto gi = graph.group_offsets[v]; gi < graph.group_offsets[v + 1]; ++gi) {
                const auto& g = graph.groups[gi];
                const std::size_t slot = 1 + g.relation;
                outer_acc(grad.data() + model.offset(l, slot), dout, din, delta.data(),
                          mean.row(gi).data(), sparse);
                if (!need_input_grad) continue;
                std::fill(d_mean.begin(), d_mean.end(), 0.0);
                gemv_t_acc(w + model.offset(l, slot), dout, din, delta.data(), d_mean.data());
                const double inv = 1.0 / static_cast<double>(g.end - g.begin);
                for (auto k = g.begin; k < g.end; ++k) {
                    auto dst = d_in.row(graph.sources[k]);
                    for (std::size_t i = 0; i < din; ++i) dst[i] += d_mean[i] * inv;
                }
            }
        }
        if (need_input_grad) d_h = std::move(d_in);
    }
}

// --- Similarity scoring ----------------------------------------------------

namespace {

double row_norm(std::span<const double> r) {
    double sq = 0.0;
    for (double x : r) sq += x * x;
    return std::sqrt(sq);
}

} // namespace

Matrix unit_rows(const Matrix& m) {
    Matrix u = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double norm = row_norm(m.row(i));
        auto r = u.row(i);
        if (norm == 0.0) {
            std::fill(r.begin(), r.end(), 0.0);
        } else {
            for (auto& x : r) x /= norm;
        }
    }
    return u;
}

std::vector<double> answer_centroid(const Matrix& embeddings, std::span<const EntityId> answers) {
    require(!answers.empty(), "answer_centroid: no answers");
    std::vector<double> c(embeddings.cols, 0.0);
    std::vector<EntityId> order(answers.begin(), answers.end());
    for (EntityId a : order) require(a < embeddings.rows, "answer_centroid: answer outside subgraph");
    std::sort(order.begin(), order.end(),
              [&](EntityId x, EntityId y) { return row_less(embeddings.row(x), embeddings.row(y)); });
    for (EntityId a : order) {
        auto r = embeddings.row(a);
        const double norm = row_norm(r);
        if (norm == 0.0) continue;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += r[i] / norm;
    }
    const double inv = 1.0 / static_cast<double>(answers.size());
    for (auto& x : c) x *= inv;
    return c;
}

namespace {

std::vector<double> scores_from_centroids(const Matrix& unit_query, std::span<const std::vector<double>> centroids) {
    std::vector<double> scores(unit_query.rows, 0.0);
    for (std::size_t x = 0; x < unit_query.rows; ++x) {
        auto u = unit_query.row(x);
        double s = 0.0;
        for (const auto& c : centroids) {
            double dot = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) dot += u[i] * c[i];
            s += dot;
        }
        scores[x] = s;
    }
    return scores;
}

} // namespace

std::vector<double> score_against_neighbors(const Matrix& query_embeddings,
                                            std::span<const Matrix> neighbor_embeddings,
                                            std::span<const std::vector<EntityId>> neighbor_answers) {
    require(neighbor_embeddings.size() == neighbor_answers.size(),
            "score_against_neighbors: neighbor count mismatch");
    std::vector<std::vector<double>> centroids;
    for (std::size_t j = 0; j < neighbor_embeddings.size(); ++j) {
        if (neighbor_answers[j].empty()) continue;
        require(neighbor_embeddings[j].cols == query_embeddings.cols,
                "score_against_neighbors: embedding width mismatch");
        centroids.push_back(answer_centroid(neighbor_embeddings[j], neighbor_answers[j]));
    }
    if (centroids.empty()) fail(ErrorKind::InvalidArgument, "no usable cases");
    return scores_from_centroids(unit_rows(query_embeddings), centroids);
}

std::vector<RankedNode> rank_nodes(std::span<const double> scores, std::size_t top_n) {
    std::vector<RankedNode> out;
    out.reserve(scores.size());
    for (EntityId i = 0; i < scores.size(); ++i) out.push_back({i, scores[i]});
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedNode& a, const RankedNode& b) { return a.score > b.score; });
    if (top_n != 0 && out.size() > top_n) out.resize(top_n);
    return out;
}

bool strict_hit(std::span<const double> scores, std::span<const EntityId> gold) {
    if (gold.empty()) return false;
    std::vector<char> is_gold(scores.size(), 0);
    double min_gold = INFINITY;
    for (EntityId g : gold) {
        require(g < scores.size(), "strict_hit: gold node outside the score vector");
        is_gold[g] = 1;
        min_gold = std::min(min_gold, scores[g]);
    }
    for (std::size_t x = 0; x < scores.size(); ++x) {
        if (!is_gold[x] && !(scores[x] < min_gold)) return false;
    }
    return true;
}

// --- Loss --------------------------------------------------------------------

std::vector<const QuerySubgraph*> usable_neighbors(std::span<const QuerySubgraph* const> neighbors) {
    std::vector<const QuerySubgraph*> out;
    for (const auto* sg : neighbors) {
        if (sg && sg->answers && !sg->answers->empty()) out.push_back(sg);
    }
    return out;
}

double contrastive_loss(std::span<const double> scores, std::span<const EntityId> answers,
                        double tau, std::span<double> d_scores) {
    require(!answers.empty(), "contrastive loss: query has no labeled answer");
    require(tau > 0.0, "contrastive loss: tau must be positive");
    const std::size_t n = scores.size();
    std::vector<char> is_answer(n, 0);
    for (EntityId a : answers) {
        require(a < n, "contrastive loss: answer outside subgraph");
        is_answer[a] = 1;
    }
    double max_all = -INFINITY;
    double max_ans = -INFINITY;
    for (std::size_t x = 0; x < n; ++x) {
        const double z = scores[x] / tau;
        max_all = std::max(max_all, z);
        if (is_answer[x]) max_ans = std::max(max_ans, z);
    }
    const double shift_ans = max_ans;
    double sum_all = 0.0;
    double sum_ans = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        const double z = scores[x] / tau;
        sum_all += std::exp(z - max_all);
        if (is_answer[x]) sum_ans += std::exp(z - shift_ans);
    }
    const double lse_all = max_all + std::log(sum_all);
    const double lse_ans = shift_ans + std::log(sum_ans);
    if (!d_scores.empty()) {
        require(d_scores.size() == n, "contrastive loss: gradient size mismatch");
        for (std::size_t x = 0; x < n; ++x) {
            const double z = scores[x] / tau;
            double g = std::exp(z - lse_all);
            if (is_answer[x]) g -= std::exp(z - lse_ans);
            d_scores[x] = g / tau;
        }
    }
    return std::max(0.0, lse_all - lse_ans);
}

namespace {

// d/dz of u = z/|z| applied to du; zero rows get no gradient.
void unit_backward(std::span<const double> z, std::span<const double> u, std::span<const double> du,
                   std::span<double> dz) {
    const double norm = row_norm(z);
    if (norm == 0.0) return;
    double proj = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) proj += u[i] * du[i];
    for (std::size_t i = 0; i < u.size(); ++i) dz[i] += (du[i] - u[i] * proj) / norm;
}

} // namespace

double episode_loss(const GnnModel& model, const PreparedEpisode& ep, std::span<double> grad) {
    require(ep.query && ep.query_answers, "episode_loss: incomplete episode");
    require(ep.neighbors.size() == ep.neighbor_answers.size(), "episode_loss: neighbor mismatch");
    const std::size_t h = model.config().hidden;
    auto tq = forward(model, *ep.query);
    const Matrix uq = unit_rows(tq.output());

    std::vector<ForwardTrace> tn;
    std::vector<Matrix> un;
    std::vector<std::size_t> used;
    std::vector<std::vector<double>> centroids;
    for (std::size_t j = 0; j < ep.neighbors.size(); ++j) {
        if (ep.neighbor_answers[j]->empty()) continue;
        tn.push_back(forward(model, *ep.neighbors[j]));
        un.push_back(unit_rows(tn.back().output()));
        centroids.push_back(answer_centroid(tn.back().output(), *ep.neighbor_answers[j]));
        used.push_back(j);
    }
    if (centroids.empty()) fail(ErrorKind::InvalidArgument, "no usable cases");

    std::vector<double> c_total(h, 0.0);
    for (const auto& c : centroids) {
        for (std::size_t i = 0; i < h; ++i) c_total[i] += c[i];
    }
    const auto scores = scores_from_centroids(uq, centroids);
    std::vector<double> d_scores(grad.empty() ? 0 : scores.size());
    const double loss = contrastive_loss(scores, *ep.query_answers, model.config().tau, d_scores);
    if (grad.empty()) return loss;

    // Query side: S_x = u_x . C.
    Matrix dzq(uq.rows, h);
    std::vector<double> g_sum(h, 0.0); // sum_x dS_x u_x = dL/dc_j for every j
    std::vector<double> du(h);
    for (std::size_t x = 0; x < uq.rows; ++x) {
        for (std::size_t i = 0; i < h; ++i) {
            du[i] = d_scores[x] * c_total[i];
            g_sum[i] += d_scores[x] * uq(x, i);
        }
        unit_backward(tq.output().row(x), uq.row(x), du, dzq.row(x));
    }
    backward(model, *ep.query, tq, dzq, grad);

    for (std::size_t k = 0; k < used.size(); ++k) {
        const auto& answers = *ep.neighbor_answers[used[k]];
        const double inv = 1.0 / static_cast<double>(answers.size());
        for (std::size_t i = 0; i < h; ++i) du[i] = g_sum[i] * inv;
        Matrix dz(un[k].rows, h);
        for (EntityId a : answers) unit_backward(tn[k].output().row(a), un[k].row(a), du, dz.row(a));
        backward(model, *ep.neighbors[used[k]], tn[k], dz, grad);
    }
    return loss;
}

// --- Optimization ----------------------------------------------------------

void AdamState::apply(std::span<double> params, std::span<const double> grad) {
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::string block_norms(const std::vector<std::span<double>>& blocks) {
    std::ostringstream os;
    for (std::size_t b = 0; b < blocks.size(); ++b) os << (b ? ", " : "") << norm2(blocks[b]);
    return os.str();
}

} // namespace

TrainResult train_loop(std::vector<std::span<double>> param_blocks, std::size_t num_items,
                       const ItemLoss& item_loss, const std::function<double()>& validate,
                       const TrainConfig& cfg, const EpochCallback& on_epoch) {
    require(cfg.accumulation > 0, "train: accumulation must be positive");
    require(num_items > 0, "train: empty training set");
    std::size_t total = 0;
    for (const auto& b : param_blocks) total += b.size();

    auto gather = [&] {
        std::vector<double> flat;
        flat.reserve(total);
        for (const auto& b : param_blocks) flat.insert(flat.end(), b.begin(), b.end());
        return flat;
    };
    auto scatter = [&](const std::vector<double>& flat) {
        std::size_t off = 0;
        for (auto& b : param_blocks) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + b.size()), b.begin());
            off += b.size();
        }
    };

    std::vector<double> params = gather();
    AdamState adam;
    adam.lr = cfg.lr;
    Rng rng(derive_seed(cfg.seed, 0x7a1));
    std::vector<std::size_t> order(num_items);
    std::iota(order.begin(), order.end(), 0);

    std::vector<std::vector<double>> slot_grads(cfg.accumulation, std::vector<double>(total));
    std::vector<double> slot_loss(cfg.accumulation);
    std::vector<double> grad(total);

    TrainResult result;
    std::vector<double> best = params;
    result.best_valid_hits = -1.0;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        double grad_norm_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < num_items; start += cfg.accumulation) {
            const std::size_t count = std::min(cfg.accumulation, num_items - start);
            parallel_for(count, cfg.threads, [&](std::size_t k) {
                auto& g = slot_grads[k];
                std::fill(g.begin(), g.end(), 0.0);
                slot_loss[k] = item_loss(order[start + k], g);
            });
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = 0; k < count; ++k) {
                if (!std::isfinite(slot_loss[k])) {
                    fail(ErrorKind::Numeric,
                         "non-finite loss at epoch " + std::to_string(epoch) + ", item " +
                             std::to_string(order[start + k]) + "; parameter block norms [" +
                             block_norms(param_blocks) + "], item gradient norm " +
                             std::to_string(norm2(slot_grads[k])));
                }
                epoch_loss += slot_loss[k];
                const auto& g = slot_grads[k];
                for (std::size_t i = 0; i < total; ++i) grad[i] += g[i];
            }
            grad_norm_sum += norm2(grad);
            ++steps;
            adam.apply(params, grad);
            scatter(params);
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss;
        log.grad_norm = steps ? grad_norm_sum / static_cast<double>(steps) : 0.0;
        log.valid_hits = validate ? validate() : 0.0;
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
        if (!validate) {
            // Nothing to select on: keep the latest parameters.
            result.best_epoch = epoch;
            result.best_valid_hits = 0.0;
            best = params;
            continue;
        }
        if (log.valid_hits > result.best_valid_hits) {
            result.best_valid_hits = log.valid_hits;
            result.best_epoch = epoch;
            best = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    scatter(best);
    return result;
}

TrainResult train(GnnModel& model, std::span<const PreparedEpisode> train_set,
                  std::span<const PreparedEpisode> valid_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    std::vector<std::span<double>> blocks{model.params()};
    auto item_loss = [&](std::size_t i, std::span<double> g) { return episode_loss(model, train_set[i], g); };
    std::function<double()> validate;
    if (!valid_set.empty()) validate = [&] { return strict_hits_at_1(model, valid_set, cfg.threads); };
    return train_loop(blocks, train_set.size(), item_loss, validate, cfg, on_epoch);
}

std::vector<double> infer_scores(const GnnModel& model, const PreparedEpisode& ep) {
    require(ep.query != nullptr, "infer: missing query");
    std::vector<Matrix> neighbor_embeddings;
    std::vector<std::vector<EntityId>> answers;
    for (std::size_t j = 0; j < ep.neighbors.size(); ++j) {
        if (ep.neighbor_answers[j]->empty()) continue;
        neighbor_embeddings.push_back(forward_embeddings(model, *ep.neighbors[j]));
        answers.push_back(*ep.neighbor_answers[j]);
    }
    return score_against_neighbors(forward_embeddings(model, *ep.query), neighbor_embeddings, answers);
}

std::vector<RankedNode> infer(const GnnModel& model, const PreparedEpisode& ep, std::size_t top_n) {
    return rank_nodes(infer_scores(model, ep), top_n);
}

double strict_hits_at_1(const GnnModel& model, std::span<const PreparedEpisode> episodes, unsigned threads) {
    if (episodes.empty()) return 0.0;
    // Retrieved cases recur across queries; embed each distinct graph once.
    std::map<const GraphBatch*, std::size_t> slot;
    std::vector<const GraphBatch*> graphs;
    for (const auto& ep : episodes) {
        for (const auto* g : ep.neighbors) {
            if (slot.emplace(g, graphs.size()).second) graphs.push_back(g);
        }
    }
    std::vector<Matrix> embedded(graphs.size());
    parallel_for(graphs.size(), threads, [&](std::size_t i) { embedded[i] = forward_embeddings(model, *graphs[i]); });
    std::vector<char> hit(episodes.size(), 0);
    parallel_for(episodes.size(), threads, [&](std::size_t e) {
        const auto& ep = episodes[e];
        std::vector<std::vector<double>> centroids;
        for (std::size_t j = 0; j < ep.neighbors.size(); ++j) {
            if (ep.neighbor_answers[j]->empty()) continue;
            centroids.push_back(answer_centroid(embedded[slot.at(ep.neighbors[j])], *ep.neighbor_answers[j]));
        }
        if (centroids.empty()) return; // unanswerable: counted as a miss
        auto scores = scores_from_centroids(unit_rows(forward_embeddings(model, *ep.query)), centroids);
        hit[e] = strict_hit(scores, *ep.query_answers) ? 1 : 0;
    });
    const auto hits = std::count(hit.begin(), hit.end(), 1);
    return static_cast<double>(hits) / static_cast<double>(episodes.size());
}

// --- Checkpoints -----------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const std::string& path) {
    if (pos + sizeof(T) > in.size()) fail(ErrorKind::Format, path + ": truncated checkpoint");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

constexpr std::uint32_t kRelationTableTag = 0x544c4552; // "RELT"

} // namespace

void save_checkpoint(const std::filesystem::path& path, const GnnModel& model,
                     const RelationTable* relation_table) {
    const auto& c = model.config();
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.layers));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_relations));
    put<std::uint32_t>(out, c.use_distance ? 1u : 0u);
    put<double>(out, c.tau);
    put<std::uint64_t>(out, c.seed);
    put<std::uint64_t>(out, model.num_params());
    for (double p : model.params()) put<double>(out, p);
    put<std::uint32_t>(out, relation_table ? 1u : 0u);
    if (relation_table) {
        require(relation_table->values.size() == relation_table->rows * relation_table->dim,
                "save_checkpoint: relation table size mismatch");
        put<std::uint32_t>(out, kRelationTableTag);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(relation_table->rows));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(relation_table->dim));
        for (double v : relation_table->values) put<double>(out, v);
    }
    write_file(path, out);
}

GnnModel load_checkpoint(const std::filesystem::path& path, RelationTable* relation_table) {
    const std::string in = read_file(path);
    const std::string p = path.string();
    if (in.size() < sizeof kCheckpointMagic ||
        std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        fail(ErrorKind::Format, p + ": not a checkpoint");
    }
    std::size_t pos = sizeof kCheckpointMagic;
    if (take<std::uint32_t>(in, pos, p) != kCheckpointVersion) {
        fail(ErrorKind::Format, p + ": unsupported checkpoint version");
    }
    GnnConfig c;
    c.layers = take<std::uint32_t>(in, pos, p);
    const auto input_dim = take<std::uint32_t>(in, pos, p);
    c.hidden = take<std::uint32_t>(in, pos, p);
    c.num_relations = take<std::uint32_t>(in, pos, p);
    c.use_distance = take<std::uint32_t>(in, pos, p) != 0;
    c.tau = take<double>(in, pos, p);
    c.seed = take<std::uint64_t>(in, pos, p);
    GnnModel model(c);
    if (model.input_dim() != input_dim) fail(ErrorKind::Format, p + ": input dimension mismatch");
    if (take<std::uint64_t>(in, pos, p) != model.num_params()) {
        fail(ErrorKind::Format, p + ": parameter count mismatch");
    }
    for (double& v : model.params()) v = take<double>(in, pos, p);
    const auto sections = take<std::uint32_t>(in, pos, p);
    if (sections > 0) {
        if (take<std::uint32_t>(in, pos, p) != kRelationTableTag) fail(ErrorKind::Format, p + ": unknown section");
        RelationTable t;
        t.rows = take<std::uint32_t>(in, pos, p);
        t.dim = take<std::uint32_t>(in, pos, p);
        t.values.resize(t.rows * t.dim);
        for (double& v : t.values) v = take<double>(in, pos, p);
        if (relation_table) *relation_table = std::move(t);
    }
    if (pos != in.size()) fail(ErrorKind::Format, p + ": trailing bytes in checkpoint");
    return model;
}

} // namespace cbrsubg
