#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cbrsubg/subgraph.hpp"

namespace cbrsubg {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// --- Featurization ---------------------------------------------------------

/// Input node features: a {0,1} indicator per relation type the node emits
/// (forward edges only), followed by a one-hot distance bucket when
/// use_distance is set.
Matrix featurize(const QuerySubgraph& sg, std::size_t num_relations, bool use_distance = true);

std::size_t feature_dim(std::size_t num_relations, bool use_distance) noexcept;

/// Message-passing view of a subgraph: for every node, its incoming messages
/// grouped by message relation (inverse relations included), plus sparse
/// input features.
struct GraphBatch {
    struct Group {
        RelationId relation = 0; // message relation in [0, 2R)
        std::uint32_t begin = 0; // into sources
        std::uint32_t end = 0;
    };
    std::size_t num_nodes = 0;
    std::vector<std::uint32_t> group_offsets; // per node into groups
    std::vector<Group> groups;
    std::vector<EntityId> sources;
    Matrix features;
};

GraphBatch prepare_graph(const QuerySubgraph& sg, std::size_t num_relations, bool use_distance);

// --- Model -----------------------------------------------------------------

struct GnnConfig {
    std::size_t num_relations = 0; // base relations; messages use 2x
    std::size_t layers = 3;
    std::size_t hidden = 32;
    double tau = 0.05;
    bool use_distance = true;
    std::uint64_t seed = 1;
};

/// R-GCN parameters: per layer, one self matrix and one matrix per message
/// relation, all stored contiguously (out x in, row-major) in a flat vector.
class GnnModel {
public:
    GnnModel() = default;
    explicit GnnModel(const GnnConfig& cfg); // Glorot-uniform init from cfg.seed

    const GnnConfig& config() const noexcept { return cfg_; }
    std::size_t input_dim() const noexcept { return feature_dim(cfg_.num_relations, cfg_.use_distance); }
    std::size_t layer_in(std::size_t l) const noexcept { return l == 0 ? input_dim() : cfg_.hidden; }
    std::size_t num_matrices_per_layer() const noexcept { return 2 * cfg_.num_relations + 1; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t num_params() const noexcept { return params_.size(); }

    /// Offset of W_self (slot 0) or W_r (slot 1 + r) of layer l in params().
    std::size_t offset(std::size_t layer, std::size_t slot) const noexcept;

    void set_tau(double tau);

private:
    GnnConfig cfg_;
    std::vector<double> params_;
    std::vector<std::size_t> layer_offsets_;
};

/// Activations kept for the backward pass.
struct ForwardTrace {
    std::vector<Matrix> h;    // h[0] = features, h[l] = layer l output
    std::vector<Matrix> mean; // per layer, one row per group: mean of source inputs
    const Matrix& output() const { return h.back(); }
};

ForwardTrace forward(const GnnModel& model, const GraphBatch& graph);
Matrix forward_embeddings(const GnnModel& model, const GraphBatch& graph);

/// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
void backward(const GnnModel& model, const GraphBatch& graph, const ForwardTrace& trace,
              const Matrix& d_output, std::span<double> grad);

// --- Similarity scoring ----------------------------------------------------

/// Rows scaled to unit L2 norm; all-zero rows stay zero (cosine 0).
Matrix unit_rows(const Matrix& m);

/// Mean of the unit-normalized answer rows of one retrieved case.
std::vector<double> answer_centroid(const Matrix& embeddings, std::span<const EntityId> answers);

/// score(x) = sum over neighbors j of the mean cosine between x and the
/// answer nodes of neighbor j. Throws if no neighbor has an answer.
std::vector<double> score_against_neighbors(const Matrix& query_embeddings,
                                            std::span<const Matrix> neighbor_embeddings,
                                            std::span<const std::vector<EntityId>> neighbor_answers);

struct RankedNode {
    EntityId node = 0;
    double score = 0.0;
};

/// Descending by score, ties by ascending node id.
std::vector<RankedNode> rank_nodes(std::span<const double> scores, std::size_t top_n = 0);

/// True iff every gold node scores strictly above every other node.
bool strict_hit(std::span<const double> scores, std::span<const EntityId> gold);

// --- Loss --------------------------------------------------------------------

/// Retrieved cases whose subgraph contains at least one of their answers;
/// the rest cannot contribute an answer set and are dropped.
std::vector<const QuerySubgraph*> usable_neighbors(std::span<const QuerySubgraph* const> neighbors);

/// Multi-positive contrastive loss with log-sum-exp stabilization:
/// -log sum_{a in A} exp(S(a)/tau) / sum_{x in V} exp(S(x)/tau).
/// Scores are passed in; returns the loss and writes dL/dS into d_scores.
double contrastive_loss(std::span<const double> scores, std::span<const EntityId> answers,
                        double tau, std::span<double> d_scores);

/// Prepared per-query inputs shared by training and evaluation.
struct PreparedEpisode {
    const GraphBatch* query = nullptr;
    const std::vector<EntityId>* query_answers = nullptr;
    std::vector<const GraphBatch*> neighbors;
    std::vector<const std::vector<EntityId>*> neighbor_answers;
};

/// Full loss for one episode, accumulating parameter gradients into grad
/// (which may be empty to skip the backward pass).
double episode_loss(const GnnModel& model, const PreparedEpisode& ep, std::span<double> grad);

// --- Optimization ----------------------------------------------------------

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    void apply(std::span<double> params, std::span<const double> grad);
};

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 1e-3;
    std::size_t accumulation = 8;
    std::size_t patience = 5;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_hits = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_valid_hits = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Loss of training item i; adds its gradient into grad (laid out as the
/// concatenation of the parameter blocks).
using ItemLoss = std::function<double(std::size_t item, std::span<double> grad)>;

/// Shared optimization loop: shuffled items, per-item gradient buffers reduced
/// in item order (so results do not depend on the thread count), Adam step
/// every `accumulation` items, per-epoch validation with best-epoch restore
/// and early stopping.
TrainResult train_loop(std::vector<std::span<double>> param_blocks, std::size_t num_items,
                       const ItemLoss& item_loss, const std::function<double()>& validate,
                       const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Adam on the summed episode loss with gradient accumulation; keeps the
/// parameters of the epoch with the best validation strict hits@1 (early
/// stopping after `patience` epochs without improvement). Throws
/// Error(Numeric) with layer and gradient norms on a non-finite loss.
TrainResult train(GnnModel& model, std::span<const PreparedEpisode> train_set,
                  std::span<const PreparedEpisode> valid_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Node scores for one query (embeddings computed from scratch).
std::vector<double> infer_scores(const GnnModel& model, const PreparedEpisode& ep);

std::vector<RankedNode> infer(const GnnModel& model, const PreparedEpisode& ep, std::size_t top_n = 0);

/// Fraction of episodes with a strict hit.
double strict_hits_at_1(const GnnModel& model, std::span<const PreparedEpisode> episodes,
                        unsigned threads = 1);

// --- Checkpoints -----------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'C', 'B', 'R', 'S', 'U', 'B', 'G', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optional trailing section holding one row per pattern type.
struct RelationTable {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> values;
};

void save_checkpoint(const std::filesystem::path& path, const GnnModel& model,
                     const RelationTable* relation_table = nullptr);
GnnModel load_checkpoint(const std::filesystem::path& path, RelationTable* relation_table = nullptr);

} // namespace cbrsubg
