#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "cbrsubg/gnn.hpp"

namespace cbrsubg {

// --- CBR-Path ----------------------------------------------------------------

/// A solved case as seen by the path baseline.
struct PathCase {
    const KnowledgeGraph* graph = nullptr;
    std::span<const EntityId> query_entities;
    std::span<const EntityId> answers;
};

struct PathVoteOptions {
    std::size_t max_hops = 3;
    /// Weight each occurrence by the fraction of the chain's endpoints (from
    /// that query entity in that case) that are answers, instead of 1.
    bool precision_weighting = false;
};

using PathVoteTable = std::map<ChainType, double>;

/// Chain weights summed over the cases: by default, the number of
/// (case, query entity -> answer) pairs each chain links.
PathVoteTable path_vote_table(std::span<const PathCase> cases, const PathVoteOptions& opts = {});

/// Per-node accrued weight: every chain is walked from every query entity and
/// each node at the end of a complete walk gains the chain's weight (once per
/// chain and start entity).
std::vector<double> cbr_path_scores(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                    const PathVoteTable& table);

std::vector<RankedNode> cbr_path_predict(const KnowledgeGraph& g, std::span<const EntityId> query_entities,
                                         std::span<const PathCase> cases, const PathVoteOptions& opts = {},
                                         std::size_t top_n = 0);

// --- GNN + TransE ------------------------------------------------------------

struct TransEEpisode {
    const GraphBatch* graph = nullptr;
    const std::vector<EntityId>* query_entities = nullptr;
    const std::vector<EntityId>* answers = nullptr;
    std::uint32_t pattern_type = 0;
};

enum class TransELoss : std::uint8_t { Softmax, Margin };

/// Shared GNN encoder plus one relation vector per pattern type.
struct TransEModel {
    GnnModel gnn;
    RelationTable relations;
    TransELoss loss = TransELoss::Softmax;
    double margin = 1.0;

    TransEModel() = default;
    TransEModel(const GnnConfig& cfg, std::size_t num_pattern_types, TransELoss loss = TransELoss::Softmax);

    std::span<const double> relation(std::uint32_t pattern_type) const;
    std::size_t num_params() const noexcept { return gnn.num_params() + relations.values.size(); }
};

/// score(x) = -|h_q + r_p - h_x|, h_q the mean query-entity embedding.
std::vector<double> transe_scores(const Matrix& embeddings, std::span<const EntityId> query_entities,
                                  std::span<const double> relation);

std::vector<double> transe_infer_scores(const TransEModel& model, const TransEEpisode& ep);

/// Loss for one query; gradient laid out as [gnn params | relation table].
double transe_episode_loss(const TransEModel& model, const TransEEpisode& ep, std::span<double> grad);

TrainResult transe_train(TransEModel& model, std::span<const TransEEpisode> train_set,
                         std::span<const TransEEpisode> valid_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

double transe_strict_hits_at_1(const TransEModel& model, std::span<const TransEEpisode> episodes,
                               unsigned threads = 1);

} // namespace cbrsubg
