#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbrsubg/baselines.hpp"
#include "cbrsubg/config.hpp"
#include "cbrsubg/synth.hpp"

namespace cbrsubg {

std::string version_string();

// --- Workspaces --------------------------------------------------------------

/// One query with its reasoning subgraph and retrieved neighbors.
struct QueryRecord {
    std::string id;
    std::string group; // shape tag in synthetic mode
    Split split = Split::Train;
    std::uint32_t pattern_type = 0;
    std::uint64_t entity_offset = 0; // local subgraph id -> reported id, synthetic mode
    QuerySubgraph subgraph;
    std::vector<std::size_t> knn; // indices of train queries, best first
};

/// Everything the models consume, in either mode.
struct Workspace {
    std::string mode;
    std::size_t num_relations = 0;
    std::size_t num_pattern_types = 0;
    std::vector<std::string> groups; // report order
    std::vector<QueryRecord> queries;
    std::vector<std::string> entity_names;   // external mode
    std::vector<std::string> relation_names; // external mode

    std::vector<std::size_t> split(Split s) const;
    /// Reported name of a subgraph node of query q.
    std::string node_name(const QueryRecord& q, EntityId local) const;
};

Workspace synthetic_workspace(const SyntheticDataset& ds);

/// Loads triples, cases and embeddings, retrieves neighbors among the train
/// cases and collects each query's subgraph from its neighbors' chains.
Workspace external_workspace(const ExperimentConfig& cfg, std::ostream& log);

/// Synthetic: reads data_dir. External: builds from the [external] inputs.
Workspace load_workspace(const ExperimentConfig& cfg, std::ostream& log);

GeneratorConfig generator_config(const ExperimentConfig& cfg);
GnnConfig model_config(const ExperimentConfig& cfg, std::size_t num_relations);
TrainConfig train_config(const ExperimentConfig& cfg);

// --- Episodes ----------------------------------------------------------------

struct PreparedWorkspace {
    std::vector<GraphBatch> batches; // parallel to queries
    std::vector<std::vector<EntityId>> answers;
};

PreparedWorkspace prepare_workspace(const Workspace& ws, bool use_distance, unsigned threads);

/// Episodes for the given split with at most k neighbors each; neighbors
/// without answers in their subgraph are dropped. Queries without labeled
/// answers are skipped when require_answers is set (training).
std::vector<PreparedEpisode> make_episodes(const Workspace& ws, const PreparedWorkspace& pw,
                                           std::span<const std::size_t> queries, std::size_t k,
                                           bool require_answers);

/// Largest neighbor count any query in the split can use.
std::size_t available_neighbors(const Workspace& ws, std::span<const std::size_t> queries);

// --- Reports -------------------------------------------------------------------

struct QueryResult {
    std::string id;
    std::string group;
    bool hit = false;
    bool answerable = true; // had at least one usable neighbor
    std::vector<std::string> gold;
    std::vector<std::pair<std::string, double>> top; // best first
};

struct GroupMetrics {
    std::size_t queries = 0;
    std::size_t hits = 0;
    double hits_at_1 = 0.0; // percent
};

struct MetricsReport {
    std::string model;
    std::string split;
    std::size_t k = 0;
    std::vector<QueryResult> rows;
    std::map<std::string, GroupMetrics> groups;
    std::vector<std::string> group_order;
    double average = 0.0; // mean of group percentages
    double overall = 0.0; // micro average, percent
};

/// Fills the per-group tallies and averages from rows.
void summarize(MetricsReport& report, const std::vector<std::string>& group_order);

nlohmann::json report_json(const MetricsReport& report, const ExperimentConfig& cfg, const std::string& command);
std::string report_rows_csv(const MetricsReport& report);
std::string report_summary_csv(const MetricsReport& report);

// --- Evaluation helpers ---------------------------------------------------------

QueryResult make_result(const Workspace& ws, const QueryRecord& q, std::span<const double> scores, bool answerable);

MetricsReport evaluate_cbr_subg(const GnnModel& model, const Workspace& ws, const PreparedWorkspace& pw,
                                Split split, std::size_t k, unsigned threads);

MetricsReport evaluate_cbr_path(const Workspace& ws, Split split, std::size_t k, const PathVoteOptions& opts,
                                unsigned threads);

MetricsReport evaluate_random(const Workspace& ws, Split split, std::uint64_t seed);

std::vector<TransEEpisode> make_transe_episodes(const Workspace& ws, const PreparedWorkspace& pw,
                                                std::span<const std::size_t> queries, bool require_answers);

MetricsReport evaluate_transe(const TransEModel& model, const Workspace& ws, const PreparedWorkspace& pw,
                              Split split, unsigned threads);

// --- Commands ------------------------------------------------------------------

/// Runs a named command (gen-data, train, eval, sweep-knn, ablate-distance,
/// collect, stats, baseline). Throws Error on failure.
void run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& out);

const std::vector<std::string>& command_names();

} // namespace cbrsubg
