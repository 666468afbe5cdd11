#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cbrsubg {

/// Every experiment setting, resolved. Loaded from an INI-style file
/// ([section] headers, key = value lines, # or ; comments) and then overridden
/// key by key. Keys are unique across sections; "section.key" is accepted too.
struct ExperimentConfig {
    // [run]
    std::uint64_t seed = 7;
    std::string mode = "synthetic"; // synthetic | external-kg
    std::string data_dir = "data/synthetic";
    std::string out = "runs/default";
    std::string split = "test";
    std::string checkpoint; // empty: <out>/model.ckpt
    unsigned threads = 0;   // 0: CBR_SUBG_THREADS or hardware concurrency

    // [generator]
    std::uint32_t num_entity_types = 16;
    double type_edge_prob = 0.3;
    std::uint32_t num_pattern_types = 200;
    std::uint32_t graphs_per_split = 5;
    std::uint32_t num_entities = 120;
    double edge_prob = 0.4;
    std::string edge_model = "outward"; // outward | pair | head-draw
    std::uint32_t generator_hops = 3;

    // [model]
    std::size_t layers = 3;
    std::size_t hidden = 32;
    double tau = 0.05;
    bool use_distance = true;

    // [train]
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t patience = 5;
    std::size_t accumulation = 8;
    std::size_t k_train = 5;
    std::size_t k_eval = 5;
    std::vector<double> tau_grid; // train once per value, keep the best on valid; empty: tau only

    // [sweep]
    std::vector<std::size_t> k_values{1, 2, 3, 5};

    // [baseline]
    std::string baseline = "cbr-path"; // cbr-path | gnn-transe
    std::string transe_loss = "softmax"; // softmax | margin
    double transe_margin = 1.0;
    std::size_t transe_epoch_factor = 3;
    bool precision_weighting = false;

    // [external]
    std::string triples;
    std::string cases;
    std::string embeddings;
    std::string embedding_ids;
    std::size_t max_hops = 3;
    std::size_t edge_budget = 50000;
    std::uint32_t fallback_hops = 2;
    std::size_t fallback_budget = 5000;

    /// Applies one setting; throws InvalidArgument for unknown keys or values
    /// that do not parse.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin = "config");

    /// Checks ranges; the paths a command needs are checked by that command.
    void validate() const;

    unsigned resolved_threads() const;
    std::filesystem::path checkpoint_path() const;

    nlohmann::json to_json() const;
    std::string to_ini() const;
};

} // namespace cbrsubg
