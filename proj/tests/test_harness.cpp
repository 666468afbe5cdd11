#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbrsubg/error.hpp"
#include "cbrsubg/harness.hpp"
#include "cbrsubg/util.hpp"
#include "fixtures.hpp"

using namespace cbrsubg;
using nlohmann::json;

namespace {

ExperimentConfig tiny(const std::filesystem::path& root) {
    ExperimentConfig c;
    c.num_pattern_types = 6;
    c.graphs_per_split = 2;
    c.hidden = 8;
    c.epochs = 2;
    c.threads = 1;
    c.data_dir = (root / "data").string();
    c.out = (root / "data").string();
    return c;
}

QueryResult row(const std::string& group, bool hit) {
    QueryResult r;
    r.id = group + std::to_string(hit);
    r.group = group;
    r.hit = hit;
    return r;
}

} // namespace

TEST(Summarize, RecountsGroupsAndAverages) {
    MetricsReport rep;
    rep.rows = {row("2p", true), row("2p", false), row("2p", true), row("2p", true), row("3p", false),
                row("ip", true)};
    summarize(rep, {"2p", "3p", "2i", "ip"});
    EXPECT_EQ(rep.groups.at("2p").queries, 4u);
    EXPECT_EQ(rep.groups.at("2p").hits, 3u);
    EXPECT_DOUBLE_EQ(rep.groups.at("2p").hits_at_1, 75.0);
    EXPECT_DOUBLE_EQ(rep.groups.at("3p").hits_at_1, 0.0);
    EXPECT_EQ(rep.groups.at("2i").queries, 0u);
    // Empty groups are left out of the average.
    EXPECT_DOUBLE_EQ(rep.average, (75.0 + 0.0 + 100.0) / 3);
    EXPECT_DOUBLE_EQ(rep.overall, 400.0 / 6);
    auto csv = report_summary_csv(rep);
    EXPECT_NE(csv.find("2p,3p,2i,ip,avg,overall"), std::string::npos);
    EXPECT_NE(csv.find(",75.00,0.00,0.00,100.00,58.33,66.67"), std::string::npos);
}

TEST(Workspace, SyntheticWorkspaceAndEpisodes) {
    GeneratorConfig gc;
    gc.num_pattern_types = 5;
    gc.graphs_per_split = 2;
    auto ws = synthetic_workspace(assemble_dataset(gc));
    EXPECT_EQ(ws.queries.size(), 30u);
    EXPECT_EQ(ws.groups, (std::vector<std::string>{"2p", "3p", "2i", "ip", "pi"}));
    for (std::size_t qi : ws.split(Split::Test)) {
        const auto& q = ws.queries[qi];
        EXPECT_EQ(q.knn.size(), 2u);
        for (std::size_t j : q.knn) {
            EXPECT_EQ(ws.queries[j].split, Split::Train);
            EXPECT_EQ(ws.queries[j].pattern_type, q.pattern_type);
        }
        EXPECT_TRUE(q.subgraph.covers_all_answers());
    }
    auto pw = prepare_workspace(ws, true, 1);
    auto test_ids = ws.split(Split::Test);
    auto eps = make_episodes(ws, pw, test_ids, 1, false);
    ASSERT_EQ(eps.size(), test_ids.size());
    for (const auto& e : eps) EXPECT_EQ(e.neighbors.size(), 1u);
    EXPECT_EQ(available_neighbors(ws, test_ids), 2u);
}

TEST(Evaluate, RandomFloorAndStrictTies) {
    GeneratorConfig gc;
    gc.num_pattern_types = 20;
    gc.graphs_per_split = 5;
    auto ws = synthetic_workspace(assemble_dataset(gc));
    auto r = evaluate_random(ws, Split::Test, 1);
    EXPECT_EQ(r.rows.size(), 100u);
    EXPECT_LE(r.average, 10.0);

    // Constant scores tie every node: never a strict hit.
    for (std::size_t qi : ws.split(Split::Test)) {
        std::vector<double> flat(ws.queries[qi].subgraph.num_nodes(), 1.0);
        EXPECT_FALSE(make_result(ws, ws.queries[qi], flat, true).hit);
    }
    // Perfect scores always hit.
    for (std::size_t qi : ws.split(Split::Test)) {
        const auto& q = ws.queries[qi];
        std::vector<double> s(q.subgraph.num_nodes(), 0.0);
        for (EntityId a : *q.subgraph.answers) s[a] = 1.0;
        auto res = make_result(ws, q, s, true);
        EXPECT_TRUE(res.hit);
        EXPECT_EQ(res.gold.size(), q.subgraph.answers->size());
        EXPECT_FALSE(make_result(ws, q, s, false).hit);
    }
}

TEST(Commands, GenTrainEvalAndReportsRecount) {
    fixtures::TempDir dir("cmds");
    auto cfg = tiny(dir.path);
    std::ostringstream log;
    run_command("gen-data", cfg, log);
    for (const char* f : {"manifest.json", "train.jsonl", "valid.jsonl", "test.jsonl"}) {
        EXPECT_TRUE(std::filesystem::exists(dir.path / "data" / f)) << f;
    }
    run_command("train", cfg, log);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "data" / "model.ckpt"));
    run_command("eval", cfg, log);
    std::ifstream in(dir.path / "data" / "eval_test.json");
    json j = json::parse(in);
    // Recount the per-group numbers from the per-query rows.
    std::map<std::string, std::pair<int, int>> counts;
    for (const auto& q : j["queries"]) {
        auto& c = counts[q["group"].get<std::string>()];
        ++c.first;
        c.second += q["hit"].get<bool>() ? 1 : 0;
    }
    double sum = 0;
    for (const auto& [g, c] : counts) {
        EXPECT_EQ(j["groups"][g]["queries"].get<int>(), c.first);
        const double pct = 100.0 * c.second / c.first;
        EXPECT_NEAR(j["groups"][g]["hits_at_1"].get<double>(), pct, 1e-9);
        sum += pct;
    }
    EXPECT_NEAR(j["average_hits_at_1"].get<double>(), sum / counts.size(), 1e-9);
    EXPECT_EQ(j["queries"].size(), 12u); // test split: 6 patterns x 2 graphs

    cfg.baseline = "cbr-path";
    run_command("baseline", cfg, log);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "data" / "baseline_cbr-path_test.json"));
    cfg.k_values = {1, 2};
    run_command("sweep-knn", cfg, log);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "data" / "sweep_knn.csv"));
    run_command("stats", cfg, log);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "data" / "stats.json"));
}

TEST(Commands, TauGridKeepsBestValidation) {
    fixtures::TempDir dir("tau");
    auto cfg = tiny(dir.path);
    cfg.epochs = 1;
    cfg.tau_grid = {0.05, 0.2};
    std::ostringstream log;
    run_command("gen-data", cfg, log);
    run_command("train", cfg, log);
    EXPECT_NE(log.str().find("== tau 0.2"), std::string::npos);
    const auto side = json::parse(read_file(dir.path / "data" / "model.json"));
    const auto chosen = side["config"]["model"]["tau"].get<std::string>();
    EXPECT_TRUE(chosen == "0.05" || chosen == "0.2") << chosen;
    EXPECT_EQ(load_checkpoint(dir.path / "data" / "model.ckpt").config().tau, std::stod(chosen));
}

TEST(Commands, ErrorsAreTyped) {
    fixtures::TempDir dir("errs");
    auto cfg = tiny(dir.path);
    std::ostringstream log;
    try {
        run_command("fly", cfg, log);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
    try {
        run_command("eval", cfg, log); // no data generated
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::Io || e.kind() == ErrorKind::Format) << e.what();
    }
    EXPECT_THROW(run_command("collect", cfg, log), Error);
}

TEST(Commands, CollectOnToyKg) {
    fixtures::TempDir dir("collect");
    ExperimentConfig cfg;
    const auto toy = fixtures::data_dir() / "toy_kg";
    cfg.mode = "external-kg";
    cfg.triples = (toy / "triples.tsv").string();
    cfg.cases = (toy / "cases.jsonl").string();
    cfg.embeddings = (toy / "embeddings.bin").string();
    cfg.embedding_ids = (toy / "embedding_ids.txt").string();
    cfg.out = dir.path.string();
    cfg.threads = 1;
    std::ostringstream log;
    run_command("collect", cfg, log);
    std::ifstream in(dir.path / "collect_stats.json");
    json j = json::parse(in);
    EXPECT_EQ(j["stats"]["queries"].get<int>(), 20);
    EXPECT_DOUBLE_EQ(j["stats"]["answer_coverage"].get<double>(), 1.0);
    EXPECT_GE(j["fraction_smaller_than_naive_3hop"].get<double>(), 0.8);
    std::ifstream recs(dir.path / "subgraphs.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(recs, line)) {
        auto r = json::parse(line);
        EXPECT_EQ(r["triples"].size(), r["num_edges"].get<std::size_t>());
        ++n;
    }
    EXPECT_EQ(n, 20u);
}
