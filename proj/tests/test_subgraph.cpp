#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cbrsubg/error.hpp"
#include "cbrsubg/subgraph.hpp"
#include "cbrsubg/synth.hpp"
#include "cbrsubg/util.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cbrsubg;

namespace {

// Chain types by brute-force simple-path enumeration over the triple list.
void extract(const KnowledgeGraph& g, EntityId u, const std::set<EntityId>& goals, std::size_t max_len,
             ChainType& cur, std::vector<char>& used, std::set<ChainType>& out) {
    if (!cur.empty() && goals.count(u)) out.insert(cur);
    if (cur.size() == max_len) return;
    for (const auto& t : g.triples()) {
        if (t.head == u && !used[t.tail]) {
            used[t.tail] = 1;
            cur.push_back({t.relation, Direction::Forward});
            extract(g, t.tail, goals, max_len, cur, used, out);
            cur.pop_back();
            used[t.tail] = 0;
        }
        if (t.tail == u && !used[t.head]) {
            used[t.head] = 1;
            cur.push_back({t.relation, Direction::Backward});
            extract(g, t.head, goals, max_len, cur, used, out);
            cur.pop_back();
            used[t.head] = 0;
        }
    }
}

std::set<ChainType> oracle_chains(const KnowledgeGraph& g, std::span<const EntityId> qe,
                                  std::span<const EntityId> answers, std::size_t max_len) {
    std::set<ChainType> out;
    std::set<EntityId> goals(answers.begin(), answers.end());
    for (EntityId q : qe) {
        ChainType cur;
        std::vector<char> used(g.num_entities(), 0);
        used[q] = 1;
        extract(g, q, goals, max_len, cur, used, out);
    }
    return out;
}

using oracles::random_chain;
using oracles::source_triples;
using oracles::walk;

} // namespace

TEST(Chains, ToString) {
    ChainType c{{3, Direction::Forward}, {1, Direction::Backward}};
    EXPECT_EQ(chain_to_string(c), "+3 -1");
}

TEST(Chains, FigureTwoFixtureMinesBothChains) {
    // q -r0-> m -r1-> ans is the real rule; q -r2-> x -r3-> y <-r4- ans is a
    // coincidental 3-hop connection.
    auto g = KnowledgeGraph::build({{0, 0, 1}, {1, 1, 2}, {0, 2, 3}, {3, 3, 4}, {2, 4, 4}}, 5, 5);
    const EntityId q[] = {0}, a[] = {2};
    auto chains = mine_chain_types(g, q, a, 3);
    std::set<ChainType> want{
        {{0, Direction::Forward}, {1, Direction::Forward}},
        {{2, Direction::Forward}, {3, Direction::Forward}, {4, Direction::Backward}},
    };
    EXPECT_EQ(chains, want);
    auto counts = mine_chain_counts(g, q, a, 3);
    for (const auto& [c, n] : counts) EXPECT_EQ(n, 1u);
}

TEST(Chains, NoPathGivesNothing) {
    auto g = KnowledgeGraph::build({{0, 0, 1}}, 3, 1);
    const EntityId q[] = {0}, a[] = {2};
    EXPECT_TRUE(mine_chain_types(g, q, a, 3).empty());
    const EntityId missing[] = {99};
    EXPECT_TRUE(mine_chain_types(g, missing, a, 3).empty()); // unknown entity skipped
}

TEST(Chains, CountsPairs) {
    // Two answers reached by the same one-hop chain.
    auto g = KnowledgeGraph::build({{0, 0, 1}, {0, 0, 2}}, 3, 1);
    const EntityId q[] = {0}, a[] = {1, 2};
    auto counts = mine_chain_counts(g, q, a, 3);
    EXPECT_EQ(counts.at(ChainType{{0, Direction::Forward}}), 2u);
}

TEST(Chains, MatchIndependentExtractorOnSyntheticGraphs) {
    auto ts = sample_type_system(7);
    GeneratorConfig cfg;
    int fixtures_checked = 0;
    for (std::uint32_t p = 0; p < 50; ++p) {
        auto pt = ground_pattern(ts, kAllShapes[p % 5], 300 + p, p);
        auto ex = sample_graph_with_pattern(ts, pt, derive_seed(11, p), cfg);
        auto got = mine_chain_types(ex.graph, ex.query_entities, ex.answers, 3);
        ASSERT_EQ(got, oracle_chains(ex.graph, ex.query_entities, ex.answers, 3)) << "fixture " << p;
        EXPECT_FALSE(got.empty());
        ++fixtures_checked;
    }
    EXPECT_EQ(fixtures_checked, 50);
}

TEST(Replay, EmptyChainSetKeepsQueryEntities) {
    auto g = KnowledgeGraph::build({{0, 0, 1}}, 3, 1);
    const EntityId q[] = {0};
    auto sg = replay_chains(g, q, {});
    EXPECT_EQ(sg.num_nodes(), 1u);
    EXPECT_EQ(sg.graph.num_triples(), 0u);
}

TEST(Replay, FanOut) {
    auto g = KnowledgeGraph::build({{0, 0, 1}, {0, 0, 2}, {0, 1, 3}}, 4, 2);
    const EntityId q[] = {0};
    auto sg = replay_chains(g, q, {{{0, Direction::Forward}}});
    EXPECT_EQ(sg.graph.num_triples(), 2u);
    EXPECT_EQ(sg.num_nodes(), 3u);
}

TEST(Replay, IncompleteChainsContributeNothing) {
    auto g = KnowledgeGraph::build({{0, 0, 1}, {1, 1, 2}, {0, 0, 3}}, 4, 3);
    const EntityId q[] = {0};
    // +0 +1 only completes through node 1; the dead branch to 3 is pruned.
    auto edges = replay_edges(g, q, {{{0, Direction::Forward}, {1, Direction::Forward}}});
    EXPECT_EQ(edges, (std::vector<Triple>{{0, 0, 1}, {1, 1, 2}}));
    EXPECT_TRUE(replay_edges(g, q, {{{0, Direction::Forward}, {2, Direction::Forward}}}).empty());
    EXPECT_EQ(chain_endpoints(g, 0, {{0, Direction::Forward}, {1, Direction::Forward}}), (std::vector<EntityId>{2}));
}

TEST(Replay, MatchesWalkEnumerationOracle) {
    std::mt19937_64 rng(23);
    auto ts = sample_type_system(7);
    GeneratorConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        KnowledgeGraph g;
        std::vector<EntityId> qe;
        std::set<ChainType> chains;
        if (trial % 2 == 0) {
            g = fixtures::random_graph(rng, 20, 3, 45);
            qe = {static_cast<EntityId>(rng() % 20)};
            if (trial % 4 == 0) qe.push_back(static_cast<EntityId>(rng() % 20));
            for (int c = 0; c < 4; ++c) chains.insert(random_chain(rng, 3));
        } else {
            // Chains mined from one graph, replayed on another of the same type.
            auto pt = ground_pattern(ts, kAllShapes[trial % 5], 500 + trial, 0);
            auto nb = sample_graph_with_pattern(ts, pt, derive_seed(31, trial), cfg);
            auto ex = sample_graph_with_pattern(ts, pt, derive_seed(37, trial), cfg);
            chains = mine_chain_types(nb.graph, nb.query_entities, nb.answers, 3);
            g = ex.graph;
            qe = ex.query_entities;
        }
        auto edges = replay_edges(g, qe, chains);
        auto want = oracles::replay_by_enumeration(g, qe, chains);
        ASSERT_EQ(std::set<Triple>(edges.begin(), edges.end()), want) << "trial " << trial;
        ASSERT_EQ(edges.size(), want.size());
        for (const auto& c : chains) {
            for (EntityId q : qe) {
                std::set<Triple> one;
                std::vector<Triple> stack;
                walk(g, q, c, 0, stack, one);
                std::set<EntityId> ends;
                // Endpoints equal the last-step targets of complete walks.
                auto got = chain_endpoints(g, q, c);
                for (EntityId e : got) ends.insert(e);
                EXPECT_EQ(ends.size(), got.size());
                if (one.empty()) EXPECT_TRUE(got.empty());
            }
        }
    }
}

TEST(Replay, AdaptiveWithinNaiveAndMonotone) { EXPECT_EQ(oracles::check_containment(150), ""); }

TEST(Replay, BudgetTruncates) {
    std::vector<Triple> t;
    for (EntityId i = 1; i <= 10; ++i) t.push_back({0, 0, i});
    auto g = KnowledgeGraph::build(t, 11, 1);
    const EntityId q[] = {0};
    bool cut = false;
    auto edges = replay_edges(g, q, {{{0, Direction::Forward}}}, ReplayOptions{4}, &cut);
    EXPECT_TRUE(cut);
    EXPECT_EQ(edges, (std::vector<Triple>{{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}}));
}

TEST(KHop, SmallCases) {
    auto g = KnowledgeGraph::build({{0, 0, 1}, {1, 0, 2}}, 3, 1);
    const EntityId q[] = {0};
    auto zero = khop_subgraph(g, q, 0);
    EXPECT_EQ(zero.num_nodes(), 1u);
    EXPECT_EQ(zero.graph.num_triples(), 0u);
    auto one = khop_subgraph(g, q, 1);
    EXPECT_EQ(one.graph.num_triples(), 1u);
}

TEST(KHop, SyntheticThreeHopIsWholeGraph) {
    auto ts = sample_type_system(7);
    GeneratorConfig cfg;
    for (std::uint32_t p = 0; p < 10; ++p) {
        auto pt = ground_pattern(ts, kAllShapes[p % 5], 40 + p, p);
        auto ex = sample_graph_with_pattern(ts, pt, derive_seed(5, p), cfg);
        auto sg = khop_subgraph(ex.graph, ex.query_entities, 3);
        EXPECT_EQ(sg.graph.num_triples(), ex.graph.num_triples());
        EXPECT_EQ(sg.num_nodes(), 120u);
    }
}

TEST(KHop, BudgetSampleIsSeededSubset) {
    std::mt19937_64 rng(3);
    auto g = fixtures::random_graph(rng, 40, 3, 200);
    const EntityId q[] = {0};
    auto full = khop_edges(g, q, 2);
    ASSERT_GT(full.size(), 20u);
    auto a = khop_edges(g, q, 2, 20, 9);
    auto b = khop_edges(g, q, 2, 20, 9);
    EXPECT_EQ(a.size(), 20u);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(std::includes(full.begin(), full.end(), a.begin(), a.end()));
}

TEST(MakeSubgraph, InvariantsAndDistances) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = fixtures::random_graph(rng, 25, 3, 40);
        std::vector<Triple> pick;
        for (const auto& t : g.triples()) {
            if (rng() % 2) pick.push_back(t);
        }
        std::vector<EntityId> qe{static_cast<EntityId>(rng() % 25)};
        std::vector<EntityId> gold{static_cast<EntityId>(rng() % 25), static_cast<EntityId>(rng() % 25)};
        auto sg = make_subgraph(g, pick, qe, std::span<const EntityId>(gold));
        ASSERT_TRUE(std::is_sorted(sg.entities.begin(), sg.entities.end()));
        for (EntityId q : sg.query_entities) ASSERT_EQ(sg.entities[q], qe[0]);
        ASSERT_EQ(sg.distance.size(), sg.num_nodes());
        auto d = multi_source_bfs(sg.graph, sg.query_entities, 3);
        for (std::size_t v = 0; v < d.size(); ++v) {
            ASSERT_EQ(sg.distance[v], std::min<std::uint32_t>(d[v], 3));
        }
        std::set<EntityId> g_set(gold.begin(), gold.end());
        ASSERT_EQ(sg.num_gold, g_set.size());
        std::size_t present = 0;
        for (EntityId a : g_set) present += std::binary_search(sg.entities.begin(), sg.entities.end(), a);
        ASSERT_EQ(sg.answers->size(), present);
        for (EntityId a : *sg.answers) ASSERT_TRUE(g_set.count(sg.entities[a]));
    }
}

TEST(Collect, FallbackWhenNothingReplays) {
    std::mt19937_64 rng(8);
    auto g = fixtures::random_graph(rng, 30, 2, 80);
    const EntityId q[] = {0};
    CollectOptions opts;
    opts.fallback_budget = 10;
    std::set<ChainType> none{{{5, Direction::Forward}}}; // relation that never occurs
    auto sg = collect_subgraph(g, q, none, std::nullopt, opts);
    EXPECT_TRUE(sg.fallback);
    EXPECT_LE(sg.graph.num_triples(), 10u);
    auto ok = collect_subgraph(g, q, {{{g.incident(0)[0].relation, g.incident(0)[0].dir}}}, std::nullopt, opts);
    EXPECT_FALSE(ok.fallback);
}

TEST(Stats, MatchRecount) {
    std::mt19937_64 rng(13);
    std::vector<QuerySubgraph> sgs;
    for (int i = 0; i < 30; ++i) {
        auto g = fixtures::random_graph(rng, 20, 4, 30);
        std::vector<EntityId> qe{static_cast<EntityId>(rng() % 20)};
        std::vector<EntityId> gold{static_cast<EntityId>(rng() % 20)};
        sgs.push_back(khop_subgraph(g, qe, 1 + rng() % 2));
        sgs.back() = make_subgraph(g, khop_edges(g, qe, 1 + rng() % 2), qe, std::span<const EntityId>(gold));
    }
    auto s = subgraph_stats(sgs);
    double edges = 0, ents = 0, rels = 0, cov = 0;
    for (const auto& sg : sgs) {
        edges += static_cast<double>(sg.graph.num_triples());
        ents += static_cast<double>(sg.entities.size());
        std::set<RelationId> r;
        for (const auto& t : sg.graph.triples()) r.insert(t.relation);
        rels += static_cast<double>(r.size());
        cov += sg.answers->size() == sg.num_gold ? 1 : 0;
    }
    EXPECT_NEAR(s.mean_edges, edges / 30, 1e-9);
    EXPECT_NEAR(s.mean_entities, ents / 30, 1e-9);
    EXPECT_NEAR(s.mean_relations, rels / 30, 1e-9);
    EXPECT_NEAR(s.answer_coverage, cov / 30, 1e-9);
    EXPECT_EQ(s.queries, 30u);

    auto g = KnowledgeGraph::build({{0, 0, 1}}, 2, 1);
    const EntityId q[] = {0}, a[] = {1};
    std::vector<QuerySubgraph> one{make_subgraph(g, g.triples(), q, std::span<const EntityId>(a))};
    EXPECT_EQ(subgraph_stats(one).answer_coverage, 1.0);
}
