#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "cbrsubg/baselines.hpp"
#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"
#include "oracles.hpp"

using namespace cbrsubg;

namespace {

KnowledgeGraph random_graph(Rng& rng, std::size_t n, std::size_t m, std::size_t R) {
    std::vector<Triple> t;
    for (std::size_t i = 0; i < m; ++i) {
        t.push_back({static_cast<EntityId>(uniform_index(rng, n)), static_cast<RelationId>(uniform_index(rng, R)),
                     static_cast<EntityId>(uniform_index(rng, n))});
    }
    return KnowledgeGraph::build(t, n, R);
}

// Simple paths over the raw triple list, either direction, collecting chain types.
void simple_chains(const std::vector<Triple>& t, EntityId at, EntityId goal, std::vector<EntityId>& seen,
                   ChainType& chain, std::set<ChainType>& out) {
    if (at == goal && !chain.empty()) {
        out.insert(chain);
        return;
    }
    if (chain.size() == 3) return;
    for (const auto& x : t) {
        for (int d = 0; d < 2; ++d) {
            const EntityId from = d == 0 ? x.head : x.tail, to = d == 0 ? x.tail : x.head;
            if (from != at || std::find(seen.begin(), seen.end(), to) != seen.end()) continue;
            seen.push_back(to);
            chain.push_back({x.relation, d == 0 ? Direction::Forward : Direction::Backward});
            simple_chains(t, to, goal, seen, chain, out);
            chain.pop_back();
            seen.pop_back();
        }
    }
}

// Ends of every walk of the chain from start, over the raw triple list.
void walk_ends(const std::vector<Triple>& t, EntityId at, const ChainType& chain, std::size_t i,
               std::set<EntityId>& out) {
    if (i == chain.size()) {
        out.insert(at);
        return;
    }
    for (const auto& x : t) {
        if (x.relation != chain[i].relation) continue;
        if (chain[i].dir == Direction::Forward && x.head == at) walk_ends(t, x.tail, chain, i + 1, out);
        if (chain[i].dir == Direction::Backward && x.tail == at) walk_ends(t, x.head, chain, i + 1, out);
    }
}

std::vector<double> brute_force_scores(const KnowledgeGraph& target, const std::vector<EntityId>& target_q,
                                       const std::vector<KnowledgeGraph>& graphs,
                                       const std::vector<std::vector<EntityId>>& qs,
                                       const std::vector<std::vector<EntityId>>& answers) {
    std::map<ChainType, double> votes;
    for (std::size_t c = 0; c < graphs.size(); ++c) {
        const std::vector<Triple> t(graphs[c].triples().begin(), graphs[c].triples().end());
        for (EntityId q : qs[c]) {
            for (EntityId a : answers[c]) {
                std::set<ChainType> chains;
                std::vector<EntityId> seen{q};
                ChainType chain;
                simple_chains(t, q, a, seen, chain, chains);
                for (const auto& ch : chains) votes[ch] += 1.0;
            }
        }
    }
    const std::vector<Triple> t(target.triples().begin(), target.triples().end());
    std::vector<double> scores(target.num_entities(), 0.0);
    for (const auto& [chain, w] : votes) {
        for (EntityId q : target_q) {
            std::set<EntityId> ends;
            walk_ends(t, q, chain, 0, ends);
            for (EntityId e : ends) scores[e] += w;
        }
    }
    return scores;
}

} // namespace

TEST(CbrPath, SingleChainUniqueInstantiation) {
    auto nb = KnowledgeGraph::build({{0, 1, 1}, {2, 0, 0}}, 3, 2);
    auto target = KnowledgeGraph::build({{5, 1, 3}, {4, 0, 5}, {3, 0, 2}}, 6, 2);
    const EntityId nq[] = {0}, na[] = {1}, tq[] = {5};
    PathCase pc{&nb, nq, na};
    auto ranked = cbr_path_predict(target, tq, std::span<const PathCase>(&pc, 1));
    ASSERT_EQ(ranked.size(), 1u);
    EXPECT_EQ(ranked[0].node, 3u);
    EXPECT_EQ(ranked[0].score, 1.0);
}

TEST(CbrPath, NoChainReplaysGivesEmptyRanking) {
    auto nb = KnowledgeGraph::build({{0, 1, 1}}, 2, 2);
    auto target = KnowledgeGraph::build({{0, 0, 1}}, 2, 2);
    const EntityId q[] = {0}, a[] = {1};
    PathCase pc{&nb, q, a};
    EXPECT_TRUE(cbr_path_predict(target, q, std::span<const PathCase>(&pc, 1)).empty());
}

TEST(CbrPath, IntersectionOutvotesSingleBranch) {
    // q1 -r0-> x <-r1- q2 in the case; in the target only node 7 closes both.
    auto nb = KnowledgeGraph::build({{0, 0, 2}, {1, 1, 2}}, 3, 2);
    auto target = KnowledgeGraph::build({{0, 0, 6}, {0, 0, 7}, {1, 1, 7}, {1, 1, 8}}, 9, 2);
    const EntityId q[] = {0, 1}, a[] = {2};
    PathCase pc{&nb, q, a};
    auto ranked = cbr_path_predict(target, q, std::span<const PathCase>(&pc, 1));
    ASSERT_GE(ranked.size(), 3u);
    EXPECT_EQ(ranked[0].node, 7u);
    EXPECT_EQ(ranked[0].score, 2.0);
    EXPECT_EQ(ranked[1].score, 1.0);
    EXPECT_EQ(ranked[1].node, 6u); // ties by node id
    EXPECT_EQ(ranked[2].node, 8u);
}

TEST(CbrPath, MatchesBruteForceCounting) {
    Rng rng(13);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t R = 2 + uniform_index(rng, 2);
        std::vector<KnowledgeGraph> graphs;
        std::vector<std::vector<EntityId>> qs, answers;
        for (int c = 0; c < 3; ++c) {
            const std::size_t n = 6 + uniform_index(rng, 4);
            graphs.push_back(random_graph(rng, n, n + uniform_index(rng, n), R));
            qs.push_back({0});
            if (c == 1) qs.back().push_back(1);
            answers.push_back({static_cast<EntityId>(n - 1), static_cast<EntityId>(n - 2)});
        }
        auto target = random_graph(rng, 9, 14, R);
        std::vector<EntityId> tq{0, 2};
        std::vector<PathCase> cases;
        for (int c = 0; c < 3; ++c) cases.push_back({&graphs[c], qs[c], answers[c]});
        auto scores = cbr_path_scores(target, tq, path_vote_table(cases));
        auto want = brute_force_scores(target, tq, graphs, qs, answers);
        ASSERT_EQ(scores, want) << "trial " << trial;
        for (double s : scores) ASSERT_EQ(s, std::floor(s));
        auto again = cbr_path_predict(target, tq, cases);
        auto once = cbr_path_predict(target, tq, cases);
        ASSERT_EQ(again.size(), once.size());
        for (std::size_t i = 0; i < once.size(); ++i) ASSERT_EQ(again[i].node, once[i].node);
    }
}

TEST(CbrPath, VoteWeightsArePositive) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = random_graph(rng, 8, 14, 3);
        const EntityId q[] = {0}, a[] = {5, 6};
        PathCase pc{&g, q, a};
        for (bool precision : {false, true}) {
            PathVoteOptions o;
            o.precision_weighting = precision;
            for (const auto& [chain, w] : path_vote_table(std::span<const PathCase>(&pc, 1), o)) {
                EXPECT_GT(w, 0.0);
                if (!precision) EXPECT_EQ(w, std::floor(w));
                if (precision) EXPECT_LE(w, 2.0);
            }
        }
    }
}

TEST(CbrPath, PrecisionWeighting) {
    // q -r0-> {a, b}, a is the answer: chain r0 has precision 1/2.
    auto g = KnowledgeGraph::build({{0, 0, 1}, {0, 0, 2}}, 3, 1);
    const EntityId q[] = {0}, a[] = {1};
    PathCase pc{&g, q, a};
    PathVoteOptions o;
    o.precision_weighting = true;
    auto t = path_vote_table(std::span<const PathCase>(&pc, 1), o);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_DOUBLE_EQ(t.begin()->second, 0.5);
    EXPECT_DOUBLE_EQ(path_vote_table(std::span<const PathCase>(&pc, 1)).begin()->second, 1.0);
}

TEST(TransE, IdentityScoresZeroAndIsMaximal) {
    Matrix h(3, 2);
    h(0, 0) = 1; h(0, 1) = 2;
    h(1, 0) = 1.5; h(1, 1) = 1;
    h(2, 0) = 4; h(2, 1) = -1;
    const EntityId q[] = {0};
    const std::vector<double> r{0.5, -1.0};
    auto s = transe_scores(h, q, r);
    EXPECT_EQ(s[1], 0.0);
    EXPECT_LT(s[0], 0.0);
    EXPECT_LT(s[2], 0.0);
    EXPECT_NEAR(s[0], -std::sqrt(0.25 + 1.0), 1e-15);
}

TEST(TransE, MeanQueryCenterAndTranslationConsistency) {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix h(6, 3);
        for (auto& x : h.data) x = 2 * uniform01(rng) - 1;
        std::vector<double> r(3), delta(3);
        for (auto& x : r) x = uniform01(rng);
        for (auto& x : delta) x = 5 * uniform01(rng) - 2.5;
        const EntityId q[] = {0, 1};
        auto s = transe_scores(h, q, r);
        Matrix shifted = h;
        for (std::size_t v = 0; v < 6; ++v) {
            for (std::size_t d = 0; d < 3; ++d) shifted(v, d) += delta[d];
        }
        auto t = transe_scores(shifted, q, r);
        for (std::size_t v = 0; v < 6; ++v) {
            double sq = 0;
            for (std::size_t d = 0; d < 3; ++d) {
                const double diff = (h(0, d) + h(1, d)) / 2 + r[d] - h(v, d);
                sq += diff * diff;
            }
            ASSERT_NEAR(s[v], -std::sqrt(sq), 1e-12);
            ASSERT_NEAR(s[v], t[v], 1e-12);
        }
    }
}

TEST(TransE, UnseenPatternTypeThrows) {
    GnnConfig c;
    c.num_relations = 2;
    c.hidden = 4;
    TransEModel m(c, 3);
    EXPECT_EQ(m.relation(2).size(), 4u);
    try {
        m.relation(3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
}

TEST(TransE, GradientsMatchFiniteDifferences) {
    EXPECT_LT(oracles::transe_fd_error(TransELoss::Softmax), 1e-4);
    EXPECT_LT(oracles::transe_fd_error(TransELoss::Margin), 1e-4);
}

TEST(TransE, TrainingFitsASmallSet) {
    Rng rng(23);
    std::vector<KnowledgeGraph> gs;
    std::vector<std::vector<EntityId>> qs, as;
    for (int i = 0; i < 6; ++i) {
        // q -r0-> answer, q -r1-> distractors
        std::vector<Triple> t{{0, 0, 1}, {0, 1, 2}, {0, 1, 3}, {2, 2, 4}, {1, 2, 5}};
        for (int e = 0; e < 4; ++e) {
            t.push_back({static_cast<EntityId>(2 + uniform_index(rng, 4)), 2,
                         static_cast<EntityId>(2 + uniform_index(rng, 4))});
        }
        gs.push_back(KnowledgeGraph::build(t, 6, 3));
        qs.push_back({0});
        as.push_back({1});
    }
    std::vector<QuerySubgraph> sgs;
    for (int i = 0; i < 6; ++i) sgs.push_back(whole_graph_subgraph(gs[i], qs[i], std::span<const EntityId>(as[i])));
    std::vector<GraphBatch> bs;
    for (const auto& sg : sgs) bs.push_back(prepare_graph(sg, 3, true));
    std::vector<TransEEpisode> train_set, test_set;
    for (int i = 0; i < 6; ++i) (i < 4 ? train_set : test_set).push_back({&bs[i], &qs[i], &as[i], 0});
    GnnConfig c;
    c.num_relations = 3;
    c.hidden = 8;
    TransEModel m(c, 1);
    TrainConfig tc;
    tc.epochs = 40;
    tc.accumulation = 1;
    tc.lr = 1e-2;
    tc.patience = 40;
    auto result = transe_train(m, train_set, {}, tc);
    EXPECT_LT(result.log.back().train_loss, result.log.front().train_loss);
    EXPECT_EQ(transe_strict_hits_at_1(m, test_set), 1.0);
}
