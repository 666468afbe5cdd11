#include "cbrsubg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "cbrsubg/error.hpp"
#include "cbrsubg/retrieval.hpp"
#include "cbrsubg/util.hpp"

#ifndef CBRSUBG_VERSION
#define CBRSUBG_VERSION "0.0.0"
#endif
#ifndef CBRSUBG_GIT
#define CBRSUBG_GIT "unknown"
#endif

namespace cbrsubg {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string version_string() { return std::string("cbr-subg ") + CBRSUBG_VERSION + " (" + CBRSUBG_GIT + ")"; }

// --- Workspaces --------------------------------------------------------------

std::vector<std::size_t> Workspace::split(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].split == s) out.push_back(i);
    }
    return out;
}

std::string Workspace::node_name(const QueryRecord& q, EntityId local) const {
    const EntityId source = q.subgraph.entities.at(local);
    if (!entity_names.empty()) return entity_names.at(source);
    return std::to_string(q.entity_offset + source);
}

GeneratorConfig generator_config(const ExperimentConfig& cfg) {
    GeneratorConfig g;
    g.seed = cfg.seed;
    g.num_entity_types = cfg.num_entity_types;
    g.type_edge_prob = cfg.type_edge_prob;
    g.num_pattern_types = cfg.num_pattern_types;
    g.graphs_per_split = cfg.graphs_per_split;
    g.num_entities = cfg.num_entities;
    g.edge_prob = cfg.edge_prob;
    g.edge_model = parse_edge_model(cfg.edge_model);
    g.max_hops = cfg.generator_hops;
    return g;
}

Workspace synthetic_workspace(const SyntheticDataset& ds) {
    Workspace ws;
    ws.mode = "synthetic";
    ws.num_relations = ds.types.num_relations();
    ws.num_pattern_types = ds.patterns.size();
    for (Shape s : kAllShapes) ws.groups.emplace_back(shape_tag(s));
    ws.queries.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) {
        QueryRecord q;
        q.id = std::to_string(ex.id);
        q.group = std::string(shape_tag(ex.shape));
        q.split = ex.split;
        q.pattern_type = ex.pattern_type;
        q.entity_offset = ex.entity_offset;
        q.subgraph = whole_graph_subgraph(ex.graph, ex.query_entities, std::span<const EntityId>(ex.answers));
        q.subgraph.query_id = q.id;
        q.knn.assign(ex.knn.begin(), ex.knn.end());
        ws.queries.push_back(std::move(q));
    }
    return ws;
}

namespace {

std::vector<EntityId> lookup_all(const Vocabulary& vocab, const std::vector<std::string>& names,
                                 const std::string& what, const std::string& case_id, std::ostream& log) {
    std::vector<EntityId> out;
    for (const auto& n : names) {
        const auto id = vocab.lookup(n);
        if (id == kBeyond) {
            log << "warning: case " << case_id << ": " << what << " '" << n << "' is not in the graph\n";
            continue;
        }
        out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void require_file(const std::string& path, const std::string& key) {
    if (path.empty()) fail(ErrorKind::InvalidArgument, "missing required setting '" + key + "'");
    if (!fs::exists(path)) fail(ErrorKind::Io, key + ": no such file " + path);
}

} // namespace

Workspace external_workspace(const ExperimentConfig& cfg, std::ostream& log) {
    require_file(cfg.triples, "triples");
    require_file(cfg.cases, "cases");
    require_file(cfg.embeddings, "embeddings");
    require_file(cfg.embedding_ids, "embedding_ids");
    auto kg = load_triples_tsv(cfg.triples);
    auto cases = read_cases(cfg.cases);
    attach_embeddings(cases, read_embeddings(cfg.embeddings), read_id_lines(cfg.embedding_ids));

    Workspace ws;
    ws.mode = "external-kg";
    ws.num_relations = kg.graph.num_relations();
    ws.num_pattern_types = 1;
    ws.groups = {"all"};
    for (std::size_t i = 0; i < kg.entities.size(); ++i) ws.entity_names.push_back(kg.entities.name(static_cast<std::uint32_t>(i)));
    for (std::size_t i = 0; i < kg.relations.size(); ++i) ws.relation_names.push_back(kg.relations.name(static_cast<std::uint32_t>(i)));

    std::vector<Case> train_cases;
    std::vector<std::size_t> train_query_index;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].split == "train") {
            train_cases.push_back(cases[i]);
            train_query_index.push_back(i);
        }
    }
    require(!train_cases.empty(), "cases: no train cases to retrieve from");
    const auto base = CaseBase::normalize_and_index(std::move(train_cases));

    std::size_t k_max = std::max(cfg.k_train, cfg.k_eval);
    for (auto k : cfg.k_values) k_max = std::max(k_max, k);

    struct Resolved {
        std::vector<EntityId> qe;
        std::vector<EntityId> answers;
    };
    std::vector<Resolved> resolved(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        resolved[i].qe = lookup_all(kg.entities, cases[i].query_entities, "query entity", cases[i].case_id, log);
        resolved[i].answers = lookup_all(kg.entities, cases[i].answers, "answer", cases[i].case_id, log);
    }

    CollectOptions opts;
    opts.max_hops = cfg.max_hops;
    opts.edge_budget = cfg.edge_budget;
    opts.fallback_hops = cfg.fallback_hops;
    opts.fallback_budget = cfg.fallback_budget;

    ws.queries.resize(cases.size());
    std::vector<std::string> warnings(cases.size());
    parallel_for(cases.size(), cfg.resolved_threads(), [&](std::size_t i) {
        const auto& c = cases[i];
        QueryRecord& q = ws.queries[i];
        q.id = c.case_id;
        q.group = "all";
        q.split = parse_split(c.split);
        for (const auto& nb : base.knn(c, static_cast<long>(k_max))) q.knn.push_back(train_query_index[nb.index]);
        const std::size_t k_collect = q.split == Split::Train ? cfg.k_train : cfg.k_eval;
        std::set<ChainType> chains;
        for (std::size_t j = 0; j < q.knn.size() && j < k_collect; ++j) {
            const auto& nb = resolved[q.knn[j]];
            auto mined = mine_chain_types(kg.graph, nb.qe, nb.answers, cfg.max_hops);
            chains.insert(mined.begin(), mined.end());
        }
        opts.seed = derive_seed(cfg.seed, i);
        std::optional<std::span<const EntityId>> gold;
        if (!c.answers.empty()) gold = std::span<const EntityId>(resolved[i].answers);
        q.subgraph = collect_subgraph(kg.graph, resolved[i].qe, chains, gold, opts);
        q.subgraph.query_id = q.id;
        if (q.subgraph.fallback) warnings[i] = "case " + q.id + ": no chain replayed, using k-hop fallback\n";
    });
    for (const auto& w : warnings) log << w;
    return ws;
}

Workspace load_workspace(const ExperimentConfig& cfg, std::ostream& log) {
    if (cfg.mode == "external-kg") return external_workspace(cfg, log);
    if (!fs::exists(fs::path(cfg.data_dir) / "manifest.json")) {
        fail(ErrorKind::Io, "data_dir " + cfg.data_dir + " holds no generated dataset (run gen-data first)");
    }
    return synthetic_workspace(read_dataset(cfg.data_dir));
}

// --- Episodes ----------------------------------------------------------------

PreparedWorkspace prepare_workspace(const Workspace& ws, bool use_distance, unsigned threads) {
    PreparedWorkspace pw;
    pw.batches.resize(ws.queries.size());
    pw.answers.resize(ws.queries.size());
    parallel_for(ws.queries.size(), threads, [&](std::size_t i) {
        const auto& sg = ws.queries[i].subgraph;
        pw.batches[i] = prepare_graph(sg, ws.num_relations, use_distance);
        if (sg.answers) pw.answers[i] = *sg.answers;
    });
    return pw;
}

std::vector<PreparedEpisode> make_episodes(const Workspace& ws, const PreparedWorkspace& pw,
                                           std::span<const std::size_t> queries, std::size_t k,
                                           bool require_answers) {
    std::vector<PreparedEpisode> out;
    for (std::size_t qi : queries) {
        if (require_answers && pw.answers[qi].empty()) continue;
        PreparedEpisode ep;
        ep.query = &pw.batches[qi];
        ep.query_answers = &pw.answers[qi];
        const auto& knn = ws.queries[qi].knn;
        for (std::size_t j = 0; j < knn.size() && j < k; ++j) {
            if (pw.answers[knn[j]].empty()) continue;
            ep.neighbors.push_back(&pw.batches[knn[j]]);
            ep.neighbor_answers.push_back(&pw.answers[knn[j]]);
        }
        if (require_answers && ep.neighbors.empty()) continue;
        out.push_back(std::move(ep));
    }
    return out;
}

std::size_t available_neighbors(const Workspace& ws, std::span<const std::size_t> queries) {
    std::size_t m = 0;
    for (std::size_t qi : queries) m = std::max(m, ws.queries[qi].knn.size());
    return m;
}

// --- Reports -------------------------------------------------------------------

void summarize(MetricsReport& report, const std::vector<std::string>& group_order) {
    report.group_order = group_order;
    report.groups.clear();
    for (const auto& g : group_order) report.groups[g];
    std::size_t hits = 0;
    for (const auto& r : report.rows) {
        auto& g = report.groups[r.group];
        ++g.queries;
        g.hits += r.hit ? 1 : 0;
        hits += r.hit ? 1 : 0;
        if (std::find(report.group_order.begin(), report.group_order.end(), r.group) == report.group_order.end()) {
            report.group_order.push_back(r.group);
        }
    }
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& name : report.group_order) {
        auto& g = report.groups[name];
        if (g.queries == 0) continue;
        g.hits_at_1 = 100.0 * static_cast<double>(g.hits) / static_cast<double>(g.queries);
        sum += g.hits_at_1;
        ++used;
    }
    report.average = used ? sum / static_cast<double>(used) : 0.0;
    report.overall = report.rows.empty() ? 0.0
                                         : 100.0 * static_cast<double>(hits) / static_cast<double>(report.rows.size());
}

json report_json(const MetricsReport& report, const ExperimentConfig& cfg, const std::string& command) {
    json j;
    j["version"] = version_string();
    j["command"] = command;
    j["model"] = report.model;
    j["split"] = report.split;
    j["k"] = report.k;
    j["config"] = cfg.to_json();
    json groups = json::object();
    for (const auto& name : report.group_order) {
        const auto& g = report.groups.at(name);
        groups[name] = {{"queries", g.queries}, {"hits", g.hits}, {"hits_at_1", g.hits_at_1}};
    }
    j["groups"] = groups;
    j["group_order"] = report.group_order;
    j["average_hits_at_1"] = report.average;
    j["overall_hits_at_1"] = report.overall;
    json rows = json::array();
    for (const auto& r : report.rows) {
        json top = json::array();
        for (const auto& [node, score] : r.top) top.push_back({node, score});
        rows.push_back({{"id", r.id}, {"group", r.group}, {"hit", r.hit}, {"answerable", r.answerable},
                        {"gold", r.gold}, {"top", top}});
    }
    j["queries"] = rows;
    return j;
}

std::string report_rows_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "id,group,hit,answerable,num_gold,top1,top1_score\n";
    os.precision(17);
    for (const auto& r : report.rows) {
        os << r.id << ',' << r.group << ',' << (r.hit ? 1 : 0) << ',' << (r.answerable ? 1 : 0) << ','
           << r.gold.size() << ',';
        if (r.top.empty()) {
            os << ",\n";
        } else {
            os << r.top.front().first << ',' << r.top.front().second << '\n';
        }
    }
    return os.str();
}

std::string report_summary_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "model,split,k";
    for (const auto& g : report.group_order) os << ',' << g;
    os << ",avg,overall\n";
    char buf[64];
    os << report.model << ',' << report.split << ',' << report.k;
    for (const auto& g : report.group_order) {
        std::snprintf(buf, sizeof buf, ",%.2f", report.groups.at(g).hits_at_1);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f\n", report.average, report.overall);
    os << buf;
    return os.str();
}

// --- Evaluation helpers ---------------------------------------------------------

namespace {

constexpr std::size_t kReportTop = 10;

MetricsReport finish(std::string model, Split split, std::size_t k, std::vector<QueryResult> rows,
                     const Workspace& ws) {
    MetricsReport r;
    r.model = std::move(model);
    r.split = std::string(split_name(split));
    r.k = k;
    r.rows = std::move(rows);
    summarize(r, ws.groups);
    return r;
}

} // namespace

QueryResult make_result(const Workspace& ws, const QueryRecord& q, std::span<const double> scores, bool answerable) {
    QueryResult r;
    r.id = q.id;
    r.group = q.group;
    r.answerable = answerable;
    const auto& answers = q.subgraph.answers;
    if (answers) {
        for (EntityId a : *answers) r.gold.push_back(ws.node_name(q, a));
    }
    // Gold answers the subgraph lost can never be ranked.
    const bool complete = q.subgraph.covers_all_answers();
    r.hit = answerable && complete && answers && strict_hit(scores, *answers);
    if (answerable) {
        for (const auto& rn : rank_nodes(scores, kReportTop)) r.top.emplace_back(ws.node_name(q, rn.node), rn.score);
    }
    return r;
}

MetricsReport evaluate_cbr_subg(const GnnModel& model, const Workspace& ws, const PreparedWorkspace& pw,
                                Split split, std::size_t k, unsigned threads) {
    const auto ids = ws.split(split);
    // Embed every graph a query of this split touches once.
    std::vector<std::size_t> needed;
    for (std::size_t qi : ids) {
        needed.push_back(qi);
        const auto& knn = ws.queries[qi].knn;
        for (std::size_t j = 0; j < knn.size() && j < k; ++j) needed.push_back(knn[j]);
    }
    std::sort(needed.begin(), needed.end());
    needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
    std::vector<Matrix> emb(ws.queries.size());
    parallel_for(needed.size(), threads, [&](std::size_t i) {
        emb[needed[i]] = forward_embeddings(model, pw.batches[needed[i]]);
    });
    std::vector<QueryResult> rows(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t n) {
        const std::size_t qi = ids[n];
        const auto& q = ws.queries[qi];
        std::vector<Matrix> nb_emb;
        std::vector<std::vector<EntityId>> nb_answers;
        for (std::size_t j = 0; j < q.knn.size() && j < k; ++j) {
            if (pw.answers[q.knn[j]].empty()) continue;
            nb_emb.push_back(emb[q.knn[j]]);
            nb_answers.push_back(pw.answers[q.knn[j]]);
        }
        if (nb_emb.empty()) {
            rows[n] = make_result(ws, q, {}, false);
            return;
        }
        const auto scores = score_against_neighbors(emb[qi], nb_emb, nb_answers);
        rows[n] = make_result(ws, q, scores, true);
    });
    return finish("cbr-subg", split, k, std::move(rows), ws);
}

MetricsReport evaluate_cbr_path(const Workspace& ws, Split split, std::size_t k, const PathVoteOptions& opts,
                                unsigned threads) {
    const auto ids = ws.split(split);
    std::vector<QueryResult> rows(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t n) {
        const auto& q = ws.queries[ids[n]];
        std::vector<PathCase> cases;
        for (std::size_t j = 0; j < q.knn.size() && j < k; ++j) {
            const auto& nb = ws.queries[q.knn[j]].subgraph;
            if (!nb.answers || nb.answers->empty()) continue;
            cases.push_back({&nb.graph, nb.query_entities, *nb.answers});
        }
        if (cases.empty()) {
            rows[n] = make_result(ws, q, {}, false);
            return;
        }
        const auto table = path_vote_table(cases, opts);
        const auto scores = cbr_path_scores(q.subgraph.graph, q.subgraph.query_entities, table);
        rows[n] = make_result(ws, q, scores, true);
    });
    return finish("cbr-path", split, k, std::move(rows), ws);
}

MetricsReport evaluate_random(const Workspace& ws, Split split, std::uint64_t seed) {
    const auto ids = ws.split(split);
    std::vector<QueryResult> rows;
    for (std::size_t n = 0; n < ids.size(); ++n) {
        const auto& q = ws.queries[ids[n]];
        Rng rng(derive_seed(seed, 0x4a4d000000ULL + ids[n]));
        std::vector<double> scores(q.subgraph.num_nodes());
        for (auto& s : scores) s = uniform01(rng);
        rows.push_back(make_result(ws, q, scores, true));
    }
    return finish("random", split, 0, std::move(rows), ws);
}

std::vector<TransEEpisode> make_transe_episodes(const Workspace& ws, const PreparedWorkspace& pw,
                                                std::span<const std::size_t> queries, bool require_answers) {
    std::vector<TransEEpisode> out;
    for (std::size_t qi : queries) {
        const auto& q = ws.queries[qi];
        if (q.subgraph.query_entities.empty()) continue;
        if (require_answers && pw.answers[qi].empty()) continue;
        out.push_back({&pw.batches[qi], &q.subgraph.query_entities, &pw.answers[qi], q.pattern_type});
    }
    return out;
}

MetricsReport evaluate_transe(const TransEModel& model, const Workspace& ws, const PreparedWorkspace& pw,
                              Split split, unsigned threads) {
    const auto ids = ws.split(split);
    std::vector<QueryResult> rows(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t n) {
        const std::size_t qi = ids[n];
        const auto& q = ws.queries[qi];
        if (q.subgraph.query_entities.empty()) {
            rows[n] = make_result(ws, q, {}, false);
            return;
        }
        TransEEpisode ep{&pw.batches[qi], &q.subgraph.query_entities, &pw.answers[qi], q.pattern_type};
        rows[n] = make_result(ws, q, transe_infer_scores(model, ep), true);
    });
    return finish("gnn-transe", split, 0, std::move(rows), ws);
}

// --- Commands ------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path ensure_out(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) {
        fail(ErrorKind::InvalidArgument, "cannot use output directory " + cfg.out +
                                             (ec ? ": " + ec.message() : std::string()));
    }
    return out;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void write_timing(const fs::path& dir, const std::string& name, double seconds) {
    write_json(dir / ("timing_" + name + ".json"), json{{"command", name}, {"seconds", seconds}});
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void print_summary(std::ostream& out, const MetricsReport& r) {
    out << r.model << " " << r.split << " strict hits@1:";
    for (const auto& g : r.group_order) {
        if (r.groups.at(g).queries) out << " " << g << "=" << fmt_pct(r.groups.at(g).hits_at_1);
    }
    out << " avg=" << fmt_pct(r.average) << "\n";
}

void emit_report(const fs::path& dir, const std::string& stem, const MetricsReport& r,
                 const ExperimentConfig& cfg, const std::string& command) {
    write_json(dir / (stem + ".json"), report_json(r, cfg, command));
    write_file(dir / (stem + ".csv"), report_rows_csv(r));
    write_file(dir / (stem + "_summary.csv"), report_summary_csv(r));
}

} // namespace

GnnConfig model_config(const ExperimentConfig& cfg, std::size_t num_relations) {
    GnnConfig m;
    m.num_relations = num_relations;
    m.layers = cfg.layers;
    m.hidden = cfg.hidden;
    m.tau = cfg.tau;
    m.use_distance = cfg.use_distance;
    m.seed = cfg.seed;
    return m;
}

TrainConfig train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.lr = cfg.lr;
    t.accumulation = cfg.accumulation;
    t.patience = cfg.patience;
    t.seed = cfg.seed;
    t.threads = cfg.resolved_threads();
    return t;
}

namespace {

std::size_t clamp_k(std::size_t k, std::size_t available, const std::string& what, std::ostream& out) {
    if (k > available) {
        out << "warning: " << what << "=" << k << " exceeds the " << available
            << " neighbors available; using " << available << "\n";
        return available;
    }
    return k;
}

json log_json(const TrainResult& r) {
    json log = json::array();
    for (const auto& e : r.log) {
        log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_hits", e.valid_hits},
                       {"grad_norm", e.grad_norm}});
    }
    return log;
}

std::string log_csv(const TrainResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,valid_hits,grad_norm\n";
    for (const auto& e : r.log) os << e.epoch << ',' << e.train_loss << ',' << e.valid_hits << ',' << e.grad_norm << '\n';
    return os.str();
}

EpochCallback epoch_printer(std::ostream& out) {
    return [&out](const EpochLog& e) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %zu  loss %.4f  valid hits@1 %.4f  grad norm %.4f\n", e.epoch,
                      e.train_loss, e.valid_hits, e.grad_norm);
        out << buf << std::flush;
    };
}

struct Trained {
    GnnModel model;
    TrainResult result;
};

Trained train_cbr_subg(const ExperimentConfig& cfg, const Workspace& ws, std::ostream& out) {
    const unsigned threads = cfg.resolved_threads();
    const auto pw = prepare_workspace(ws, cfg.use_distance, threads);
    const auto train_ids = ws.split(Split::Train);
    const auto valid_ids = ws.split(Split::Valid);
    const std::size_t k_train = clamp_k(cfg.k_train, available_neighbors(ws, train_ids), "k_train", out);
    const std::size_t k_valid = clamp_k(cfg.k_eval, available_neighbors(ws, valid_ids), "k_eval", out);
    const auto train_eps = make_episodes(ws, pw, train_ids, k_train, true);
    const auto valid_eps = make_episodes(ws, pw, valid_ids, k_valid, true);
    require(!train_eps.empty(), "no trainable queries (each needs answers and a usable neighbor)");
    Trained t{GnnModel(model_config(cfg, ws.num_relations)), {}};
    out << "training on " << train_eps.size() << " queries, validating on " << valid_eps.size() << " ("
        << t.model.num_params() << " parameters)\n";
    t.result = train(t.model, train_eps, valid_eps, train_config(cfg), epoch_printer(out));
    out << "best epoch " << t.result.best_epoch << " valid hits@1 " << t.result.best_valid_hits << "\n";
    return t;
}

void save_trained(const fs::path& dir, const ExperimentConfig& cfg, const Trained& t) {
    const fs::path ckpt = dir / "model.ckpt";
    save_checkpoint(ckpt, t.model);
    json side;
    side["version"] = version_string();
    side["checkpoint"] = ckpt.filename().string();
    side["config"] = cfg.to_json();
    side["best_epoch"] = t.result.best_epoch;
    side["best_valid_hits"] = t.result.best_valid_hits;
    side["log"] = log_json(t.result);
    write_json(dir / "model.json", side);
    write_file(dir / "train_log.csv", log_csv(t.result));
}

GnnModel model_for_eval(const ExperimentConfig& cfg, const Workspace& ws) {
    if (cfg.checkpoint == "untrained") return GnnModel(model_config(cfg, ws.num_relations));
    const auto path = cfg.checkpoint_path();
    if (!fs::exists(path)) fail(ErrorKind::Io, "checkpoint not found: " + path.string());
    auto model = load_checkpoint(path);
    if (model.config().num_relations != ws.num_relations) {
        fail(ErrorKind::InvalidArgument, "checkpoint has " + std::to_string(model.config().num_relations) +
                                             " relations but the data has " + std::to_string(ws.num_relations));
    }
    model.set_tau(model.config().tau);
    return model;
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ds = assemble_dataset(generator_config(cfg));
    const auto hash = write_dataset(ds, dir);
    out << "wrote " << ds.examples.size() << " examples (" << ds.split(Split::Train).size() << " train, "
        << ds.split(Split::Valid).size() << " valid, " << ds.split(Split::Test).size() << " test), "
        << ds.types.num_relations() << " relation types, " << ds.patterns.size() << " pattern types to "
        << dir.string() << "\nmanifest hash " << hash << "\n";
    write_timing(dir, "gen-data", seconds_since(t0));
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    if (cfg.tau_grid.empty()) {
        save_trained(dir, cfg, train_cbr_subg(cfg, ws, out));
    } else {
        std::optional<Trained> best;
        ExperimentConfig best_cfg = cfg;
        for (double tau : cfg.tau_grid) {
            ExperimentConfig c = cfg;
            c.tau = tau;
            out << "== tau " << tau << "\n";
            auto t = train_cbr_subg(c, ws, out);
            if (!best || t.result.best_valid_hits > best->result.best_valid_hits) {
                best = std::move(t);
                best_cfg = c;
            }
        }
        out << "selected tau " << best_cfg.tau << "\n";
        save_trained(dir, best_cfg, *best);
    }
    out << "saved " << (dir / "model.ckpt").string() << "\n";
    write_timing(dir, "train", seconds_since(t0));
}

void cmd_eval(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    const auto model = model_for_eval(cfg, ws);
    const Split split = parse_split(cfg.split);
    const unsigned threads = cfg.resolved_threads();
    const auto pw = prepare_workspace(ws, model.config().use_distance, threads);
    const std::size_t k = clamp_k(cfg.k_eval, available_neighbors(ws, ws.split(split)), "k_eval", out);
    const auto report = evaluate_cbr_subg(model, ws, pw, split, k, threads);
    emit_report(dir, "eval_" + report.split, report, cfg, "eval");
    print_summary(out, report);
    write_timing(dir, "eval_" + report.split, seconds_since(t0));
}

void cmd_sweep_knn(const ExperimentConfig& cfg, std::ostream& out) {
    require(!cfg.k_values.empty(), "k_values is empty");
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    const auto model = model_for_eval(cfg, ws);
    const unsigned threads = cfg.resolved_threads();
    const auto pw = prepare_workspace(ws, model.config().use_distance, threads);
    std::ostringstream csv;
    csv << "split,k,requested_k";
    for (const auto& g : ws.groups) csv << ',' << g;
    csv << ",avg\n";
    json rows = json::array();
    for (Split split : {Split::Valid, Split::Test}) {
        const auto avail = available_neighbors(ws, ws.split(split));
        for (auto requested : cfg.k_values) {
            const auto k = clamp_k(requested, avail, "k", out);
            const auto r = evaluate_cbr_subg(model, ws, pw, split, k, threads);
            csv << r.split << ',' << k << ',' << requested;
            json groups = json::object();
            for (const auto& g : ws.groups) {
                csv << ',' << fmt_pct(r.groups.at(g).hits_at_1);
                groups[g] = r.groups.at(g).hits_at_1;
            }
            csv << ',' << fmt_pct(r.average) << '\n';
            rows.push_back({{"split", r.split}, {"k", k}, {"requested_k", requested}, {"groups", groups},
                            {"average_hits_at_1", r.average}});
            out << r.split << " k=" << k << " avg=" << fmt_pct(r.average) << "\n";
        }
    }
    write_file(dir / "sweep_knn.csv", csv.str());
    write_json(dir / "sweep_knn.json",
               json{{"version", version_string()}, {"command", "sweep-knn"}, {"config", cfg.to_json()}, {"rows", rows}});
    write_timing(dir, "sweep-knn", seconds_since(t0));
}

void cmd_ablate_distance(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    const unsigned threads = cfg.resolved_threads();
    std::ostringstream csv;
    csv << "variant,split";
    for (const auto& g : ws.groups) csv << ',' << g;
    csv << ",avg\n";
    json variants = json::object();
    for (bool on : {true, false}) {
        ExperimentConfig c = cfg;
        c.use_distance = on;
        const std::string name = on ? "with_distance" : "without_distance";
        c.out = (dir / name).string();
        const fs::path sub = ensure_out(c);
        out << "== " << name << "\n";
        const auto t = train_cbr_subg(c, ws, out);
        save_trained(sub, c, t);
        const auto pw = prepare_workspace(ws, on, threads);
        json v;
        v["input_dim"] = t.model.input_dim();
        v["best_epoch"] = t.result.best_epoch;
        for (Split split : {Split::Valid, Split::Test}) {
            const auto k = std::min(cfg.k_eval, available_neighbors(ws, ws.split(split)));
            const auto r = evaluate_cbr_subg(t.model, ws, pw, split, k, threads);
            emit_report(sub, "eval_" + r.split, r, c, "ablate-distance");
            print_summary(out, r);
            csv << name << ',' << r.split;
            json groups = json::object();
            for (const auto& g : ws.groups) {
                csv << ',' << fmt_pct(r.groups.at(g).hits_at_1);
                groups[g] = r.groups.at(g).hits_at_1;
            }
            csv << ',' << fmt_pct(r.average) << '\n';
            v[r.split] = {{"groups", groups}, {"average_hits_at_1", r.average}};
        }
        variants[name] = v;
    }
    write_file(dir / "ablate_distance.csv", csv.str());
    write_json(dir / "ablate_distance.json", json{{"version", version_string()},
                                                  {"command", "ablate-distance"},
                                                  {"config", cfg.to_json()},
                                                  {"variants", variants}});
    write_timing(dir, "ablate-distance", seconds_since(t0));
}

json stats_json(const SubgraphStats& s) {
    return {{"queries", s.queries},
            {"mean_edges", s.mean_edges},
            {"mean_relations", s.mean_relations},
            {"mean_entities", s.mean_entities},
            {"answer_coverage", s.answer_coverage},
            {"fallbacks", s.fallbacks}};
}

void cmd_collect(const ExperimentConfig& cfg, std::ostream& out) {
    if (cfg.mode != "external-kg") fail(ErrorKind::InvalidArgument, "collect needs mode = external-kg");
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = external_workspace(cfg, out);
    // The naive baseline needs the source graph again.
    const auto kg = load_triples_tsv(cfg.triples);
    std::ofstream records(dir / "subgraphs.jsonl", std::ios::binary | std::ios::trunc);
    if (!records) fail(ErrorKind::Io, "cannot write " + (dir / "subgraphs.jsonl").string());
    std::vector<QuerySubgraph> all;
    std::size_t smaller = 0;
    std::ostringstream csv;
    csv << "id,split,entities,edges,naive_3hop_edges,covers_all_answers,fallback,truncated\n";
    for (const auto& q : ws.queries) {
        const auto& sg = q.subgraph;
        std::vector<EntityId> qe_source;
        for (EntityId l : sg.query_entities) qe_source.push_back(sg.entities[l]);
        const auto naive = khop_edges(kg.graph, qe_source, 3).size();
        const auto edges = sg.graph.num_triples();
        smaller += edges < naive ? 1 : 0;
        json triples = json::array();
        for (const auto& t : sg.graph.triples()) {
            triples.push_back({ws.entity_names[sg.entities[t.head]], ws.relation_names[t.relation],
                               ws.entity_names[sg.entities[t.tail]]});
        }
        json qe = json::array();
        for (EntityId e : qe_source) qe.push_back(ws.entity_names[e]);
        json answers = json::array();
        if (sg.answers) {
            for (EntityId a : *sg.answers) answers.push_back(ws.entity_names[sg.entities[a]]);
        }
        json rec{{"id", q.id},
                 {"split", std::string(split_name(q.split))},
                 {"query_entities", qe},
                 {"num_entities", sg.num_nodes()},
                 {"num_edges", edges},
                 {"naive_3hop_edges", naive},
                 {"answers_present", answers},
                 {"num_gold", sg.num_gold},
                 {"covers_all_answers", sg.covers_all_answers()},
                 {"fallback", sg.fallback},
                 {"truncated", sg.truncated},
                 {"triples", triples}};
        records << rec.dump() << '\n';
        csv << q.id << ',' << split_name(q.split) << ',' << sg.num_nodes() << ',' << edges << ',' << naive << ','
            << (sg.covers_all_answers() ? 1 : 0) << ',' << (sg.fallback ? 1 : 0) << ',' << (sg.truncated ? 1 : 0)
            << '\n';
        all.push_back(sg);
    }
    const auto stats = subgraph_stats(all);
    const double frac = ws.queries.empty() ? 0.0 : static_cast<double>(smaller) / static_cast<double>(ws.queries.size());
    write_file(dir / "collect.csv", csv.str());
    write_json(dir / "collect_stats.json", json{{"version", version_string()},
                                                {"command", "collect"},
                                                {"config", cfg.to_json()},
                                                {"stats", stats_json(stats)},
                                                {"fraction_smaller_than_naive_3hop", frac}});
    out << "collected " << stats.queries << " subgraphs: mean edges " << stats.mean_edges << ", mean entities "
        << stats.mean_entities << ", answer coverage " << stats.answer_coverage << ", fallbacks " << stats.fallbacks
        << ", smaller than 3-hop " << frac << "\n";
    write_timing(dir, "collect", seconds_since(t0));
}

void cmd_stats(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    json splits = json::object();
    for (Split split : {Split::Train, Split::Valid, Split::Test}) {
        std::vector<QuerySubgraph> sgs;
        std::map<std::string, std::size_t> per_group;
        double answers = 0.0;
        for (std::size_t qi : ws.split(split)) {
            sgs.push_back(ws.queries[qi].subgraph);
            ++per_group[ws.queries[qi].group];
            answers += static_cast<double>(ws.queries[qi].subgraph.num_gold);
        }
        const auto s = subgraph_stats(sgs);
        json j = stats_json(s);
        j["mean_answers"] = sgs.empty() ? 0.0 : answers / static_cast<double>(sgs.size());
        j["per_group"] = per_group;
        splits[std::string(split_name(split))] = j;
        out << split_name(split) << ": " << s.queries << " queries, mean entities " << s.mean_entities
            << ", mean edges " << s.mean_edges << ", mean relations " << s.mean_relations << ", coverage "
            << s.answer_coverage << "\n";
    }
    write_json(dir / "stats.json", json{{"version", version_string()},
                                        {"command", "stats"},
                                        {"config", cfg.to_json()},
                                        {"num_relations", ws.num_relations},
                                        {"splits", splits}});
    write_timing(dir, "stats", seconds_since(t0));
}

void cmd_baseline(const ExperimentConfig& cfg, std::ostream& out) {
    const auto t0 = Clock::now();
    const fs::path dir = ensure_out(cfg);
    const auto ws = load_workspace(cfg, out);
    const Split split = parse_split(cfg.split);
    const unsigned threads = cfg.resolved_threads();
    MetricsReport report;
    if (cfg.baseline == "cbr-path") {
        PathVoteOptions opts;
        opts.max_hops = cfg.max_hops;
        opts.precision_weighting = cfg.precision_weighting;
        const std::size_t k = clamp_k(cfg.k_eval, available_neighbors(ws, ws.split(split)), "k_eval", out);
        report = evaluate_cbr_path(ws, split, k, opts, threads);
    } else {
        const auto pw = prepare_workspace(ws, cfg.use_distance, threads);
        const auto train_eps = make_transe_episodes(ws, pw, ws.split(Split::Train), true);
        const auto valid_eps = make_transe_episodes(ws, pw, ws.split(Split::Valid), true);
        require(!train_eps.empty(), "no trainable queries");
        TransEModel model(model_config(cfg, ws.num_relations), ws.num_pattern_types,
                          cfg.transe_loss == "margin" ? TransELoss::Margin : TransELoss::Softmax);
        model.margin = cfg.transe_margin;
        auto tc = train_config(cfg);
        tc.epochs *= cfg.transe_epoch_factor;
        tc.patience *= cfg.transe_epoch_factor;
        out << "training gnn-transe on " << train_eps.size() << " queries for up to " << tc.epochs << " epochs\n";
        const auto result = transe_train(model, train_eps, valid_eps, tc, epoch_printer(out));
        save_checkpoint(dir / "transe.ckpt", model.gnn, &model.relations);
        write_json(dir / "transe.json", json{{"version", version_string()},
                                             {"config", cfg.to_json()},
                                             {"best_epoch", result.best_epoch},
                                             {"best_valid_hits", result.best_valid_hits},
                                             {"log", log_json(result)}});
        report = evaluate_transe(model, ws, pw, split, threads);
    }
    emit_report(dir, "baseline_" + cfg.baseline + "_" + report.split, report, cfg, "baseline");
    print_summary(out, report);
    write_timing(dir, "baseline_" + cfg.baseline + "_" + report.split, seconds_since(t0));
}

} // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"gen-data", "train",   "eval",  "sweep-knn",
                                                   "ablate-distance", "collect", "stats", "baseline"};
    return names;
}

void run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    if (command == "gen-data") return cmd_gen_data(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "eval") return cmd_eval(cfg, out);
    if (command == "sweep-knn") return cmd_sweep_knn(cfg, out);
    if (command == "ablate-distance") return cmd_ablate_distance(cfg, out);
    if (command == "collect") return cmd_collect(cfg, out);
    if (command == "stats") return cmd_stats(cfg, out);
    if (command == "baseline") return cmd_baseline(cfg, out);
    fail(ErrorKind::InvalidArgument, "unknown command '" + command + "'");
}

} // namespace cbrsubg
