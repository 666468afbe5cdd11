// Runs the eleven acceptance checks end to end and prints one verdict line
// each. Usage: acceptance [--expect-fail 2,3] [--only 1,5]
//
// The exit status is non-zero when a check fails that was not listed under
// --expect-fail, or when a listed check passes (so the list stays current).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cbrsubg/harness.hpp"
#include "cbrsubg/util.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cbrsubg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string shapes(const MetricsReport& r) {
    std::string s;
    for (const auto& g : r.group_order) s += g + "=" + fmt("%.1f", r.groups.at(g).hits_at_1) + " ";
    return s + "avg=" + fmt("%.1f", r.average);
}

double shape(const MetricsReport& r, const std::string& g) { return r.groups.at(g).hits_at_1; }

std::set<int> parse_list(const char* s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.insert(std::stoi(item));
    }
    return out;
}

// State shared by the checks that need the full synthetic run.
struct Run {
    ExperimentConfig cfg;
    unsigned threads = 1;
    Workspace ws;
    PreparedWorkspace pw, pw_nodist;
    double gen_seconds = 0;
    bool have_untrained = false, have_trained = false;
    MetricsReport untrained, trained;
    GnnModel model;
    double train_eval_seconds = 0;

    void ensure_workspace() {
        if (!ws.queries.empty()) return;
        const auto t0 = Clock::now();
        ws = synthetic_workspace(assemble_dataset(generator_config(cfg)));
        gen_seconds = seconds_since(t0);
        pw = prepare_workspace(ws, true, threads);
    }

    void ensure_untrained() {
        if (have_untrained) return;
        ensure_workspace();
        GnnModel m(model_config(cfg, ws.num_relations));
        untrained = evaluate_cbr_subg(m, ws, pw, Split::Test, cfg.k_eval, threads);
        have_untrained = true;
    }

    GnnModel train_model(bool use_distance, const PreparedWorkspace& p) {
        ExperimentConfig c = cfg;
        c.use_distance = use_distance;
        const auto train_ids = ws.split(Split::Train), valid_ids = ws.split(Split::Valid);
        const auto tr = make_episodes(ws, p, train_ids, c.k_train, true);
        const auto va = make_episodes(ws, p, valid_ids, c.k_eval, true);
        GnnModel m(model_config(c, ws.num_relations));
        const auto result = train(m, tr, va, train_config(c), [](const EpochLog& e) {
            std::fprintf(stderr, "  epoch %zu loss %.4f valid %.4f\n", e.epoch, e.train_loss, e.valid_hits);
        });
        std::fprintf(stderr, "  best epoch %zu\n", result.best_epoch);
        return m;
    }

    void ensure_trained() {
        if (have_trained) return;
        ensure_untrained();
        const auto t0 = Clock::now();
        model = train_model(true, pw);
        trained = evaluate_cbr_subg(model, ws, pw, Split::Test, cfg.k_eval, threads);
        train_eval_seconds = seconds_since(t0) + gen_seconds;
        have_trained = true;
    }
};

Verdict c1_random_floor(Run& run) {
    const auto t0 = Clock::now();
    ExperimentConfig fresh = run.cfg;
    fresh.seed = run.cfg.seed + 1000; // a draw the other checks do not use
    auto ws = synthetic_workspace(assemble_dataset(generator_config(fresh)));
    const auto r = evaluate_random(ws, Split::Test, fresh.seed);
    const double secs = seconds_since(t0);
    return {r.average <= 2.0 && secs < 60.0,
            "random ranker " + shapes(r) + " (<= 2), " + fmt("%.1f s", secs) + " (< 60 s)"};
}

Verdict c2_untrained(Run& run) {
    const auto t0 = Clock::now();
    run.ensure_untrained();
    const double secs = seconds_since(t0);
    const auto& r = run.untrained;
    const bool ok = r.average >= 25.0 && shape(r, "2p") >= shape(r, "2i") && shape(r, "3p") >= shape(r, "2i") &&
                    secs < 300.0;
    return {ok, "untrained " + shapes(r) + " (avg >= 25, 2p and 3p >= 2i), " + fmt("%.0f s", secs)};
}

Verdict c3_trained(Run& run) {
    run.ensure_trained();
    const auto& r = run.trained;
    bool per_shape = true;
    for (const auto& g : r.group_order) per_shape = per_shape && shape(r, g) >= shape(run.untrained, g);
    const bool ok = r.average >= 75.0 && per_shape && run.train_eval_seconds <= 3600.0;
    return {ok, "trained " + shapes(r) + " (avg >= 75), per-shape >= untrained: " + (per_shape ? "yes" : "no") +
                    ", " + fmt("%.0f s", run.train_eval_seconds) + " (<= 3600 s)"};
}

Verdict c4_baselines(Run& run) {
    run.ensure_trained();
    PathVoteOptions opts;
    opts.max_hops = run.cfg.max_hops;
    const auto path = evaluate_cbr_path(run.ws, Split::Test, run.cfg.k_eval, opts, run.threads);

    const auto tr = make_transe_episodes(run.ws, run.pw, run.ws.split(Split::Train), true);
    const auto va = make_transe_episodes(run.ws, run.pw, run.ws.split(Split::Valid), true);
    TransEModel te(model_config(run.cfg, run.ws.num_relations), run.ws.num_pattern_types);
    auto tc = train_config(run.cfg);
    tc.epochs *= run.cfg.transe_epoch_factor;
    tc.patience *= run.cfg.transe_epoch_factor;
    transe_train(te, tr, va, tc, [](const EpochLog& e) {
        std::fprintf(stderr, "  transe epoch %zu loss %.4f valid %.4f\n", e.epoch, e.train_loss, e.valid_hits);
    });
    const auto transe = evaluate_transe(te, run.ws, run.pw, Split::Test, run.threads);

    const auto& s = run.trained;
    const bool ok = s.average > transe.average && s.average > path.average && shape(path, "2i") >= 95.0 &&
                    shape(path, "3p") < shape(s, "3p");
    return {ok, "cbr-subg avg=" + fmt("%.1f", s.average) + " 3p=" + fmt("%.1f", shape(s, "3p")) + "; gnn+transe " +
                    shapes(transe) + "; cbr-path " + shapes(path) + " (cbr-path 2i >= 95)"};
}

Verdict c5_gradients(Run&) {
    const auto t0 = Clock::now();
    const double a = oracles::episode_fd_error();
    const double b = oracles::transe_fd_error(TransELoss::Softmax);
    const double c = oracles::transe_fd_error(TransELoss::Margin);
    const double secs = seconds_since(t0);
    return {a < 1e-4 && b < 1e-4 && c < 1e-4 && secs < 60.0,
            "max rel error cbr-subg " + fmt("%.2e", a) + ", gnn+transe softmax " + fmt("%.2e", b) + ", margin " +
                fmt("%.2e", c) + " (< 1e-4)"};
}

Verdict c6_oracles(Run&) {
    const auto a = oracles::check_execute_pattern(100);
    const auto b = oracles::check_replay(50);
    const auto c = oracles::check_knn(1000, 25);
    return {a.empty() && b.empty() && c.empty(),
            "execute_pattern x100: " + (a.empty() ? std::string("ok") : a) +
                "; replay x50: " + (b.empty() ? std::string("ok") : b) +
                "; knn over 1000 cases: " + (c.empty() ? std::string("ok") : c)};
}

Verdict c7_invariants(Run&) {
    const std::pair<const char*, std::function<std::string()>> checks[] = {
        {"equivariance", [] { return oracles::check_equivariance(100); }},
        {"inductiveness", [] { return oracles::check_inductiveness(100); }},
        {"loss/additivity/tau", [] { return oracles::check_loss_properties(100); }},
        {"containment", [] { return oracles::check_containment(150); }},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [name, fn] : checks) {
        const auto err = fn();
        ok = ok && err.empty();
        detail += std::string(name) + ": " + (err.empty() ? "ok" : err) + "; ";
    }
    return {ok, detail + "100+ trials each"};
}

Verdict c8_knn_sweep(Run& run) {
    run.ensure_trained();
    double h[6] = {};
    for (std::size_t k : {1, 2, 5}) {
        h[k] = evaluate_cbr_subg(run.model, run.ws, run.pw, Split::Test, k, run.threads).average;
    }
    return {h[5] >= h[1] - 2.0 && h[5] >= h[2],
            "test avg K=1 " + fmt("%.1f", h[1]) + ", K=2 " + fmt("%.1f", h[2]) + ", K=5 " + fmt("%.1f", h[5])};
}

Verdict c9_distance_ablation(Run& run) {
    run.ensure_trained();
    run.pw_nodist = prepare_workspace(run.ws, false, run.threads);
    const auto without = run.train_model(false, run.pw_nodist);
    const auto r = evaluate_cbr_subg(without, run.ws, run.pw_nodist, Split::Test, run.cfg.k_eval, run.threads);
    return {run.trained.average >= r.average,
            "with distance avg=" + fmt("%.1f", run.trained.average) + ", without " + shapes(r)};
}

Verdict c10_determinism(Run& run) {
    fixtures::TempDir dir("determinism");
    ExperimentConfig c;
    c.seed = run.cfg.seed;
    c.num_pattern_types = 40;
    c.epochs = 3;
    c.threads = 1;
    c.data_dir = (dir.path / "run").string();
    c.out = c.data_dir;
    std::string first;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(c.out);
        std::ostringstream log;
        for (const char* cmd : {"gen-data", "train", "eval"}) run_command(cmd, c, log);
        const auto report = read_file(fs::path(c.out) / "eval_test.json") + read_file(fs::path(c.out) / "eval_test.csv") +
                            read_file(fs::path(c.out) / "eval_test_summary.csv");
        if (pass == 0) first = report;
        if (pass == 1) {
            return {report == first, "two gen/train/eval runs (40 pattern types, 3 epochs, 1 thread): reports " +
                                         std::string(report == first ? "byte-identical" : "differ") + ", " +
                                         std::to_string(report.size()) + " bytes"};
        }
    }
    return {};
}

Verdict c11_external(Run& run) {
    fixtures::TempDir dir("external");
    ExperimentConfig c;
    const auto toy = fixtures::data_dir() / "toy_kg";
    c.mode = "external-kg";
    c.triples = (toy / "triples.tsv").string();
    c.cases = (toy / "cases.jsonl").string();
    c.embeddings = (toy / "embeddings.bin").string();
    c.embedding_ids = (toy / "embedding_ids.txt").string();
    c.out = dir.path.string();
    c.threads = 1;
    std::ostringstream log;
    run_command("collect", c, log);
    const auto j = nlohmann::json::parse(read_file(dir.path / "collect_stats.json"));
    const double coverage = j["stats"]["answer_coverage"].get<double>();
    const double smaller = j["fraction_smaller_than_naive_3hop"].get<double>();
    const auto queries = j["stats"]["queries"].get<std::size_t>();

    // Checkpoint round trip on the trained model when there is one.
    GnnModel m = run.have_trained ? run.model : GnnModel(model_config(run.cfg, 70));
    save_checkpoint(dir.path / "a.ckpt", m);
    const auto back = load_checkpoint(dir.path / "a.ckpt");
    save_checkpoint(dir.path / "b.ckpt", back);
    const bool same = back.num_params() == m.num_params() &&
                      std::memcmp(back.params().data(), m.params().data(), m.num_params() * sizeof(double)) == 0 &&
                      read_file(dir.path / "a.ckpt") == read_file(dir.path / "b.ckpt");
    return {queries == 20 && coverage == 1.0 && smaller >= 0.8 && same,
            std::to_string(queries) + " subgraphs, coverage " + fmt("%.3f", coverage) + ", smaller than 3-hop " +
                fmt("%.2f", smaller) + " (>= 0.80), checkpoint round trip " + (same ? "bit-exact" : "differs")};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> expect_fail, only;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--expect-fail") && i + 1 < argc) {
            expect_fail = parse_list(argv[++i]);
        } else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
            only = parse_list(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--expect-fail N,M] [--only N,M]\n", argv[0]);
            return 2;
        }
    }
    Run run;
    run.cfg.threads = 1; // single-threaded reduction everywhere
    run.threads = 1;
    const std::pair<const char*, Verdict (*)(Run&)> checks[] = {
        {"random floor", c1_random_floor},
        {"untrained inductive bias", c2_untrained},
        {"trained cbr-subg", c3_trained},
        {"baseline ordering", c4_baselines},
        {"gradient oracle", c5_gradients},
        {"oracle equivalences", c6_oracles},
        {"structural invariants", c7_invariants},
        {"knn sweep trend", c8_knn_sweep},
        {"distance ablation", c9_distance_ablation},
        {"determinism", c10_determinism},
        {"external-kg smoke", c11_external},
    };
    int unexpected = 0, passed = 0, ran = 0;
    for (int n = 1; n <= 11; ++n) {
        if (!only.empty() && !only.count(n)) continue;
        const auto& [name, fn] = checks[n - 1];
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = fn(run);
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        ++ran;
        passed += v.pass ? 1 : 0;
        const bool expected = v.pass != static_cast<bool>(expect_fail.count(n));
        unexpected += expected ? 0 : 1;
        std::printf("%s %2d %s: %s [%.0f s]%s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str(),
                    seconds_since(t0), expected ? "" : " (unexpected)");
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", passed, ran);
    return unexpected ? 1 : 0;
}
