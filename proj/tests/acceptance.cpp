// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.
//
// Usage: acceptance [work_dir]   (default: ./acceptance_run)

#include "qmetasur/dataset.hpp"
#include "qmetasur/errors.hpp"
#include "qmetasur/evo.hpp"
#include "qmetasur/log.hpp"
#include "qmetasur/metrics.hpp"
#include "qmetasur/pipeline.hpp"
#include "qmetasur/sne.hpp"
#include "qmetasur/tasks.hpp"
#include "qmetasur/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace qmetasur;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << std::endl;
    if (!ok) {
        ++failures;
    }
}

auto seconds_since(std::chrono::steady_clock::time_point t0) -> double {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

auto num(double v) -> std::string {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

template <class F>
void guarded(const std::string& name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

void sne_roundtrip() {
    const auto t0 = std::chrono::steady_clock::now();
    const sne::SneConfig c;
    auto rng = make_rng(20240601, 0);
    std::vector<double> zs{0.0, 1.0, -1.0, 1e-12, -1e-12, 9.9999999e12, -9.9999999e12, 9.99999999, -9.99999999,
                           0.99999999, 5e-13, 1e12};
    while (zs.size() < 100000) {
        const int e = static_cast<int>(uniform_index(rng, 25)) - 12;
        const double m = uniform(rng, 1.0, 10.0);
        zs.push_back((uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0) * m * std::pow(10.0, e));
    }
    double worst = 0.0;
    std::size_t bad = 0;
    for (double z : zs) {
        const auto s = sne::encode_scalar(z, c);
        const double back = sne::decode_scalar(s.ids, c);
        const int k = sne::exponent_of(s.ids[1], c);
        const double tol = 5.0 * std::pow(10.0, k - c.n_digit + 1);
        const double err = std::fabs(back - z);
        worst = std::max(worst, err / tol);
        if (err > tol || (z == 0.0 && back != 0.0) || (z != 0.0 && std::signbit(back) != std::signbit(z))) {
            ++bad;
        }
    }
    const double secs = seconds_since(t0);
    report("sne-roundtrip", bad == 0 && secs < 10.0,
           std::to_string(zs.size()) + " values, violations=" + std::to_string(bad) +
               ", worst err/tol=" + num(worst) + ", " + num(secs) + " s (limit 10 s)");
}

void sne_token_examples() {
    auto render = [](const sne::TokenSeq& s, const sne::SneConfig& c) {
        std::string out;
        for (auto id : s.ids) {
            std::string t;
            if (id == sne::ids::plus) t = "+";
            else if (id == sne::ids::minus) t = "-";
            else if (id >= sne::ids::digit0 && id < sne::ids::digit0 + 10) t = std::to_string(id - sne::ids::digit0);
            else t = "<10^" + std::to_string(sne::exponent_of(id, c)) + ">";
            out += (out.empty() ? "" : " ") + t;
        }
        return out;
    };
    sne::SneConfig c5;
    c5.n_digit = 5;
    sne::SneConfig c6;
    c6.n_digit = 6;
    const auto a = render(sne::encode_scalar(3.1415, c5), c5);
    const auto b = render(sne::encode_scalar(-2718.28, c6), c6);
    report("sne-token-examples", a == "+ <10^0> 3 1 4 1 5" && b == "- <10^3> 2 7 1 8 2 8",
           "3.1415 -> '" + a + "', -2718.28 -> '" + b + "'");
}

struct SmallModel {
    sne::SneConfig sne_cfg;
    sne::Vocab vocab;
    seqmodel::ModelConfig cfg;
    std::vector<sne::TokenSeq> srcs;
};

auto small_model(int d_model) -> SmallModel {
    SmallModel s;
    s.sne_cfg.n_digit = 3;
    const auto meta = sne::render_metadata({"Sphere", "F1", {"instance=1"}, 3});
    s.vocab = sne::Vocab::build(std::vector<std::string>{meta}, s.sne_cfg);
    s.cfg.d_model = d_model;
    s.cfg.n_heads = 2;
    s.cfg.d_ff = 2 * d_model;
    s.cfg.n_enc_layers = 2;
    s.cfg.n_dec_layers = 2;
    s.cfg.vocab_size = static_cast<int>(s.vocab.size());
    s.cfg.max_src_len = 80;
    s.cfg.max_tgt_len = 30;
    s.cfg.seed = 17;
    for (double x : {0.1, 0.45, 0.8}) {
        s.srcs.push_back(sne::source_sequence(s.vocab, meta, std::vector<double>{x, 1.0 - x, 0.5}));
    }
    return s;
}

void pwce_schedule() {
    bool table_ok = true;
    for (int l = 1; l <= 30; ++l) {
        const double expect = l <= 3 ? 20.0 : std::max(1.0, 10.0 - (l - 4));
        table_ok = table_ok && training::pwce_weight(l) == expect;
    }
    auto s = small_model(16);
    auto m = seqmodel::SeqModel::init(s.cfg, s.vocab.numeric_support());
    auto rng = make_rng(5, 0);
    double worst = 0.0;
    for (int b = 0; b < 10; ++b) {
        std::vector<training::Example> batch;
        for (int i = 0; i < 3; ++i) {
            const auto tgt = sne::encode_objectives(std::vector<double>{normal(rng, 0, 5), normal(rng, 0, 0.1)},
                                                    s.sne_cfg);
            batch.push_back({s.srcs[static_cast<std::size_t>(i)], tgt, std::vector<double>(tgt.size(), 1.0)});
        }
        ag::Tape t;
        const double loss = t.scalar(training::sft_loss(t, m, batch));
        double nll = 0.0;
        for (const auto& ex : batch) {
            ag::Tape t2;
            t2.set_no_grad(true);
            const auto tf = seqmodel::forward_teacher_forced(t2, m, ex.src.view(), ex.tgt.view());
            const ag::Mat lp = ag::log_softmax_rows(t2.value(tf.logits));
            for (std::size_t i = 0; i < ex.tgt.size(); ++i) {
                nll -= lp(static_cast<Eigen::Index>(i), ex.tgt.ids[i]);
            }
        }
        nll /= static_cast<double>(batch.size());
        worst = std::max(worst, std::fabs(loss - nll));
    }
    report("pwce-schedule", table_ok && worst <= 1e-12,
           std::string("weights l=1..30 ") + (table_ok ? "exact" : "MISMATCH") + ", |PWCE(1) - NLL| max=" + num(worst) +
               " (limit 1e-12)");
}

void reward() {
    const dataset::RewardConfig cfg;
    const sne::SneConfig sc;
    const std::vector<double> y{0.5, 2.0};
    const std::vector<double> d{1.0, 1.0};
    const double perfect = dataset::compute_reward(y, y, d, cfg, sc);
    const double at_s = dataset::compute_reward(std::vector<double>{0.53, 2.03}, y, d, cfg, sc);
    const bool exact = std::fabs(perfect - 1.25) <= 1e-9 && std::fabs(at_s - (std::exp(-1.0) + 0.25)) <= 1e-9;
    bool monotone = true;
    double prev = INFINITY;
    const std::vector<double> y1{5.0};
    const std::vector<double> d1{100.0};
    for (int i = 0; i < 100; ++i) {
        const double r = dataset::compute_reward(std::vector<double>{5.0 + 0.04 * i}, y1, d1, cfg, sc);
        monotone = monotone && r <= prev;
        prev = r;
    }
    auto rng = make_rng(99, 0);
    int out_of_bounds = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::vector<double> a{normal(rng, 0, 10), normal(rng, 0, 1e3)};
        const std::vector<double> b{normal(rng, 0, 10), normal(rng, 0, 1e3)};
        const std::vector<double> dd{uniform(rng, 0.0, 5.0), uniform(rng, 0.0, 5.0)};
        const double r = dataset::compute_reward(a, b, dd, cfg, sc);
        out_of_bounds += (r < 0.0 || r > 5.0) ? 1 : 0;
    }
    report("reward", exact && monotone && out_of_bounds == 0,
           "perfect=" + num(perfect) + ", nRMSE=s -> " + num(at_s) + " (expect " + num(std::exp(-1.0) + 0.25) +
               "), monotone=" + (monotone ? "yes" : "no") + ", clip violations=" + std::to_string(out_of_bounds));
}

void grad_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    auto s = small_model(16);
    auto m = seqmodel::SeqModel::init(s.cfg, s.vocab.numeric_support());
    std::vector<training::EpisodeGroup> groups;
    auto rng = make_rng(8, 0);
    for (const auto& src : s.srcs) {
        training::EpisodeGroup g{src, {}};
        const std::vector<double> y{uniform(rng, 0, 1), uniform(rng, 1, 3)};
        g.episodes.push_back({sne::encode_objectives(y, s.sne_cfg), 1.25, true});
        g.episodes.push_back({sne::encode_objectives(std::vector<double>{y[0] + 0.2, y[1]}, s.sne_cfg), 0.6, false});
        groups.push_back(g);
    }
    training::RlConfig cfg;
    cfg.lambda_cql = 0.1;
    cfg.gamma = 0.99;
    ag::Tape t;
    const auto parts = training::rl_loss(t, m, groups, cfg);
    const bool active = parts.qv > 0 && parts.cql > 0 && parts.nll > 0;
    auto loss = [&](ag::Tape& tp, seqmodel::SeqModel& mm) { return training::rl_loss(tp, mm, groups, cfg).total; };
    const auto r = seqmodel::grad_check(m, loss, 200, 3);
    const double secs = seconds_since(t0);
    report("grad-check", active && r.max_rel_error <= 1e-4 && secs < 60.0,
           "d_model=16, probes=" + std::to_string(r.probes) + ", max rel err=" + num(r.max_rel_error) +
               " (limit 1e-4), components qv/cql/nll=" + num(parts.qv) + "/" + num(parts.cql) + "/" + num(parts.nll) +
               ", " + num(secs) + " s (limit 60 s)");
}

void dominance_oracle() {
    auto rng = make_rng(4242, 0);
    int sort_bad = 0;
    int elitism_bad = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 63);
        const std::size_t k = 2 + uniform_index(rng, 2);
        const bool grid = trial % 3 == 0;
        std::vector<evo::Objectives> objs(n, evo::Objectives(k));
        for (auto& o : objs) {
            for (auto& v : o) {
                v = grid ? static_cast<double>(uniform_index(rng, 5)) : uniform(rng, 0, 1);
            }
        }
        // Brute force: rank = number of peeling rounds.
        std::vector<int> rank(n, -1);
        for (int level = 0;; ++level) {
            std::vector<std::size_t> layer;
            for (std::size_t i = 0; i < n; ++i) {
                if (rank[i] >= 0) continue;
                bool dom = false;
                for (std::size_t j = 0; j < n && !dom; ++j) {
                    if (j == i || rank[j] >= 0) continue;
                    bool le = true;
                    bool lt = false;
                    for (std::size_t m = 0; m < k; ++m) {
                        le = le && objs[j][m] <= objs[i][m];
                        lt = lt || objs[j][m] < objs[i][m];
                    }
                    dom = le && lt;
                }
                if (!dom) layer.push_back(i);
            }
            if (layer.empty()) break;
            for (auto i : layer) rank[i] = level;
        }
        const auto fronts = evo::fast_nondominated_sort(objs);
        std::size_t seen = 0;
        for (std::size_t r = 0; r < fronts.size(); ++r) {
            for (auto i : fronts[r]) {
                sort_bad += rank[i] != static_cast<int>(r) ? 1 : 0;
            }
            seen += fronts[r].size();
        }
        sort_bad += seen != n ? 1 : 0;

        std::vector<evo::Individual> pool;
        for (std::size_t i = 0; i < n; ++i) pool.push_back({{static_cast<double>(i)}, objs[i]});
        const auto sel = evo::nsga2_select(pool, std::max<std::size_t>(1, n / 2));
        std::set<std::size_t> chosen;
        for (const auto& s : sel) chosen.insert(static_cast<std::size_t>(s.dec[0]));
        for (std::size_t e = 0; e < n; ++e) {
            if (chosen.count(e) != 0) continue;
            for (const auto& s : sel) {
                elitism_bad += evo::dominates(objs[e], s.obj) ? 1 : 0;
            }
        }
    }
    report("dominance-oracle", sort_bad == 0 && elitism_bad == 0,
           "200 populations, sort mismatches=" + std::to_string(sort_bad) +
               ", elitism violations=" + std::to_string(elitism_bad));
}

void metric_exact_cases() {
    using metrics::Point;
    const std::vector<Point> t{{0, 0}, {1, 1}};
    const double i1 = metrics::igd(t, std::vector<Point>{{0, 0}});
    const double i2 = metrics::igd(std::vector<Point>{{0, 0}}, std::vector<Point>{{3, 4}, {1, 1}});
    const bool igd_ok = std::fabs(i1 - std::sqrt(2.0) / 2) <= 1e-9 && std::fabs(i2 - std::sqrt(2.0)) <= 1e-9 &&
                        metrics::igd(t, t) == 0.0;
    const metrics::Standardizer s2{{1.0, 2.0}, {0.5, 2.0}};
    const metrics::Standardizer s1{{3.0}, {0.25}};
    const double m0 = metrics::mss(std::vector<double>{1.0, 2.0}, s2);
    const double m1 = metrics::mss(std::vector<double>{3.25}, s1);
    const double m25 = metrics::mss(std::vector<double>{1.5, 1.0}, s2);
    const bool mss_ok = m0 == 0.0 && m1 == 1.0 && m25 == 0.25;
    const std::vector<int> g{1, 1};
    const double e0 = metrics::smae(std::vector<double>{0, 10}, std::vector<double>{0, 10}, g).mean;
    const double e1 = metrics::smae(std::vector<double>{5, 10}, std::vector<double>{0, 10}, g).mean;
    const double e2 = metrics::smae(std::vector<double>{0.5, 0.5}, std::vector<double>{0, 1}, g).mean;
    const bool smae_ok = e0 == 0.0 && e1 == 0.25 && e2 == 0.5;
    report("metric-exact-cases", igd_ok && mss_ok && smae_ok,
           "IGD " + num(i1) + ", " + num(i2) + "; MSS " + num(m0) + ", " + num(m1) + ", " + num(m25) + "; sMAE " +
               num(e0) + ", " + num(e1) + ", " + num(e2));
}

void sensor_coverage() {
    auto rng = make_rng(77, 0);
    bool f2_ok = true;
    for (int i = 0; i < 200; ++i) {
        const int S = 1 + static_cast<int>(uniform_index(rng, 4));
        const tasks::SensorProblem p{S, 200};
        std::vector<double> x;
        double cost = 0.0;
        for (int s = 0; s < S; ++s) {
            const double r = uniform(rng, 0.1, 0.25);
            x.insert(x.end(), {uniform(rng, -1, 1), uniform(rng, -1, 1), r});
            cost += 1.0 + 10.0 * r * r;
        }
        f2_ok = f2_ok && tasks::sensor_evaluate(p, x)[1] == cost;
    }
    const auto one = tasks::sensor_evaluate({1, 400}, std::vector<double>{0.0, 0.0, 0.25});
    const auto two = tasks::sensor_evaluate({2, 400}, std::vector<double>{0.0, 0.0, 0.25, 0.0, 0.0, 0.25});
    const double err = std::fabs(one[0] - (1.0 - std::numbers::pi / 64.0));
    const bool union_ok = two[0] == one[0] && two[1] == 3.25;
    report("sensor-coverage", f2_ok && err <= 1e-3 && union_ok,
           std::string("f2 formula ") + (f2_ok ? "exact" : "MISMATCH") + ", centred disk f1=" + num(one[0]) +
               " |err|=" + num(err) + " (limit 1e-3), union f1=" + num(two[0]) + " f2=" + num(two[1]));
}

void wilcoxon_calibration() {
    auto rng = make_rng(31337, 0);
    const int trials = 1000;
    int rejections = 0;
    log::set_level(log::Level::Quiet);
    for (int t = 0; t < trials; ++t) {
        std::vector<double> a(20);
        std::vector<double> b(20);
        for (int i = 0; i < 20; ++i) {
            a[static_cast<std::size_t>(i)] = normal(rng, 0, 1);
            b[static_cast<std::size_t>(i)] = normal(rng, 0, 1);
        }
        rejections += metrics::wilcoxon_signed_rank(a, b, 0.05).verdict != metrics::Verdict::Tie ? 1 : 0;
    }
    log::set_level(log::Level::Warn);
    const double rate = rejections / static_cast<double>(trials);
    report("wilcoxon-calibration", std::fabs(rate - 0.05) <= 0.02,
           "type-I rate " + num(rate) + " over 1000 null trials at n=20 (target 0.05 +- 0.02)");
}

// ---- pipeline-backed criteria ----

auto col(const pipeline::Table& t, const std::string& name) -> std::size_t {
    const auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) {
        throw ParseError("table has no column '" + name + "'", 0, {});
    }
    return static_cast<std::size_t>(it - t.columns.begin());
}

auto median(std::vector<double> v) -> double {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-run mean IGD over tasks.
auto run_means(const pipeline::Table& t) -> std::vector<double> {
    std::map<int, std::pair<double, int>> acc;
    for (const auto& r : t.rows) {
        auto& a = acc[std::stoi(r[col(t, "run")])];
        a.first += std::stod(r[col(t, "igd")]);
        a.second += 1;
    }
    std::vector<double> out;
    for (const auto& [run, a] : acc) out.push_back(a.first / a.second);
    return out;
}

void toy_pipeline(const fs::path& work) {
    pipeline::RunConfig cfg;
    cfg.out = work.string();
    cfg.name = "toy";
    cfg.suite.families = {"Sphere", "MeanScale"};
    cfg.suite.tasks_per_family = 2;
    cfg.suite.dim = 3;
    cfg.data.n_per_task = 200;
    cfg.data.augment = {8, 8, 8};
    cfg.model.d_model = 64;
    cfg.sft.epochs = 30;
    cfg.rl.epochs = 5;
    cfg.runs = 20;
    cfg.budget = 200;
    const auto dir = cfg.run_dir();
    fs::remove_all(dir);

    const auto t0 = std::chrono::steady_clock::now();
    (void)pipeline::cmd_gen_data(cfg);
    (void)pipeline::cmd_train(cfg);
    (void)pipeline::cmd_eval_surrogate(cfg);
    const double surrogate_secs = seconds_since(t0);

    const auto t1 = std::chrono::steady_clock::now();
    for (auto m : {pipeline::Mode::Real, pipeline::Mode::QMetaSur, pipeline::Mode::Rbfn}) {
        (void)pipeline::cmd_optimize(cfg, m);
    }
    (void)pipeline::cmd_report({dir}, dir / "metrics");
    const double optimize_secs = seconds_since(t1);

    // End-to-end surrogate quality.
    const auto rep = training::load_report(dir / "ckpt" / "train_report.tsv");
    double post_sft = NAN;
    int sft_epochs = 0;
    for (const auto& e : rep.epochs) {
        if (e.stage == "sft") {
            post_sft = e.val_smae;
            ++sft_epochs;
        }
    }
    const auto summary = pipeline::read_table(dir / "metrics" / "smae_summary.tsv", "smae_summary");
    std::map<std::string, std::vector<std::string>> by_method;
    for (const auto& r : summary.rows) by_method[r[col(summary, "method")]] = r;
    auto smae_of = [&](const std::string& m) { return std::stod(by_method.at(m)[col(summary, "mean_smae")]); };
    const double mean_pred = smae_of("mean");
    const double greedy = smae_of("qmetasur-greedy");
    const double adv = smae_of("qmetasur-advantage");
    const auto& adv_row = by_method.at("qmetasur-advantage");
    const double decodes = std::stod(adv_row[col(summary, "decodes")]);
    const double flagged = std::stod(adv_row[col(summary, "flagged")]);
    const double parse_rate = 1.0 - flagged / decodes;
    const bool e2e_ok = sft_epochs >= 30 && post_sft < 0.5 * mean_pred && adv <= 1.1 * post_sft &&
                        parse_rate >= 0.99 && surrogate_secs < 1800.0;
    report("e2e-surrogate", e2e_ok,
           "post-SFT sMAE=" + num(post_sft) + " vs 0.5*mean-predictor=" + num(0.5 * mean_pred) +
               ", post-RL sMAE=" + num(adv) + " vs 1.1*post-SFT=" + num(1.1 * post_sft) + ", parsed=" +
               num(100.0 * parse_rate) + "% of " + num(decodes) + ", data+train+eval " + num(surrogate_secs) +
               " s (limit 1800 s)");

    report("ablation-advantage", adv <= greedy + 0.005,
           "advantage sMAE=" + num(adv) + " vs greedy+0.005=" + num(greedy + 0.005));

    // Protocol audit.
    const auto audit = pipeline::read_table(dir / "data" / "audit.tsv", "data_audit");
    std::map<int, long> dataset_evals;
    for (const auto& r : audit.rows) dataset_evals[std::stoi(r[col(audit, "task")])] = std::stol(r[col(audit, "true_evals")]);
    int audit_bad = 0;
    std::size_t audited = 0;
    const auto real = pipeline::read_table(dir / "metrics" / "igd-real.tsv", "igd");
    for (const auto& r : real.rows) {
        audit_bad += std::stol(r[col(real, "search_true_evals")]) != 200 || std::stol(r[col(real, "final_true_evals")]) != 0;
        ++audited;
    }
    std::map<std::string, pipeline::Table> sur;
    for (const char* m : {"qmetasur", "rbfn"}) {
        sur.emplace(m, pipeline::read_table(dir / "metrics" / (std::string("igd-") + m + ".tsv"), "igd"));
        const auto& t = sur.at(m);
        for (const auto& r : t.rows) {
            const int task = std::stoi(r[col(t, "task")]);
            const long total = std::stol(r[col(t, "dataset_true_evals")]) + std::stol(r[col(t, "search_true_evals")]) +
                               std::stol(r[col(t, "final_true_evals")]);
            const long expect = dataset_evals.at(task) + std::stol(r[col(t, "front_size")]);
            audit_bad += total != expect || std::stol(r[col(t, "search_true_evals")]) != 0 ||
                         dataset_evals.at(task) != 320;
            ++audited;
        }
    }
    report("protocol-audit", audit_bad == 0 && audited == 3U * 20U * 4U,
           std::to_string(audited) + " (mode, run, task) rows, REAL 200 per task, surrogate = 320 dataset + front; "
                                     "violations=" + std::to_string(audit_bad));

    // Optimizer efficacy, part 1: true oracle on the Sphere-only toy suite.
    pipeline::RunConfig sphere = cfg;
    sphere.suite.families = {"Sphere"};
    sphere.suite.tasks_per_family = 2;
    const auto suite = pipeline::build_suite(sphere.suite);
    int halved = 0;
    double worst_ratio = 0.0;
    for (int r = 0; r < 20; ++r) {
        pipeline::CountingEvaluator truth(suite);
        const auto out = pipeline::optimize_once(suite, pipeline::Mode::Real, sphere,
                                                 sphere.seed + static_cast<std::uint64_t>(r), truth, nullptr, nullptr);
        bool all = true;
        for (const auto& t : out.tasks) {
            const double ratio = t.igd / t.initial_igd;
            worst_ratio = std::max(worst_ratio, ratio);
            all = all && ratio <= 0.5;
        }
        halved += all ? 1 : 0;
    }
    const double q_med = median(run_means(sur.at("qmetasur")));
    const double r_med = median(run_means(sur.at("rbfn")));
    report("optimizer-efficacy", halved == 20 && q_med <= 1.5 * r_med,
           "Sphere true-oracle runs halving IGD on every task: " + std::to_string(halved) +
               "/20 (worst final/initial=" + num(worst_ratio) + "); median run IGD qmetasur=" + num(q_med) +
               " vs 1.5*rbfn=" + num(1.5 * r_med) + " over 20 runs; optimize+report " + num(optimize_secs) + " s");
}

} // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_run");
    log::set_level(log::Level::Warn);
    guarded("sne-roundtrip", sne_roundtrip);
    guarded("sne-token-examples", sne_token_examples);
    guarded("pwce-schedule", pwce_schedule);
    guarded("reward", reward);
    guarded("grad-check", grad_fidelity);
    guarded("dominance-oracle", dominance_oracle);
    guarded("metric-exact-cases", metric_exact_cases);
    guarded("sensor-coverage", sensor_coverage);
    guarded("wilcoxon-calibration", wilcoxon_calibration);
    guarded("toy-pipeline", [&] { toy_pipeline(work); });
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
