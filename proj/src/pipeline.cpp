#include "qmetasur/pipeline.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace qmetasur::pipeline {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Reads known keys, remembers type errors and unknown keys.
class Reader {
public:
    Reader(const json& j, std::string prefix, std::vector<std::string>& bad)
        : j_(j.is_object() ? j : empty()), prefix_(std::move(prefix)), bad_(&bad) {
        if (!j.is_null() && !j.is_object()) {
            bad_->push_back(prefix_ + " must be an object");
        }
    }
    ~Reader() {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) {
                bad_->push_back("unknown key " + prefix_ + k);
            }
        }
    }
    Reader(const Reader&) = delete;
    auto operator=(const Reader&) -> Reader& = delete;

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            bad_->push_back(prefix_ + key + " has the wrong type");
        }
    }
    auto sub(const std::string& key) -> const json& {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : empty();
    }

private:
    static auto empty() -> const json& {
        static const json e = json::object();
        return e;
    }
    const json& j_;
    std::string prefix_;
    std::vector<std::string>* bad_;
    std::set<std::string> seen_;
};

auto now_seconds() -> double {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void timing(const fs::path& run_dir, const std::string& what, double seconds) {
    fs::create_directories(run_dir / "logs");
    std::ofstream out(run_dir / "logs" / "timing.log", std::ios::app);
    out << what << '\t' << std::fixed << std::setprecision(3) << seconds << '\n';
}

void require(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) {
        throw ConfigError("missing artifact " + p.string() + " (" + hint + ")");
    }
}

auto load_train_test(const fs::path& run_dir) -> std::pair<dataset::LoadedDataset, dataset::OfflineDataset> {
    require(run_dir / "data" / "train.jsonl", "run gen-data first");
    require(run_dir / "data" / "test.jsonl", "run gen-data first");
    auto train = dataset::load_dataset(run_dir / "data" / "train.jsonl");
    auto test = dataset::load_dataset(run_dir / "data" / "test.jsonl").data;
    test.ranges = train.data.ranges;
    return {std::move(train), std::move(test)};
}

auto load_run_suite(const fs::path& run_dir) -> tasks::MtmooSuite {
    require(run_dir / "data" / "suite.json", "run gen-data first");
    return tasks::load_suite(run_dir / "data" / "suite.json");
}

auto collect(const std::function<void()>& fn, std::vector<std::string>& bad) {
    try {
        fn();
    } catch (const Error& e) {
        bad.emplace_back(e.what());
    }
}

auto split_fields(const std::string& line) -> std::vector<std::string> {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, '\t')) {
        f.push_back(cell);
    }
    if (!line.empty() && line.back() == '\t') {
        f.emplace_back();
    }
    return f;
}

auto parse_num(const std::string& s) -> double {
    if (s == "nan") {
        return kNaN;
    }
    if (s == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    return std::stod(s);
}

} // namespace

// -- configuration ---------------------------------------------------------

void RunConfig::validate() const {
    std::vector<std::string> bad;
    if (name.empty() || name.find('/') != std::string::npos) {
        bad.emplace_back("name must be a non-empty single path component");
    }
    if (runs < 1) {
        bad.emplace_back("runs >= 1");
    }
    if (budget < 0) {
        bad.emplace_back("budget >= 0");
    }
    if (surrogate_generations < 0) {
        bad.emplace_back("surrogate_generations >= 0");
    }
    if (pf_points < 2) {
        bad.emplace_back("pf_points >= 2");
    }
    if (suite.families.empty()) {
        bad.emplace_back("suite.families must list at least one family");
    }
    for (const auto& f : suite.families) {
        collect([&] { (void)tasks::parse_family(f); }, bad);
    }
    if (suite.tasks_per_family < 1) {
        bad.emplace_back("suite.tasks_per_family >= 1");
    }
    if (suite.dim < 2) {
        bad.emplace_back("suite.dim >= 2");
    }
    if (data.n_per_task < 2) {
        bad.emplace_back("data.n_per_task >= 2");
    }
    if (data.split.train < 1 || data.split.test < 1) {
        bad.emplace_back("data.split parts >= 1");
    }
    if (data.augment.low < 0 || data.augment.medium < 0 || data.augment.high < 0) {
        bad.emplace_back("data.augment counts >= 0");
    }
    collect(
        [&] {
            auto m = model;
            m.vocab_size = std::max(m.vocab_size, 1);
            m.validate();
        },
        bad);
    collect([&] { sft.validate(); }, bad);
    collect([&] { rl.validate(); }, bad);
    collect([&] { decode.validate(); }, bad);
    collect([&] { evo.validate(); }, bad);
    collect([&] { reward.validate(); }, bad);
    collect([&] { sne.validate(); }, bad);
    if (!bad.empty()) {
        std::string msg = "invalid run config:";
        for (const auto& b : bad) {
            msg += " [" + b + "]";
        }
        throw ConfigError(msg);
    }
}

auto to_json(const RunConfig& c) -> json {
    json j;
    j["name"] = c.name;
    j["out"] = c.out;
    j["seed"] = c.seed;
    j["runs"] = c.runs;
    j["budget"] = c.budget;
    j["surrogate_generations"] = c.surrogate_generations;
    j["pf_points"] = c.pf_points;
    j["suite"] = {{"families", c.suite.families},
                  {"tasks_per_family", c.suite.tasks_per_family},
                  {"dim", c.suite.dim},
                  {"seed", c.suite.seed}};
    j["data"] = {{"n_per_task", c.data.n_per_task},
                 {"split", {c.data.split.train, c.data.split.test}},
                 {"augment", {c.data.augment.low, c.data.augment.medium, c.data.augment.high}},
                 {"seed", c.data.seed}};
    j["model"] = {{"d_model", c.model.d_model},   {"n_enc_layers", c.model.n_enc_layers},
                  {"n_dec_layers", c.model.n_dec_layers}, {"n_heads", c.model.n_heads},
                  {"d_ff", c.model.d_ff},         {"max_tgt_len", c.model.max_tgt_len},
                  {"seed", c.model.seed}};
    j["sft"] = {{"epochs", c.sft.epochs}, {"batch_size", c.sft.batch_size}, {"lr", c.sft.lr},
                {"warmup_ratio", c.sft.warmup_ratio}, {"clip_norm", c.sft.clip_norm}, {"pwce", c.sft.pwce},
                {"seed", c.sft.seed}};
    j["rl"] = {{"gamma", c.rl.gamma},           {"lambda_cql", c.rl.lambda_cql},
               {"tau", c.rl.tau},               {"polyak", c.rl.polyak},
               {"epochs", c.rl.epochs},         {"batch_groups", c.rl.batch_groups},
               {"lr", c.rl.lr},                 {"warmup_ratio", c.rl.warmup_ratio},
               {"clip_norm", c.rl.clip_norm},   {"seed", c.rl.seed}};
    j["decode"] = {{"mode", decoding::mode_name(c.decode.mode)}, {"beta", c.decode.beta}, {"max_len", c.decode.max_len}};
    j["evo"] = {{"im", c.evo.im}, {"a_up", c.evo.a_up}, {"shk", c.evo.shk}, {"N", c.evo.N},
                {"archive_cap", c.evo.archive_cap}};
    j["reward"] = {{"temperature", c.reward.temperature}, {"kappa_exp", c.reward.kappa_exp},
                   {"kappa_sgn", c.reward.kappa_sgn}, {"clip_lo", c.reward.clip_lo}, {"clip_hi", c.reward.clip_hi}};
    j["sne"] = {{"n_digit", c.sne.n_digit}, {"exp_min", c.sne.exp_min}, {"exp_max", c.sne.exp_max}};
    return j;
}

auto config_from_json(const json& j) -> RunConfig {
    RunConfig c;
    std::vector<std::string> bad;
    {
        Reader r(j, "", bad);
        r.get("name", c.name);
        r.get("out", c.out);
        r.get("seed", c.seed);
        r.get("runs", c.runs);
        r.get("budget", c.budget);
        r.get("surrogate_generations", c.surrogate_generations);
        r.get("pf_points", c.pf_points);
        {
            Reader s(r.sub("suite"), "suite.", bad);
            s.get("families", c.suite.families);
            s.get("tasks_per_family", c.suite.tasks_per_family);
            s.get("dim", c.suite.dim);
            s.get("seed", c.suite.seed);
        }
        {
            Reader d(r.sub("data"), "data.", bad);
            d.get("n_per_task", c.data.n_per_task);
            std::vector<int> split{c.data.split.train, c.data.split.test};
            d.get("split", split);
            if (split.size() == 2) {
                c.data.split = {split[0], split[1]};
            } else {
                bad.emplace_back("data.split must hold two integers");
            }
            std::vector<int> aug{c.data.augment.low, c.data.augment.medium, c.data.augment.high};
            d.get("augment", aug);
            if (aug.size() == 3) {
                c.data.augment = {aug[0], aug[1], aug[2]};
            } else {
                bad.emplace_back("data.augment must hold three integers");
            }
            d.get("seed", c.data.seed);
        }
        {
            Reader m(r.sub("model"), "model.", bad);
            m.get("d_model", c.model.d_model);
            m.get("n_enc_layers", c.model.n_enc_layers);
            m.get("n_dec_layers", c.model.n_dec_layers);
            m.get("n_heads", c.model.n_heads);
            m.get("d_ff", c.model.d_ff);
            m.get("max_tgt_len", c.model.max_tgt_len);
            m.get("seed", c.model.seed);
        }
        {
            Reader s(r.sub("sft"), "sft.", bad);
            s.get("epochs", c.sft.epochs);
            s.get("batch_size", c.sft.batch_size);
            s.get("lr", c.sft.lr);
            s.get("warmup_ratio", c.sft.warmup_ratio);
            s.get("clip_norm", c.sft.clip_norm);
            s.get("pwce", c.sft.pwce);
            s.get("seed", c.sft.seed);
        }
        {
            Reader s(r.sub("rl"), "rl.", bad);
            s.get("gamma", c.rl.gamma);
            s.get("lambda_cql", c.rl.lambda_cql);
            s.get("tau", c.rl.tau);
            s.get("polyak", c.rl.polyak);
            s.get("epochs", c.rl.epochs);
            s.get("batch_groups", c.rl.batch_groups);
            s.get("lr", c.rl.lr);
            s.get("warmup_ratio", c.rl.warmup_ratio);
            s.get("clip_norm", c.rl.clip_norm);
            s.get("seed", c.rl.seed);
        }
        {
            Reader s(r.sub("decode"), "decode.", bad);
            std::string mode = decoding::mode_name(c.decode.mode);
            s.get("mode", mode);
            collect([&] { c.decode.mode = decoding::parse_mode(mode); }, bad);
            s.get("beta", c.decode.beta);
            s.get("max_len", c.decode.max_len);
        }
        {
            Reader s(r.sub("evo"), "evo.", bad);
            s.get("im", c.evo.im);
            s.get("a_up", c.evo.a_up);
            s.get("shk", c.evo.shk);
            s.get("N", c.evo.N);
            s.get("archive_cap", c.evo.archive_cap);
        }
        {
            Reader s(r.sub("reward"), "reward.", bad);
            s.get("temperature", c.reward.temperature);
            s.get("kappa_exp", c.reward.kappa_exp);
            s.get("kappa_sgn", c.reward.kappa_sgn);
            s.get("clip_lo", c.reward.clip_lo);
            s.get("clip_hi", c.reward.clip_hi);
        }
        {
            Reader s(r.sub("sne"), "sne.", bad);
            s.get("n_digit", c.sne.n_digit);
            s.get("exp_min", c.sne.exp_min);
            s.get("exp_max", c.sne.exp_max);
        }
    }
    collect([&] { c.validate(); }, bad);
    if (!bad.empty()) {
        std::string msg = "invalid run config:";
        for (const auto& b : bad) {
            msg += " [" + b + "]";
        }
        throw ConfigError(msg);
    }
    return c;
}

auto env_override_keys() -> std::vector<std::string> {
    return {"name", "out", "seed", "runs", "budget", "surrogate_generations", "pf_points"};
}

auto apply_env_overrides(json j, const std::function<const char*(const char*)>& getenv_fn) -> json {
    if (!j.is_object()) {
        j = json::object();
    }
    for (const auto& key : env_override_keys()) {
        std::string var = "QMETASUR_";
        for (char ch : key) {
            var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        const char* v = getenv_fn(var.c_str());
        if (v == nullptr) {
            continue;
        }
        if (key == "name" || key == "out") {
            j[key] = std::string(v);
            continue;
        }
        try {
            std::size_t used = 0;
            const long long n = std::stoll(v, &used);
            if (used != std::string(v).size()) {
                throw std::invalid_argument(v);
            }
            j[key] = n;
        } catch (const std::exception&) {
            throw ConfigError(var + " must be an integer, got '" + std::string(v) + "'");
        }
    }
    return j;
}

auto load_config(const fs::path& path) -> RunConfig {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("missing artifact " + path.string() + " (config file)");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const RunConfig& c, const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << to_json(c).dump(2) << '\n';
}

auto mode_name(Mode m) -> std::string {
    switch (m) {
    case Mode::Real: return "real";
    case Mode::QMetaSur: return "qmetasur";
    case Mode::Rbfn: return "rbfn";
    }
    return "real";
}

auto parse_mode(const std::string& s) -> Mode {
    for (auto m : {Mode::Real, Mode::QMetaSur, Mode::Rbfn}) {
        if (mode_name(m) == s) {
            return m;
        }
    }
    throw ConfigError("unknown mode '" + s + "' (expected real, qmetasur or rbfn)");
}

// -- data and model helpers ------------------------------------------------

auto build_suite(const SuiteConfig& c) -> tasks::MtmooSuite {
    tasks::MtmooSuite all;
    all.seed = c.seed;
    int gid = 1;
    for (const auto& name : c.families) {
        auto s = tasks::make_suite(tasks::parse_family(name), c.tasks_per_family, c.dim, c.seed);
        for (auto& t : s.tasks) {
            t.task_id = gid++;
            all.tasks.push_back(std::move(t));
        }
    }
    all.validate();
    return all;
}

auto CountingEvaluator::operator()(const tasks::TaskSpec& task, std::span<const double> x) -> std::vector<double> {
    ++calls_[task.task_id];
    return tasks::evaluate(task, x);
}

auto CountingEvaluator::evaluate(int task_id, std::span<const double> x) -> std::vector<double> {
    return (*this)(suite_->task(task_id), x);
}

auto CountingEvaluator::calls(int task_id) const -> long {
    const auto it = calls_.find(task_id);
    return it == calls_.end() ? 0 : it->second;
}

auto CountingEvaluator::total() const -> long {
    long s = 0;
    for (const auto& [k, v] : calls_) {
        s += v;
    }
    return s;
}

auto make_examples(const dataset::OfflineDataset& train, const sne::Vocab& vocab, const sne::SneConfig& sne_cfg,
                   bool pwce) -> std::vector<training::Example> {
    std::vector<training::Example> ex;
    ex.reserve(train.samples.size());
    for (const auto& s : train.samples) {
        training::Example e;
        e.src = sne::source_sequence(vocab, s.metadata_text, s.x);
        e.tgt = sne::encode_objectives(s.y, sne_cfg);
        e.weights = training::sequence_weights(e.tgt, sne_cfg, pwce);
        ex.push_back(std::move(e));
    }
    return ex;
}

auto make_episode_groups(const dataset::OfflineDataset& train, std::span<const dataset::AugmentedSample> augmented,
                         const sne::Vocab& vocab, const dataset::RewardConfig& reward, const sne::SneConfig& sne_cfg)
    -> std::vector<training::EpisodeGroup> {
    std::vector<training::EpisodeGroup> groups(train.samples.size());
    for (std::size_t i = 0; i < train.samples.size(); ++i) {
        const auto& s = train.samples[i];
        groups[i].src = sne::source_sequence(vocab, s.metadata_text, s.x);
        const auto d = train.ranges.at(s.task_id).deltas();
        groups[i].episodes.push_back(
            {sne::encode_objectives(s.y, sne_cfg), dataset::compute_reward(s.y, s.y, d, reward, sne_cfg), true});
    }
    for (const auto& a : augmented) {
        groups.at(a.parent).episodes.push_back({sne::encode_objectives(a.y_tilde, sne_cfg), a.reward, false});
    }
    return groups;
}

auto build_vocab(const tasks::MtmooSuite& suite, const sne::SneConfig& sne_cfg) -> sne::Vocab {
    std::vector<std::string> corpus;
    for (const auto& t : suite.tasks) {
        corpus.push_back(t.metadata_text());
    }
    return sne::Vocab::build(corpus, sne_cfg);
}

auto model_config_for(const RunConfig& c, const sne::Vocab& vocab, const dataset::OfflineDataset& train)
    -> seqmodel::ModelConfig {
    auto mc = c.model;
    mc.vocab_size = static_cast<int>(vocab.size());
    std::size_t longest = 0;
    int max_dim = 1;
    for (const auto& s : train.samples) {
        longest = std::max(longest, sne::source_sequence(vocab, s.metadata_text, s.x).size());
        max_dim = std::max(max_dim, static_cast<int>(s.x.size()));
    }
    mc.max_src_len = std::max(20 * max_dim, static_cast<int>(longest));
    return mc;
}

// -- surrogate accuracy ----------------------------------------------------

auto group_key(int task_id, std::size_t objective) -> int { return task_id * 10 + static_cast<int>(objective); }

auto score_predictions(const dataset::OfflineDataset& test, const std::vector<std::vector<double>>& preds)
    -> SurrogateAccuracy {
    if (preds.size() != test.samples.size()) {
        throw ArityError("one prediction per test sample required");
    }
    std::vector<double> p;
    std::vector<double> y;
    std::vector<int> g;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& s = test.samples[i];
        for (std::size_t j = 0; j < s.y.size(); ++j) {
            p.push_back(preds[i].at(j));
            y.push_back(s.y[j]);
            g.push_back(group_key(s.task_id, j));
            per[g.back()].first.push_back(p.back());
            per[g.back()].second.push_back(y.back());
        }
    }
    SurrogateAccuracy acc;
    acc.smae = metrics::smae(p, y, g);
    for (const auto& [k, v] : per) {
        try {
            acc.r2[k] = metrics::r2(v.first, v.second);
        } catch (const DomainError&) {
            acc.r2[k] = kNaN;
        }
    }
    acc.decodes = preds.size();
    return acc;
}

auto evaluate_qmetasur(const Surrogate& s, const dataset::OfflineDataset& test, const decoding::DecodeConfig& cfg)
    -> SurrogateAccuracy {
    std::vector<std::vector<double>> preds;
    std::size_t flagged = 0;
    for (const auto& smp : test.samples) {
        auto pr = decoding::predict_objectives(s.model, s.vocab, smp.metadata_text, smp.x, smp.y.size(),
                                               s.ranges.at(smp.task_id), cfg);
        flagged += pr.flagged ? 1U : 0U;
        preds.push_back(std::move(pr.y));
    }
    auto acc = score_predictions(test, preds);
    acc.flagged = flagged;
    return acc;
}

auto evaluate_mean_predictor(const dataset::OfflineDataset& train, const dataset::OfflineDataset& test)
    -> SurrogateAccuracy {
    std::map<int, std::vector<double>> mean;
    std::map<int, int> count;
    for (const auto& s : train.samples) {
        auto& m = mean[s.task_id];
        m.resize(s.y.size(), 0.0);
        for (std::size_t j = 0; j < s.y.size(); ++j) {
            m[j] += s.y[j];
        }
        ++count[s.task_id];
    }
    for (auto& [t, m] : mean) {
        for (auto& v : m) {
            v /= count[t];
        }
    }
    std::vector<std::vector<double>> preds;
    for (const auto& s : test.samples) {
        preds.push_back(mean.at(s.task_id));
    }
    return score_predictions(test, preds);
}

auto fit_rbfn_all(const dataset::OfflineDataset& train, std::uint64_t seed) -> std::map<int, rbfn::RbfnSurrogate> {
    std::map<int, rbfn::RbfnSurrogate> out;
    for (int t : train.task_ids()) {
        std::vector<std::vector<double>> X;
        std::vector<std::vector<double>> Y;
        for (const auto* s : train.samples_of(t)) {
            X.push_back(s->x);
            Y.push_back(s->y);
        }
        out.emplace(t, rbfn::fit_surrogate(X, Y, seed + static_cast<std::uint64_t>(t)));
    }
    return out;
}

auto evaluate_rbfn(const std::map<int, rbfn::RbfnSurrogate>& models, const dataset::OfflineDataset& test)
    -> SurrogateAccuracy {
    std::vector<std::vector<double>> preds;
    for (const auto& s : test.samples) {
        preds.push_back(models.at(s.task_id).predict(s.x));
    }
    return score_predictions(test, preds);
}

// -- optimization ----------------------------------------------------------

auto OptimizeOutcome::mean_igd() const -> double {
    if (tasks.empty()) {
        return kNaN;
    }
    double s = 0.0;
    for (const auto& t : tasks) {
        s += t.igd;
    }
    return s / static_cast<double>(tasks.size());
}

auto optimize_once(const tasks::MtmooSuite& suite, Mode mode, const RunConfig& cfg, std::uint64_t seed,
                   CountingEvaluator& truth, const Surrogate* qms, const std::map<int, rbfn::RbfnSurrogate>* rbf)
    -> OptimizeOutcome {
    if (mode == Mode::QMetaSur && qms == nullptr) {
        throw ConfigError("qmetasur mode needs a trained surrogate");
    }
    if (mode == Mode::Rbfn && rbf == nullptr) {
        throw ConfigError("rbfn mode needs fitted RBFN models");
    }
    std::vector<evo::TaskBox> boxes;
    for (const auto& t : suite.tasks) {
        boxes.push_back({t.lower(), t.upper()});
    }
    std::vector<long> before;
    for (const auto& t : suite.tasks) {
        before.push_back(truth.calls(t.task_id));
    }
    evo::Oracle oracle = [&](int ti, std::span<const std::vector<double>> xs) {
        const auto& task = suite.tasks[static_cast<std::size_t>(ti)];
        std::vector<evo::Evaluation> out;
        out.reserve(xs.size());
        switch (mode) {
        case Mode::Real:
            for (const auto& x : xs) {
                out.push_back({truth(task, x), false});
            }
            break;
        case Mode::QMetaSur: {
            const auto preds = decoding::predict_batch(qms->model, qms->vocab, task.metadata_text(), xs,
                                                       static_cast<std::size_t>(task.k), qms->ranges.at(task.task_id),
                                                       cfg.decode);
            for (const auto& p : preds) {
                out.push_back({p.y, p.flagged});
            }
            break;
        }
        case Mode::Rbfn:
            for (const auto& x : xs) {
                out.push_back({rbf->at(task.task_id).predict(x), false});
            }
            break;
        }
        return out;
    };
    evo::Budget budget;
    if (mode == Mode::Real) {
        budget = {evo::Budget::Kind::Evaluations, cfg.budget};
    } else {
        budget = {evo::Budget::Kind::Generations, cfg.surrogate_generations};
    }
    const auto res = evo::run_mo_matde(boxes, oracle, cfg.evo, budget, seed);

    OptimizeOutcome out;
    out.trace = res.trace;
    for (std::size_t i = 0; i < suite.tasks.size(); ++i) {
        const auto& task = suite.tasks[i];
        const auto& tr = res.tasks[i];
        TaskOutcome o;
        o.task_id = task.task_id;
        o.search_true_evals = truth.calls(task.task_id) - before[i];
        o.flagged = tr.flagged;
        const auto pf = tasks::true_pf(task, cfg.pf_points);
        for (const auto& ind : tr.front) {
            o.front_x.push_back(ind.dec);
            if (mode == Mode::Real) {
                o.front_true.push_back(ind.obj);
            } else {
                o.front_true.push_back(truth(task, ind.dec));
                ++o.final_true_evals;
            }
        }
        o.igd = metrics::igd(pf, o.front_true);
        if (mode == Mode::Real) {
            std::vector<std::vector<double>> init;
            for (const auto& ind : tr.initial_front) {
                init.push_back(ind.obj);
            }
            o.initial_igd = metrics::igd(pf, init);
        } else {
            o.initial_igd = kNaN;
        }
        out.tasks.push_back(std::move(o));
    }
    return out;
}

// -- tables ----------------------------------------------------------------

auto fmt(double v) -> std::string {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_table(const Table& t, const fs::path& path) {
    fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw Error("cannot write " + path.string());
        }
        out << '#' << t.schema << ".v1\n";
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            out << (i ? "\t" : "") << t.columns[i];
        }
        out << '\n';
        for (const auto& r : t.rows) {
            if (r.size() != t.columns.size()) {
                throw ArityError("table " + t.schema + ": row width differs from header");
            }
            for (std::size_t i = 0; i < r.size(); ++i) {
                out << (i ? "\t" : "") << r[i];
            }
            out << '\n';
        }
    }
    fs::rename(tmp, path);
}

auto read_table(const fs::path& path, const std::string& schema) -> Table {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("missing artifact " + path.string());
    }
    Table t;
    t.schema = schema;
    std::string line;
    if (!std::getline(in, line) || line != "#" + schema + ".v1") {
        throw ParseError(path.string() + ": expected schema header #" + schema + ".v1", 0);
    }
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": missing column line", 1);
    }
    t.columns = split_fields(line);
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto f = split_fields(line);
        if (f.size() != t.columns.size()) {
            throw ParseError(path.string() + ": row width differs from header", lineno);
        }
        t.rows.push_back(std::move(f));
    }
    return t;
}

auto fnv1a_file(const fs::path& path) -> std::uint64_t {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

// -- commands --------------------------------------------------------------

namespace {

auto hex(std::uint64_t v) -> std::string {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void append_seeds(const fs::path& run_dir, const std::vector<std::pair<std::string, std::uint64_t>>& add) {
    const auto path = run_dir / "seeds.tsv";
    std::map<std::string, std::string> seeds;
    if (fs::exists(path)) {
        for (const auto& r : read_table(path, "seeds").rows) {
            seeds[r[0]] = r[1];
        }
    }
    for (const auto& [k, v] : add) {
        seeds[k] = std::to_string(v);
    }
    Table t{"seeds", {"stage", "seed"}, {}};
    for (const auto& [k, v] : seeds) {
        t.rows.push_back({k, v});
    }
    write_table(t, path);
}

} // namespace

auto cmd_gen_data(const RunConfig& cfg) -> CommandResult {
    cfg.validate();
    const double t0 = now_seconds();
    const auto dir = cfg.run_dir();
    fs::create_directories(dir / "data");
    save_config(cfg, dir / "config.json");
    const auto suite = build_suite(cfg.suite);
    CountingEvaluator truth(suite);
    auto eval = [&](const tasks::TaskSpec& t, std::span<const double> x) { return truth(t, x); };
    const auto full = dataset::build_offline(suite, cfg.data.n_per_task, cfg.data.split, cfg.data.seed, eval);
    auto [train, test] = dataset::split(full, cfg.data.split, cfg.data.seed);
    const auto aug = dataset::augment(train, cfg.data.augment, cfg.data.seed, cfg.reward, cfg.sne);

    CommandResult res;
    tasks::save_suite(suite, dir / "data" / "suite.json");
    dataset::save_dataset(train, dir / "data" / "train.jsonl", aug);
    dataset::save_dataset(test, dir / "data" / "test.jsonl");
    res.written = {dir / "data" / "suite.json", dir / "data" / "train.jsonl", dir / "data" / "test.jsonl"};

    Table hashes{"hashes", {"file", "fnv1a64"}, {}};
    for (const auto& p : res.written) {
        hashes.rows.push_back({fs::relative(p, dir).string(), hex(fnv1a_file(p))});
    }
    write_table(hashes, dir / "data" / "hashes.tsv");
    Table audit{"data_audit", {"task", "true_evals", "train", "test", "augmented"}, {}};
    std::map<int, std::size_t> n_aug;
    for (const auto& a : aug) {
        ++n_aug[train.samples[a.parent].task_id];
    }
    for (const auto& t : suite.tasks) {
        audit.rows.push_back({std::to_string(t.task_id), std::to_string(truth.calls(t.task_id)),
                              std::to_string(train.samples_of(t.task_id).size()),
                              std::to_string(test.samples_of(t.task_id).size()), std::to_string(n_aug[t.task_id])});
    }
    write_table(audit, dir / "data" / "audit.tsv");
    res.written.push_back(dir / "data" / "hashes.tsv");
    res.written.push_back(dir / "data" / "audit.tsv");
    append_seeds(dir, {{"suite", cfg.suite.seed}, {"data", cfg.data.seed}});
    timing(dir, "gen-data", now_seconds() - t0);
    return res;
}

auto cmd_train(const RunConfig& cfg) -> CommandResult {
    cfg.validate();
    const double t0 = now_seconds();
    const auto dir = cfg.run_dir();
    const auto suite = load_run_suite(dir);
    auto [train, test] = load_train_test(dir);
    save_config(cfg, dir / "config.json");
    const auto vocab = build_vocab(suite, cfg.sne);
    fs::create_directories(dir / "ckpt");
    vocab.save(dir / "ckpt" / "vocab.txt");

    const auto mc = model_config_for(cfg, vocab, train.data);
    auto model = seqmodel::SeqModel::init(mc, vocab.numeric_support());
    auto val = [&](const seqmodel::SeqModel& m, decoding::DecodeMode mode) {
        auto dc = cfg.decode;
        dc.mode = mode;
        std::vector<std::vector<double>> preds;
        for (const auto& smp : test.samples) {
            preds.push_back(decoding::predict_objectives(m, vocab, smp.metadata_text, smp.x, smp.y.size(),
                                                         train.data.ranges.at(smp.task_id), dc)
                                .y);
        }
        return score_predictions(test, preds).smae.mean;
    };

    training::TrainHooks h1;
    h1.checkpoint_dir = dir / "ckpt";
    h1.validate = [&](const seqmodel::SeqModel& m) { return val(m, decoding::DecodeMode::Greedy); };
    h1.on_epoch = [](const training::EpochRecord& r) {
        log::info("sft epoch " + std::to_string(r.epoch) + " loss " + fmt(r.pwce) + " val sMAE " + fmt(r.val_smae));
    };
    auto report = training::train_sft(model, make_examples(train.data, vocab, cfg.sne, cfg.sft.pwce), cfg.sft, h1);
    seqmodel::save_checkpoint(model, dir / "ckpt" / "sft");

    training::TrainHooks h2 = h1;
    h2.validate = [&](const seqmodel::SeqModel& m) { return val(m, decoding::DecodeMode::Advantage); };
    h2.on_epoch = [](const training::EpochRecord& r) {
        log::info("rl epoch " + std::to_string(r.epoch) + " qv " + fmt(r.qv) + " cql " + fmt(r.cql) + " nll " +
                  fmt(r.nll) + " val sMAE " + fmt(r.val_smae));
    };
    const auto groups = make_episode_groups(train.data, train.augmented, vocab, cfg.reward, cfg.sne);
    report.append(training::train_rl(model, groups, cfg.rl, h2));
    seqmodel::save_checkpoint(model, dir / "ckpt" / "final");
    training::save_report(report, dir / "ckpt" / "train_report.tsv");
    append_seeds(dir, {{"model_init", mc.seed}, {"sft", cfg.sft.seed}, {"rl", cfg.rl.seed}});
    timing(dir, "train", now_seconds() - t0);
    return {{dir / "ckpt" / "vocab.txt", dir / "ckpt" / "sft", dir / "ckpt" / "final", dir / "ckpt" / "train_report.tsv"}};
}

auto load_surrogate(const fs::path& run_dir) -> Surrogate {
    require(run_dir / "ckpt" / "final", "run train first");
    require(run_dir / "ckpt" / "vocab.txt", "run train first");
    const auto cfg = fs::exists(run_dir / "config.json") ? load_config(run_dir / "config.json") : RunConfig{};
    auto [train, test] = load_train_test(run_dir);
    return {sne::Vocab::load(run_dir / "ckpt" / "vocab.txt", cfg.sne), seqmodel::load_checkpoint(run_dir / "ckpt" / "final"),
            train.data.ranges};
}

auto cmd_eval_surrogate(const RunConfig& cfg) -> CommandResult {
    cfg.validate();
    const double t0 = now_seconds();
    const auto dir = cfg.run_dir();
    const auto sur = load_surrogate(dir);
    auto [train, test] = load_train_test(dir);

    std::vector<std::pair<std::string, SurrogateAccuracy>> results;
    for (auto mode : {decoding::DecodeMode::Greedy, decoding::DecodeMode::Advantage}) {
        auto dc = cfg.decode;
        dc.mode = mode;
        results.emplace_back("qmetasur-" + decoding::mode_name(mode), evaluate_qmetasur(sur, test, dc));
    }
    results.emplace_back("rbfn", evaluate_rbfn(fit_rbfn_all(train.data, cfg.seed), test));
    results.emplace_back("mean", evaluate_mean_predictor(train.data, test));

    Table smae{"smae", {"method", "task", "objective", "smae", "r2"}, {}};
    Table summary{"smae_summary", {"method", "mean_smae", "decodes", "flagged"}, {}};
    for (const auto& [name, acc] : results) {
        for (const auto& [g, v] : acc.smae.per_group) {
            smae.rows.push_back({name, std::to_string(g / 10), std::to_string(g % 10 + 1), fmt(v), fmt(acc.r2.at(g))});
        }
        summary.rows.push_back({name, fmt(acc.smae.mean), std::to_string(acc.decodes), std::to_string(acc.flagged)});
    }
    write_table(smae, dir / "metrics" / "smae.tsv");
    write_table(summary, dir / "metrics" / "smae_summary.tsv");
    timing(dir, "eval-surrogate", now_seconds() - t0);
    return {{dir / "metrics" / "smae.tsv", dir / "metrics" / "smae_summary.tsv"}};
}

auto cmd_optimize(const RunConfig& cfg, Mode mode) -> CommandResult {
    cfg.validate();
    const double t0 = now_seconds();
    const auto dir = cfg.run_dir();
    const auto suite = load_run_suite(dir);
    save_config(cfg, dir / "config.json");
    std::optional<Surrogate> qms;
    std::map<int, rbfn::RbfnSurrogate> rbf;
    std::map<int, long> dataset_evals;
    if (mode != Mode::Real) {
        require(dir / "data" / "audit.tsv", "run gen-data first");
        for (const auto& r : read_table(dir / "data" / "audit.tsv", "data_audit").rows) {
            dataset_evals[std::stoi(r[0])] = std::stol(r[1]);
        }
    }
    if (mode == Mode::QMetaSur) {
        qms = load_surrogate(dir);
    } else if (mode == Mode::Rbfn) {
        auto [train, test] = load_train_test(dir);
        rbf = fit_rbfn_all(train.data, cfg.seed);
    }

    const auto m = mode_name(mode);
    Table igd{"igd",
              {"mode", "run", "seed", "task", "instance", "igd", "initial_igd", "search_true_evals", "final_true_evals",
               "dataset_true_evals", "surrogate_flagged", "front_size"},
              {}};
    CommandResult res;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
    for (int r = 0; r < cfg.runs; ++r) {
        const auto seed = cfg.seed + static_cast<std::uint64_t>(r);
        seeds.emplace_back("optimize-" + m + "-run-" + std::to_string(r), seed);
        CountingEvaluator truth(suite);
        const auto out = optimize_once(suite, mode, cfg, seed, truth, qms ? &*qms : nullptr, &rbf);
        for (const auto& o : out.tasks) {
            const auto& task = suite.task(o.task_id);
            igd.rows.push_back({m, std::to_string(r), std::to_string(seed), std::to_string(o.task_id),
                                task.metadata.f_name, fmt(o.igd), fmt(o.initial_igd), std::to_string(o.search_true_evals),
                                std::to_string(o.final_true_evals), std::to_string(dataset_evals[o.task_id]),
                                std::to_string(o.flagged), std::to_string(o.front_true.size())});
            Table front{"front", {}, {}};
            for (int j = 0; j < task.k; ++j) {
                front.columns.push_back("f" + std::to_string(j + 1));
            }
            for (int j = 0; j < task.n; ++j) {
                front.columns.push_back("x" + std::to_string(j + 1));
            }
            for (std::size_t i = 0; i < o.front_true.size(); ++i) {
                std::vector<std::string> row;
                for (double v : o.front_true[i]) {
                    row.push_back(fmt(v));
                }
                for (double v : o.front_x[i]) {
                    row.push_back(fmt(v));
                }
                front.rows.push_back(std::move(row));
            }
            const auto fp = dir / "fronts" / m / ("run-" + std::to_string(r) + "-task-" + std::to_string(o.task_id) + ".tsv");
            write_table(front, fp);
            res.written.push_back(fp);
        }
        Table trace{"trace", {"generation", "task", "transfer", "source", "improved", "rew_hash"}, {}};
        for (const auto& t : out.trace) {
            trace.rows.push_back({std::to_string(t.generation), std::to_string(suite.tasks[static_cast<std::size_t>(t.task)].task_id),
                                  t.transfer ? "1" : "0",
                                  t.source < 0 ? "-" : std::to_string(suite.tasks[static_cast<std::size_t>(t.source)].task_id),
                                  t.improved ? "1" : "0", hex(t.rew_hash)});
        }
        const auto tp = dir / "trace" / (m + "-run-" + std::to_string(r) + ".tsv");
        write_table(trace, tp);
        res.written.push_back(tp);
    }
    for (const auto& t : suite.tasks) {
        Table pf{"front", {}, {}};
        for (int j = 0; j < t.k; ++j) {
            pf.columns.push_back("f" + std::to_string(j + 1));
        }
        for (const auto& p : tasks::true_pf(t, cfg.pf_points)) {
            std::vector<std::string> row;
            for (double v : p) {
                row.push_back(fmt(v));
            }
            pf.rows.push_back(std::move(row));
        }
        const auto pp = dir / "fronts" / ("true-task-" + std::to_string(t.task_id) + ".tsv");
        write_table(pf, pp);
        res.written.push_back(pp);
    }
    const auto ip = dir / "metrics" / ("igd-" + m + ".tsv");
    write_table(igd, ip);
    res.written.push_back(ip);
    append_seeds(dir, seeds);
    timing(dir, "optimize-" + m, now_seconds() - t0);
    return res;
}

auto cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) -> CommandResult {
    // instance -> mode -> run -> task -> igd
    std::map<std::string, std::map<std::string, std::map<int, std::map<int, double>>>> data;
    bool found = false;
    for (const auto& d : run_dirs) {
        for (auto m : {Mode::Real, Mode::QMetaSur, Mode::Rbfn}) {
            const auto p = d / "metrics" / ("igd-" + mode_name(m) + ".tsv");
            if (!fs::exists(p)) {
                continue;
            }
            found = true;
            const auto t = read_table(p, "igd");
            const auto col = [&](const std::string& name) {
                const auto it = std::find(t.columns.begin(), t.columns.end(), name);
                if (it == t.columns.end()) {
                    throw ParseError(p.string() + ": missing column " + name, 1);
                }
                return static_cast<std::size_t>(it - t.columns.begin());
            };
            const auto c_mode = col("mode");
            const auto c_run = col("run");
            const auto c_task = col("task");
            const auto c_inst = col("instance");
            const auto c_igd = col("igd");
            for (const auto& r : t.rows) {
                data[r[c_inst]][r[c_mode]][std::stoi(r[c_run])][std::stoi(r[c_task])] = parse_num(r[c_igd]);
            }
        }
    }
    if (!found) {
        throw ConfigError("missing artifact metrics/igd-<mode>.tsv in every given run directory (run optimize first)");
    }
    Table mss{"mss", {"instance", "method", "runs", "mss_mean", "mss_std", "verdict", "p"}, {}};
    for (const auto& [inst, modes] : data) {
        std::set<int> task_ids;
        for (const auto& [m, runs] : modes) {
            for (const auto& [r, per_task] : runs) {
                for (const auto& [t, v] : per_task) {
                    task_ids.insert(t);
                }
            }
        }
        const std::vector<int> tids(task_ids.begin(), task_ids.end());
        std::vector<std::vector<double>> pooled(tids.size());
        for (const auto& [m, runs] : modes) {
            for (const auto& [r, per_task] : runs) {
                for (std::size_t i = 0; i < tids.size(); ++i) {
                    const auto it = per_task.find(tids[i]);
                    if (it == per_task.end()) {
                        throw ArityError("report: run " + std::to_string(r) + " of " + m + " lacks task " +
                                         std::to_string(tids[i]));
                    }
                    pooled[i].push_back(it->second);
                }
            }
        }
        const auto st = metrics::standardizer(pooled);
        std::map<std::string, std::map<int, double>> scores;
        for (const auto& [m, runs] : modes) {
            for (const auto& [r, per_task] : runs) {
                std::vector<double> v;
                for (int t : tids) {
                    v.push_back(per_task.at(t));
                }
                scores[m][r] = metrics::mss(v, st);
            }
        }
        const std::string ref = scores.contains("qmetasur") ? "qmetasur" : scores.begin()->first;
        for (const auto& [m, per_run] : scores) {
            std::vector<double> vals;
            for (const auto& [r, v] : per_run) {
                vals.push_back(v);
            }
            const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) {
                var += (v - mean) * (v - mean);
            }
            const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
            std::string verdict = "ref";
            std::string p = "-";
            if (m != ref) {
                std::vector<double> a;
                std::vector<double> b;
                for (const auto& [r, v] : per_run) {
                    if (scores.at(ref).contains(r)) {
                        a.push_back(scores.at(ref).at(r));
                        b.push_back(v);
                    }
                }
                const auto w = metrics::wilcoxon_signed_rank(a, b);
                verdict = metrics::verdict_symbol(w.verdict);
                p = fmt(w.p);
            }
            mss.rows.push_back({inst, m, std::to_string(vals.size()), fmt(mean), fmt(sd), verdict, p});
        }
    }
    const auto path = out_dir / "mss.tsv";
    write_table(mss, path);
    return {{path}};
}

} // namespace qmetasur::pipeline
