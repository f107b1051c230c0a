#include "qmetasur/dataset.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace qmetasur::dataset {

auto ObjectiveRanges::deltas() const -> std::vector<double> {
    std::vector<double> d(y_min.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
        d[j] = delta(j);
    }
    return d;
}

auto ObjectiveRanges::midpoints() const -> std::vector<double> {
    std::vector<double> m(y_min.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] = 0.5 * (y_min[j] + y_max[j]);
    }
    return m;
}

auto OfflineDataset::task_ids() const -> std::vector<int> {
    std::vector<int> ids;
    for (const auto& s : samples) {
        if (std::find(ids.begin(), ids.end(), s.task_id) == ids.end()) {
            ids.push_back(s.task_id);
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

auto OfflineDataset::samples_of(int task_id) const -> std::vector<const Sample*> {
    std::vector<const Sample*> out;
    for (const auto& s : samples) {
        if (s.task_id == task_id) {
            out.push_back(&s);
        }
    }
    return out;
}

void OfflineDataset::recompute_ranges() {
    ranges.clear();
    for (const auto& s : samples) {
        auto [it, inserted] = ranges.try_emplace(s.task_id);
        auto& r = it->second;
        if (inserted) {
            r.y_min = s.y;
            r.y_max = s.y;
            continue;
        }
        for (std::size_t j = 0; j < s.y.size(); ++j) {
            r.y_min[j] = std::min(r.y_min[j], s.y[j]);
            r.y_max[j] = std::max(r.y_max[j], s.y[j]);
        }
    }
}

auto noise_name(NoiseLevel n) -> std::string {
    switch (n) {
    case NoiseLevel::Low: return "low";
    case NoiseLevel::Medium: return "medium";
    case NoiseLevel::High: return "high";
    }
    return "low";
}

auto parse_noise(const std::string& s) -> NoiseLevel {
    if (s == "low") {
        return NoiseLevel::Low;
    }
    if (s == "medium") {
        return NoiseLevel::Medium;
    }
    if (s == "high") {
        return NoiseLevel::High;
    }
    throw ConfigError("unknown noise level '" + s + "'");
}

void RewardConfig::validate() const {
    if (!(temperature > 0)) {
        throw ConfigError("reward temperature must be positive");
    }
    if (clip_lo > clip_hi) {
        throw ConfigError("reward clip interval is empty");
    }
}

auto lhs_sample(std::span<const double> lower, std::span<const double> upper, std::size_t N, std::uint64_t seed)
    -> std::vector<std::vector<double>> {
    if (N < 1) {
        throw DomainError("LHS needs at least one point");
    }
    if (lower.size() != upper.size()) {
        throw DomainError("LHS bound vectors differ in length");
    }
    auto rng = make_rng(seed, 0x1A5U);
    const std::size_t dim = lower.size();
    std::vector<std::vector<double>> pts(N, std::vector<double>(dim));
    std::vector<std::size_t> perm(N);
    for (std::size_t d = 0; d < dim; ++d) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const double w = upper[d] - lower[d];
        for (std::size_t i = 0; i < N; ++i) {
            const double u = uniform(rng, 0.0, 1.0);
            pts[i][d] = std::clamp(lower[d] + w * (static_cast<double>(perm[i]) + u) / static_cast<double>(N),
                                   lower[d], upper[d]);
        }
    }
    return pts;
}

auto build_offline(const tasks::MtmooSuite& suite, std::size_t n_per_task, SplitRatio ratio, std::uint64_t seed,
                   const Evaluator& evaluator) -> OfflineDataset {
    if (ratio.train < 1 || ratio.test < 0) {
        throw ConfigError("split ratio must be a:b with a >= 1, b >= 0");
    }
    const auto a = static_cast<std::size_t>(ratio.train);
    const auto b = static_cast<std::size_t>(ratio.test);
    const std::size_t n_total = (n_per_task * (a + b) + a - 1) / a;
    OfflineDataset ds;
    for (const auto& task : suite.tasks) {
        const auto lo = task.lower();
        const auto hi = task.upper();
        const auto pts = lhs_sample(lo, hi, n_total, seed * 1000003ULL + static_cast<std::uint64_t>(task.task_id));
        const auto meta = task.metadata_text();
        for (const auto& x : pts) {
            Sample s;
            s.task_id = task.task_id;
            s.metadata_text = meta;
            s.x = x;
            s.y = evaluator ? evaluator(task, x) : tasks::evaluate(task, x);
            ds.samples.push_back(std::move(s));
        }
    }
    ds.recompute_ranges();
    return ds;
}

auto split(const OfflineDataset& ds, SplitRatio ratio, std::uint64_t seed) -> std::pair<OfflineDataset, OfflineDataset> {
    if (ratio.train < 1 || ratio.test < 0) {
        throw ConfigError("split ratio must be a:b with a >= 1, b >= 0");
    }
    OfflineDataset train;
    OfflineDataset test;
    for (int t : ds.task_ids()) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            if (ds.samples[i].task_id == t) {
                idx.push_back(i);
            }
        }
        auto rng = make_rng(seed, static_cast<std::uint64_t>(t), 0x5B1U);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n_train = (idx.size() * static_cast<std::size_t>(ratio.train)) /
                                    static_cast<std::size_t>(ratio.train + ratio.test);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? train : test).samples.push_back(ds.samples[idx[i]]);
        }
    }
    train.recompute_ranges();
    test.ranges = train.ranges;
    return {std::move(train), std::move(test)};
}

auto nrmse(std::span<const double> y_hat, std::span<const double> y, std::span<const double> delta) -> double {
    if (y_hat.size() != y.size() || y.size() != delta.size() || y.empty()) {
        throw ArityError("nrmse: vectors must have equal, non-zero length");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double d = delta[j] > 0 ? delta[j] : 1.0;
        const double e = (y_hat[j] - y[j]) / d;
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

auto encodable(double v, const sne::SneConfig& sne_cfg) -> double {
    if (v != 0.0 && std::floor(std::log10(std::fabs(v))) < sne_cfg.exp_min) {
        return 0.0;
    }
    return v;
}

auto token_agreement(std::span<const double> y_hat, std::span<const double> y, const sne::SneConfig& sne_cfg)
    -> TokenAgreement {
    if (y_hat.size() != y.size() || y.empty()) {
        throw ArityError("token_agreement: vectors must have equal, non-zero length");
    }
    TokenAgreement acc;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const auto a = sne::encode_scalar(encodable(y_hat[j], sne_cfg), sne_cfg);
        const auto b = sne::encode_scalar(encodable(y[j], sne_cfg), sne_cfg);
        acc.sign += a.ids[0] == b.ids[0] ? 1.0 : 0.0;
        acc.exponent += a.ids[1] == b.ids[1] ? 1.0 : 0.0;
    }
    acc.sign /= static_cast<double>(y.size());
    acc.exponent /= static_cast<double>(y.size());
    return acc;
}

auto compute_reward(std::span<const double> y_hat, std::span<const double> y, std::span<const double> delta,
                    const RewardConfig& cfg, const sne::SneConfig& sne_cfg) -> double {
    const double err = nrmse(y_hat, y, delta);
    const auto acc = token_agreement(y_hat, y, sne_cfg);
    const double r = std::exp(-err / cfg.temperature) + cfg.kappa_exp * acc.exponent + cfg.kappa_sgn * acc.sign;
    return std::clamp(r, cfg.clip_lo, cfg.clip_hi);
}

auto perturb_labels(const Sample& sample, std::size_t parent, const AugmentCounts& counts,
                    const ObjectiveRanges& ranges, Rng& rng, const RewardConfig& reward_cfg,
                    const sne::SneConfig& sne_cfg) -> std::vector<AugmentedSample> {
    const std::size_t k = sample.y.size();
    if (ranges.y_min.size() != k) {
        throw ArityError("perturb_labels: ranges do not match the objective count");
    }
    const auto delta = ranges.deltas();
    if (std::any_of(delta.begin(), delta.end(), [](double d) { return d <= 0; })) {
        log::warn("task " + std::to_string(sample.task_id) +
                  " has a constant objective; low/high noise degenerate to the label");
    }
    std::vector<AugmentedSample> out;
    out.reserve(static_cast<std::size_t>(counts.low + counts.medium + counts.high));
    auto emit = [&](NoiseLevel level, int count) {
        for (int c = 0; c < count; ++c) {
            AugmentedSample a;
            a.parent = parent;
            a.noise = level;
            a.y_tilde.resize(k);
            for (std::size_t j = 0; j < k; ++j) {
                const double y = sample.y[j];
                const double lo = ranges.y_min[j] - 0.3 * delta[j];
                const double hi = ranges.y_max[j] + 0.3 * delta[j];
                double v = y;
                switch (level) {
                case NoiseLevel::Low:
                    if (delta[j] > 0) {
                        v = y + normal(rng, 0.0, 0.01 * delta[j]);
                    }
                    break;
                case NoiseLevel::Medium:
                    if (y != 0.0) {
                        const double eps = normal(rng, 0.0, 0.15);
                        v = std::copysign(std::pow(10.0, std::log10(std::fabs(y)) + eps), y);
                    }
                    break;
                case NoiseLevel::High:
                    if (delta[j] > 0) {
                        v = uniform(rng, lo, hi);
                    }
                    break;
                }
                a.y_tilde[j] = encodable(delta[j] > 0 ? std::clamp(v, lo, hi) : v, sne_cfg);
            }
            a.reward = compute_reward(a.y_tilde, sample.y, delta, reward_cfg, sne_cfg);
            out.push_back(std::move(a));
        }
    };
    emit(NoiseLevel::Low, counts.low);
    emit(NoiseLevel::Medium, counts.medium);
    emit(NoiseLevel::High, counts.high);
    return out;
}

auto augment(const OfflineDataset& ds, const AugmentCounts& counts, std::uint64_t seed, const RewardConfig& reward_cfg,
             const sne::SneConfig& sne_cfg) -> std::vector<AugmentedSample> {
    std::vector<AugmentedSample> out;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        auto rng = make_rng(seed, static_cast<std::uint64_t>(s.task_id), i, 0xA46U);
        auto aug = perturb_labels(s, i, counts, ds.ranges.at(s.task_id), rng, reward_cfg, sne_cfg);
        out.insert(out.end(), std::make_move_iterator(aug.begin()), std::make_move_iterator(aug.end()));
    }
    return out;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path, std::span<const AugmentedSample> augmented) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write dataset file " + path.string());
    }
    nlohmann::json header;
    header["schema"] = "qmetasur.dataset";
    header["version"] = 1;
    for (const auto& [t, r] : ds.ranges) {
        header["ranges"][std::to_string(t)] = {{"y_min", r.y_min}, {"y_max", r.y_max}};
    }
    out << header.dump() << '\n';
    for (const auto& s : ds.samples) {
        nlohmann::json rec = {{"task_id", s.task_id}, {"metadata", s.metadata_text}, {"x", s.x}, {"y", s.y}};
        out << rec.dump() << '\n';
    }
    for (const auto& a : augmented) {
        const auto& s = ds.samples.at(a.parent);
        nlohmann::json rec = {{"task_id", s.task_id},   {"metadata", s.metadata_text},
                              {"x", s.x},               {"y", s.y},
                              {"parent", a.parent},     {"y_tilde", a.y_tilde},
                              {"reward", a.reward},     {"noise_level", noise_name(a.noise)}};
        out << rec.dump() << '\n';
    }
}

auto load_dataset(const std::filesystem::path& path) -> LoadedDataset {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dataset file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(path.string() + " is empty");
    }
    const auto header = nlohmann::json::parse(line);
    if (header.value("schema", "") != "qmetasur.dataset" || header.value("version", 0) != 1) {
        throw ConfigError(path.string() + " has no dataset schema header");
    }
    LoadedDataset out;
    if (header.contains("ranges")) {
        for (const auto& [key, r] : header["ranges"].items()) {
            out.data.ranges[std::stoi(key)] = {r.at("y_min").get<std::vector<double>>(),
                                               r.at("y_max").get<std::vector<double>>()};
        }
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto rec = nlohmann::json::parse(line);
        if (rec.contains("y_tilde")) {
            AugmentedSample a;
            a.parent = rec.at("parent").get<std::size_t>();
            a.y_tilde = rec.at("y_tilde").get<std::vector<double>>();
            a.reward = rec.at("reward").get<double>();
            a.noise = parse_noise(rec.at("noise_level").get<std::string>());
            out.augmented.push_back(std::move(a));
            continue;
        }
        Sample s;
        s.task_id = rec.at("task_id").get<int>();
        s.metadata_text = rec.at("metadata").get<std::string>();
        s.x = rec.at("x").get<std::vector<double>>();
        s.y = rec.at("y").get<std::vector<double>>();
        out.data.samples.push_back(std::move(s));
    }
    return out;
}

} // namespace qmetasur::dataset
