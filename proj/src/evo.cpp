#include "qmetasur/evo.hpp"

#include "qmetasur/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace qmetasur::evo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kVarFloor = 1e-12;
constexpr double kRewMin = 1e-12;
constexpr double kRewMax = 1e12;

auto objectives_of(std::span<const Individual> pop) -> std::vector<Objectives> {
    std::vector<Objectives> out;
    out.reserve(pop.size());
    for (const auto& ind : pop) {
        out.push_back(ind.obj);
    }
    return out;
}

struct Gaussian {
    std::vector<double> mean;
    std::vector<double> var;
};

auto fit_gaussian(const Archive& a, std::size_t dim) -> Gaussian {
    Gaussian g{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    const auto n = static_cast<double>(a.size());
    for (const auto& x : a) {
        for (std::size_t j = 0; j < dim; ++j) {
            g.mean[j] += x[j] / n;
        }
    }
    for (const auto& x : a) {
        for (std::size_t j = 0; j < dim; ++j) {
            g.var[j] += (x[j] - g.mean[j]) * (x[j] - g.mean[j]) / n;
        }
    }
    for (auto& v : g.var) {
        v = std::max(v, kVarFloor);
    }
    return g;
}

auto evaluate_into(const Oracle& oracle, int t, std::vector<std::vector<double>> xs) -> std::vector<Individual> {
    if (xs.empty()) {
        return {};
    }
    auto evals = oracle(t, xs);
    if (evals.size() != xs.size()) {
        throw ArityError("oracle returned " + std::to_string(evals.size()) + " evaluations for " +
                         std::to_string(xs.size()) + " points");
    }
    std::vector<Individual> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i].dec = std::move(xs[i]);
        out[i].obj = std::move(evals[i].obj);
        out[i].flagged = evals[i].flagged;
    }
    return out;
}

} // namespace

auto dominates(std::span<const double> a, std::span<const double> b) -> bool {
    if (a.size() != b.size()) {
        throw ArityError("dominance: objective vectors differ in length");
    }
    bool strict = false;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] > b[j]) {
            return false;
        }
        strict = strict || a[j] < b[j];
    }
    return strict;
}

auto fast_nondominated_sort(std::span<const Objectives> objs) -> std::vector<std::vector<std::size_t>> {
    const auto n = objs.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<int> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) {
                continue;
            }
            if (dominates(objs[p], objs[q])) {
                dominated[p].push_back(q);
            } else if (dominates(objs[q], objs[p])) {
                ++count[p];
            }
        }
        if (count[p] == 0) {
            current.push_back(p);
        }
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto p : current) {
            for (auto q : dominated[p]) {
                if (--count[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

auto crowding_distance(std::span<const Objectives> objs, std::span<const std::size_t> front) -> std::vector<double> {
    const auto m = front.size();
    std::vector<double> dist(m, 0.0);
    if (m <= 2) {
        std::fill(dist.begin(), dist.end(), kInf);
        return dist;
    }
    const auto k = objs[front[0]].size();
    std::vector<std::size_t> order(m);
    for (std::size_t j = 0; j < k; ++j) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return objs[front[a]][j] < objs[front[b]][j]; });
        const double lo = objs[front[order.front()]][j];
        const double hi = objs[front[order.back()]][j];
        dist[order.front()] = kInf;
        dist[order.back()] = kInf;
        if (!(hi > lo)) {
            continue;
        }
        for (std::size_t i = 1; i + 1 < m; ++i) {
            dist[order[i]] += (objs[front[order[i + 1]]][j] - objs[front[order[i - 1]]][j]) / (hi - lo);
        }
    }
    return dist;
}

auto nsga2_select(std::span<const Individual> pool, std::size_t N) -> std::vector<Individual> {
    const auto objs = objectives_of(pool);
    const auto fronts = fast_nondominated_sort(objs);
    std::vector<Individual> out;
    out.reserve(std::min(N, pool.size()));
    for (std::size_t r = 0; r < fronts.size() && out.size() < N; ++r) {
        const auto& f = fronts[r];
        const auto dist = crowding_distance(objs, f);
        std::vector<std::size_t> order(f.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (dist[a] != dist[b]) {
                return dist[a] > dist[b];
            }
            return f[a] < f[b];
        });
        for (auto i : order) {
            if (out.size() == N) {
                break;
            }
            Individual ind = pool[f[i]];
            ind.rank = static_cast<int>(r);
            ind.crowding = dist[i];
            out.push_back(std::move(ind));
        }
    }
    return out;
}

auto nondominated(std::span<const Individual> pop) -> std::vector<Individual> {
    std::vector<Individual> out;
    if (pop.empty()) {
        return out;
    }
    const auto objs = objectives_of(pop);
    const auto fronts = fast_nondominated_sort(objs);
    for (auto i : fronts.front()) {
        out.push_back(pop[i]);
    }
    return out;
}

auto de_generate(std::span<const Individual> pop, std::span<const double> lower, std::span<const double> upper,
                 Rng& rng, const DeRanges& ranges) -> std::vector<std::vector<double>> {
    const auto n = pop.size();
    if (n < 4) {
        throw DegenerateError("DE/rand/1 needs a population of at least 4, got " + std::to_string(n));
    }
    const auto dim = lower.size();
    std::vector<std::vector<double>> offs;
    offs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double F = ranges.f_lo == ranges.f_hi ? ranges.f_lo : uniform(rng, ranges.f_lo, ranges.f_hi);
        const double CR = ranges.cr_lo == ranges.cr_hi ? ranges.cr_lo : uniform(rng, ranges.cr_lo, ranges.cr_hi);
        std::size_t r[3];
        for (int k = 0; k < 3; ++k) {
            std::size_t c = 0;
            do {
                c = uniform_index(rng, n);
            } while (c == i || std::find(r, r + k, c) != r + k);
            r[k] = c;
        }
        const auto& x = pop[i].dec;
        const auto forced = uniform_index(rng, dim);
        std::vector<double> u(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            double v = pop[r[0]].dec[j] + F * (pop[r[1]].dec[j] - pop[r[2]].dec[j]);
            if (v < lower[j]) {
                v = 0.5 * (lower[j] + x[j]);
            } else if (v > upper[j]) {
                v = 0.5 * (upper[j] + x[j]);
            }
            u[j] = (j == forced || uniform(rng, 0.0, 1.0) < CR) ? v : x[j];
        }
        offs.push_back(std::move(u));
    }
    return offs;
}

auto transfer_crossover(std::span<const double> x, std::span<const double> donor, std::span<const double> lower,
                        std::span<const double> upper, Rng& rng, const DeRanges& ranges) -> std::vector<double> {
    const auto dim = x.size();
    std::vector<double> d(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        d[j] = j < donor.size() ? std::clamp(donor[j], lower[j], upper[j]) : uniform(rng, lower[j], upper[j]);
    }
    const double CR = ranges.cr_lo == ranges.cr_hi ? ranges.cr_lo : uniform(rng, ranges.cr_lo, ranges.cr_hi);
    const auto forced = uniform_index(rng, dim);
    std::vector<double> u(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        u[j] = (j == forced || uniform(rng, 0.0, 1.0) < CR) ? d[j] : x[j];
    }
    return u;
}

auto gaussian_kl(const Archive& a, const Archive& b) -> double {
    if (a.empty() || b.empty()) {
        throw DomainError("KL needs non-empty archives");
    }
    const auto dim = std::min(a.front().size(), b.front().size());
    const auto p = fit_gaussian(a, dim);
    const auto q = fit_gaussian(b, dim);
    double kl = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double dm = q.mean[j] - p.mean[j];
        kl += 0.5 * (std::log(q.var[j] / p.var[j]) + (p.var[j] + dm * dm) / q.var[j] - 1.0);
    }
    return std::max(kl, 0.0);
}

auto adaptive_choose(int t, std::span<const Archive> archives, const Eigen::MatrixXd& rew, Eigen::MatrixXd& pos,
                     Rng& rng) -> int {
    const auto T = static_cast<int>(archives.size());
    if (T < 2) {
        throw DomainError("transfer needs at least two tasks");
    }
    std::vector<int> cand;
    std::vector<double> score;
    if (!archives[static_cast<std::size_t>(t)].empty()) {
        for (int k = 0; k < T; ++k) {
            if (k == t || archives[static_cast<std::size_t>(k)].empty()) {
                continue;
            }
            const double sim =
                1.0 / (1.0 + gaussian_kl(archives[static_cast<std::size_t>(t)], archives[static_cast<std::size_t>(k)]));
            const double s = rew(t, k) * sim;
            pos(t, k) = s;
            cand.push_back(k);
            score.push_back(s);
        }
    }
    const double total = std::accumulate(score.begin(), score.end(), 0.0);
    if (cand.empty() || !(total > 0.0) || !std::isfinite(total)) {
        const auto k = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(T - 1)));
        return k >= t ? k + 1 : k;
    }
    std::discrete_distribution<std::size_t> dist(score.begin(), score.end());
    return cand[dist(rng)];
}

auto improved(std::span<const Individual> previous_front, std::span<const Individual> offspring) -> bool {
    if (previous_front.empty()) {
        return !offspring.empty();
    }
    const auto k = previous_front.front().obj.size();
    for (const auto& o : offspring) {
        for (const auto& p : previous_front) {
            if (dominates(o.obj, p.obj)) {
                return true;
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            bool beats_all = true;
            for (const auto& p : previous_front) {
                if (!(o.obj[j] < p.obj[j])) {
                    beats_all = false;
                    break;
                }
            }
            if (beats_all) {
                return true;
            }
        }
    }
    return false;
}

void MaTdeParams::validate() const {
    std::vector<std::string> bad;
    if (!(im >= 0.0 && im <= 1.0)) {
        bad.emplace_back("im must lie in [0, 1]");
    }
    if (!(a_up >= 0.0 && a_up <= 1.0)) {
        bad.emplace_back("aUp must lie in [0, 1]");
    }
    if (!(shk > 0.0 && shk < 1.0)) {
        bad.emplace_back("shk must lie in (0, 1)");
    }
    if (N < 4) {
        bad.emplace_back("N must be at least 4");
    }
    if (archive_cap < 1) {
        bad.emplace_back("archive capacity must be positive");
    }
    if (!(de.f_lo <= de.f_hi) || !(de.cr_lo <= de.cr_hi) || de.cr_lo < 0.0 || de.cr_hi > 1.0) {
        bad.emplace_back("DE parameter ranges are inverted or outside [0, 1]");
    }
    if (!bad.empty()) {
        std::string msg = "invalid MaTDE parameters:";
        for (const auto& b : bad) {
            msg += " " + b + ";";
        }
        throw ConfigError(msg);
    }
}

auto fnv1a(const Eigen::MatrixXd& m) -> std::uint64_t {
    std::uint64_t h = 14695981039346656037ULL;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            auto bits = std::bit_cast<std::uint64_t>(m(i, j));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xFFU;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

auto run_mo_matde(std::span<const TaskBox> tasks, const Oracle& oracle, const MaTdeParams& params, const Budget& budget,
                  std::uint64_t seed) -> MaTdeResult {
    params.validate();
    const auto T = static_cast<int>(tasks.size());
    if (T < 1) {
        throw DomainError("MaTDE needs at least one task");
    }
    for (const auto& b : tasks) {
        if (b.dim() == 0 || b.upper.size() != b.dim()) {
            throw ArityError("task box has mismatched or empty bounds");
        }
    }
    const auto N = static_cast<std::size_t>(params.N);
    const bool by_evals = budget.kind == Budget::Kind::Evaluations;
    auto rng = make_rng(seed, 0xE70U);

    MaTdeResult res;
    res.tasks.resize(static_cast<std::size_t>(T));
    res.rew = Eigen::MatrixXd::Ones(T, T);
    Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(T, T);
    std::vector<Archive> arc(static_cast<std::size_t>(T));
    std::vector<std::vector<Individual>> pop(static_cast<std::size_t>(T));

    auto charge = [&](int t, std::vector<std::vector<double>> xs) {
        auto& tr = res.tasks[static_cast<std::size_t>(t)];
        if (by_evals) {
            const long left = std::max(0L, budget.per_task - tr.evaluations);
            if (static_cast<long>(xs.size()) > left) {
                xs.resize(static_cast<std::size_t>(left));
            }
        }
        auto inds = evaluate_into(oracle, t, std::move(xs));
        tr.evaluations += static_cast<long>(inds.size());
        for (const auto& ind : inds) {
            tr.flagged += ind.flagged ? 1U : 0U;
        }
        return inds;
    };

    for (int t = 0; t < T; ++t) {
        const auto& box = tasks[static_cast<std::size_t>(t)];
        std::vector<std::vector<double>> xs(N, std::vector<double>(box.dim()));
        for (auto& x : xs) {
            for (std::size_t j = 0; j < box.dim(); ++j) {
                x[j] = uniform(rng, box.lower[j], box.upper[j]);
            }
        }
        // Initialization is always paid, whatever the budget.
        auto inds = evaluate_into(oracle, t, std::move(xs));
        auto& tr = res.tasks[static_cast<std::size_t>(t)];
        tr.evaluations += static_cast<long>(inds.size());
        for (const auto& ind : inds) {
            tr.flagged += ind.flagged ? 1U : 0U;
        }
        pop[static_cast<std::size_t>(t)] = nsga2_select(inds, N);
        tr.initial_front = nondominated(pop[static_cast<std::size_t>(t)]);
    }

    auto exhausted = [&] {
        if (!by_evals) {
            return res.generations >= budget.per_task;
        }
        return std::all_of(res.tasks.begin(), res.tasks.end(),
                           [&](const TaskResult& r) { return r.evaluations >= budget.per_task; });
    };

    while (!exhausted()) {
        for (int t = 0; t < T; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            const auto& box = tasks[ts];
            auto& P = pop[ts];
            if (by_evals && res.tasks[ts].evaluations >= budget.per_task) {
                continue;
            }
            TraceRecord rec;
            rec.generation = res.generations;
            rec.task = t;
            const double draw = uniform(rng, 0.0, 1.0);
            if (T < 2 || draw > params.im) {
                auto offs = charge(t, de_generate(P, box.lower, box.upper, rng, params.de));
                std::vector<Individual> pool = P;
                pool.insert(pool.end(), offs.begin(), offs.end());
                P = nsga2_select(pool, N);
            } else {
                const int src = adaptive_choose(t, arc, res.rew, pos, rng);
                const auto& D = pop[static_cast<std::size_t>(src)];
                std::vector<std::vector<double>> xs;
                xs.reserve(P.size());
                for (const auto& x : P) {
                    const auto& donor = D[uniform_index(rng, D.size())].dec;
                    xs.push_back(transfer_crossover(x.dec, donor, box.lower, box.upper, rng, params.de));
                }
                const auto before = nondominated(P);
                auto offs = charge(t, std::move(xs));
                std::vector<Individual> pool = P;
                pool.insert(pool.end(), offs.begin(), offs.end());
                P = nsga2_select(pool, N);
                rec.transfer = true;
                rec.source = src;
                rec.improved = improved(before, offs);
                double& r = res.rew(t, src);
                r = std::clamp(rec.improved ? r / params.shk : r * params.shk, kRewMin, kRewMax);
            }
            auto& A = arc[ts];
            for (const auto& x : P) {
                if (uniform(rng, 0.0, 1.0) < params.a_up) {
                    if (A.size() < static_cast<std::size_t>(params.archive_cap)) {
                        A.push_back(x.dec);
                    } else {
                        A[uniform_index(rng, A.size())] = x.dec;
                    }
                }
            }
            rec.rew_hash = fnv1a(res.rew);
            res.trace.push_back(rec);
        }
        ++res.generations;
    }

    for (int t = 0; t < T; ++t) {
        auto& tr = res.tasks[static_cast<std::size_t>(t)];
        tr.population = pop[static_cast<std::size_t>(t)];
        tr.front = nondominated(tr.population);
        res.archive_sizes.push_back(arc[static_cast<std::size_t>(t)].size());
    }
    return res;
}

} // namespace qmetasur::evo
