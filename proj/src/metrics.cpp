#include "qmetasur/metrics.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qmetasur::metrics {

auto igd(std::span<const Point> reference, std::span<const Point> approx) -> double {
    if (reference.empty() || approx.empty()) {
        throw DomainError("IGD needs non-empty reference and approximation sets");
    }
    double total = 0.0;
    for (const auto& t : reference) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : approx) {
            if (a.size() != t.size()) {
                throw ArityError("IGD: objective vectors differ in length");
            }
            double s = 0.0;
            for (std::size_t j = 0; j < t.size(); ++j) {
                s += (t[j] - a[j]) * (t[j] - a[j]);
            }
            best = std::min(best, s);
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(reference.size());
}

auto smae(std::span<const double> preds, std::span<const double> targets, std::span<const int> groups) -> SmaeResult {
    if (preds.size() != targets.size() || groups.size() != targets.size()) {
        throw ArityError("sMAE: predictions, targets and groups differ in length");
    }
    std::map<int, std::vector<std::size_t>> idx;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        idx[groups[i]].push_back(i);
    }
    SmaeResult res;
    for (const auto& [g, rows] : idx) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (auto i : rows) {
            lo = std::min(lo, targets[i]);
            hi = std::max(hi, targets[i]);
        }
        const double range = hi - lo;
        if (!(range > 0.0)) {
            log::warn("sMAE: group " + std::to_string(g) + " has zero target range; skipped");
            res.skipped.push_back(g);
            continue;
        }
        double s = 0.0;
        for (auto i : rows) {
            s += std::fabs(targets[i] - preds[i]) / range;
        }
        res.per_group[g] = s / static_cast<double>(rows.size());
    }
    if (!res.per_group.empty()) {
        double s = 0.0;
        for (const auto& [g, v] : res.per_group) {
            s += v;
        }
        res.mean = s / static_cast<double>(res.per_group.size());
    }
    return res;
}

auto r2(std::span<const double> preds, std::span<const double> targets) -> double {
    if (preds.size() != targets.size()) {
        throw ArityError("R2: predictions and targets differ in length");
    }
    if (targets.size() < 2) {
        throw DomainError("R2 needs at least two targets");
    }
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    if (!(ss_tot > 0.0)) {
        throw DomainError("R2 undefined for zero-variance targets");
    }
    return 1.0 - ss_res / ss_tot;
}

auto standardizer(const std::vector<std::vector<double>>& pooled) -> Standardizer {
    Standardizer s;
    for (const auto& row : pooled) {
        if (row.empty()) {
            throw DomainError("MSS: empty pooled row");
        }
        const double mu = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
        double var = 0.0;
        for (double v : row) {
            var += (v - mu) * (v - mu);
        }
        s.mu.push_back(mu);
        s.sigma.push_back(std::sqrt(var / static_cast<double>(row.size())));
    }
    return s;
}

auto mss(std::span<const double> values, const Standardizer& s) -> double {
    if (values.size() != s.mu.size() || values.empty()) {
        throw ArityError("MSS: one value per task required");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (s.sigma[i] > 0.0) {
            total += (values[i] - s.mu[i]) / s.sigma[i];
        }
    }
    return total / static_cast<double>(values.size());
}

auto verdict_symbol(Verdict v) -> std::string {
    switch (v) {
    case Verdict::Better: return "+";
    case Verdict::Tie: return "≈";
    case Verdict::Worse: return "-";
    }
    return "≈";
}

auto wilcoxon_signed_rank(std::span<const double> reference, std::span<const double> other, double alpha)
    -> WilcoxonResult {
    if (reference.size() != other.size()) {
        throw ArityError("Wilcoxon: paired samples differ in length");
    }
    std::vector<double> d;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double diff = other[i] - reference[i];
        if (diff != 0.0) {
            d.push_back(diff);
        }
    }
    WilcoxonResult res;
    res.n = static_cast<int>(d.size());
    if (res.n < 6) {
        if (!reference.empty()) {
            log::warn("Wilcoxon: fewer than 6 non-zero differences; reporting no significant difference");
        }
        return res;
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::fabs(d[a]) < std::fabs(d[b]); });
    std::vector<double> rank(d.size());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            rank[order[k]] = avg;
        }
        const auto t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0) {
            res.w_plus += rank[i];
        }
    }
    const auto n = static_cast<double>(res.n);
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) {
        return res;
    }
    const double dev = res.w_plus - mean;
    const double corrected = std::max(0.0, std::fabs(dev) - 0.5);
    const double z = corrected / std::sqrt(var);
    res.p = std::erfc(z / std::sqrt(2.0));
    if (res.p < alpha) {
        res.verdict = dev > 0 ? Verdict::Better : Verdict::Worse;
    }
    return res;
}

} // namespace qmetasur::metrics
