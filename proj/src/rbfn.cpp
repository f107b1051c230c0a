#include "qmetasur/rbfn.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qmetasur::rbfn {

namespace {

auto to_matrix(std::span<const std::vector<double>> X) -> Eigen::MatrixXd {
    if (X.empty()) {
        throw DegenerateError("RBFN needs at least one training point");
    }
    const auto n = static_cast<Eigen::Index>(X.front().size());
    Eigen::MatrixXd M(static_cast<Eigen::Index>(X.size()), n);
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (static_cast<Eigen::Index>(X[i].size()) != n) {
            throw ArityError("RBFN: training points differ in dimension");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            M(static_cast<Eigen::Index>(i), j) = X[i][static_cast<std::size_t>(j)];
        }
    }
    return M;
}

auto mean_pairwise_distance(const Eigen::MatrixXd& X) -> double {
    double s = 0.0;
    long cnt = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
            s += (X.row(i) - X.row(j)).norm();
            ++cnt;
        }
    }
    return cnt > 0 ? s / static_cast<double>(cnt) : 0.0;
}

auto design(const RbfnModel& m, const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
    const auto C = m.centers.rows();
    Eigen::MatrixXd phi(X.rows(), C + 1);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index c = 0; c < C; ++c) {
            const double d2 = (X.row(i) - m.centers.row(c)).squaredNorm();
            phi(i, c) = std::exp(-d2 / (2.0 * m.widths(c) * m.widths(c)));
        }
        phi(i, C) = 1.0;
    }
    return phi;
}

auto fit_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int C, std::uint64_t seed, const FitOptions& opt)
    -> RbfnModel {
    C = std::clamp(C, 1, static_cast<int>(X.rows()));
    RbfnModel m;
    m.centers = kmeans_pp(X, C, opt.kmeans_iters, seed);
    const double fallback = mean_pairwise_distance(X);
    m.widths.resize(C);
    for (int c = 0; c < C; ++c) {
        std::vector<double> d;
        for (int o = 0; o < C; ++o) {
            if (o != c) {
                d.push_back((m.centers.row(c) - m.centers.row(o)).norm());
            }
        }
        std::sort(d.begin(), d.end());
        const auto k = std::min<std::size_t>(3, d.size());
        double w = k > 0 ? std::accumulate(d.begin(), d.begin() + static_cast<long>(k), 0.0) / static_cast<double>(k)
                         : fallback;
        if (!(w > 0.0)) {
            w = fallback;
        }
        m.widths(c) = w;
    }
    // Ridge least squares through the stacked system [phi; sqrt(l) I] w = [y; 0].
    const Eigen::MatrixXd phi = design(m, X);
    const auto p = phi.cols();
    Eigen::MatrixXd A(phi.rows() + p, p);
    A << phi, std::sqrt(opt.ridge) * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(phi.rows() + p);
    b.head(phi.rows()) = y;
    m.weights = A.colPivHouseholderQr().solve(b);
    return m;
}

} // namespace

auto kmeans_pp(const Eigen::MatrixXd& X, int C, int max_iters, std::uint64_t seed) -> Eigen::MatrixXd {
    const auto N = X.rows();
    if (C < 1 || C > N) {
        throw DomainError("k-means++: centre count must lie in [1, N]");
    }
    auto rng = make_rng(seed, 0x4B3U);
    Eigen::MatrixXd centers(C, X.cols());
    centers.row(0) = X.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(N))));
    std::vector<double> d2(static_cast<std::size_t>(N), std::numeric_limits<double>::infinity());
    for (int c = 1; c < C; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) {
            auto& di = d2[static_cast<std::size_t>(i)];
            di = std::min(di, (X.row(i) - centers.row(c - 1)).squaredNorm());
            total += di;
        }
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::discrete_distribution<Eigen::Index> dist(d2.begin(), d2.end());
            pick = dist(rng);
        } else {
            pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(N)));
        }
        centers.row(c) = X.row(pick);
    }
    std::vector<int> assign(static_cast<std::size_t>(N), -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < N; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) {
                const double d = (X.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(C, X.cols());
        std::vector<int> counts(static_cast<std::size_t>(C), 0);
        for (Eigen::Index i = 0; i < N; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < C; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
            }
        }
    }
    return centers;
}

auto rbfn_fit_fixed(std::span<const std::vector<double>> X, std::span<const double> y, int C, std::uint64_t seed,
                    const FitOptions& opt) -> RbfnModel {
    const auto M = to_matrix(X);
    if (y.size() != X.size()) {
        throw ArityError("RBFN: one target per training point required");
    }
    return fit_matrix(M, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())), C, seed, opt);
}

auto rbfn_fit(std::span<const std::vector<double>> X, std::span<const double> y, std::uint64_t seed,
              const FitOptions& opt) -> RbfnModel {
    if (X.size() < 2) {
        throw DegenerateError("RBFN needs at least two training points");
    }
    if (y.size() != X.size()) {
        throw ArityError("RBFN: one target per training point required");
    }
    const auto M = to_matrix(X);
    bool identical = true;
    for (Eigen::Index i = 1; i < M.rows() && identical; ++i) {
        identical = M.row(i) == M.row(0);
    }
    if (identical) {
        throw DegenerateError("RBFN: all training points are identical");
    }
    const Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const auto N = static_cast<std::size_t>(M.rows());
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed, 0x7A1U);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.val_fraction * static_cast<double>(N))));
    const auto n_tr = N - n_val;

    std::vector<int> grid;
    for (int c : opt.center_grid) {
        grid.push_back(std::clamp(c, 1, static_cast<int>(std::max<std::size_t>(n_tr, 1))));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty()) {
        throw ConfigError("RBFN centre grid is empty");
    }
    int best_c = grid.front();
    if (grid.size() > 1 && n_tr >= 1) {
        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(n_tr), M.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(n_tr));
        Eigen::MatrixXd Xva(static_cast<Eigen::Index>(n_val), M.cols());
        Eigen::VectorXd yva(static_cast<Eigen::Index>(n_val));
        for (std::size_t i = 0; i < N; ++i) {
            const auto src = static_cast<Eigen::Index>(perm[i]);
            if (i < n_tr) {
                Xtr.row(static_cast<Eigen::Index>(i)) = M.row(src);
                ytr(static_cast<Eigen::Index>(i)) = Y(src);
            } else {
                Xva.row(static_cast<Eigen::Index>(i - n_tr)) = M.row(src);
                yva(static_cast<Eigen::Index>(i - n_tr)) = Y(src);
            }
        }
        double best = std::numeric_limits<double>::infinity();
        bool train_identical = true;
        for (Eigen::Index i = 1; i < Xtr.rows() && train_identical; ++i) {
            train_identical = Xtr.row(i) == Xtr.row(0);
        }
        for (int c : train_identical ? std::vector<int>{} : grid) {
            const auto m = fit_matrix(Xtr, ytr, c, seed + static_cast<std::uint64_t>(c), opt);
            const double err = (design(m, Xva) * m.weights - yva).squaredNorm();
            if (err < best) {
                best = err;
                best_c = c;
            }
        }
    }
    return fit_matrix(M, Y, best_c, seed, opt);
}

auto rbfn_predict(const RbfnModel& m, std::span<const double> x) -> double {
    if (static_cast<Eigen::Index>(x.size()) != m.centers.cols()) {
        throw ArityError("RBFN: input dimension " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(m.centers.cols()));
    }
    const Eigen::RowVectorXd xv = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const auto C = m.centers.rows();
    double out = m.weights(C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const double d2 = (xv - m.centers.row(c)).squaredNorm();
        out += m.weights(c) * std::exp(-d2 / (2.0 * m.widths(c) * m.widths(c)));
    }
    return out;
}

auto rbfn_predict_batch(const RbfnModel& m, std::span<const std::vector<double>> xs) -> std::vector<double> {
    std::vector<double> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        out.push_back(rbfn_predict(m, x));
    }
    return out;
}

auto RbfnSurrogate::predict(std::span<const double> x) const -> std::vector<double> {
    std::vector<double> out;
    for (const auto& m : objectives) {
        out.push_back(rbfn_predict(m, x));
    }
    return out;
}

auto fit_surrogate(std::span<const std::vector<double>> X, std::span<const std::vector<double>> Y, std::uint64_t seed,
                   const FitOptions& opt) -> RbfnSurrogate {
    if (Y.empty() || Y.size() != X.size()) {
        throw ArityError("RBFN surrogate: one objective vector per point required");
    }
    RbfnSurrogate s;
    for (std::size_t j = 0; j < Y.front().size(); ++j) {
        std::vector<double> yj;
        for (const auto& row : Y) {
            yj.push_back(row.at(j));
        }
        s.objectives.push_back(rbfn_fit(X, yj, seed + 7919ULL * j, opt));
    }
    return s;
}

} // namespace qmetasur::rbfn
