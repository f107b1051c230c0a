#include "qmetasur/errors.hpp"
#include "qmetasur/rbfn.hpp"
#include "qmetasur/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qmetasur;
using namespace qmetasur::rbfn;

namespace {

auto random_points(std::size_t n, std::size_t d, std::uint64_t seed) -> std::vector<std::vector<double>> {
    auto rng = make_rng(seed, 0);
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    for (auto& x : X) {
        for (auto& v : x) {
            v = uniform(rng, 0.0, 1.0);
        }
    }
    return X;
}

} // namespace

TEST(Rbfn, ConstantTarget) {
    const auto X = random_points(30, 2, 1);
    const std::vector<double> y(30, 3.5);
    const auto m = rbfn_fit(X, y, 4);
    double mse = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double e = rbfn_predict(m, X[i]) - 3.5;
        mse += e * e / 30.0;
    }
    EXPECT_LE(mse, 1e-12);
    EXPECT_NEAR(rbfn_predict(m, std::vector<double>{0.33, 0.71}), 3.5, 1e-5);
}

TEST(Rbfn, InterpolatesWithOneCentrePerPoint) {
    const auto X = random_points(25, 3, 2);
    std::vector<double> y;
    for (const auto& x : X) {
        y.push_back(std::sin(3 * x[0]) + x[1] * x[2]);
    }
    const auto m = rbfn_fit_fixed(X, y, 25, 5);
    EXPECT_EQ(m.centers.rows(), 25);
    double sq = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double e = rbfn_predict(m, X[i]) - y[i];
        sq += e * e / 25.0;
        EXPECT_NEAR(rbfn_predict(m, X[i]), y[i], 1e-4);
    }
    EXPECT_LE(std::sqrt(sq), 1e-6);
}

TEST(Rbfn, LinearOneDimensional) {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
        const double x = i / 19.0;
        X.push_back({x});
        y.push_back(2 * x);
    }
    const auto m = rbfn_fit(X, y, 11);
    double sq = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double x = i / 200.0;
        const double e = rbfn_predict(m, std::vector<double>{x}) - 2 * x;
        sq += e * e / 201.0;
    }
    EXPECT_LE(std::sqrt(sq), 0.05);
}

TEST(Rbfn, FarFieldIsBias) {
    const auto X = random_points(40, 2, 3);
    std::vector<double> y;
    for (const auto& x : X) {
        y.push_back(x[0] - x[1]);
    }
    const auto m = rbfn_fit(X, y, 1);
    EXPECT_NEAR(rbfn_predict(m, std::vector<double>{1e3, -1e3}), m.weights(m.weights.size() - 1), 1e-12);
    for (Eigen::Index c = 0; c < m.widths.size(); ++c) {
        EXPECT_GT(m.widths(c), 0.0);
    }
}

TEST(Rbfn, Errors) {
    const auto X = random_points(10, 2, 4);
    const std::vector<double> y(10, 1.0);
    const auto m = rbfn_fit(X, y, 0);
    EXPECT_THROW((void)rbfn_predict(m, std::vector<double>{0.5}), ArityError);
    EXPECT_THROW((void)rbfn_fit(X, std::vector<double>(9, 1.0), 0), ArityError);
    const std::vector<std::vector<double>> same(8, std::vector<double>{0.2, 0.2});
    EXPECT_THROW((void)rbfn_fit(same, std::vector<double>(8, 1.0), 0), DegenerateError);
    EXPECT_THROW((void)rbfn_fit(std::vector<std::vector<double>>{{0.1, 0.1}}, std::vector<double>{1.0}, 0),
                 DegenerateError);
    EXPECT_THROW((void)kmeans_pp(Eigen::MatrixXd::Random(5, 2), 6, 10, 0), DomainError);
}

TEST(Rbfn, DeterministicAndOrderPreserving) {
    const auto X = random_points(50, 3, 5);
    std::vector<std::vector<double>> Y;
    for (const auto& x : X) {
        Y.push_back({x[0] + x[1], x[2] * x[2]});
    }
    const auto a = fit_surrogate(X, Y, 9);
    const auto b = fit_surrogate(X, Y, 9);
    ASSERT_EQ(a.objectives.size(), 2U);
    EXPECT_EQ(a.objectives[0].weights, b.objectives[0].weights);
    EXPECT_EQ(a.objectives[1].centers, b.objectives[1].centers);
    const auto Q = random_points(7, 3, 6);
    const auto batch = rbfn_predict_batch(a.objectives[0], Q);
    for (std::size_t i = 0; i < Q.size(); ++i) {
        EXPECT_EQ(batch[i], rbfn_predict(a.objectives[0], Q[i]));
        EXPECT_EQ(a.predict(Q[i])[1], rbfn_predict(a.objectives[1], Q[i]));
    }
}

TEST(Rbfn, CentreGridCappedAtN) {
    const auto X = random_points(8, 2, 7);
    std::vector<double> y;
    for (const auto& x : X) {
        y.push_back(x[0]);
    }
    const auto m = rbfn_fit(X, y, 2);
    EXPECT_LE(m.centers.rows(), 8);
    EXPECT_GE(m.centers.rows(), 1);
}

TEST(Kmeans, CentresAreDistinctDataRegions) {
    Eigen::MatrixXd X(6, 1);
    X << 0.0, 0.01, 0.02, 10.0, 10.01, 10.02;
    const auto C = kmeans_pp(X, 2, 100, 3);
    const double lo = std::min(C(0, 0), C(1, 0));
    const double hi = std::max(C(0, 0), C(1, 0));
    EXPECT_NEAR(lo, 0.01, 1e-12);
    EXPECT_NEAR(hi, 10.01, 1e-12);
}
