#pragma once

// Gaussian radial-basis-function network baseline: k-means++ centres, nearest-centre
// widths and ridge least-squares output weights, one model per (task, objective).

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace qmetasur::rbfn {

struct RbfnModel {
    Eigen::MatrixXd centers;   // C x n
    Eigen::VectorXd widths;    // C
    Eigen::VectorXd weights;   // C + 1, bias last
};

struct FitOptions {
    std::vector<int> center_grid = {5, 10, 20, 40};
    double ridge = 1e-8;
    int kmeans_iters = 100;
    double val_fraction = 0.2;
};

// Fixed centre count, all points used for the fit.
[[nodiscard]] auto rbfn_fit_fixed(std::span<const std::vector<double>> X, std::span<const double> y, int C,
                                  std::uint64_t seed, const FitOptions& opt = {}) -> RbfnModel;
// Centre count chosen on a seeded validation split, then refit on all points.
[[nodiscard]] auto rbfn_fit(std::span<const std::vector<double>> X, std::span<const double> y, std::uint64_t seed,
                            const FitOptions& opt = {}) -> RbfnModel;
[[nodiscard]] auto rbfn_predict(const RbfnModel& m, std::span<const double> x) -> double;
[[nodiscard]] auto rbfn_predict_batch(const RbfnModel& m, std::span<const std::vector<double>> xs)
    -> std::vector<double>;

[[nodiscard]] auto kmeans_pp(const Eigen::MatrixXd& X, int C, int max_iters, std::uint64_t seed) -> Eigen::MatrixXd;

// One model per objective of a task.
struct RbfnSurrogate {
    std::vector<RbfnModel> objectives;
    [[nodiscard]] auto predict(std::span<const double> x) const -> std::vector<double>;
};
[[nodiscard]] auto fit_surrogate(std::span<const std::vector<double>> X, std::span<const std::vector<double>> Y,
                                 std::uint64_t seed, const FitOptions& opt = {}) -> RbfnSurrogate;

} // namespace qmetasur::rbfn
