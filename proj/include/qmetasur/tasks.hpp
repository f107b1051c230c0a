#pragma once

// Rotated ZDT1-shaped multi-task benchmark family and the sensor-coverage problem.

#include "qmetasur/sne.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qmetasur::tasks {

enum class Family { Sphere, MeanScale, Rosenbrock, Rastrigin, Ackley, Griewank };

[[nodiscard]] auto family_name(Family f) -> std::string;
[[nodiscard]] auto parse_family(const std::string& name) -> Family;
// 1-based instance index used in the metadata ("instance=<k>").
[[nodiscard]] auto instance_index(Family f) noexcept -> int;

// Landscape g - 1 on the rotated tail coordinates; non-negative with root at z = 0.
[[nodiscard]] auto base_landscape(Family f, const Eigen::VectorXd& z) -> double;

struct TaskSpec {
    Family family = Family::Sphere;
    int task_id = 1;
    int n = 2;
    int k = 2;
    double lo = 0.0;
    double hi = 1.0;
    Eigen::MatrixXd rotation; // (n-1) x (n-1), orthogonal with det +1
    Eigen::VectorXd shift;    // n-1
    sne::Metadata metadata;

    [[nodiscard]] auto metadata_text() const -> std::string { return sne::render_metadata(metadata); }
    [[nodiscard]] auto lower() const -> std::vector<double> { return std::vector<double>(static_cast<std::size_t>(n), lo); }
    [[nodiscard]] auto upper() const -> std::vector<double> { return std::vector<double>(static_cast<std::size_t>(n), hi); }
    void validate() const;
};

struct MtmooSuite {
    std::vector<TaskSpec> tasks;
    std::uint64_t seed = 0;

    [[nodiscard]] auto size() const noexcept -> std::size_t { return tasks.size(); }
    [[nodiscard]] auto task(int task_id) const -> const TaskSpec&;
    void validate() const;
};

[[nodiscard]] auto make_suite(Family family, int T, int n, std::uint64_t seed) -> MtmooSuite;

// Random rotation: QR of a seeded Gaussian matrix, signs fixed so det = +1.
[[nodiscard]] auto random_rotation(int dim, std::uint64_t seed, std::uint64_t stream) -> Eigen::MatrixXd;

[[nodiscard]] auto evaluate(const TaskSpec& task, std::span<const double> x) -> std::vector<double>;

// Analytic front {(f1, 1 - sqrt(f1))}, f1 evenly spaced on [0, 1].
[[nodiscard]] auto true_pf(const TaskSpec& task, std::size_t n_points) -> std::vector<std::vector<double>>;

// Decision vector whose tail sits at the shifted optimum, with the given f1.
[[nodiscard]] auto optimal_point(const TaskSpec& task, double f1) -> std::vector<double>;

void save_suite(const MtmooSuite& suite, const std::filesystem::path& path);
[[nodiscard]] auto load_suite(const std::filesystem::path& path) -> MtmooSuite;

struct SensorProblem {
    int sensors = 1;
    int grid = 400;

    void validate() const;
    [[nodiscard]] auto dim() const noexcept -> int { return 3 * sensors; }
    [[nodiscard]] auto lower() const -> std::vector<double>;
    [[nodiscard]] auto upper() const -> std::vector<double>;
};

// x = (u_1, v_1, r_1, ..., u_S, v_S, r_S); returns (uncovered fraction, sensor cost).
[[nodiscard]] auto sensor_evaluate(const SensorProblem& p, std::span<const double> x) -> std::array<double, 2>;

} // namespace qmetasur::tasks
