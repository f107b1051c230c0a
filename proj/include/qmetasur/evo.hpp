#pragma once

// MO-MaTDE: per-task NSGA-II/DE evolution with archive-guided cross-task transfer.
// Fitness comes from an injected oracle (true evaluator or any surrogate).

#include "qmetasur/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qmetasur::evo {

using Objectives = std::vector<double>;

struct Individual {
    std::vector<double> dec;
    Objectives obj;
    int rank = 0;
    double crowding = 0.0;
    bool flagged = false;
};

// a no worse in every objective and strictly better in at least one.
[[nodiscard]] auto dominates(std::span<const double> a, std::span<const double> b) -> bool;

[[nodiscard]] auto fast_nondominated_sort(std::span<const Objectives> objs) -> std::vector<std::vector<std::size_t>>;
// Distances for the members of one front, in the order given.
[[nodiscard]] auto crowding_distance(std::span<const Objectives> objs, std::span<const std::size_t> front)
    -> std::vector<double>;
// Fronts in order; the last admitted front is truncated by descending crowding, ties by lower index.
[[nodiscard]] auto nsga2_select(std::span<const Individual> pool, std::size_t N) -> std::vector<Individual>;
[[nodiscard]] auto nondominated(std::span<const Individual> pop) -> std::vector<Individual>;

struct DeRanges {
    double f_lo = 0.1;
    double f_hi = 1.0;
    double cr_lo = 0.1;
    double cr_hi = 0.9;
};

// DE/rand/1/bin; a mutant coordinate outside the box is replaced by the midpoint of
// the violated bound and the parent coordinate.
[[nodiscard]] auto de_generate(std::span<const Individual> pop, std::span<const double> lower,
                               std::span<const double> upper, Rng& rng, const DeRanges& ranges = {})
    -> std::vector<std::vector<double>>;

// Binomial crossover with at least one donor coordinate. A donor of another dimension
// is truncated, or padded with uniform draws inside the box.
[[nodiscard]] auto transfer_crossover(std::span<const double> x, std::span<const double> donor,
                                      std::span<const double> lower, std::span<const double> upper, Rng& rng,
                                      const DeRanges& ranges = {}) -> std::vector<double>;

using Archive = std::vector<std::vector<double>>;

// Roulette over rew[t,k] * 1 / (1 + KL(arc_t || arc_k)) of diagonal Gaussian fits.
// Scores are cached in pos. Falls back to a uniform choice when archives are empty.
[[nodiscard]] auto adaptive_choose(int t, std::span<const Archive> archives, const Eigen::MatrixXd& rew,
                                   Eigen::MatrixXd& pos, Rng& rng) -> int;
[[nodiscard]] auto gaussian_kl(const Archive& a, const Archive& b) -> double;

// Any offspring dominates a previous non-dominated member, or beats all of them on some objective.
[[nodiscard]] auto improved(std::span<const Individual> previous_front, std::span<const Individual> offspring) -> bool;

struct MaTdeParams {
    double im = 0.3;
    double a_up = 0.2;
    double shk = 0.8;
    int N = 20;
    int archive_cap = 300;
    DeRanges de;

    void validate() const;
};

struct TaskBox {
    std::vector<double> lower;
    std::vector<double> upper;
    [[nodiscard]] auto dim() const noexcept -> std::size_t { return lower.size(); }
};

struct Evaluation {
    Objectives obj;
    bool flagged = false;
};
// Evaluates a batch of decision vectors for task index t (0-based).
using Oracle = std::function<std::vector<Evaluation>(int t, std::span<const std::vector<double>> xs)>;

struct Budget {
    enum class Kind { Evaluations, Generations };
    Kind kind = Kind::Evaluations;
    long per_task = 200; // oracle calls per task (Evaluations) or generation count (Generations)
};

struct TraceRecord {
    int generation = 0;
    int task = 0;
    bool transfer = false;
    int source = -1;
    bool improved = false;
    std::uint64_t rew_hash = 0;
};

struct TaskResult {
    std::vector<Individual> initial_front;
    std::vector<Individual> population;
    std::vector<Individual> front;
    long evaluations = 0;
    std::size_t flagged = 0;
};

struct MaTdeResult {
    std::vector<TaskResult> tasks;
    std::vector<TraceRecord> trace;
    Eigen::MatrixXd rew;
    std::vector<std::size_t> archive_sizes;
    int generations = 0;
};

// The initial population (N per task) is always evaluated, so an evaluation budget at
// or below N returns the initial non-dominated sets.
[[nodiscard]] auto run_mo_matde(std::span<const TaskBox> tasks, const Oracle& oracle, const MaTdeParams& params,
                                const Budget& budget, std::uint64_t seed) -> MaTdeResult;

[[nodiscard]] auto fnv1a(const Eigen::MatrixXd& m) -> std::uint64_t;

} // namespace qmetasur::evo
