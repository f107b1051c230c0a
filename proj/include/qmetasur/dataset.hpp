#pragma once

// Offline data: Latin hypercube designs, train/test splits, objective ranges,
// perturb-and-score label augmentation, and the sequence-level reward.

#include "qmetasur/rng.hpp"
#include "qmetasur/sne.hpp"
#include "qmetasur/tasks.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qmetasur::dataset {

struct Sample {
    int task_id = 1;
    std::string metadata_text;
    std::vector<double> x;
    std::vector<double> y;
};

// Per-objective empirical range of one task.
struct ObjectiveRanges {
    std::vector<double> y_min;
    std::vector<double> y_max;

    [[nodiscard]] auto delta(std::size_t j) const -> double { return y_max[j] - y_min[j]; }
    [[nodiscard]] auto deltas() const -> std::vector<double>;
    [[nodiscard]] auto midpoints() const -> std::vector<double>;
};

struct OfflineDataset {
    std::vector<Sample> samples;
    std::map<int, ObjectiveRanges> ranges; // keyed by task id

    [[nodiscard]] auto task_ids() const -> std::vector<int>;
    [[nodiscard]] auto samples_of(int task_id) const -> std::vector<const Sample*>;
    void recompute_ranges();
};

enum class NoiseLevel { Low, Medium, High };
[[nodiscard]] auto noise_name(NoiseLevel n) -> std::string;
[[nodiscard]] auto parse_noise(const std::string& s) -> NoiseLevel;

struct AugmentedSample {
    std::size_t parent = 0; // index into the owning dataset's samples
    std::vector<double> y_tilde;
    NoiseLevel noise = NoiseLevel::Low;
    double reward = 0.0;
};

struct RewardConfig {
    double temperature = 0.03;
    double kappa_exp = 0.2;
    double kappa_sgn = 0.05;
    double clip_lo = 0.0;
    double clip_hi = 5.0;

    void validate() const;
};

struct AugmentCounts {
    int low = 8;
    int medium = 8;
    int high = 8;
};

struct SplitRatio {
    int train = 5;
    int test = 3;
};

// One point per stratum per axis, strata permuted independently per axis.
[[nodiscard]] auto lhs_sample(std::span<const double> lower, std::span<const double> upper, std::size_t N,
                              std::uint64_t seed) -> std::vector<std::vector<double>>;

// Every true evaluation issued while building data goes through `evaluator`, so callers can audit call counts.
using Evaluator = std::function<std::vector<double>(const tasks::TaskSpec&, std::span<const double>)>;

// Draws N_per_task * (a + b) / a LHS points per task and evaluates them.
[[nodiscard]] auto build_offline(const tasks::MtmooSuite& suite, std::size_t n_per_task, SplitRatio ratio,
                                 std::uint64_t seed, const Evaluator& evaluator = nullptr) -> OfflineDataset;

// Seeded per-task shuffle; train holds a/(a+b) of each task. Ranges come from train only.
[[nodiscard]] auto split(const OfflineDataset& ds, SplitRatio ratio, std::uint64_t seed)
    -> std::pair<OfflineDataset, OfflineDataset>;

[[nodiscard]] auto nrmse(std::span<const double> y_hat, std::span<const double> y, std::span<const double> delta)
    -> double;

// Fractions of objectives whose SNE exponent / sign token matches the reference.
struct TokenAgreement {
    double exponent = 0.0;
    double sign = 0.0;
};
[[nodiscard]] auto token_agreement(std::span<const double> y_hat, std::span<const double> y,
                                   const sne::SneConfig& sne_cfg) -> TokenAgreement;

[[nodiscard]] auto compute_reward(std::span<const double> y_hat, std::span<const double> y,
                                  std::span<const double> delta, const RewardConfig& cfg,
                                  const sne::SneConfig& sne_cfg) -> double;

// Magnitudes below the smallest encodable exponent are flushed to zero.
[[nodiscard]] auto encodable(double v, const sne::SneConfig& sne_cfg) -> double;

[[nodiscard]] auto perturb_labels(const Sample& sample, std::size_t parent, const AugmentCounts& counts,
                                  const ObjectiveRanges& ranges, Rng& rng, const RewardConfig& reward_cfg,
                                  const sne::SneConfig& sne_cfg) -> std::vector<AugmentedSample>;

// Augments every sample of ds with independent streams derived from (seed, task_id, index).
[[nodiscard]] auto augment(const OfflineDataset& ds, const AugmentCounts& counts, std::uint64_t seed,
                           const RewardConfig& reward_cfg, const sne::SneConfig& sne_cfg)
    -> std::vector<AugmentedSample>;

// Line-delimited JSON with a schema header record.
void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path,
                  std::span<const AugmentedSample> augmented = {});
struct LoadedDataset {
    OfflineDataset data;
    std::vector<AugmentedSample> augmented;
};
[[nodiscard]] auto load_dataset(const std::filesystem::path& path) -> LoadedDataset;

} // namespace qmetasur::dataset
