#pragma once

// Run configuration, run-directory layout and the batch commands behind the CLI.

#include "qmetasur/dataset.hpp"
#include "qmetasur/decoding.hpp"
#include "qmetasur/evo.hpp"
#include "qmetasur/metrics.hpp"
#include "qmetasur/rbfn.hpp"
#include "qmetasur/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace qmetasur::pipeline {

namespace fs = std::filesystem;

struct SuiteConfig {
    std::vector<std::string> families = {"Sphere", "MeanScale"};
    int tasks_per_family = 4;
    int dim = 3;
    std::uint64_t seed = 7;
};

struct DataConfig {
    std::size_t n_per_task = 200;
    dataset::SplitRatio split;
    dataset::AugmentCounts augment;
    std::uint64_t seed = 11;
};

struct RunConfig {
    std::string name = "toy";
    std::string out = "runs";
    std::uint64_t seed = 1;
    int runs = 20;
    long budget = 200;             // true evaluations per task in REAL mode
    int surrogate_generations = 30;
    std::size_t pf_points = 200;

    SuiteConfig suite;
    DataConfig data;
    seqmodel::ModelConfig model;
    training::SftConfig sft;
    training::RlConfig rl;
    decoding::DecodeConfig decode{decoding::DecodeMode::Advantage, 3.0, 50};
    evo::MaTdeParams evo;
    dataset::RewardConfig reward;
    sne::SneConfig sne;

    // Collects every violated constraint into one ConfigError.
    void validate() const;
    [[nodiscard]] auto run_dir() const -> fs::path { return fs::path(out) / name; }
};

[[nodiscard]] auto to_json(const RunConfig& c) -> nlohmann::json;
// Unknown keys are reported as violations.
[[nodiscard]] auto config_from_json(const nlohmann::json& j) -> RunConfig;
// Top-level scalar keys can be overridden by QMETASUR_<KEY> (upper case).
[[nodiscard]] auto apply_env_overrides(nlohmann::json j, const std::function<const char*(const char*)>& getenv_fn)
    -> nlohmann::json;
[[nodiscard]] auto load_config(const fs::path& path) -> RunConfig;
void save_config(const RunConfig& c, const fs::path& path);
[[nodiscard]] auto env_override_keys() -> std::vector<std::string>;

enum class Mode { Real, QMetaSur, Rbfn };
[[nodiscard]] auto mode_name(Mode m) -> std::string;
[[nodiscard]] auto parse_mode(const std::string& s) -> Mode;

// Families concatenated with global task ids 1..T.
[[nodiscard]] auto build_suite(const SuiteConfig& c) -> tasks::MtmooSuite;

// Counts every call to the true objectives.
class CountingEvaluator {
public:
    explicit CountingEvaluator(const tasks::MtmooSuite& suite) : suite_(&suite) {}
    auto operator()(const tasks::TaskSpec& task, std::span<const double> x) -> std::vector<double>;
    auto evaluate(int task_id, std::span<const double> x) -> std::vector<double>;
    [[nodiscard]] auto calls(int task_id) const -> long;
    [[nodiscard]] auto total() const -> long;

private:
    const tasks::MtmooSuite* suite_;
    std::map<int, long> calls_;
};

[[nodiscard]] auto make_examples(const dataset::OfflineDataset& train, const sne::Vocab& vocab,
                                 const sne::SneConfig& sne_cfg, bool pwce) -> std::vector<training::Example>;
[[nodiscard]] auto make_episode_groups(const dataset::OfflineDataset& train,
                                       std::span<const dataset::AugmentedSample> augmented, const sne::Vocab& vocab,
                                       const dataset::RewardConfig& reward, const sne::SneConfig& sne_cfg)
    -> std::vector<training::EpisodeGroup>;
[[nodiscard]] auto build_vocab(const tasks::MtmooSuite& suite, const sne::SneConfig& sne_cfg) -> sne::Vocab;
[[nodiscard]] auto model_config_for(const RunConfig& c, const sne::Vocab& vocab,
                                    const dataset::OfflineDataset& train) -> seqmodel::ModelConfig;

struct Surrogate {
    sne::Vocab vocab;
    seqmodel::SeqModel model;
    std::map<int, dataset::ObjectiveRanges> ranges;
};

struct SurrogateAccuracy {
    metrics::SmaeResult smae;        // groups keyed task_id * 10 + objective
    std::map<int, double> r2;        // same keys
    std::size_t flagged = 0;
    std::size_t decodes = 0;
};
[[nodiscard]] auto group_key(int task_id, std::size_t objective) -> int;
[[nodiscard]] auto score_predictions(const dataset::OfflineDataset& test, const std::vector<std::vector<double>>& preds)
    -> SurrogateAccuracy;
[[nodiscard]] auto evaluate_qmetasur(const Surrogate& s, const dataset::OfflineDataset& test,
                                     const decoding::DecodeConfig& cfg) -> SurrogateAccuracy;
// Per-task training mean as the prediction.
[[nodiscard]] auto evaluate_mean_predictor(const dataset::OfflineDataset& train, const dataset::OfflineDataset& test)
    -> SurrogateAccuracy;
[[nodiscard]] auto fit_rbfn_all(const dataset::OfflineDataset& train, std::uint64_t seed)
    -> std::map<int, rbfn::RbfnSurrogate>;
[[nodiscard]] auto evaluate_rbfn(const std::map<int, rbfn::RbfnSurrogate>& models, const dataset::OfflineDataset& test)
    -> SurrogateAccuracy;

struct TaskOutcome {
    int task_id = 0;
    double igd = 0.0;
    double initial_igd = 0.0;
    long search_true_evals = 0;
    long final_true_evals = 0;
    std::size_t flagged = 0;
    std::vector<std::vector<double>> front_x;
    std::vector<std::vector<double>> front_true;
};
struct OptimizeOutcome {
    std::vector<TaskOutcome> tasks;
    std::vector<evo::TraceRecord> trace;
    [[nodiscard]] auto mean_igd() const -> double;
};

// REAL: the true objectives drive the search under the evaluation budget.
// Surrogate modes: the surrogate drives the search for a fixed generation count and only
// the final non-dominated set is evaluated with the true objectives.
[[nodiscard]] auto optimize_once(const tasks::MtmooSuite& suite, Mode mode, const RunConfig& cfg, std::uint64_t seed,
                                 CountingEvaluator& truth, const Surrogate* qms,
                                 const std::map<int, rbfn::RbfnSurrogate>* rbf) -> OptimizeOutcome;

// Commands. Each reads and writes only inside cfg.run_dir().
struct CommandResult {
    std::vector<fs::path> written;
};
auto cmd_gen_data(const RunConfig& cfg) -> CommandResult;
auto cmd_train(const RunConfig& cfg) -> CommandResult;
auto cmd_eval_surrogate(const RunConfig& cfg) -> CommandResult;
auto cmd_optimize(const RunConfig& cfg, Mode mode) -> CommandResult;
// Aggregates igd tables of every mode found under the given run directories.
auto cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) -> CommandResult;

[[nodiscard]] auto load_surrogate(const fs::path& run_dir) -> Surrogate;
[[nodiscard]] auto fnv1a_file(const fs::path& path) -> std::uint64_t;

// Tab-separated table with a "#<schema>.v1" header line followed by a column line.
struct Table {
    std::string schema;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};
void write_table(const Table& t, const fs::path& path);
[[nodiscard]] auto read_table(const fs::path& path, const std::string& schema) -> Table;
[[nodiscard]] auto fmt(double v) -> std::string;

} // namespace qmetasur::pipeline
