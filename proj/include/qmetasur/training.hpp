#pragma once

// Stage 1: supervised fine-tuning with priority-weighted cross-entropy.
// Stage 2: offline Q-learning (TD + expectile value fit, conservative CE, auxiliary NLL).

#include "qmetasur/seqmodel.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qmetasur::training {

using seqmodel::SeqModel;
using sne::TokenSeq;

// Weight of the l-th token (1-based) inside one objective segment.
[[nodiscard]] auto pwce_weight(int l) -> double;
[[nodiscard]] auto pwce_weights(int max_l) -> std::vector<double>;
// Per-token weights for a target sequence; brackets, commas and EOS get 1.
[[nodiscard]] auto sequence_weights(const TokenSeq& tgt, const sne::SneConfig& cfg, bool pwce) -> std::vector<double>;

struct Example {
    TokenSeq src;
    TokenSeq tgt;
    std::vector<double> weights;
};

// Mean over the batch of the per-sequence weighted NLL.
auto sft_loss(ag::Tape& t, SeqModel& m, std::span<const Example> batch) -> ag::Var;

[[nodiscard]] auto expectile_loss(double u, double tau) noexcept -> double;

struct Episode {
    TokenSeq tgt;
    double reward = 0.0;
    bool gold = false;
};

// Episodes sharing one source sequence (a sample's gold label plus its perturbations).
struct EpisodeGroup {
    TokenSeq src;
    std::vector<Episode> episodes;
};

struct RlConfig {
    double gamma = 0.99;
    double lambda_cql = 0.1;
    double tau = 0.7;
    double polyak = 0.01;
    int epochs = 5;
    int batch_groups = 2;
    double lr = 1e-3;
    double warmup_ratio = 0.06;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RlLoss {
    ag::Var total;
    double qv = 0.0;
    double cql = 0.0;
    double nll = 0.0;
};
// Episode-mean TD/expectile/CQL terms plus the gold-episode-mean NLL.
auto rl_loss(ag::Tape& t, SeqModel& m, std::span<const EpisodeGroup> batch, const RlConfig& cfg) -> RlLoss;

struct SftConfig {
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    double warmup_ratio = 0.06;
    double clip_norm = 1.0;
    bool pwce = true;
    std::uint64_t seed = 0;

    void validate() const;
};

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(const std::vector<ag::Param*>& params, double lr);

private:
    double b1_, b2_, eps_;
    long t_ = 0;
    std::vector<ag::Mat> m_, v_;
};

// Constant-with-warmup: linear ramp over the first ceil(ratio * total) steps.
[[nodiscard]] auto warmup_lr(double lr, double ratio, long step, long total) -> double;

// Rescales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
auto clip_gradients(const std::vector<ag::Param*>& params, double max_norm) -> double;

struct EpochRecord {
    std::string stage;
    int epoch = 0;
    double pwce = 0.0;
    double qv = 0.0;
    double cql = 0.0;
    double nll = 0.0;
    double total = 0.0;
    double val_smae = 0.0; // NaN when not computed
    double wall_seconds = 0.0;
    std::string checkpoint;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    void append(const TrainReport& other);
};
void save_report(const TrainReport& r, const std::filesystem::path& path);
[[nodiscard]] auto load_report(const std::filesystem::path& path) -> TrainReport;

struct TrainHooks {
    std::function<double(const SeqModel&)> validate; // validation sMAE; optional
    int validate_every = 1;
    std::filesystem::path checkpoint_dir;            // empty = no checkpoints
    std::function<void(const EpochRecord&)> on_epoch;
};

auto train_sft(SeqModel& m, std::span<const Example> train, const SftConfig& cfg, const TrainHooks& hooks = {})
    -> TrainReport;
auto train_rl(SeqModel& m, std::span<const EpisodeGroup> groups, const RlConfig& cfg, const TrainHooks& hooks = {})
    -> TrainReport;

} // namespace qmetasur::training
