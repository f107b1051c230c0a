#pragma once

// Toy pre-LN encoder-decoder transformer with a shared token embedding, an LM head,
// twin Q heads, a V head and Polyak-averaged target copies of the Q heads.

#include "qmetasur/autograd.hpp"
#include "qmetasur/sne.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qmetasur::seqmodel {

using ag::Mat;
using sne::TokenId;

struct ModelConfig {
    int d_model = 64;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 0;
    int max_src_len = 60;
    int max_tgt_len = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Head { Q1, Q2, V, Q1Target, Q2Target };

class SeqModel {
public:
    // `actions` is the numeric-support subset the Q heads score, in ascending id order.
    static auto init(const ModelConfig& cfg, std::vector<TokenId> actions) -> SeqModel;

    [[nodiscard]] auto config() const noexcept -> const ModelConfig& { return cfg_; }
    [[nodiscard]] auto actions() const noexcept -> const std::vector<TokenId>& { return actions_; }
    // Column of `token` in Q outputs, or -1 outside the action set.
    [[nodiscard]] auto action_index(TokenId token) const -> int;

    [[nodiscard]] auto params() noexcept -> std::vector<ag::Param>& { return params_; }
    [[nodiscard]] auto params() const noexcept -> const std::vector<ag::Param>& { return params_; }
    [[nodiscard]] auto param(const std::string& name) -> ag::Param&;
    [[nodiscard]] auto param(const std::string& name) const -> const ag::Param&;
    // Every tensor except the target heads.
    [[nodiscard]] auto trainable() -> std::vector<ag::Param*>;
    [[nodiscard]] auto parameter_count() const -> std::size_t;
    void zero_grad();

    [[nodiscard]] auto positional(int len) const -> Mat;
    [[nodiscard]] auto all_finite() const -> bool;

    auto operator==(const SeqModel& other) const -> bool;

private:
    friend auto load_checkpoint(const std::filesystem::path& dir) -> SeqModel;
    void add(std::string name, Mat value);
    void build_index();

    ModelConfig cfg_;
    std::vector<TokenId> actions_;
    std::vector<int> action_col_;
    std::vector<ag::Param> params_;
    std::map<std::string, std::size_t> index_;
    Mat pe_table_;
};

[[nodiscard]] auto head_prefix(Head h) -> std::string;

// Encoder memory on the tape (rows = source positions).
struct Encoded {
    ag::Var memory;
    std::vector<bool> key_valid;
};
auto encode(ag::Tape& t, SeqModel& m, std::span<const TokenId> src) -> Encoded;

struct TeacherForced {
    ag::Var logits; // |O| x vocab
    ag::Var hidden; // |O| x d_model, decoder output after the final norm
};
// Decoder input is BOS followed by tgt without its last token.
auto decode_teacher_forced(ag::Tape& t, SeqModel& m, const Encoded& enc, std::span<const TokenId> tgt)
    -> TeacherForced;
auto forward_teacher_forced(ag::Tape& t, SeqModel& m, std::span<const TokenId> src, std::span<const TokenId> tgt)
    -> TeacherForced;

auto head_forward(ag::Tape& t, SeqModel& m, Head which, ag::Var h) -> ag::Var;

// Tape-free head evaluation on hidden rows.
[[nodiscard]] auto head_eval(const SeqModel& m, Head which, const Mat& h) -> Mat;
struct TwinQ {
    Mat q1;
    Mat q2;
};
[[nodiscard]] auto q_values(const SeqModel& m, const Mat& h) -> TwinQ;
[[nodiscard]] auto v_value(const SeqModel& m, const Mat& h) -> Mat;
// Elementwise min of the two target heads.
[[nodiscard]] auto target_q(const SeqModel& m, const Mat& h) -> Mat;

void polyak_update(SeqModel& m, double alpha);

// Incremental decoder with cached self-attention keys/values, used for generation.
class IncrementalDecoder {
public:
    IncrementalDecoder(const SeqModel& m, std::span<const TokenId> src);
    // Feeds one decoder input token and returns the final hidden row.
    auto step(TokenId input) -> Eigen::RowVectorXd;
    [[nodiscard]] auto lm_logits(const Eigen::RowVectorXd& h) const -> Eigen::RowVectorXd;
    [[nodiscard]] auto position() const noexcept -> int { return pos_; }

private:
    const SeqModel* m_;
    Mat memory_;
    std::vector<bool> key_valid_;
    std::vector<Mat> cross_k_, cross_v_, self_k_, self_v_;
    int pos_ = 0;
};

using LossFn = std::function<ag::Var(ag::Tape&, SeqModel&)>;
struct GradCheckResult {
    double max_rel_error = 0.0;
    int probes = 0;
};
// Central differences with step 1e-4 on randomly chosen trainable entries. Values
// detached by the loss are recorded once and replayed on every perturbed pass.
[[nodiscard]] auto grad_check(SeqModel& m, const LossFn& loss_fn, int n_probes, std::uint64_t seed) -> GradCheckResult;

// <dir>/model.manifest (text) plus <dir>/model.bin (little-endian f64 blob).
void save_checkpoint(const SeqModel& m, const std::filesystem::path& dir);
[[nodiscard]] auto load_checkpoint(const std::filesystem::path& dir) -> SeqModel;

} // namespace qmetasur::seqmodel
