#pragma once

// Reverse-mode tape over dense row-major double matrices. Only the fused ops the
// sequence model and its losses need are provided.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace qmetasur::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
    std::string name;
    Mat value;
    Mat grad; // empty until the first accumulation

    void zero_grad() { grad.resize(0, 0); }
    void accumulate(const Mat& g);
};

struct Var {
    int id = -1;
};

// Values produced under stop-gradient. In Replay mode the values recorded by an
// earlier Record pass are returned instead, so finite differences see the same
// constants the analytic gradient treated as fixed.
class DetachCache {
public:
    enum class Mode { Off, Record, Replay };

    void record() { mode_ = Mode::Record; values_.clear(); cursor_ = 0; }
    void replay() { mode_ = Mode::Replay; cursor_ = 0; }
    void off() { mode_ = Mode::Off; values_.clear(); cursor_ = 0; }
    [[nodiscard]] auto mode() const noexcept -> Mode { return mode_; }

    auto apply(Mat value) -> Mat;

private:
    Mode mode_ = Mode::Off;
    std::vector<Mat> values_;
    std::size_t cursor_ = 0;
};

class Tape {
public:
    explicit Tape(DetachCache* detach = nullptr) : detach_(detach) {}

    // Inference tapes: parameter leaves become constants and no closures are kept.
    void set_no_grad(bool on) noexcept { no_grad_ = on; }

    auto constant(Mat value) -> Var;
    // One leaf per parameter per tape; repeated calls return the same Var.
    auto leaf(Param& p) -> Var;
    auto detach(Var v) -> Var;
    auto detached(Mat value) -> Var;

    [[nodiscard]] auto value(Var v) const -> const Mat& {
        const auto& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.ref != nullptr ? *n.ref : n.value;
    }
    [[nodiscard]] auto scalar(Var v) const -> double { return value(v)(0, 0); }
    [[nodiscard]] auto needs_grad(Var v) const -> bool { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable parameter.
    void backward(Var loss);

    using Backward = std::function<void(Tape&, const Mat& grad_out)>;
    auto push(Mat value, bool needs_grad, Backward back) -> Var;
    auto grad_of(Var v) -> Mat&;

private:
    struct Node {
        Mat value;
        const Mat* ref = nullptr; // parameter leaves read the live value without copying
        Mat grad;
        Backward back;
        Param* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    std::unordered_map<Param*, int> leaves_;
    DetachCache* detach_;
    bool no_grad_ = false;
};

// X W + b, with b a 1 x out row broadcast over rows.
auto linear(Tape& t, Var x, Var w, Var b) -> Var;
auto matmul(Tape& t, Var a, Var b) -> Var;
auto add(Tape& t, Var a, Var b) -> Var;
auto sub(Tape& t, Var a, Var b) -> Var;
auto scale(Tape& t, Var a, double c) -> Var;
auto gelu(Tape& t, Var x) -> Var;
auto layernorm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5) -> Var;
// Rows of E selected by ids, multiplied by `mult`.
auto embed(Tape& t, Var table, std::span<const int> ids, double mult = 1.0) -> Var;

struct AttentionMask {
    bool causal = false;
    std::vector<bool> key_valid; // empty = all keys valid
};
// Multi-head scaled dot-product attention on already projected q, k, v.
auto attention(Tape& t, Var q, Var k, Var v, int n_heads, const AttentionMask& mask) -> Var;

auto sum(Tape& t, Var x) -> Var;
auto square_sum(Tape& t, Var x) -> Var;
// sum_i |tau - 1[u_i < 0]| u_i^2
auto expectile_sum(Tape& t, Var u, double tau) -> Var;
// sum_i w_i * -log softmax(row_i)[target_i]; rows with w_i = 0 are skipped.
auto weighted_nll(Tape& t, Var logits, std::span<const int> targets, std::span<const double> weights) -> Var;
// Column vector of x(i, cols[i]).
auto pick(Tape& t, Var x, std::span<const int> cols) -> Var;

[[nodiscard]] auto gelu_value(double x) noexcept -> double;
[[nodiscard]] auto log_softmax_rows(const Mat& logits) -> Mat;

} // namespace qmetasur::ag
