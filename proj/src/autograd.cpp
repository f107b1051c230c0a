#include "qmetasur/autograd.hpp"

#include "qmetasur/errors.hpp"

#include <cmath>
#include <limits>

namespace qmetasur::ag {

namespace {

constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

void add_into(Mat& dst, const Mat& src) {
    if (dst.size() == 0) {
        dst = src;
    } else {
        dst += src;
    }
}

} // namespace

void Param::accumulate(const Mat& g) { add_into(grad, g); }

auto DetachCache::apply(Mat value) -> Mat {
    switch (mode_) {
    case Mode::Off:
        return value;
    case Mode::Record:
        values_.push_back(value);
        return value;
    case Mode::Replay:
        if (cursor_ >= values_.size()) {
            throw Error("detach replay ran past the recorded values");
        }
        return values_[cursor_++];
    }
    return value;
}

auto Tape::push(Mat value, bool needs_grad, Backward back) -> Var {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && !no_grad_;
    if (n.needs_grad) {
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

auto Tape::constant(Mat value) -> Var { return push(std::move(value), false, nullptr); }

auto Tape::leaf(Param& p) -> Var {
    if (auto it = leaves_.find(&p); it != leaves_.end()) {
        return Var{it->second};
    }
    auto v = push(Mat{}, !no_grad_, nullptr);
    nodes_.back().ref = &p.value;
    if (!no_grad_) {
        nodes_.back().param = &p;
    }
    leaves_.emplace(&p, v.id);
    return v;
}

auto Tape::detached(Mat value) -> Var {
    return constant(detach_ != nullptr ? detach_->apply(std::move(value)) : std::move(value));
}

auto Tape::detach(Var v) -> Var { return detached(value(v)); }

auto Tape::grad_of(Var v) -> Mat& {
    auto& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.size() == 0) {
        const Mat& val = n.ref != nullptr ? *n.ref : n.value;
        n.grad = Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) {
        throw DomainError("backward needs a scalar loss");
    }
    grad_of(loss)(0, 0) += 1.0;
    for (int i = loss.id; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.size() == 0) {
            continue;
        }
        if (n.back) {
            n.back(*this, n.grad);
        }
        if (n.param != nullptr) {
            n.param->accumulate(n.grad);
        }
    }
}

auto linear(Tape& t, Var x, Var w, Var b) -> Var {
    Mat out = t.value(x) * t.value(w);
    out.rowwise() += t.value(b).row(0);
    const bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    return t.push(std::move(out), ng, [x, w, b](Tape& tp, const Mat& g) {
        if (tp.needs_grad(x)) {
            tp.grad_of(x).noalias() += g * tp.value(w).transpose();
        }
        if (tp.needs_grad(w)) {
            tp.grad_of(w).noalias() += tp.value(x).transpose() * g;
        }
        if (tp.needs_grad(b)) {
            tp.grad_of(b) += g.colwise().sum();
        }
    });
}

auto matmul(Tape& t, Var a, Var b) -> Var {
    Mat out = t.value(a) * t.value(b);
    return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Mat& g) {
        if (tp.needs_grad(a)) {
            tp.grad_of(a).noalias() += g * tp.value(b).transpose();
        }
        if (tp.needs_grad(b)) {
            tp.grad_of(b).noalias() += tp.value(a).transpose() * g;
        }
    });
}

auto add(Tape& t, Var a, Var b) -> Var {
    Mat out = t.value(a) + t.value(b);
    return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Mat& g) {
        if (tp.needs_grad(a)) {
            tp.grad_of(a) += g;
        }
        if (tp.needs_grad(b)) {
            tp.grad_of(b) += g;
        }
    });
}

auto sub(Tape& t, Var a, Var b) -> Var {
    Mat out = t.value(a) - t.value(b);
    return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Mat& g) {
        if (tp.needs_grad(a)) {
            tp.grad_of(a) += g;
        }
        if (tp.needs_grad(b)) {
            tp.grad_of(b) -= g;
        }
    });
}

auto scale(Tape& t, Var a, double c) -> Var {
    Mat out = t.value(a) * c;
    return t.push(std::move(out), t.needs_grad(a), [a, c](Tape& tp, const Mat& g) { tp.grad_of(a) += g * c; });
}

auto gelu_value(double x) noexcept -> double {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

auto gelu(Tape& t, Var x) -> Var {
    Mat out = t.value(x).unaryExpr([](double v) { return gelu_value(v); });
    return t.push(std::move(out), t.needs_grad(x), [x](Tape& tp, const Mat& g) {
        const Mat& xv = tp.value(x);
        Mat d = xv.unaryExpr([](double v) {
            const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        });
        tp.grad_of(x) += g.cwiseProduct(d);
    });
}

auto layernorm(Tape& t, Var x, Var gamma, Var beta, double eps) -> Var {
    const Mat& xv = t.value(x);
    const auto n = xv.cols();
    auto xhat = std::make_shared<Mat>(xv.rows(), n);
    auto rstd = std::make_shared<Eigen::VectorXd>(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const double mu = xv.row(r).mean();
        const double var = (xv.row(r).array() - mu).square().mean();
        (*rstd)(r) = 1.0 / std::sqrt(var + eps);
        xhat->row(r) = (xv.row(r).array() - mu) * (*rstd)(r);
    }
    Mat out = xhat->array().rowwise() * t.value(gamma).row(0).array();
    out.rowwise() += t.value(beta).row(0);
    const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
    return t.push(std::move(out), ng, [x, gamma, beta, xhat, rstd, n](Tape& tp, const Mat& g) {
        if (tp.needs_grad(gamma)) {
            tp.grad_of(gamma) += g.cwiseProduct(*xhat).colwise().sum();
        }
        if (tp.needs_grad(beta)) {
            tp.grad_of(beta) += g.colwise().sum();
        }
        if (tp.needs_grad(x)) {
            Mat dxhat = g.array().rowwise() * tp.value(gamma).row(0).array();
            auto& gx = tp.grad_of(x);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                const double m1 = dxhat.row(r).sum() * inv_n;
                const double m2 = dxhat.row(r).dot(xhat->row(r)) * inv_n;
                gx.row(r).array() += (*rstd)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
            }
        }
    });
}

auto embed(Tape& t, Var table, std::span<const int> ids, double mult) -> Var {
    const Mat& e = t.value(table);
    Mat out(static_cast<Eigen::Index>(ids.size()), e.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= e.rows()) {
            throw DomainError("token id " + std::to_string(ids[r]) + " outside the vocabulary");
        }
        out.row(static_cast<Eigen::Index>(r)) = e.row(ids[r]) * mult;
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return t.push(std::move(out), t.needs_grad(table), [table, idv = std::move(idv), mult](Tape& tp, const Mat& g) {
        auto& ge = tp.grad_of(table);
        for (std::size_t r = 0; r < idv.size(); ++r) {
            ge.row(idv[r]) += g.row(static_cast<Eigen::Index>(r)) * mult;
        }
    });
}

auto attention(Tape& t, Var q, Var k, Var v, int n_heads, const AttentionMask& mask) -> Var {
    const Mat& qv = t.value(q);
    const Mat& kv = t.value(k);
    const Mat& vv = t.value(v);
    const auto sq = qv.rows();
    const auto sk = kv.rows();
    const auto d = qv.cols();
    if (d % n_heads != 0 || kv.cols() != d || vv.cols() != d || vv.rows() != sk) {
        throw DomainError("attention: inconsistent shapes");
    }
    if (!mask.key_valid.empty() && static_cast<Eigen::Index>(mask.key_valid.size()) != sk) {
        throw DomainError("attention: key mask length mismatch");
    }
    const auto dk = d / n_heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
    auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(n_heads));
    Mat out(sq, d);
    for (int h = 0; h < n_heads; ++h) {
        Mat s = qv.middleCols(h * dk, dk) * kv.middleCols(h * dk, dk).transpose() * inv;
        for (Eigen::Index i = 0; i < sq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < sk; ++j) {
                const bool ok = (!mask.causal || j <= i) && (mask.key_valid.empty() || mask.key_valid[static_cast<std::size_t>(j)]);
                if (!ok) {
                    s(i, j) = -std::numeric_limits<double>::infinity();
                } else {
                    mx = std::max(mx, s(i, j));
                }
            }
            if (!std::isfinite(mx)) {
                s.row(i).setZero();
                continue;
            }
            double z = 0.0;
            for (Eigen::Index j = 0; j < sk; ++j) {
                s(i, j) = std::isfinite(s(i, j)) ? std::exp(s(i, j) - mx) : 0.0;
                z += s(i, j);
            }
            s.row(i) /= z;
        }
        out.middleCols(h * dk, dk).noalias() = s * vv.middleCols(h * dk, dk);
        (*probs)[static_cast<std::size_t>(h)] = std::move(s);
    }
    const bool ng = t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v);
    return t.push(std::move(out), ng, [q, k, v, n_heads, dk, inv, probs](Tape& tp, const Mat& g) {
        const Mat& qv2 = tp.value(q);
        const Mat& kv2 = tp.value(k);
        const Mat& vv2 = tp.value(v);
        for (int h = 0; h < n_heads; ++h) {
            const Mat& p = (*probs)[static_cast<std::size_t>(h)];
            const auto go = g.middleCols(h * dk, dk);
            if (tp.needs_grad(v)) {
                tp.grad_of(v).middleCols(h * dk, dk).noalias() += p.transpose() * go;
            }
            Mat dp = go * vv2.middleCols(h * dk, dk).transpose();
            Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
            Mat ds = p.cwiseProduct(dp.colwise() - rs) * inv;
            if (tp.needs_grad(q)) {
                tp.grad_of(q).middleCols(h * dk, dk).noalias() += ds * kv2.middleCols(h * dk, dk);
            }
            if (tp.needs_grad(k)) {
                tp.grad_of(k).middleCols(h * dk, dk).noalias() += ds.transpose() * qv2.middleCols(h * dk, dk);
            }
        }
    });
}

auto sum(Tape& t, Var x) -> Var {
    Mat out(1, 1);
    out(0, 0) = t.value(x).sum();
    return t.push(std::move(out), t.needs_grad(x), [x](Tape& tp, const Mat& g) { tp.grad_of(x).array() += g(0, 0); });
}

auto square_sum(Tape& t, Var x) -> Var {
    Mat out(1, 1);
    out(0, 0) = t.value(x).squaredNorm();
    return t.push(std::move(out), t.needs_grad(x),
                  [x](Tape& tp, const Mat& g) { tp.grad_of(x) += 2.0 * g(0, 0) * tp.value(x); });
}

auto expectile_sum(Tape& t, Var u, double tau) -> Var {
    const Mat& uv = t.value(u);
    Mat w = uv.unaryExpr([tau](double e) { return e < 0 ? 1.0 - tau : tau; });
    Mat out(1, 1);
    out(0, 0) = w.cwiseProduct(uv.cwiseProduct(uv)).sum();
    return t.push(std::move(out), t.needs_grad(u), [u, w = std::move(w)](Tape& tp, const Mat& g) {
        tp.grad_of(u) += 2.0 * g(0, 0) * w.cwiseProduct(tp.value(u));
    });
}

auto log_softmax_rows(const Mat& logits) -> Mat {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

auto weighted_nll(Tape& t, Var logits, std::span<const int> targets, std::span<const double> weights) -> Var {
    const Mat& lv = t.value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != lv.rows() || weights.size() != targets.size()) {
        throw DomainError("weighted_nll: target/weight count does not match logits rows");
    }
    auto ls = std::make_shared<Mat>(log_softmax_rows(lv));
    Mat out(1, 1);
    out(0, 0) = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (weights[i] != 0.0) {
            out(0, 0) -= weights[i] * (*ls)(static_cast<Eigen::Index>(i), targets[i]);
        }
    }
    std::vector<int> tv(targets.begin(), targets.end());
    std::vector<double> wv(weights.begin(), weights.end());
    return t.push(std::move(out), t.needs_grad(logits),
                  [logits, ls, tv = std::move(tv), wv = std::move(wv)](Tape& tp, const Mat& g) {
                      auto& gl = tp.grad_of(logits);
                      for (std::size_t i = 0; i < tv.size(); ++i) {
                          if (wv[i] == 0.0) {
                              continue;
                          }
                          const auto r = static_cast<Eigen::Index>(i);
                          const double c = g(0, 0) * wv[i];
                          gl.row(r) += c * ls->row(r).array().exp().matrix();
                          gl(r, tv[i]) -= c;
                      }
                  });
}

auto pick(Tape& t, Var x, std::span<const int> cols) -> Var {
    const Mat& xv = t.value(x);
    if (static_cast<Eigen::Index>(cols.size()) != xv.rows()) {
        throw DomainError("pick: one column per row required");
    }
    Mat out(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        out(r, 0) = xv(r, cols[static_cast<std::size_t>(r)]);
    }
    std::vector<int> cv(cols.begin(), cols.end());
    return t.push(std::move(out), t.needs_grad(x), [x, cv = std::move(cv)](Tape& tp, const Mat& g) {
        auto& gx = tp.grad_of(x);
        for (std::size_t r = 0; r < cv.size(); ++r) {
            gx(static_cast<Eigen::Index>(r), cv[r]) += g(static_cast<Eigen::Index>(r), 0);
        }
    });
}

} // namespace qmetasur::ag
