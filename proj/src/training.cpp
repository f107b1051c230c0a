#include "qmetasur/training.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"
#include "qmetasur/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace qmetasur::training {

using ag::Mat;
using ag::Tape;
using ag::Var;
using seqmodel::Head;

auto pwce_weight(int l) -> double {
    if (l < 1) {
        throw DomainError("segment position must be >= 1");
    }
    if (l <= 3) {
        return 20.0;
    }
    return std::max(1.0, 10.0 - static_cast<double>(l - 4));
}

auto pwce_weights(int max_l) -> std::vector<double> {
    std::vector<double> w;
    for (int l = 1; l <= max_l; ++l) {
        w.push_back(pwce_weight(l));
    }
    return w;
}

auto sequence_weights(const TokenSeq& tgt, const sne::SneConfig& cfg, bool pwce) -> std::vector<double> {
    const auto slots = sne::objective_segments(tgt.view(), cfg);
    std::vector<double> w(tgt.size(), 1.0);
    if (pwce) {
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i].segment >= 0) {
                w[i] = pwce_weight(slots[i].offset);
            }
        }
    }
    return w;
}

auto sft_loss(Tape& t, SeqModel& m, std::span<const Example> batch) -> Var {
    if (batch.empty()) {
        throw DomainError("empty batch");
    }
    Var total = t.constant(Mat::Zero(1, 1));
    for (const auto& ex : batch) {
        if (ex.weights.size() != ex.tgt.size()) {
            throw ParseError("weight map does not match the target length", ex.weights.size(), ex.tgt.ids);
        }
        const auto tf = seqmodel::forward_teacher_forced(t, m, ex.src.view(), ex.tgt.view());
        std::vector<int> targets(ex.tgt.ids.begin(), ex.tgt.ids.end());
        total = ag::add(t, total, ag::weighted_nll(t, tf.logits, targets, ex.weights));
    }
    return ag::scale(t, total, 1.0 / static_cast<double>(batch.size()));
}

auto expectile_loss(double u, double tau) noexcept -> double { return std::fabs(tau - (u < 0 ? 1.0 : 0.0)) * u * u; }

void RlConfig::validate() const {
    std::vector<std::string> bad;
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        bad.emplace_back("gamma in (0, 1]");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        bad.emplace_back("tau in (0, 1)");
    }
    if (!(lambda_cql >= 0.0)) {
        bad.emplace_back("lambda_cql >= 0");
    }
    if (!(polyak > 0.0 && polyak <= 1.0)) {
        bad.emplace_back("polyak in (0, 1]");
    }
    if (epochs < 0 || batch_groups < 1 || !(lr > 0.0) || warmup_ratio < 0.0 || warmup_ratio > 1.0) {
        bad.emplace_back("epochs >= 0, batch >= 1, lr > 0, warmup ratio in [0, 1]");
    }
    if (!bad.empty()) {
        std::string msg = "invalid RL config:";
        for (const auto& b : bad) {
            msg += " [" + b + "]";
        }
        throw ConfigError(msg);
    }
}

void SftConfig::validate() const {
    if (epochs < 0 || batch_size < 1 || !(lr > 0.0) || warmup_ratio < 0.0 || warmup_ratio > 1.0) {
        throw ConfigError("invalid SFT config: [epochs >= 0, batch >= 1, lr > 0, warmup ratio in [0, 1]]");
    }
}

auto rl_loss(Tape& t, SeqModel& m, std::span<const EpisodeGroup> batch, const RlConfig& cfg) -> RlLoss {
    Var qv = t.constant(Mat::Zero(1, 1));
    Var cql = t.constant(Mat::Zero(1, 1));
    Var nll = t.constant(Mat::Zero(1, 1));
    std::size_t n_ep = 0;
    std::size_t n_gold = 0;
    for (const auto& g : batch) {
        const auto enc = seqmodel::encode(t, m, g.src.view());
        for (const auto& ep : g.episodes) {
            if (!std::isfinite(ep.reward)) {
                throw DomainError("episode has no finite reward");
            }
            const auto L = static_cast<Eigen::Index>(ep.tgt.size());
            const auto tf = seqmodel::decode_teacher_forced(t, m, enc, ep.tgt.view());
            std::vector<int> cols(ep.tgt.size());
            for (std::size_t i = 0; i < cols.size(); ++i) {
                cols[i] = m.action_index(ep.tgt.ids[i]);
                if (cols[i] < 0) {
                    throw DomainError("target token " + std::to_string(ep.tgt.ids[i]) + " outside the action set");
                }
            }
            Var q1 = seqmodel::head_forward(t, m, Head::Q1, tf.hidden);
            Var q2 = seqmodel::head_forward(t, m, Head::Q2, tf.hidden);
            Var v = seqmodel::head_forward(t, m, Head::V, tf.hidden);

            // TD targets r_i + gamma * V(h_{i+1}) with V held fixed; V(h_{L+1}) = 0.
            const Mat& v_next = t.value(t.detach(v));
            Mat y(L, 1);
            for (Eigen::Index i = 0; i < L; ++i) {
                y(i, 0) = i + 1 < L ? cfg.gamma * v_next(i + 1, 0) : ep.reward;
            }
            Var yv = t.constant(std::move(y));
            Var td1 = ag::square_sum(t, ag::sub(t, yv, ag::pick(t, q1, cols)));
            Var td2 = ag::square_sum(t, ag::sub(t, yv, ag::pick(t, q2, cols)));
            qv = ag::add(t, qv, ag::scale(t, ag::add(t, td1, td2), 0.5));

            const Mat qbar_all = seqmodel::target_q(m, t.value(tf.hidden));
            Mat qbar(L, 1);
            for (Eigen::Index i = 0; i < L; ++i) {
                qbar(i, 0) = qbar_all(i, cols[static_cast<std::size_t>(i)]);
            }
            Var qb = t.detached(std::move(qbar));
            qv = ag::add(t, qv, ag::expectile_sum(t, ag::sub(t, qb, v), cfg.tau));

            const std::vector<double> ones(cols.size(), 1.0);
            cql = ag::add(t, cql, ag::add(t, ag::weighted_nll(t, q1, cols, ones), ag::weighted_nll(t, q2, cols, ones)));
            if (ep.gold) {
                std::vector<int> targets(ep.tgt.ids.begin(), ep.tgt.ids.end());
                nll = ag::add(t, nll, ag::weighted_nll(t, tf.logits, targets, ones));
                ++n_gold;
            }
            ++n_ep;
        }
    }
    if (n_ep == 0) {
        throw DomainError("empty RL batch");
    }
    const double inv = 1.0 / static_cast<double>(n_ep);
    RlLoss out;
    Var qv_m = ag::scale(t, qv, inv);
    Var cql_m = ag::scale(t, cql, inv);
    Var nll_m = n_gold > 0 ? ag::scale(t, nll, 1.0 / static_cast<double>(n_gold)) : nll;
    out.qv = t.scalar(qv_m);
    out.cql = t.scalar(cql_m);
    out.nll = t.scalar(nll_m);
    out.total = ag::add(t, ag::add(t, qv_m, ag::scale(t, cql_m, cfg.lambda_cql)), nll_m);
    return out;
}

void Adam::step(const std::vector<ag::Param*>& params, double lr) {
    if (m_.empty()) {
        for (auto* p : params) {
            m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (m_.size() != params.size()) {
        throw Error("optimizer parameter list changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        if (p->grad.size() == 0) {
            m_[i] *= b1_;
            v_[i] *= b2_;
        } else {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * p->grad;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
        }
        p->value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

auto warmup_lr(double lr, double ratio, long step, long total) -> double {
    const auto warm = static_cast<long>(std::ceil(ratio * static_cast<double>(total)));
    if (warm <= 0 || step >= warm) {
        return lr;
    }
    return lr * static_cast<double>(step + 1) / static_cast<double>(warm);
}

auto clip_gradients(const std::vector<ag::Param*>& params, double max_norm) -> double {
    double sq = 0.0;
    for (auto* p : params) {
        if (p->grad.size() != 0) {
            sq += p->grad.squaredNorm();
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto* p : params) {
            if (p->grad.size() != 0) {
                p->grad *= s;
            }
        }
    }
    return norm;
}

void TrainReport::append(const TrainReport& other) {
    epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
}

namespace {

constexpr const char* kReportHeader =
    "#train_report.v1\tstage\tepoch\tpwce\tloss_qv\tloss_cql\tloss_nll\ttotal\tval_smae\twall_seconds\tcheckpoint";

auto fmt(double v) -> std::string {
    if (std::isnan(v)) {
        return "nan";
    }
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

auto parse_double(const std::string& s) -> double {
    if (s == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::stod(s);
}

[[noreturn]] void abort_non_finite(const char* stage, int epoch, std::span<const TokenSeq> tgts) {
    std::ostringstream d;
    d << stage << " epoch " << epoch << ": non-finite loss; offending batch targets:";
    for (const auto& tg : tgts) {
        d << "\n ";
        for (auto id : tg.ids) {
            d << ' ' << id;
        }
    }
    log::warn(d.str());
    throw DomainError(std::string(stage) + " loss became non-finite at epoch " + std::to_string(epoch));
}

auto now_seconds() -> double {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void finish_epoch(SeqModel& m, EpochRecord& rec, int epoch, const TrainHooks& hooks, const std::string& stage) {
    rec.val_smae = std::numeric_limits<double>::quiet_NaN();
    if (hooks.validate && hooks.validate_every > 0 && (epoch % hooks.validate_every == 0)) {
        rec.val_smae = hooks.validate(m);
    }
    if (!hooks.checkpoint_dir.empty()) {
        std::ostringstream name;
        name << stage << "-epoch-" << epoch;
        const auto dir = hooks.checkpoint_dir / name.str();
        seqmodel::save_checkpoint(m, dir);
        rec.checkpoint = dir.string();
    }
    if (hooks.on_epoch) {
        hooks.on_epoch(rec);
    }
}

} // namespace

void save_report(const TrainReport& r, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << kReportHeader << '\n';
        for (const auto& e : r.epochs) {
            out << e.stage << '\t' << e.epoch << '\t' << fmt(e.pwce) << '\t' << fmt(e.qv) << '\t' << fmt(e.cql) << '\t'
                << fmt(e.nll) << '\t' << fmt(e.total) << '\t' << fmt(e.val_smae) << '\t' << fmt(e.wall_seconds) << '\t'
                << (e.checkpoint.empty() ? "-" : e.checkpoint) << '\n';
        }
        if (!out) {
            throw Error("cannot write " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

auto load_report(const std::filesystem::path& path) -> TrainReport {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line) || line != kReportHeader) {
        throw ConfigError(path.string() + " is not a train report");
    }
    TrainReport r;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::vector<std::string> f;
        std::string cell;
        while (std::getline(ls, cell, '\t')) {
            f.push_back(cell);
        }
        if (f.size() != 10) {
            throw ConfigError(path.string() + ": malformed report row");
        }
        EpochRecord e;
        e.stage = f[0];
        e.epoch = std::stoi(f[1]);
        e.pwce = parse_double(f[2]);
        e.qv = parse_double(f[3]);
        e.cql = parse_double(f[4]);
        e.nll = parse_double(f[5]);
        e.total = parse_double(f[6]);
        e.val_smae = parse_double(f[7]);
        e.wall_seconds = parse_double(f[8]);
        e.checkpoint = f[9] == "-" ? "" : f[9];
        r.epochs.push_back(std::move(e));
    }
    return r;
}

auto train_sft(SeqModel& m, std::span<const Example> train, const SftConfig& cfg, const TrainHooks& hooks)
    -> TrainReport {
    cfg.validate();
    TrainReport report;
    if (cfg.epochs == 0 || train.empty()) {
        return report;
    }
    const auto n = train.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const long total_steps = steps_per_epoch * cfg.epochs;
    auto params = m.trainable();
    Adam opt;
    long step = 0;
    std::vector<std::size_t> order(n);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t0 = now_seconds();
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = make_rng(cfg.seed, 0x5F7U, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < n; b += bs) {
            std::vector<Example> batch;
            for (std::size_t i = b; i < std::min(n, b + bs); ++i) {
                batch.push_back(train[order[i]]);
            }
            m.zero_grad();
            double lv = 0.0;
            {
                Tape t;
                Var loss = sft_loss(t, m, batch);
                lv = t.scalar(loss);
                if (!std::isfinite(lv)) {
                    std::vector<TokenSeq> tg;
                    for (const auto& e : batch) {
                        tg.push_back(e.tgt);
                    }
                    abort_non_finite("sft", epoch, tg);
                }
                t.backward(loss);
            }
            clip_gradients(params, cfg.clip_norm);
            opt.step(params, warmup_lr(cfg.lr, cfg.warmup_ratio, step, total_steps));
            ++step;
            loss_sum += lv * static_cast<double>(batch.size());
        }
        m.zero_grad();
        if (!m.all_finite()) {
            throw DomainError("sft produced non-finite parameters at epoch " + std::to_string(epoch));
        }
        EpochRecord rec;
        rec.stage = "sft";
        rec.epoch = epoch;
        rec.pwce = loss_sum / static_cast<double>(n);
        rec.total = rec.pwce;
        finish_epoch(m, rec, epoch, hooks, "sft");
        rec.wall_seconds = now_seconds() - t0;
        report.epochs.push_back(rec);
    }
    return report;
}

auto train_rl(SeqModel& m, std::span<const EpisodeGroup> groups, const RlConfig& cfg, const TrainHooks& hooks)
    -> TrainReport {
    cfg.validate();
    TrainReport report;
    if (cfg.epochs == 0 || groups.empty()) {
        return report;
    }
    const auto n = groups.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_groups);
    const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const long total_steps = steps_per_epoch * cfg.epochs;
    auto params = m.trainable();
    Adam opt;
    long step = 0;
    std::vector<std::size_t> order(n);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t0 = now_seconds();
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = make_rng(cfg.seed, 0x871U, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double qv = 0.0;
        double cql = 0.0;
        double nll = 0.0;
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < n; b += bs) {
            std::vector<EpisodeGroup> batch;
            for (std::size_t i = b; i < std::min(n, b + bs); ++i) {
                batch.push_back(groups[order[i]]);
            }
            m.zero_grad();
            {
                Tape t;
                auto loss = rl_loss(t, m, batch, cfg);
                const double lv = t.scalar(loss.total);
                if (!std::isfinite(lv)) {
                    std::vector<TokenSeq> tg;
                    for (const auto& g : batch) {
                        for (const auto& e : g.episodes) {
                            tg.push_back(e.tgt);
                        }
                    }
                    abort_non_finite("rl", epoch, tg);
                }
                t.backward(loss.total);
                qv += loss.qv;
                cql += loss.cql;
                nll += loss.nll;
                total += lv;
            }
            clip_gradients(params, cfg.clip_norm);
            opt.step(params, warmup_lr(cfg.lr, cfg.warmup_ratio, step, total_steps));
            seqmodel::polyak_update(m, cfg.polyak);
            ++step;
            ++batches;
        }
        m.zero_grad();
        if (!m.all_finite()) {
            throw DomainError("rl produced non-finite parameters at epoch " + std::to_string(epoch));
        }
        const auto nb = static_cast<double>(batches);
        EpochRecord rec;
        rec.stage = "rl";
        rec.epoch = epoch;
        rec.pwce = std::numeric_limits<double>::quiet_NaN();
        rec.qv = qv / nb;
        rec.cql = cql / nb;
        rec.nll = nll / nb;
        rec.total = total / nb;
        finish_epoch(m, rec, epoch, hooks, "rl");
        rec.wall_seconds = now_seconds() - t0;
        report.epochs.push_back(rec);
    }
    return report;
}

} // namespace qmetasur::training
