#include "qmetasur/seqmodel.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qmetasur::seqmodel {

namespace fs = std::filesystem;
using ag::Param;
using ag::Tape;
using ag::Var;

void ModelConfig::validate() const {
    std::vector<std::string> bad;
    if (d_model < 1) {
        bad.emplace_back("d_model >= 1");
    }
    if (n_heads < 1 || (d_model % std::max(n_heads, 1)) != 0) {
        bad.emplace_back("d_model divisible by n_heads");
    }
    if (n_enc_layers < 1 || n_dec_layers < 1) {
        bad.emplace_back("at least one encoder and one decoder layer");
    }
    if (d_ff < 1) {
        bad.emplace_back("d_ff >= 1");
    }
    if (vocab_size < 1) {
        bad.emplace_back("vocab_size >= 1");
    }
    if (max_src_len < 1 || max_tgt_len < 1) {
        bad.emplace_back("sequence lengths >= 1");
    }
    if (!bad.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& b : bad) {
            msg += " [" + b + "]";
        }
        throw ConfigError(msg);
    }
}

auto head_prefix(Head h) -> std::string {
    switch (h) {
    case Head::Q1: return "q1";
    case Head::Q2: return "q2";
    case Head::V: return "v";
    case Head::Q1Target: return "q1_target";
    case Head::Q2Target: return "q2_target";
    }
    return "q1";
}

void SeqModel::add(std::string name, Mat value) {
    index_.emplace(name, params_.size());
    params_.push_back(Param{std::move(name), std::move(value), {}});
}

void SeqModel::build_index() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        index_.emplace(params_[i].name, i);
    }
    action_col_.assign(static_cast<std::size_t>(cfg_.vocab_size), -1);
    for (std::size_t i = 0; i < actions_.size(); ++i) {
        action_col_[static_cast<std::size_t>(actions_[i])] = static_cast<int>(i);
    }
    pe_table_.resize(0, 0);
    pe_table_ = positional(std::max(cfg_.max_src_len, cfg_.max_tgt_len));
}

auto SeqModel::init(const ModelConfig& cfg, std::vector<TokenId> actions) -> SeqModel {
    cfg.validate();
    std::sort(actions.begin(), actions.end());
    actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
    if (actions.empty() || actions.front() < 0 || actions.back() >= cfg.vocab_size) {
        throw ConfigError("action set must be a non-empty subset of the vocabulary");
    }
    SeqModel m;
    m.cfg_ = cfg;
    m.actions_ = std::move(actions);
    auto rng = make_rng(cfg.seed, 0x1417U);
    const auto d = cfg.d_model;
    auto xavier = [&](Eigen::Index r, Eigen::Index c) {
        const double a = std::sqrt(6.0 / static_cast<double>(r + c));
        Mat w(r, c);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = uniform(rng, -a, a);
        }
        return w;
    };
    auto ln = [&](const std::string& p) {
        m.add(p + ".g", Mat::Ones(1, d));
        m.add(p + ".b", Mat::Zero(1, d));
    };
    auto lin = [&](const std::string& p, const std::string& w, const std::string& b, Eigen::Index r, Eigen::Index c) {
        m.add(p + "." + w, xavier(r, c));
        m.add(p + "." + b, Mat::Zero(1, c));
    };
    auto attn = [&](const std::string& p) {
        lin(p, "wq", "bq", d, d);
        lin(p, "wk", "bk", d, d);
        lin(p, "wv", "bv", d, d);
        lin(p, "wo", "bo", d, d);
    };
    auto ff = [&](const std::string& p) {
        lin(p, "w1", "b1", d, cfg.d_ff);
        lin(p, "w2", "b2", cfg.d_ff, d);
    };
    m.add("embed", xavier(cfg.vocab_size, d));
    for (int l = 0; l < cfg.n_enc_layers; ++l) {
        const auto p = "enc." + std::to_string(l);
        ln(p + ".ln1");
        attn(p + ".self");
        ln(p + ".ln2");
        ff(p + ".ff");
    }
    ln("enc.ln");
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
        const auto p = "dec." + std::to_string(l);
        ln(p + ".ln1");
        attn(p + ".self");
        ln(p + ".ln2");
        attn(p + ".cross");
        ln(p + ".ln3");
        ff(p + ".ff");
    }
    ln("dec.ln");
    lin("lm", "w", "b", d, cfg.vocab_size);
    const auto n_act = static_cast<Eigen::Index>(m.actions_.size());
    for (Head h : {Head::Q1, Head::Q2, Head::V}) {
        const auto p = head_prefix(h);
        lin(p, "w1", "b1", d, 2 * d);
        lin(p, "w2", "b2", 2 * d, h == Head::V ? 1 : n_act);
    }
    for (auto [src, dst] : {std::pair{Head::Q1, Head::Q1Target}, std::pair{Head::Q2, Head::Q2Target}}) {
        for (const char* n : {".w1", ".b1", ".w2", ".b2"}) {
            Mat copy = m.params_[m.index_.at(head_prefix(src) + n)].value;
            m.add(head_prefix(dst) + n, std::move(copy));
        }
    }
    m.build_index();
    return m;
}

auto SeqModel::action_index(TokenId token) const -> int {
    if (token < 0 || token >= cfg_.vocab_size) {
        return -1;
    }
    return action_col_[static_cast<std::size_t>(token)];
}

auto SeqModel::param(const std::string& name) -> Param& {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw Error("no parameter named " + name);
    }
    return params_[it->second];
}

auto SeqModel::param(const std::string& name) const -> const Param& {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw Error("no parameter named " + name);
    }
    return params_[it->second];
}

auto SeqModel::trainable() -> std::vector<Param*> {
    std::vector<Param*> out;
    for (auto& p : params_) {
        if (p.name.find("_target.") == std::string::npos) {
            out.push_back(&p);
        }
    }
    return out;
}

auto SeqModel::parameter_count() const -> std::size_t {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

void SeqModel::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

auto SeqModel::positional(int len) const -> Mat {
    if (len <= pe_table_.rows()) {
        return pe_table_.topRows(len);
    }
    const int d = cfg_.d_model;
    Mat pe(len, d);
    for (int pos = 0; pos < len; ++pos) {
        for (int i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
        }
    }
    return pe;
}

auto SeqModel::all_finite() const -> bool {
    return std::all_of(params_.begin(), params_.end(), [](const Param& p) { return p.value.allFinite(); });
}

auto SeqModel::operator==(const SeqModel& o) const -> bool {
    const auto& a = cfg_;
    const auto& b = o.cfg_;
    if (a.d_model != b.d_model || a.n_enc_layers != b.n_enc_layers || a.n_dec_layers != b.n_dec_layers ||
        a.n_heads != b.n_heads || a.d_ff != b.d_ff || a.vocab_size != b.vocab_size || a.max_src_len != b.max_src_len ||
        a.max_tgt_len != b.max_tgt_len || a.seed != b.seed || actions_ != o.actions_ || params_.size() != o.params_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != o.params_[i].name || params_[i].value.rows() != o.params_[i].value.rows() ||
            params_[i].value.cols() != o.params_[i].value.cols() || params_[i].value != o.params_[i].value) {
            return false;
        }
    }
    return true;
}

namespace {

auto to_ints(std::span<const TokenId> ids, int vocab) -> std::vector<int> {
    std::vector<int> out(ids.begin(), ids.end());
    for (int id : out) {
        if (id < 0 || id >= vocab) {
            throw DomainError("token id " + std::to_string(id) + " outside the vocabulary");
        }
    }
    return out;
}

auto ln_block(Tape& t, SeqModel& m, const std::string& p, Var x) -> Var {
    return ag::layernorm(t, x, t.leaf(m.param(p + ".g")), t.leaf(m.param(p + ".b")));
}

auto attn_block(Tape& t, SeqModel& m, const std::string& p, Var xq, Var xkv, const ag::AttentionMask& mask) -> Var {
    auto lin = [&](Var x, const char* w, const char* b) {
        return ag::linear(t, x, t.leaf(m.param(p + w)), t.leaf(m.param(p + b)));
    };
    Var q = lin(xq, ".wq", ".bq");
    Var k = lin(xkv, ".wk", ".bk");
    Var v = lin(xkv, ".wv", ".bv");
    Var a = ag::attention(t, q, k, v, m.config().n_heads, mask);
    return lin(a, ".wo", ".bo");
}

auto ff_block(Tape& t, SeqModel& m, const std::string& p, Var x) -> Var {
    Var h = ag::linear(t, x, t.leaf(m.param(p + ".w1")), t.leaf(m.param(p + ".b1")));
    h = ag::gelu(t, h);
    return ag::linear(t, h, t.leaf(m.param(p + ".w2")), t.leaf(m.param(p + ".b2")));
}

auto embed_with_position(Tape& t, SeqModel& m, const std::vector<int>& ids) -> Var {
    const double mult = std::sqrt(static_cast<double>(m.config().d_model));
    Var e = ag::embed(t, t.leaf(m.param("embed")), ids, mult);
    return ag::add(t, e, t.constant(m.positional(static_cast<int>(ids.size()))));
}

} // namespace

auto encode(Tape& t, SeqModel& m, std::span<const TokenId> src) -> Encoded {
    const auto& cfg = m.config();
    if (src.empty() || static_cast<int>(src.size()) > cfg.max_src_len) {
        throw DomainError("source length " + std::to_string(src.size()) + " outside [1, " +
                          std::to_string(cfg.max_src_len) + "]");
    }
    const auto ids = to_ints(src, cfg.vocab_size);
    Encoded enc;
    enc.key_valid.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        enc.key_valid[i] = ids[i] != sne::ids::pad;
    }
    ag::AttentionMask mask{false, enc.key_valid};
    Var x = embed_with_position(t, m, ids);
    for (int l = 0; l < cfg.n_enc_layers; ++l) {
        const auto p = "enc." + std::to_string(l);
        Var h = ln_block(t, m, p + ".ln1", x);
        x = ag::add(t, x, attn_block(t, m, p + ".self", h, h, mask));
        h = ln_block(t, m, p + ".ln2", x);
        x = ag::add(t, x, ff_block(t, m, p + ".ff", h));
    }
    enc.memory = ln_block(t, m, "enc.ln", x);
    return enc;
}

auto decode_teacher_forced(Tape& t, SeqModel& m, const Encoded& enc, std::span<const TokenId> tgt) -> TeacherForced {
    const auto& cfg = m.config();
    if (tgt.empty() || static_cast<int>(tgt.size()) > cfg.max_tgt_len) {
        throw DomainError("target length " + std::to_string(tgt.size()) + " outside [1, " +
                          std::to_string(cfg.max_tgt_len) + "]");
    }
    auto ids = to_ints(tgt, cfg.vocab_size);
    ids.insert(ids.begin(), sne::ids::bos);
    ids.pop_back();
    Var y = embed_with_position(t, m, ids);
    ag::AttentionMask self_mask{true, {}};
    ag::AttentionMask cross_mask{false, enc.key_valid};
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
        const auto p = "dec." + std::to_string(l);
        Var h = ln_block(t, m, p + ".ln1", y);
        y = ag::add(t, y, attn_block(t, m, p + ".self", h, h, self_mask));
        h = ln_block(t, m, p + ".ln2", y);
        y = ag::add(t, y, attn_block(t, m, p + ".cross", h, enc.memory, cross_mask));
        h = ln_block(t, m, p + ".ln3", y);
        y = ag::add(t, y, ff_block(t, m, p + ".ff", h));
    }
    TeacherForced out;
    out.hidden = ln_block(t, m, "dec.ln", y);
    out.logits = ag::linear(t, out.hidden, t.leaf(m.param("lm.w")), t.leaf(m.param("lm.b")));
    return out;
}

auto forward_teacher_forced(Tape& t, SeqModel& m, std::span<const TokenId> src, std::span<const TokenId> tgt)
    -> TeacherForced {
    const auto enc = encode(t, m, src);
    return decode_teacher_forced(t, m, enc, tgt);
}

auto head_forward(Tape& t, SeqModel& m, Head which, Var h) -> Var {
    const auto p = head_prefix(which);
    Var z = ag::linear(t, h, t.leaf(m.param(p + ".w1")), t.leaf(m.param(p + ".b1")));
    z = ag::gelu(t, z);
    return ag::linear(t, z, t.leaf(m.param(p + ".w2")), t.leaf(m.param(p + ".b2")));
}

auto head_eval(const SeqModel& m, Head which, const Mat& h) -> Mat {
    const auto p = head_prefix(which);
    Mat z = h * m.param(p + ".w1").value;
    z.rowwise() += m.param(p + ".b1").value.row(0);
    z = z.unaryExpr([](double v) { return ag::gelu_value(v); });
    Mat out = z * m.param(p + ".w2").value;
    out.rowwise() += m.param(p + ".b2").value.row(0);
    return out;
}

auto q_values(const SeqModel& m, const Mat& h) -> TwinQ { return {head_eval(m, Head::Q1, h), head_eval(m, Head::Q2, h)}; }

auto v_value(const SeqModel& m, const Mat& h) -> Mat { return head_eval(m, Head::V, h); }

auto target_q(const SeqModel& m, const Mat& h) -> Mat {
    return head_eval(m, Head::Q1Target, h).cwiseMin(head_eval(m, Head::Q2Target, h));
}

void polyak_update(SeqModel& m, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("Polyak rate must lie in (0, 1]");
    }
    for (auto [src, dst] : {std::pair{Head::Q1, Head::Q1Target}, std::pair{Head::Q2, Head::Q2Target}}) {
        for (const char* n : {".w1", ".b1", ".w2", ".b2"}) {
            auto& target = m.param(head_prefix(dst) + n).value;
            const auto& online = m.param(head_prefix(src) + n).value;
            target = (1.0 - alpha) * target + alpha * online;
        }
    }
}

namespace {

using Row = Eigen::RowVectorXd;

auto p_layernorm(const Row& x, const Mat& g, const Mat& b) -> Row {
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    Row xhat = (x.array() - mu) / std::sqrt(var + 1e-5);
    return xhat.cwiseProduct(g.row(0)) + b.row(0);
}

auto p_linear(const Row& x, const Mat& w, const Mat& b) -> Row { return x * w + b.row(0); }

// One query row against cached keys/values; invalid keys are skipped.
auto p_attend(const Row& q, const Mat& k, const Mat& v, int n_heads, const std::vector<bool>* valid) -> Row {
    const auto d = q.size();
    const auto dk = d / n_heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
    Row out = Row::Zero(d);
    for (int h = 0; h < n_heads; ++h) {
        Eigen::VectorXd s = k.middleCols(h * dk, dk) * q.segment(h * dk, dk).transpose() * inv;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            if (valid == nullptr || (*valid)[static_cast<std::size_t>(j)]) {
                mx = std::max(mx, s(j));
            }
        }
        if (!std::isfinite(mx)) {
            continue;
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            s(j) = (valid == nullptr || (*valid)[static_cast<std::size_t>(j)]) ? std::exp(s(j) - mx) : 0.0;
            z += s(j);
        }
        out.segment(h * dk, dk) = (s.transpose() / z) * v.middleCols(h * dk, dk);
    }
    return out;
}

void append_row(Mat& m, const Row& r) {
    m.conservativeResize(m.rows() + 1, r.size());
    m.row(m.rows() - 1) = r;
}

} // namespace

IncrementalDecoder::IncrementalDecoder(const SeqModel& m, std::span<const TokenId> src) : m_(&m) {
    Tape t;
    t.set_no_grad(true);
    auto& mm = const_cast<SeqModel&>(m); // no-grad tape only reads parameters
    const auto enc = encode(t, mm, src);
    memory_ = t.value(enc.memory);
    key_valid_ = enc.key_valid;
    const auto& cfg = m.config();
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
        const auto p = "dec." + std::to_string(l) + ".cross";
        Mat k = memory_ * m.param(p + ".wk").value;
        k.rowwise() += m.param(p + ".bk").value.row(0);
        Mat v = memory_ * m.param(p + ".wv").value;
        v.rowwise() += m.param(p + ".bv").value.row(0);
        cross_k_.push_back(std::move(k));
        cross_v_.push_back(std::move(v));
        self_k_.emplace_back(0, cfg.d_model);
        self_v_.emplace_back(0, cfg.d_model);
    }
}

auto IncrementalDecoder::step(TokenId input) -> Eigen::RowVectorXd {
    const auto& m = *m_;
    const auto& cfg = m.config();
    if (input < 0 || input >= cfg.vocab_size) {
        throw DomainError("token id " + std::to_string(input) + " outside the vocabulary");
    }
    Row x = m.param("embed").value.row(input) * std::sqrt(static_cast<double>(cfg.d_model));
    x += m.positional(pos_ + 1).row(pos_);
    auto P = [&](const std::string& n) -> const Mat& { return m.param(n).value; };
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
        const auto p = "dec." + std::to_string(l);
        const auto li = static_cast<std::size_t>(l);
        Row h = p_layernorm(x, P(p + ".ln1.g"), P(p + ".ln1.b"));
        append_row(self_k_[li], p_linear(h, P(p + ".self.wk"), P(p + ".self.bk")));
        append_row(self_v_[li], p_linear(h, P(p + ".self.wv"), P(p + ".self.bv")));
        Row q = p_linear(h, P(p + ".self.wq"), P(p + ".self.bq"));
        Row a = p_attend(q, self_k_[li], self_v_[li], cfg.n_heads, nullptr);
        x += p_linear(a, P(p + ".self.wo"), P(p + ".self.bo"));
        h = p_layernorm(x, P(p + ".ln2.g"), P(p + ".ln2.b"));
        q = p_linear(h, P(p + ".cross.wq"), P(p + ".cross.bq"));
        a = p_attend(q, cross_k_[li], cross_v_[li], cfg.n_heads, &key_valid_);
        x += p_linear(a, P(p + ".cross.wo"), P(p + ".cross.bo"));
        h = p_layernorm(x, P(p + ".ln3.g"), P(p + ".ln3.b"));
        Row f = p_linear(h, P(p + ".ff.w1"), P(p + ".ff.b1")).unaryExpr([](double v) { return ag::gelu_value(v); });
        x += p_linear(f, P(p + ".ff.w2"), P(p + ".ff.b2"));
    }
    ++pos_;
    return p_layernorm(x, P("dec.ln.g"), P("dec.ln.b"));
}

auto IncrementalDecoder::lm_logits(const Eigen::RowVectorXd& h) const -> Eigen::RowVectorXd {
    return p_linear(h, m_->param("lm.w").value, m_->param("lm.b").value);
}

auto grad_check(SeqModel& m, const LossFn& loss_fn, int n_probes, std::uint64_t seed) -> GradCheckResult {
    constexpr double step = 1e-4;
    // Gradients below this magnitude are compared absolutely; FD truncation error dominates there.
    constexpr double floor = 1e-6;
    ag::DetachCache cache;
    cache.record();
    m.zero_grad();
    {
        Tape t(&cache);
        Var loss = loss_fn(t, m);
        if (!std::isfinite(t.scalar(loss))) {
            throw DomainError("grad_check: loss is not finite");
        }
        t.backward(loss);
    }
    auto params = m.trainable();
    std::vector<double> weights;
    for (auto* p : params) {
        weights.push_back(static_cast<double>(p->value.size()));
    }
    auto rng = make_rng(seed, 0x6C4U);
    std::discrete_distribution<std::size_t> pick_param(weights.begin(), weights.end());
    auto eval = [&]() {
        cache.replay();
        Tape t(&cache);
        const double v = t.scalar(loss_fn(t, m));
        if (!std::isfinite(v)) {
            throw DomainError("grad_check: perturbed loss is not finite");
        }
        return v;
    };
    GradCheckResult res;
    for (int i = 0; i < n_probes; ++i) {
        auto* p = params[pick_param(rng)];
        const auto e = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(p->value.size())));
        const double analytic = p->grad.size() == 0 ? 0.0 : p->grad.data()[e];
        const double orig = p->value.data()[e];
        p->value.data()[e] = orig + step;
        const double fp = eval();
        p->value.data()[e] = orig - step;
        const double fm = eval();
        p->value.data()[e] = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double rel = std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), floor});
        res.max_rel_error = std::max(res.max_rel_error, rel);
        ++res.probes;
    }
    m.zero_grad();
    cache.off();
    return res;
}

namespace {

constexpr const char* kManifestMagic = "qmetasur-checkpoint";
constexpr int kCheckpointVersion = 1;
constexpr char kBlobMagic[8] = {'Q', 'M', 'S', 'B', 'L', 'O', 'B', '1'};

void write_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(buf), 8);
}

auto read_le(std::istream& in) -> double {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) {
        throw ConfigError("checkpoint blob is truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

void replace_file(const fs::path& tmp, const fs::path& dst) { fs::rename(tmp, dst); }

} // namespace

void save_checkpoint(const SeqModel& m, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& c = m.config();
    const auto manifest_tmp = dir / "model.manifest.tmp";
    const auto blob_tmp = dir / "model.bin.tmp";
    {
        std::ofstream out(manifest_tmp);
        out << kManifestMagic << ' ' << kCheckpointVersion << '\n';
        out << "config d_model=" << c.d_model << " n_enc_layers=" << c.n_enc_layers << " n_dec_layers=" << c.n_dec_layers
            << " n_heads=" << c.n_heads << " d_ff=" << c.d_ff << " vocab_size=" << c.vocab_size
            << " max_src_len=" << c.max_src_len << " max_tgt_len=" << c.max_tgt_len << " seed=" << c.seed << '\n';
        out << "actions";
        for (auto a : m.actions()) {
            out << ' ' << a;
        }
        out << '\n';
        std::size_t offset = 0;
        for (const auto& p : m.params()) {
            out << "tensor " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << " f64 " << offset << '\n';
            offset += static_cast<std::size_t>(p.value.size());
        }
        if (!out) {
            throw Error("cannot write " + manifest_tmp.string());
        }
    }
    {
        std::ofstream out(blob_tmp, std::ios::binary);
        out.write(kBlobMagic, sizeof kBlobMagic);
        for (const auto& p : m.params()) {
            for (Eigen::Index i = 0; i < p.value.size(); ++i) {
                write_le(out, p.value.data()[i]);
            }
        }
        if (!out) {
            throw Error("cannot write " + blob_tmp.string());
        }
    }
    replace_file(blob_tmp, dir / "model.bin");
    replace_file(manifest_tmp, dir / "model.manifest");
}

auto load_checkpoint(const fs::path& dir) -> SeqModel {
    std::ifstream man(dir / "model.manifest");
    if (!man) {
        throw ConfigError("missing checkpoint manifest " + (dir / "model.manifest").string());
    }
    std::string magic;
    int version = 0;
    man >> magic >> version;
    if (magic != kManifestMagic || version != kCheckpointVersion) {
        throw ConfigError("unsupported checkpoint header in " + dir.string());
    }
    SeqModel m;
    std::string line;
    std::getline(man, line);
    struct Entry {
        std::string name;
        Eigen::Index rows, cols;
    };
    std::vector<Entry> entries;
    while (std::getline(man, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "config") {
            std::string kv;
            while (ls >> kv) {
                const auto eq = kv.find('=');
                const auto key = kv.substr(0, eq);
                const auto val = kv.substr(eq + 1);
                auto& c = m.cfg_;
                if (key == "d_model") c.d_model = std::stoi(val);
                else if (key == "n_enc_layers") c.n_enc_layers = std::stoi(val);
                else if (key == "n_dec_layers") c.n_dec_layers = std::stoi(val);
                else if (key == "n_heads") c.n_heads = std::stoi(val);
                else if (key == "d_ff") c.d_ff = std::stoi(val);
                else if (key == "vocab_size") c.vocab_size = std::stoi(val);
                else if (key == "max_src_len") c.max_src_len = std::stoi(val);
                else if (key == "max_tgt_len") c.max_tgt_len = std::stoi(val);
                else if (key == "seed") c.seed = std::stoull(val);
            }
        } else if (tag == "actions") {
            TokenId a = 0;
            while (ls >> a) {
                m.actions_.push_back(a);
            }
        } else if (tag == "tensor") {
            Entry e;
            std::string dtype;
            ls >> e.name >> e.rows >> e.cols >> dtype;
            if (dtype != "f64") {
                throw ConfigError("unsupported tensor dtype " + dtype);
            }
            entries.push_back(std::move(e));
        }
    }
    m.cfg_.validate();
    std::ifstream blob(dir / "model.bin", std::ios::binary);
    if (!blob) {
        throw ConfigError("missing checkpoint blob " + (dir / "model.bin").string());
    }
    char head[8];
    blob.read(head, 8);
    if (!blob || std::memcmp(head, kBlobMagic, 8) != 0) {
        throw ConfigError("bad checkpoint blob header in " + dir.string());
    }
    for (const auto& e : entries) {
        Mat v(e.rows, e.cols);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v.data()[i] = read_le(blob);
        }
        m.params_.push_back(Param{e.name, std::move(v), {}});
    }
    m.build_index();
    return m;
}

} // namespace qmetasur::seqmodel
