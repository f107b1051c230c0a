#include "qmetasur/errors.hpp"
#include "qmetasur/seqmodel.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace qmetasur;
using namespace qmetasur::seqmodel;

namespace {

struct Fixture {
    sne::SneConfig sne_cfg;
    sne::Vocab vocab;
    ModelConfig cfg;
    std::vector<TokenId> src;
    std::vector<TokenId> tgt;
};

auto small(int d_model = 16, std::uint64_t seed = 3) -> Fixture {
    Fixture f;
    f.sne_cfg.n_digit = 3;
    const std::vector<std::string> corpus{sne::render_metadata({"Sphere", "F1", {"instance=1"}, 3})};
    f.vocab = sne::Vocab::build(corpus, f.sne_cfg);
    f.cfg.d_model = d_model;
    f.cfg.n_heads = 2;
    f.cfg.d_ff = 2 * d_model;
    f.cfg.n_enc_layers = 1;
    f.cfg.n_dec_layers = 1;
    f.cfg.vocab_size = static_cast<int>(f.vocab.size());
    f.cfg.max_src_len = 80;
    f.cfg.max_tgt_len = 20;
    f.cfg.seed = seed;
    f.src = f.vocab.tokenize(corpus[0]).ids;
    const auto x = sne::encode_vector(std::vector<double>{0.25, -0.5, 0.75}, f.sne_cfg).ids;
    f.src.insert(f.src.end(), x.begin(), x.end());
    f.tgt = sne::encode_objectives(std::vector<double>{0.5, 1.25}, f.sne_cfg).ids;
    return f;
}

auto model_of(const Fixture& f) -> SeqModel { return SeqModel::init(f.cfg, f.vocab.numeric_support()); }

auto logits_of(SeqModel& m, std::span<const TokenId> src, std::span<const TokenId> tgt) -> Mat {
    ag::Tape t;
    t.set_no_grad(true);
    return t.value(forward_teacher_forced(t, m, src, tgt).logits);
}

} // namespace

TEST(SeqModel, InitDeterministic) {
    const auto f = small();
    EXPECT_TRUE(model_of(f) == model_of(f));
    auto g = f;
    g.cfg.seed = 4;
    EXPECT_FALSE(model_of(f) == model_of(g));
}

TEST(SeqModel, TargetHeadsStartEqual) {
    const auto f = small();
    const auto m = model_of(f);
    for (const char* n : {".w1", ".b1", ".w2", ".b2"}) {
        EXPECT_EQ(m.param(std::string("q1") + n).value, m.param(std::string("q1_target") + n).value);
        EXPECT_EQ(m.param(std::string("q2") + n).value, m.param(std::string("q2_target") + n).value);
    }
    EXPECT_NE(m.param("q1.w2").value, m.param("q2.w2").value);
    EXPECT_EQ(m.param("q1.w2").value.cols(), static_cast<Eigen::Index>(m.actions().size()));
    EXPECT_EQ(m.param("v.w2").value.cols(), 1);
}

TEST(SeqModel, ActionIndex) {
    const auto f = small();
    const auto m = model_of(f);
    for (std::size_t i = 0; i < m.actions().size(); ++i) {
        EXPECT_EQ(m.action_index(m.actions()[i]), static_cast<int>(i));
    }
    EXPECT_EQ(m.action_index(f.cfg.vocab_size - 1), -1); // a word token
    EXPECT_EQ(m.action_index(-3), -1);
}

TEST(SeqModel, ConfigValidation) {
    auto f = small();
    f.cfg.n_heads = 3; // 16 not divisible by 3
    EXPECT_THROW(f.cfg.validate(), ConfigError);
    f.cfg = small().cfg;
    f.cfg.vocab_size = 0;
    EXPECT_THROW(f.cfg.validate(), ConfigError);
}

TEST(SeqModel, LogitsShapeAndSoftmax) {
    const auto f = small();
    auto m = model_of(f);
    const Mat lg = logits_of(m, f.src, f.tgt);
    ASSERT_EQ(lg.rows(), static_cast<Eigen::Index>(f.tgt.size()));
    ASSERT_EQ(lg.cols(), f.cfg.vocab_size);
    const Mat lp = ag::log_softmax_rows(lg);
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
        EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-12);
    }
    EXPECT_TRUE(lg.allFinite());
}

TEST(SeqModel, CausalDecoder) {
    const auto f = small();
    auto m = model_of(f);
    const Mat a = logits_of(m, f.src, f.tgt);
    for (std::size_t k = 0; k + 1 < f.tgt.size(); ++k) {
        auto changed = f.tgt;
        changed[k] = changed[k] == sne::ids::digit0 + 7 ? sne::ids::digit0 + 2 : sne::ids::digit0 + 7;
        const Mat b = logits_of(m, f.src, changed);
        // Row r sees decoder inputs BOS, tgt[0..r-1].
        for (std::size_t r = 0; r <= k; ++r) {
            EXPECT_EQ(a.row(static_cast<Eigen::Index>(r)), b.row(static_cast<Eigen::Index>(r)));
        }
        EXPECT_GT((a.row(static_cast<Eigen::Index>(k + 1)) - b.row(static_cast<Eigen::Index>(k + 1))).norm(), 0.0);
    }
}

TEST(SeqModel, SourcePaddingMasked) {
    const auto f = small();
    auto m = model_of(f);
    auto padded = f.src;
    padded.insert(padded.end(), 5, sne::ids::pad);
    EXPECT_LE((logits_of(m, f.src, f.tgt) - logits_of(m, padded, f.tgt)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SeqModel, LengthErrors) {
    const auto f = small();
    auto m = model_of(f);
    std::vector<TokenId> too_long(static_cast<std::size_t>(f.cfg.max_src_len + 1), sne::ids::plus);
    EXPECT_THROW((void)logits_of(m, too_long, f.tgt), DomainError);
    EXPECT_THROW((void)logits_of(m, std::vector<TokenId>{}, f.tgt), DomainError);
}

TEST(SeqModel, TargetQIsMin) {
    const auto f = small();
    auto m = model_of(f);
    // Make the two target heads differ.
    m.param("q2_target.b2").value.array() += 0.3;
    m.param("q2_target.b2").value(0, 0) -= 1.0;
    Mat h = Mat::Random(4, f.cfg.d_model);
    const Mat q = target_q(m, h);
    const Mat a = head_eval(m, Head::Q1Target, h);
    const Mat b = head_eval(m, Head::Q2Target, h);
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        EXPECT_LE(q.data()[i], a.data()[i]);
        EXPECT_LE(q.data()[i], b.data()[i]);
        EXPECT_TRUE(q.data()[i] == a.data()[i] || q.data()[i] == b.data()[i]);
    }
}

TEST(SeqModel, HeadEvalMatchesTape) {
    const auto f = small();
    auto m = model_of(f);
    Mat h = Mat::Random(3, f.cfg.d_model);
    for (Head w : {Head::Q1, Head::Q2, Head::V}) {
        ag::Tape t;
        const Mat tape = t.value(head_forward(t, m, w, t.constant(h)));
        EXPECT_LE((tape - head_eval(m, w, h)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SeqModel, PolyakUpdate) {
    const auto f = small();
    auto m = model_of(f);
    m.param("q1.w1").value.array() += 1.0;
    const Mat before = m.param("q1_target.w1").value;
    polyak_update(m, 0.01);
    const Mat expect = 0.99 * before + 0.01 * m.param("q1.w1").value;
    EXPECT_LE((m.param("q1_target.w1").value - expect).cwiseAbs().maxCoeff(), 1e-15);
    polyak_update(m, 1.0);
    EXPECT_EQ(m.param("q1_target.w1").value, m.param("q1.w1").value);
    EXPECT_THROW(polyak_update(m, 0.0), ConfigError);
    EXPECT_THROW(polyak_update(m, 1.5), ConfigError);
}

TEST(SeqModel, TrainableExcludesTargets) {
    const auto f = small();
    auto m = model_of(f);
    std::size_t n = 0;
    for (auto* p : m.trainable()) {
        EXPECT_EQ(p->name.find("_target"), std::string::npos);
        n += static_cast<std::size_t>(p->value.size());
    }
    std::size_t targets = 0;
    for (const auto& p : m.params()) {
        if (p.name.find("_target") != std::string::npos) {
            targets += static_cast<std::size_t>(p.value.size());
        }
    }
    EXPECT_EQ(n + targets, m.parameter_count());
}

TEST(SeqModel, IncrementalMatchesTeacherForcing) {
    const auto f = small();
    auto m = model_of(f);
    ag::Tape t;
    t.set_no_grad(true);
    const auto tf = forward_teacher_forced(t, m, f.src, f.tgt);
    const Mat& hidden = t.value(tf.hidden);
    const Mat& logits = t.value(tf.logits);
    IncrementalDecoder dec(m, f.src);
    TokenId input = sne::ids::bos;
    for (std::size_t i = 0; i < f.tgt.size(); ++i) {
        const auto h = dec.step(input);
        EXPECT_LE((h - hidden.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((dec.lm_logits(h) - logits.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-10);
        input = f.tgt[i];
    }
    EXPECT_EQ(dec.position(), static_cast<int>(f.tgt.size()));
}

TEST(GradCheck, ConstantLossHasZeroError) {
    const auto f = small();
    auto m = model_of(f);
    const auto r = grad_check(m, [](ag::Tape& t, SeqModel&) { return t.constant(Mat::Constant(1, 1, 2.0)); }, 20, 1);
    EXPECT_EQ(r.probes, 20);
    EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, LinearHead) {
    const auto f = small();
    auto m = model_of(f);
    const Mat h = Mat::Random(2, f.cfg.d_model);
    auto loss = [&](ag::Tape& t, SeqModel& mm) {
        return ag::sum(t, ag::linear(t, t.constant(h), t.leaf(mm.param("lm.w")), t.leaf(mm.param("lm.b"))));
    };
    EXPECT_LE(grad_check(m, loss, 60, 2).max_rel_error, 1e-6);
}

TEST(GradCheck, FullForwardNll) {
    const auto f = small();
    auto m = model_of(f);
    std::vector<int> targets(f.tgt.begin(), f.tgt.end());
    std::vector<double> w(f.tgt.size(), 1.0);
    w[2] = 0.5;
    auto loss = [&](ag::Tape& t, SeqModel& mm) {
        const auto tf = forward_teacher_forced(t, mm, f.src, f.tgt);
        const auto nll = ag::weighted_nll(t, tf.logits, targets, w);
        const auto q = head_forward(t, mm, Head::Q1, tf.hidden);
        return ag::add(t, nll, ag::scale(t, ag::square_sum(t, q), 0.01));
    };
    EXPECT_LE(grad_check(m, loss, 80, 5).max_rel_error, 1e-4);
}

TEST(Checkpoint, RoundTrip) {
    const auto f = small();
    auto m = model_of(f);
    polyak_update(m, 0.5);
    const auto dir = std::filesystem::temp_directory_path() / "qms_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(m, dir);
    auto r = load_checkpoint(dir);
    EXPECT_TRUE(r == m);
    EXPECT_EQ(r.actions(), m.actions());
    EXPECT_EQ(logits_of(r, f.src, f.tgt), logits_of(m, f.src, f.tgt));
    std::filesystem::remove_all(dir);
    EXPECT_THROW((void)load_checkpoint(dir), Error);
}
