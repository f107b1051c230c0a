#include "qmetasur/decoding.hpp"

#include "qmetasur/errors.hpp"

namespace qmetasur::decoding {

auto mode_name(DecodeMode m) -> std::string { return m == DecodeMode::Greedy ? "greedy" : "advantage"; }

auto parse_mode(const std::string& s) -> DecodeMode {
    if (s == "greedy") {
        return DecodeMode::Greedy;
    }
    if (s == "advantage") {
        return DecodeMode::Advantage;
    }
    throw ConfigError("unknown decode mode '" + s + "'");
}

void DecodeConfig::validate() const {
    if (!(beta >= 0.0) || max_len < 1) {
        throw ConfigError("decode config needs beta >= 0 and max_len >= 1");
    }
}

auto argmax(const Eigen::RowVectorXd& scores) -> TokenId {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

auto decode(const SeqModel& m, std::span<const TokenId> src, const DecodeConfig& cfg) -> TokenSeq {
    cfg.validate();
    const int max_len = std::min(cfg.max_len, m.config().max_tgt_len);
    seqmodel::IncrementalDecoder dec(m, src);
    const auto& actions = m.actions();
    TokenSeq out;
    TokenId input = sne::ids::bos;
    for (int step = 0; step < max_len; ++step) {
        const Eigen::RowVectorXd h = dec.step(input);
        Eigen::RowVectorXd scores = dec.lm_logits(h);
        if (cfg.mode == DecodeMode::Advantage && cfg.beta != 0.0) {
            const ag::Mat hm = h;
            const ag::Mat adv = seqmodel::target_q(m, hm).array() - seqmodel::v_value(m, hm)(0, 0);
            for (std::size_t a = 0; a < actions.size(); ++a) {
                scores(actions[a]) += cfg.beta * adv(0, static_cast<Eigen::Index>(a));
            }
        }
        const TokenId tok = argmax(scores);
        out.ids.push_back(tok);
        if (tok == sne::ids::eos) {
            break;
        }
        input = tok;
    }
    return out;
}

auto predict_objectives(const SeqModel& m, const sne::Vocab& vocab, const std::string& metadata_text,
                        std::span<const double> x, std::size_t k, const dataset::ObjectiveRanges& ranges,
                        const DecodeConfig& cfg) -> Prediction {
    const auto src = sne::source_sequence(vocab, metadata_text, x);
    const auto out = decode(m, src.view(), cfg);
    Prediction p;
    try {
        p.y = sne::parse_prediction(out.view(), k, vocab.config());
    } catch (const ParseError&) {
        p.flagged = true;
    } catch (const ArityError&) {
        p.flagged = true;
    }
    if (p.flagged) {
        p.y = ranges.midpoints();
    }
    return p;
}

auto predict_batch(const SeqModel& m, const sne::Vocab& vocab, const std::string& metadata_text,
                   std::span<const std::vector<double>> xs, std::size_t k, const dataset::ObjectiveRanges& ranges,
                   const DecodeConfig& cfg) -> std::vector<Prediction> {
    std::vector<Prediction> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        out.push_back(predict_objectives(m, vocab, metadata_text, x, k, ranges, cfg));
    }
    return out;
}

} // namespace qmetasur::decoding
