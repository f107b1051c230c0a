#include "qmetasur/sne.hpp"

#include "qmetasur/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qmetasur::sne {

void SneConfig::validate() const {
    if (n_digit < 1) {
        throw DomainError("n_digit must be >= 1");
    }
    if (exp_min > 0 || exp_max < 0) {
        throw DomainError("exponent range must contain 0");
    }
}

auto exponent_token(int exponent, const SneConfig& cfg) -> TokenId {
    if (exponent < cfg.exp_min || exponent > cfg.exp_max) {
        throw RangeError("exponent " + std::to_string(exponent) + " outside [" + std::to_string(cfg.exp_min) + ", " +
                         std::to_string(cfg.exp_max) + "]");
    }
    return ids::exp_base + (exponent - cfg.exp_min);
}

auto is_exponent_token(TokenId id, const SneConfig& cfg) noexcept -> bool {
    return id >= ids::exp_base && id <= ids::exp_base + (cfg.exp_max - cfg.exp_min);
}

auto exponent_of(TokenId id, const SneConfig& cfg) -> int {
    if (!is_exponent_token(id, cfg)) {
        throw DomainError("token " + std::to_string(id) + " is not an exponent token");
    }
    return cfg.exp_min + (id - ids::exp_base);
}

auto is_digit(TokenId id) noexcept -> bool { return id >= ids::digit0 && id < ids::digit0 + 10; }

auto is_sign(TokenId id) noexcept -> bool { return id == ids::plus || id == ids::minus || id == ids::digit0; }

auto numeric_token_count(const SneConfig& cfg) noexcept -> int { return ids::exp_base + (cfg.exp_max - cfg.exp_min + 1); }

auto encode_scalar(double z, const SneConfig& cfg) -> TokenSeq {
    if (!std::isfinite(z)) {
        throw DomainError("cannot encode non-finite value");
    }
    TokenSeq out;
    out.ids.reserve(static_cast<std::size_t>(cfg.segment_length()));
    if (z == 0.0) {
        out.ids.push_back(ids::digit0);
        out.ids.push_back(exponent_token(0, cfg));
        out.ids.insert(out.ids.end(), static_cast<std::size_t>(cfg.n_digit), ids::digit0);
        return out;
    }

    // to_chars rounds the exact binary value to nearest, ties to even.
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), std::fabs(z), std::chars_format::scientific, cfg.n_digit - 1);
    std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
    auto e_pos = text.find('e');
    int exponent = 0;
    std::from_chars(text.data() + e_pos + 1 + (text[e_pos + 1] == '+' ? 1 : 0), text.data() + text.size(), exponent);

    out.ids.push_back(z > 0 ? ids::plus : ids::minus);
    out.ids.push_back(exponent_token(exponent, cfg));
    for (std::size_t i = 0; i < e_pos; ++i) {
        if (text[i] != '.') {
            out.ids.push_back(ids::digit0 + (text[i] - '0'));
        }
    }
    return out;
}

auto decode_scalar(std::span<const TokenId> segment, const SneConfig& cfg) -> double {
    const auto len = static_cast<std::size_t>(cfg.segment_length());
    std::vector<TokenId> raw(segment.begin(), segment.end());
    if (segment.empty() || !is_sign(segment[0])) {
        throw ParseError("segment must start with a sign token", 0, raw);
    }
    if (segment.size() < 2 || !is_exponent_token(segment[1], cfg)) {
        throw ParseError("missing exponent token", 1, raw);
    }
    if (segment.size() != len) {
        throw ParseError("expected " + std::to_string(cfg.n_digit) + " mantissa digits", std::min(segment.size(), len),
                         raw);
    }
    std::string text;
    text.reserve(len + 8);
    for (std::size_t i = 2; i < len; ++i) {
        if (!is_digit(segment[i])) {
            throw ParseError("expected mantissa digit", i, raw);
        }
        text.push_back(static_cast<char>('0' + (segment[i] - ids::digit0)));
        if (i == 2) {
            text.push_back('.');
        }
    }
    if (segment[0] == ids::digit0) {
        return 0.0;
    }
    text += 'e';
    text += std::to_string(exponent_of(segment[1], cfg));
    double value = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), value);
    return segment[0] == ids::minus ? -value : value;
}

auto encode_vector(std::span<const double> x, const SneConfig& cfg) -> TokenSeq {
    if (x.empty()) {
        throw ParseError("cannot encode an empty vector", 0);
    }
    TokenSeq out;
    out.ids.reserve(x.size() * static_cast<std::size_t>(cfg.segment_length() + 1) + 1);
    out.ids.push_back(ids::open);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i > 0) {
            out.ids.push_back(ids::comma);
        }
        try {
            out.append(encode_scalar(x[i], cfg));
        } catch (const RangeError& e) {
            throw RangeError("component " + std::to_string(i) + ": " + e.what());
        } catch (const DomainError& e) {
            throw DomainError("component " + std::to_string(i) + ": " + e.what());
        }
    }
    out.ids.push_back(ids::close);
    return out;
}

auto encode_objectives(std::span<const double> y, const SneConfig& cfg) -> TokenSeq {
    auto out = encode_vector(y, cfg);
    out.ids.push_back(ids::eos);
    return out;
}

auto parse_prediction(std::span<const TokenId> seq, std::size_t k, const SneConfig& cfg) -> std::vector<double> {
    std::vector<TokenId> raw(seq.begin(), seq.end());
    if (seq.empty() || seq[0] != ids::open) {
        throw ParseError("prediction must start with '['", 0, raw);
    }
    const auto len = static_cast<std::size_t>(cfg.segment_length());
    std::vector<double> values;
    std::size_t pos = 1;
    while (true) {
        if (pos + len > seq.size()) {
            throw ParseError("truncated objective segment", pos, raw);
        }
        try {
            values.push_back(decode_scalar(seq.subspan(pos, len), cfg));
        } catch (const ParseError& e) {
            throw ParseError("malformed objective segment", pos + e.position(), raw);
        }
        pos += len;
        if (pos >= seq.size()) {
            throw ParseError("missing closing ']'", pos, raw);
        }
        if (seq[pos] == ids::close) {
            break;
        }
        if (seq[pos] != ids::comma) {
            throw ParseError("expected ',' or ']'", pos, raw);
        }
        ++pos;
    }
    if (values.size() != k) {
        throw ArityError("expected " + std::to_string(k) + " objective segments, found " + std::to_string(values.size()),
                         raw);
    }
    return values;
}

auto objective_segments(std::span<const TokenId> target, const SneConfig& cfg) -> std::vector<SegmentSlot> {
    std::vector<SegmentSlot> slots(target.size());
    std::vector<TokenId> raw(target.begin(), target.end());
    if (target.empty() || target[0] != ids::open) {
        throw ParseError("target must start with '['", 0, raw);
    }
    const auto len = static_cast<std::size_t>(cfg.segment_length());
    std::size_t pos = 1;
    int segment = 0;
    while (true) {
        if (pos + len > target.size()) {
            throw ParseError("truncated objective segment", pos, raw);
        }
        for (std::size_t l = 0; l < len; ++l) {
            const auto id = target[pos + l];
            const bool ok = l == 0 ? is_sign(id) : (l == 1 ? is_exponent_token(id, cfg) : is_digit(id));
            if (!ok) {
                throw ParseError("segment token of wrong kind", pos + l, raw);
            }
            slots[pos + l] = {segment, static_cast<int>(l) + 1};
        }
        pos += len;
        ++segment;
        if (pos >= target.size()) {
            throw ParseError("missing closing ']'", pos, raw);
        }
        if (target[pos] == ids::close) {
            break;
        }
        if (target[pos] != ids::comma) {
            throw ParseError("expected ',' or ']'", pos, raw);
        }
        ++pos;
    }
    for (std::size_t i = pos + 1; i < target.size(); ++i) {
        if (target[i] != ids::eos && target[i] != ids::pad) {
            throw ParseError("unexpected token after ']'", i, raw);
        }
    }
    return slots;
}

auto render_metadata(const Metadata& m) -> std::string {
    std::ostringstream os;
    os << "You are a multi-objective multi-task surrogate model, predict fitness given m and pop; "
       << "function name is " << m.f_name << ", function ID is " << m.f_id << ", ";
    for (std::size_t i = 0; i < m.key_features.size(); ++i) {
        os << "key feature " << (i + 1) << " is " << m.key_features[i] << " | ";
    }
    os << "the dimensionality is dim=" << m.dim << ".";
    return os.str();
}

auto Vocab::numeric_tokens(const SneConfig& cfg) -> std::vector<std::string> {
    std::vector<std::string> t = {"<pad>", "</s>", "<unk>", "<s>", "+", "-"};
    for (int d = 0; d < 10; ++d) {
        t.push_back(std::to_string(d));
    }
    t.insert(t.end(), {"[", "]", ","});
    for (int e = cfg.exp_min; e <= cfg.exp_max; ++e) {
        t.push_back("<10^" + std::to_string(e) + ">");
    }
    return t;
}

void Vocab::index() {
    lookup_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        lookup_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
    numeric_support_.clear();
    numeric_mask_.assign(tokens_.size(), false);
    for (TokenId i = 0; i < numeric_token_count(cfg_); ++i) {
        if (i == ids::unk || i == ids::bos) {
            continue;
        }
        numeric_support_.push_back(i);
        numeric_mask_[static_cast<std::size_t>(i)] = true;
    }
}

auto Vocab::build(std::span<const std::string> corpus, const SneConfig& cfg) -> Vocab {
    cfg.validate();
    Vocab v;
    v.cfg_ = cfg;
    v.tokens_ = numeric_tokens(cfg);
    std::set<std::string> known(v.tokens_.begin(), v.tokens_.end());
    std::set<std::string> words;
    for (const auto& text : corpus) {
        std::istringstream is(text);
        std::string w;
        while (is >> w) {
            if (!known.contains(w)) {
                words.insert(w);
            }
        }
    }
    v.tokens_.insert(v.tokens_.end(), words.begin(), words.end());
    v.index();
    return v;
}

auto Vocab::load(const std::filesystem::path& path, const SneConfig& cfg) -> Vocab {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open vocabulary file " + path.string());
    }
    Vocab v;
    v.cfg_ = cfg;
    std::string line;
    while (std::getline(in, line)) {
        v.tokens_.push_back(line);
    }
    const auto expected = numeric_tokens(cfg);
    if (v.tokens_.size() < expected.size() || !std::equal(expected.begin(), expected.end(), v.tokens_.begin())) {
        throw ConfigError("vocabulary file " + path.string() + " does not match the numeric token layout");
    }
    v.index();
    if (v.lookup_.size() != v.tokens_.size()) {
        throw ConfigError("vocabulary file " + path.string() + " contains duplicate tokens");
    }
    return v;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write vocabulary file " + path.string());
    }
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

auto Vocab::token(TokenId id) const -> const std::string& {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DomainError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

auto Vocab::id(std::string_view token) const -> TokenId {
    auto it = lookup_.find(std::string(token));
    return it == lookup_.end() ? ids::unk : it->second;
}

auto Vocab::contains(std::string_view token) const -> bool { return lookup_.contains(std::string(token)); }

auto Vocab::in_numeric_support(TokenId id) const noexcept -> bool {
    return id >= 0 && static_cast<std::size_t>(id) < numeric_mask_.size() && numeric_mask_[static_cast<std::size_t>(id)];
}

auto Vocab::tokenize(std::string_view text) const -> TokenSeq {
    TokenSeq out;
    std::istringstream is{std::string(text)};
    std::string w;
    while (is >> w) {
        out.ids.push_back(id(w));
    }
    return out;
}

auto Vocab::detokenize(std::span<const TokenId> seq) const -> std::string {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += token(seq[i]);
    }
    return out;
}

auto source_sequence(const Vocab& vocab, const std::string& metadata_text, std::span<const double> x) -> TokenSeq {
    auto seq = vocab.tokenize(metadata_text);
    seq.append(encode_vector(x, vocab.config()));
    return seq;
}

} // namespace qmetasur::sne
