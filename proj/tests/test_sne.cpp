#include "qmetasur/errors.hpp"
#include "qmetasur/rng.hpp"
#include "qmetasur/sne.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace qmetasur;
using namespace qmetasur::sne;

namespace {

auto cfg_digits(int n) -> SneConfig {
    SneConfig c;
    c.n_digit = n;
    return c;
}

auto digits(std::initializer_list<int> ds) -> std::vector<TokenId> {
    std::vector<TokenId> out;
    for (int d : ds) {
        out.push_back(ids::digit0 + d);
    }
    return out;
}

auto seq(TokenId sign, int exponent, std::initializer_list<int> ds, const SneConfig& c) -> std::vector<TokenId> {
    std::vector<TokenId> out{sign, exponent_token(exponent, c)};
    const auto d = digits(ds);
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

} // namespace

TEST(SneScalar, PiWithFiveDigits) {
    const auto c = cfg_digits(5);
    EXPECT_EQ(encode_scalar(3.1415, c).ids, seq(ids::plus, 0, {3, 1, 4, 1, 5}, c));
}

TEST(SneScalar, NegativeWithSixDigits) {
    const auto c = cfg_digits(6);
    EXPECT_EQ(encode_scalar(-2718.28, c).ids, seq(ids::minus, 3, {2, 7, 1, 8, 2, 8}, c));
}

TEST(SneScalar, ZeroHasFixedLength) {
    for (int n : {1, 5, 8, 15}) {
        const auto c = cfg_digits(n);
        const auto s = encode_scalar(0.0, c);
        ASSERT_EQ(s.size(), static_cast<std::size_t>(n + 2));
        EXPECT_EQ(s.ids[0], ids::digit0);
        EXPECT_EQ(s.ids[1], exponent_token(0, c));
        for (int i = 0; i < n; ++i) {
            EXPECT_EQ(s.ids[static_cast<std::size_t>(2 + i)], ids::digit0);
        }
    }
}

TEST(SneScalar, DecodeQuotedEncodings) {
    const auto c5 = cfg_digits(5);
    const auto c6 = cfg_digits(6);
    EXPECT_NEAR(decode_scalar(seq(ids::plus, 0, {3, 1, 4, 1, 5}, c5), c5), 3.1415, 1e-12);
    EXPECT_NEAR(decode_scalar(seq(ids::minus, 3, {2, 7, 1, 8, 2, 8}, c6), c6), -2718.28, 1e-9);
    EXPECT_EQ(decode_scalar(seq(ids::digit0, 0, {0, 0, 0, 0, 0}, c5), c5), 0.0);
}

TEST(SneScalar, Errors) {
    const SneConfig c;
    EXPECT_THROW((void)encode_scalar(std::nan(""), c), DomainError);
    EXPECT_THROW((void)encode_scalar(INFINITY, c), DomainError);
    EXPECT_THROW((void)encode_scalar(1e20, c), RangeError);
    EXPECT_THROW((void)encode_scalar(1e-20, c), RangeError);
    auto good = encode_scalar(1.5, c).ids;
    auto missing_exp = good;
    missing_exp.erase(missing_exp.begin() + 1);
    EXPECT_THROW((void)decode_scalar(missing_exp, c), ParseError);
    auto short_mantissa = good;
    short_mantissa.pop_back();
    EXPECT_THROW((void)decode_scalar(short_mantissa, c), ParseError);
    auto bad_sign = good;
    bad_sign[0] = ids::comma;
    try {
        (void)decode_scalar(bad_sign, c);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 0U);
    }
}

TEST(SneScalar, RoundHalfToEven) {
    const auto c = cfg_digits(2);
    const auto c1 = cfg_digits(1);
    EXPECT_EQ(encode_scalar(2.5, c1).ids, seq(ids::plus, 0, {2}, c1));
    EXPECT_EQ(encode_scalar(3.5, c1).ids, seq(ids::plus, 0, {4}, c1));
    EXPECT_EQ(encode_scalar(9.96, c).ids, seq(ids::plus, 1, {1, 0}, c));
}

TEST(SneScalar, RoundTripProperty) {
    const SneConfig c;
    auto rng = make_rng(42, 1);
    for (int i = 0; i < 20000; ++i) {
        const int e = static_cast<int>(uniform_index(rng, 25)) - 12;
        const double m = uniform(rng, 1.0, 10.0) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
        const double z = m * std::pow(10.0, e);
        const auto s = encode_scalar(z, c);
        const int k = exponent_of(s.ids[1], c);
        EXPECT_LE(std::fabs(decode_scalar(s.ids, c) - z), 5.0 * std::pow(10.0, k - c.n_digit + 1) + 1e-300);
    }
}

TEST(SneVector, BracketsAndCommas) {
    const auto c = cfg_digits(5);
    const std::vector<double> x{3.1415};
    auto expect = seq(ids::plus, 0, {3, 1, 4, 1, 5}, c);
    expect.insert(expect.begin(), ids::open);
    expect.push_back(ids::close);
    EXPECT_EQ(encode_vector(x, c).ids, expect);
    EXPECT_THROW((void)encode_vector(std::vector<double>{}, c), ParseError);
}

TEST(SneVector, ZeroObjectives) {
    const auto c = cfg_digits(3);
    const std::vector<double> y{0.0, 0.0};
    const auto z = seq(ids::digit0, 0, {0, 0, 0}, c);
    std::vector<TokenId> expect{ids::open};
    expect.insert(expect.end(), z.begin(), z.end());
    expect.push_back(ids::comma);
    expect.insert(expect.end(), z.begin(), z.end());
    expect.push_back(ids::close);
    expect.push_back(ids::eos);
    EXPECT_EQ(encode_objectives(y, c).ids, expect);
}

TEST(SneVector, SegmentIndependence) {
    const SneConfig c;
    const auto a = encode_objectives(std::vector<double>{1.5}, c).ids;
    const auto b = encode_objectives(std::vector<double>{-0.25}, c).ids;
    const auto ab = encode_objectives(std::vector<double>{1.5, -0.25}, c).ids;
    std::vector<TokenId> interior(a.begin() + 1, a.end() - 2);
    interior.push_back(ids::comma);
    interior.insert(interior.end(), b.begin() + 1, b.end() - 2);
    EXPECT_EQ(std::vector<TokenId>(ab.begin() + 1, ab.end() - 2), interior);
}

TEST(SneVector, ParsePrediction) {
    const SneConfig c;
    const auto y = encode_objectives(std::vector<double>{0.5, -12.0}, c);
    const auto out = parse_prediction(y.ids, 2, c);
    ASSERT_EQ(out.size(), 2U);
    EXPECT_DOUBLE_EQ(out[0], 0.5);
    EXPECT_DOUBLE_EQ(out[1], -12.0);

    auto no_close = y.ids;
    no_close.erase(no_close.end() - 2);
    EXPECT_THROW((void)parse_prediction(no_close, 2, c), ParseError);

    const auto three = encode_objectives(std::vector<double>{1.0, 2.0, 3.0}, c);
    try {
        (void)parse_prediction(three.ids, 2, c);
        FAIL() << "expected ArityError";
    } catch (const ArityError& e) {
        EXPECT_EQ(e.tokens(), three.ids);
    }
}

TEST(SneVector, EmittedTokensInNumericSupport) {
    const SneConfig c;
    const auto v = Vocab::build({}, c);
    auto rng = make_rng(3, 0);
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> y{normal(rng, 0, 100), normal(rng, 0, 1e-3), 0.0};
        for (auto id : encode_objectives(y, c).ids) {
            EXPECT_TRUE(v.in_numeric_support(id));
        }
    }
    EXPECT_TRUE(v.in_numeric_support(ids::pad));
    EXPECT_NE(ids::pad, ids::eos);
}

TEST(SneMetadata, TemplateAndDeterminism) {
    const Metadata m{"Sphere", "F1", {"CEC2019", "instance=0"}, 4};
    const auto s = render_metadata(m);
    EXPECT_EQ(s, render_metadata(m));
    EXPECT_NE(s.find("Sphere"), std::string::npos);
    EXPECT_NE(s.find("key feature 1 is CEC2019 |"), std::string::npos);
    EXPECT_NE(s.find("instance=0"), std::string::npos);
    EXPECT_TRUE(s.ends_with("the dimensionality is dim=4."));

    const Metadata bare{"Sphere", "F1", {}, 4};
    const auto b = render_metadata(bare);
    EXPECT_LT(std::count(b.begin(), b.end(), '|'), std::count(s.begin(), s.end(), '|'));
    EXPECT_EQ(std::count(s.begin(), s.end(), '|') - std::count(b.begin(), b.end(), '|'), 2);
}

TEST(SneVocab, EmptyCorpusHasNumericOnly) {
    const SneConfig c;
    const auto v = Vocab::build({}, c);
    EXPECT_EQ(v.size(), static_cast<std::size_t>(numeric_token_count(c)));
    EXPECT_EQ(v.tokenize("hello").ids, std::vector<TokenId>{ids::unk});
}

TEST(SneVocab, RoundTripAndOrderIndependence) {
    const SneConfig c;
    const std::vector<std::string> corpus{render_metadata({"Sphere", "F1", {"instance=1"}, 3}),
                                          render_metadata({"MeanScale", "F2", {"instance=2"}, 3})};
    const std::vector<std::string> shuffled{corpus[1], corpus[0]};
    const auto v = Vocab::build(corpus, c);
    EXPECT_TRUE(v == Vocab::build(shuffled, c));
    const auto t = v.tokenize(corpus[0]);
    for (auto id : t.ids) {
        EXPECT_NE(id, ids::unk);
    }
    EXPECT_EQ(v.detokenize(t.ids), corpus[0]);

    const auto path = std::filesystem::temp_directory_path() / "qms_vocab_test.txt";
    v.save(path);
    EXPECT_TRUE(Vocab::load(path, c) == v);
    std::filesystem::remove(path);
}

TEST(SneSegments, SlotMap) {
    const auto c = cfg_digits(3);
    const auto y = encode_objectives(std::vector<double>{1.0, 2.0}, c);
    const auto slots = objective_segments(y.ids, c);
    ASSERT_EQ(slots.size(), y.size());
    EXPECT_EQ(slots[0].segment, -1);
    for (int l = 1; l <= 5; ++l) {
        EXPECT_EQ(slots[static_cast<std::size_t>(l)].segment, 0);
        EXPECT_EQ(slots[static_cast<std::size_t>(l)].offset, l);
        EXPECT_EQ(slots[static_cast<std::size_t>(l + 6)].segment, 1);
    }
    EXPECT_EQ(slots[6].segment, -1);
    EXPECT_EQ(slots.back().segment, -1);
}
