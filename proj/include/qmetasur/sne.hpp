#pragma once

// Scientific-notation encoding (SNE) of scalars and vectors, the metadata prompt
// template, and the word-level vocabulary shared by the encoder and decoder.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qmetasur::sne {

using TokenId = std::int32_t;

struct SneConfig {
    int n_digit = 8;
    int exp_min = -16;
    int exp_max = 16;

    void validate() const;
    [[nodiscard]] auto segment_length() const noexcept -> int { return 2 + n_digit; }
};

// Fixed layout of the numeric prefix of every vocabulary. Numeric ids depend only on
// the SneConfig, so encoders never need a corpus-built vocabulary.
namespace ids {
inline constexpr TokenId pad = 0;
inline constexpr TokenId eos = 1;
inline constexpr TokenId unk = 2;
inline constexpr TokenId bos = 3;
inline constexpr TokenId plus = 4;
inline constexpr TokenId minus = 5;
inline constexpr TokenId digit0 = 6; // digits 0..9 occupy 6..15; digit 0 doubles as the zero sign
inline constexpr TokenId open = 16;
inline constexpr TokenId close = 17;
inline constexpr TokenId comma = 18;
inline constexpr TokenId exp_base = 19; // <10^exp_min> .. <10^exp_max>
} // namespace ids

[[nodiscard]] auto exponent_token(int exponent, const SneConfig& cfg) -> TokenId;
[[nodiscard]] auto is_exponent_token(TokenId id, const SneConfig& cfg) noexcept -> bool;
[[nodiscard]] auto exponent_of(TokenId id, const SneConfig& cfg) -> int;
[[nodiscard]] auto is_digit(TokenId id) noexcept -> bool;
[[nodiscard]] auto is_sign(TokenId id) noexcept -> bool;
[[nodiscard]] auto numeric_token_count(const SneConfig& cfg) noexcept -> int;

struct TokenSeq {
    std::vector<TokenId> ids;

    [[nodiscard]] auto size() const noexcept -> std::size_t { return ids.size(); }
    [[nodiscard]] auto view() const noexcept -> std::span<const TokenId> { return ids; }
    void append(const TokenSeq& other) { ids.insert(ids.end(), other.ids.begin(), other.ids.end()); }
    auto operator==(const TokenSeq&) const -> bool = default;
};

// phi(z) = [sign] <10^k> d_1 .. d_n, rounded half-to-even to n_digit significant digits.
[[nodiscard]] auto encode_scalar(double z, const SneConfig& cfg) -> TokenSeq;
[[nodiscard]] auto decode_scalar(std::span<const TokenId> segment, const SneConfig& cfg) -> double;

// "[ phi(x_1) , ... , phi(x_n) ]"
[[nodiscard]] auto encode_vector(std::span<const double> x, const SneConfig& cfg) -> TokenSeq;
// Same shape as encode_vector followed by EOS.
[[nodiscard]] auto encode_objectives(std::span<const double> y, const SneConfig& cfg) -> TokenSeq;

// Extracts exactly k objective segments from a generated sequence.
[[nodiscard]] auto parse_prediction(std::span<const TokenId> seq, std::size_t k, const SneConfig& cfg)
    -> std::vector<double>;

// Position of each target token inside its objective segment: segment index j and
// 1-based offset l, or j = -1 for brackets, commas, EOS and padding.
struct SegmentSlot {
    int segment = -1;
    int offset = 0;
};
[[nodiscard]] auto objective_segments(std::span<const TokenId> target, const SneConfig& cfg)
    -> std::vector<SegmentSlot>;

struct Metadata {
    std::string f_name;
    std::string f_id;
    std::vector<std::string> key_features;
    int dim = 1;

    auto operator==(const Metadata&) const -> bool = default;
};

[[nodiscard]] auto render_metadata(const Metadata& m) -> std::string;

class Vocab {
public:
    // Specials and numeric tokens first, then the sorted distinct words of the corpus.
    static auto build(std::span<const std::string> corpus, const SneConfig& cfg) -> Vocab;
    static auto load(const std::filesystem::path& path, const SneConfig& cfg) -> Vocab;
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] auto size() const noexcept -> std::size_t { return tokens_.size(); }
    [[nodiscard]] auto token(TokenId id) const -> const std::string&;
    [[nodiscard]] auto id(std::string_view token) const -> TokenId; // UNK when absent
    [[nodiscard]] auto contains(std::string_view token) const -> bool;
    [[nodiscard]] auto numeric_support() const noexcept -> const std::vector<TokenId>& { return numeric_support_; }
    [[nodiscard]] auto in_numeric_support(TokenId id) const noexcept -> bool;
    [[nodiscard]] auto config() const noexcept -> const SneConfig& { return cfg_; }

    [[nodiscard]] auto tokenize(std::string_view text) const -> TokenSeq;
    [[nodiscard]] auto detokenize(std::span<const TokenId> ids) const -> std::string;

    auto operator==(const Vocab& other) const -> bool { return tokens_ == other.tokens_; }

private:
    static auto numeric_tokens(const SneConfig& cfg) -> std::vector<std::string>;
    void index();

    SneConfig cfg_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> lookup_;
    std::vector<TokenId> numeric_support_;
    std::vector<bool> numeric_mask_;
};

// Source sequence for the encoder: metadata words followed by the encoded decision vector.
[[nodiscard]] auto source_sequence(const Vocab& vocab, const std::string& metadata_text, std::span<const double> x)
    -> TokenSeq;

} // namespace qmetasur::sne
