#pragma once

// Surrogate oracle on top of a trained sequence model: greedy or advantage-guided
// generation, parsing, and the range-midpoint fallback for malformed outputs.

#include "qmetasur/dataset.hpp"
#include "qmetasur/seqmodel.hpp"

#include <span>
#include <string>
#include <vector>

namespace qmetasur::decoding {

using seqmodel::SeqModel;
using sne::TokenId;
using sne::TokenSeq;

enum class DecodeMode { Greedy, Advantage };
[[nodiscard]] auto mode_name(DecodeMode m) -> std::string;
[[nodiscard]] auto parse_mode(const std::string& s) -> DecodeMode;

struct DecodeConfig {
    DecodeMode mode = DecodeMode::Greedy;
    double beta = 3.0;
    int max_len = 50;

    void validate() const;
};

// Lowest id wins ties.
[[nodiscard]] auto argmax(const Eigen::RowVectorXd& scores) -> TokenId;

// Generated tokens after BOS, ending at EOS or after max_len tokens.
[[nodiscard]] auto decode(const SeqModel& m, std::span<const TokenId> src, const DecodeConfig& cfg) -> TokenSeq;

struct Prediction {
    std::vector<double> y;
    bool flagged = false;
};

[[nodiscard]] auto predict_objectives(const SeqModel& m, const sne::Vocab& vocab, const std::string& metadata_text,
                                      std::span<const double> x, std::size_t k,
                                      const dataset::ObjectiveRanges& ranges, const DecodeConfig& cfg) -> Prediction;

[[nodiscard]] auto predict_batch(const SeqModel& m, const sne::Vocab& vocab, const std::string& metadata_text,
                                 std::span<const std::vector<double>> xs, std::size_t k,
                                 const dataset::ObjectiveRanges& ranges, const DecodeConfig& cfg)
    -> std::vector<Prediction>;

} // namespace qmetasur::decoding
