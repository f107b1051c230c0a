#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace qmetasur::metrics {

using Point = std::vector<double>;

// Mean over reference points of the distance to the nearest approximation point.
[[nodiscard]] auto igd(std::span<const Point> reference, std::span<const Point> approx) -> double;

struct SmaeResult {
    std::map<int, double> per_group;
    double mean = 0.0;
    std::vector<int> skipped; // groups with zero target range
};
// Mean |y - y_hat| / (max y - min y) within each group, then averaged over groups.
[[nodiscard]] auto smae(std::span<const double> preds, std::span<const double> targets, std::span<const int> groups)
    -> SmaeResult;

[[nodiscard]] auto r2(std::span<const double> preds, std::span<const double> targets) -> double;

struct Standardizer {
    std::vector<double> mu;
    std::vector<double> sigma; // population standard deviation
};
// pooled[i] holds every IGD value (all algorithms, all runs) observed on task i.
[[nodiscard]] auto standardizer(const std::vector<std::vector<double>>& pooled) -> Standardizer;
// (1/K) sum_i (I_i - mu_i) / sigma_i with zero contribution where sigma_i = 0.
[[nodiscard]] auto mss(std::span<const double> values, const Standardizer& s) -> double;

enum class Verdict { Better, Tie, Worse };
// "+": reference significantly better (lower); "≈": no significant difference; "-": reference worse.
[[nodiscard]] auto verdict_symbol(Verdict v) -> std::string;

struct WilcoxonResult {
    double p = 1.0;
    Verdict verdict = Verdict::Tie;
    int n = 0;           // non-zero differences
    double w_plus = 0.0; // rank sum of positive (other - reference) differences
};
// Lower is better. Differences are other - reference; normal approximation with tie
// and continuity corrections. Fewer than 6 non-zero differences yields a tie.
[[nodiscard]] auto wilcoxon_signed_rank(std::span<const double> reference, std::span<const double> other,
                                        double alpha = 0.05) -> WilcoxonResult;

} // namespace qmetasur::metrics
