#pragma once

#include <cstdint>
#include <vector>

namespace lates {

/// Per-condition metric differences (A minus B) for a paired test.
struct PairedSample {
    std::vector<double> deltas;
};

enum class Sidedness { TwoSided, OneSided };

struct WilcoxonResult {
    double w_statistic = 0.0;   // min(positive rank sum, negative rank sum)
    std::size_t n_effective = 0; // sample size after dropping zero deltas
    double p_value = 1.0;
    enum class Method { Exact, NormalApprox } method = Method::Exact;
};

/// Forces a p-value method; Auto follows the n <= 25 exact threshold.
/// Exposed so the exact-vs-approximation agreement property can be tested.
enum class WilcoxonMethod { Auto, Exact, NormalApprox };

/// Wilcoxon signed-rank test. Zero deltas are dropped; |delta| ties get
/// mid-ranks. Exact p-values enumerate the full sign-assignment null
/// distribution for n <= 25; larger samples use the normal approximation with
/// tie and continuity corrections.
WilcoxonResult wilcoxon_signed_rank(const PairedSample& sample, Sidedness sided,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

struct AnovaResult {
    double f_statistic = 0.0;
    std::size_t df_between = 0;
    std::size_t df_within = 0;
    double p_value = 1.0;
};

/// One-way fixed-effects ANOVA; p-value from the F survival function.
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

/// Holm step-down adjustment; output is in the input's order, monotone and
/// never below the raw p-values.
std::vector<double> holm_correction(const std::vector<double>& p_values);

} // namespace lates
