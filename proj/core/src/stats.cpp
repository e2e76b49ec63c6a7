#include "lates/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

namespace {

constexpr std::size_t kExactThreshold = 25;

// Doubled mid-ranks of |deltas| so tied averages stay integral: a tie group
// covering 1-based rank positions i..j gets doubled rank i + j.
std::vector<std::uint64_t> doubled_midranks(const std::vector<double>& abs_deltas) {
    const std::size_t n = abs_deltas.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return abs_deltas[a] < abs_deltas[b]; });
    std::vector<std::uint64_t> doubled(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && abs_deltas[order[j + 1]] == abs_deltas[order[i]]) ++j;
        const std::uint64_t d2 = static_cast<std::uint64_t>(i + 1) + static_cast<std::uint64_t>(j + 1);
        for (std::size_t t = i; t <= j; ++t) doubled[order[t]] = d2;
        i = j + 1;
    }
    return doubled;
}

// P(T <= w) where T is the null rank-sum over all 2^n sign assignments,
// aggregated by dynamic programming over the doubled-rank lattice. Counts of
// sign patterns are exact integers (<= 2^25), so the probability is exact.
double exact_p_le(const std::vector<std::uint64_t>& doubled_ranks, std::uint64_t doubled_w) {
    std::uint64_t total = 0;
    for (std::uint64_t r : doubled_ranks) total += r;
    std::vector<std::uint64_t> count(total + 1, 0);
    count[0] = 1;
    for (std::uint64_t r : doubled_ranks)
        for (std::uint64_t s = total; s >= r; --s) count[s] += count[s - r];

    std::uint64_t at_or_below = 0;
    const std::uint64_t limit = std::min(doubled_w, total);
    for (std::uint64_t s = 0; s <= limit; ++s) at_or_below += count[s];
    return static_cast<double>(at_or_below) /
           std::pow(2.0, static_cast<double>(doubled_ranks.size()));
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(const PairedSample& sample, Sidedness sided,
                                    WilcoxonMethod method) {
    std::vector<double> deltas;
    deltas.reserve(sample.deltas.size());
    for (double d : sample.deltas) {
        if (!std::isfinite(d)) throw ValidationError("wilcoxon: non-finite delta");
        if (d != 0.0) deltas.push_back(d); // classic zero policy: drop exact zeros
    }
    if (deltas.empty()) throw ValidationError("wilcoxon: all deltas are zero");

    const std::size_t n = deltas.size();
    std::vector<double> abs_deltas(n);
    for (std::size_t i = 0; i < n; ++i) abs_deltas[i] = std::abs(deltas[i]);
    const std::vector<std::uint64_t> doubled = doubled_midranks(abs_deltas);

    std::uint64_t w_pos2 = 0;
    std::uint64_t w_neg2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        (deltas[i] > 0.0 ? w_pos2 : w_neg2) += doubled[i];
    const std::uint64_t w2 = std::min(w_pos2, w_neg2);

    WilcoxonResult result;
    result.w_statistic = static_cast<double>(w2) / 2.0;
    result.n_effective = n;

    const bool exact = method == WilcoxonMethod::Exact ||
                       (method == WilcoxonMethod::Auto && n <= kExactThreshold);
    double p_one;
    if (exact) {
        result.method = WilcoxonResult::Method::Exact;
        p_one = exact_p_le(doubled, w2);
    } else {
        result.method = WilcoxonResult::Method::NormalApprox;
        const double dn = static_cast<double>(n);
        const double mean = dn * (dn + 1.0) / 4.0;
        double tie_term = 0.0;
        std::size_t i = 0;
        std::vector<std::uint64_t> sorted = doubled;
        std::sort(sorted.begin(), sorted.end());
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += (t * t * t - t);
            i = j + 1;
        }
        const double variance = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
        const double w = result.w_statistic;
        const double z = (w - mean + 0.5) / std::sqrt(variance); // continuity correction
        p_one = normal_cdf(z);
    }

    result.p_value = sided == Sidedness::OneSided ? p_one : std::min(1.0, 2.0 * p_one);
    return result;
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ValidationError("anova: need at least 2 groups");
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ValidationError("anova: every group needs at least 2 values");
        n += g.size();
    }

    double grand_sum = 0.0;
    for (const auto& g : groups) grand_sum += pairwise_sum({g.data(), g.size()});
    const double grand_mean = grand_sum / static_cast<double>(n);

    double ss_between = 0.0;
    double ss_within = 0.0;
    for (const auto& g : groups) {
        const double mean = pairwise_mean({g.data(), g.size()});
        const double dm = mean - grand_mean;
        ss_between += static_cast<double>(g.size()) * dm * dm;
        std::vector<double> sq(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) sq[i] = (g[i] - mean) * (g[i] - mean);
        ss_within += pairwise_sum({sq.data(), sq.size()});
    }

    AnovaResult result;
    result.df_between = groups.size() - 1;
    result.df_within = n - groups.size();

    if (ss_within == 0.0 && ss_between == 0.0)
        throw NumericError("anova: zero variance within and between groups, F is undefined");

    const double ms_between = ss_between / static_cast<double>(result.df_between);
    const double ms_within = ss_within / static_cast<double>(result.df_within);
    result.f_statistic = ms_within == 0.0 ? std::numeric_limits<double>::infinity()
                                          : ms_between / ms_within;
    result.p_value = f_distribution_sf(result.f_statistic,
                                       static_cast<double>(result.df_between),
                                       static_cast<double>(result.df_within));
    return result;
}

std::vector<double> holm_correction(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("holm: p-values must be in [0, 1]");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> adjusted(m);
    double running_max = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double scaled =
            std::min(1.0, static_cast<double>(m - j) * p_values[order[j]]);
        running_max = std::max(running_max, scaled);
        adjusted[order[j]] = running_max;
    }
    return adjusted;
}

} // namespace lates
