#pragma once

#include <cstdint>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace lates {

/// Pairwise (tree) summation over a fixed layout. The reduction tree depends
/// only on the element count, so the result is identical no matter how the
/// leaves were produced (serial or parallel evaluation).
double pairwise_sum(std::span<const double> values);

double pairwise_mean(std::span<const double> values);

/// Numerically stable softmax of one logit row, written in place.
void softmax_inplace(Eigen::Ref<Eigen::VectorXd> logits);

/// Row-wise softmax of an n-by-K logit matrix.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

double log_sum_exp(const Eigen::VectorXd& v);

/// Standard normal CDF.
double normal_cdf(double z);

/// Regularized incomplete beta function I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Survival function of the F distribution with (d1, d2) degrees of freedom.
double f_distribution_sf(double f, double d1, double d2);

/// CRC-32 (IEEE, reflected 0xEDB88320) over a byte range, resumable.
std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

/// splitmix64 step; used to derive independent seed streams from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic RNG with explicit, implementation-independent derived
/// distributions (std:: distributions are not bit-portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform integer in [0, bound), bound > 0. Unbiased (Lemire rejection).
    std::uint64_t uniform_index(std::uint64_t bound);
    /// Uniform double in [0, 1).
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// Indices 0..n-1 in shuffled order.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

} // namespace lates
