#pragma once

#include <cstdint>
#include <vector>

#include "lates/stack.hpp"

namespace lates {

/// Inputs of the oracle probability bound: ridge coefficient, Lipschitz
/// constant of the loss, holdout size, squared norm of the population-optimal
/// aggregator, and the loss margin epsilon.
struct OracleBoundParams {
    double lambda = 0.0;
    double rho = 1.0;
    std::uint64_t n = 0;
    double beta_star_norm_sq = 0.0;
    double epsilon = 0.0;
};

/// min(1, (1/eps) * (lambda * ||beta*||^2 + 2 rho^2 / (lambda n))); clipped
/// because it bounds a probability.
double oracle_delta_bound(const OracleBoundParams& params);

/// c / sqrt(n): the ridge schedule that drives the bound to zero.
double lambda_schedule(std::uint64_t n, double c);

/// Synthetic logit-stack generator: probe k emits signal_scale[k] * z +
/// noise_scale[k] * eps for a latent logit vector z, labels drawn from
/// softmax(z). Dialing the scales controls how informative each probe is.
struct StackTaskSpec {
    enum class Kind {
        Default,                 // K=3, d=3, complementary noisy probes
        Binary,                  // K=2 variant of Default
        NoiseIntermediate,       // intermediate probes carry pure noise
        InformativeIntermediate, // probe 1 is cleaner than the final layer
        SingleProbe              // d=1 degenerate task
    };

    Kind kind = Kind::Default;
    std::uint32_t n_classes = 3;
    std::vector<double> signal_scale; // per probe
    std::vector<double> noise_scale;  // per probe
    double latent_scale = 2.0;

    std::size_t depth() const { return signal_scale.size(); }
    static StackTaskSpec preset(Kind kind);
    static StackTaskSpec preset(const std::string& name);
};

struct StackSample {
    LogitStack stack;
    std::vector<std::uint32_t> labels;
};

StackSample sample_stack(const StackTaskSpec& task, std::size_t n, std::uint64_t seed);

struct DominanceConfig {
    AggTrainConfig agg;     // aggregator settings used by the harness
    double ridge_c = 1.0;   // fit_lates ridge = ridge_c / sqrt(n)
    double tolerance = 1e-3; // optimizer tolerance for the dominance count
    double bound_epsilon = 0.05;
    double bound_rho = 1.0;
    std::uint64_t master_seed = 0;
    unsigned jobs = 0;

    DominanceConfig() {
        // The harness needs the aggregator actually converged; the library
        // defaults (50 full-batch epochs) are deliberately left alone.
        agg.learning_rate = 0.05;
        agg.epochs = 400;
    }
};

struct DominanceResult {
    double dominance_fraction = 0.0; // fraction of seeds with lates <= ts + tolerance
    double mean_gap = 0.0;           // mean over seeds of (ts loss - lates loss)
    std::vector<double> per_seed_gap;
    std::vector<double> per_seed_lates_loss;
    std::vector<double> per_seed_ts_loss;
    double ridge_lambda = 0.0;
    double oracle_bound = 0.0; // bound at (ridge_lambda, rho, n, max fitted ||beta||^2, epsilon)
    double bound_beta_norm_sq = 0.0;
};

/// Fits LATES (ridge lambda_schedule(n, c)) and temperature scaling on a fresh
/// holdout sample per seed and compares their holdout losses. Seeds run
/// independently on derived RNG streams; results reduce in seed order.
DominanceResult dominance_experiment(std::uint32_t seeds, std::uint32_t holdout_n,
                                     const StackTaskSpec& task,
                                     const DominanceConfig& config = {});

} // namespace lates
