#include "lates/theory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

double oracle_delta_bound(const OracleBoundParams& params) {
    if (!(params.epsilon > 0.0)) throw ValidationError("oracle bound: epsilon must be > 0");
    if (!(params.lambda > 0.0)) throw ValidationError("oracle bound: lambda must be > 0");
    if (!(params.rho > 0.0)) throw ValidationError("oracle bound: rho must be > 0");
    if (params.n == 0) throw ValidationError("oracle bound: n must be >= 1");
    if (params.beta_star_norm_sq < 0.0)
        throw ValidationError("oracle bound: ||beta*||^2 must be >= 0");
    const double raw = (params.lambda * params.beta_star_norm_sq +
                        2.0 * params.rho * params.rho /
                            (params.lambda * static_cast<double>(params.n))) /
                       params.epsilon;
    return std::min(1.0, raw);
}

double lambda_schedule(std::uint64_t n, double c) {
    if (n == 0) throw ValidationError("lambda_schedule: n must be >= 1");
    if (!(c > 0.0)) throw ValidationError("lambda_schedule: c must be > 0");
    return c / std::sqrt(static_cast<double>(n));
}

StackTaskSpec StackTaskSpec::preset(Kind kind) {
    StackTaskSpec spec;
    spec.kind = kind;
    switch (kind) {
        case Kind::Default:
            spec.n_classes = 3;
            spec.signal_scale = {0.9, 0.6, 1.2};
            spec.noise_scale = {0.5, 0.8, 0.35};
            break;
        case Kind::Binary:
            spec.n_classes = 2;
            spec.signal_scale = {0.9, 0.6, 1.2};
            spec.noise_scale = {0.5, 0.8, 0.35};
            break;
        case Kind::NoiseIntermediate:
            spec.n_classes = 3;
            spec.signal_scale = {0.0, 0.0, 1.0};
            spec.noise_scale = {1.0, 1.0, 0.3};
            break;
        case Kind::InformativeIntermediate:
            spec.n_classes = 3;
            spec.signal_scale = {1.0, 0.8, 1.0};
            spec.noise_scale = {0.12, 0.5, 1.2};
            break;
        case Kind::SingleProbe:
            spec.n_classes = 3;
            spec.signal_scale = {1.0};
            spec.noise_scale = {0.3};
            break;
    }
    return spec;
}

StackTaskSpec StackTaskSpec::preset(const std::string& name) {
    if (name == "default") return preset(Kind::Default);
    if (name == "binary") return preset(Kind::Binary);
    if (name == "noise") return preset(Kind::NoiseIntermediate);
    if (name == "informative") return preset(Kind::InformativeIntermediate);
    if (name == "single") return preset(Kind::SingleProbe);
    throw ValidationError("unknown stack task: " + name +
                          " (expected default|binary|noise|informative|single)");
}

StackSample sample_stack(const StackTaskSpec& task, std::size_t n, std::uint64_t seed) {
    if (task.signal_scale.size() != task.noise_scale.size() || task.signal_scale.empty())
        throw ValidationError("stack task: signal/noise scales must be non-empty and equal length");
    const std::size_t d = task.depth();
    const std::uint32_t k = task.n_classes;

    StackSample sample;
    sample.stack.n_examples = n;
    sample.stack.num_probes = d;
    sample.stack.num_classes = k;
    sample.stack.slices.assign(d, Eigen::MatrixXd(n, k));
    sample.labels.resize(n);

    Rng rng(mix_seed(seed, 0x5354414Bull /* "STAK" */));
    Eigen::VectorXd latent(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t c = 0; c < k; ++c) latent(c) = task.latent_scale * rng.normal();
        Eigen::VectorXd probs = latent;
        softmax_inplace(probs);
        double u = rng.uniform();
        std::uint32_t label = k - 1;
        for (std::uint32_t c = 0; c < k; ++c) {
            if (u < probs(c)) {
                label = c;
                break;
            }
            u -= probs(c);
        }
        sample.labels[i] = label;
        for (std::size_t p = 0; p < d; ++p)
            for (std::uint32_t c = 0; c < k; ++c)
                sample.stack.slices[p](static_cast<Eigen::Index>(i), c) =
                    task.signal_scale[p] * latent(c) + task.noise_scale[p] * rng.normal();
    }
    return sample;
}

DominanceResult dominance_experiment(std::uint32_t seeds, std::uint32_t holdout_n,
                                     const StackTaskSpec& task, const DominanceConfig& config) {
    if (seeds == 0) throw ValidationError("dominance: seeds must be >= 1");
    if (holdout_n == 0) throw ValidationError("dominance: holdout_n must be >= 1");

    DominanceResult result;
    result.ridge_lambda = lambda_schedule(holdout_n, config.ridge_c);
    result.per_seed_gap.resize(seeds);
    result.per_seed_lates_loss.resize(seeds);
    result.per_seed_ts_loss.resize(seeds);
    std::vector<double> fitted_norm_sq(seeds);

    auto run_seed = [&](std::uint32_t s) {
        StackSample sample = sample_stack(task, holdout_n, mix_seed(config.master_seed, s));
        AggTrainConfig agg = config.agg;
        agg.ridge_lambda = result.ridge_lambda;
        agg.seed = mix_seed(config.master_seed, 0x46495400ull + s);

        const AggregatorWeights fitted = fit_lates(sample.stack, sample.labels, agg);
        const double lates_loss =
            loss_value(lates_predict(sample.stack, fitted), sample.labels, agg.loss_kind);

        const Eigen::MatrixXd& final_logits = sample.stack.slices.back();
        const TemperatureModel ts = fit_temperature(final_logits, sample.labels, agg.loss_kind);
        const double ts_loss =
            loss_value(softmax_rows(final_logits / ts.tau), sample.labels, agg.loss_kind);

        result.per_seed_lates_loss[s] = lates_loss;
        result.per_seed_ts_loss[s] = ts_loss;
        result.per_seed_gap[s] = ts_loss - lates_loss;
        fitted_norm_sq[s] = fitted.beta.squaredNorm();
    };

    unsigned jobs = config.jobs;
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, seeds);
    if (jobs <= 1) {
        for (std::uint32_t s = 0; s < seeds; ++s) run_seed(s);
    } else {
        std::atomic<std::uint32_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (unsigned t = 0; t < jobs; ++t)
            workers.emplace_back([&] {
                for (;;) {
                    const std::uint32_t s = next.fetch_add(1);
                    if (s >= seeds) return;
                    run_seed(s);
                }
            });
        for (auto& w : workers) w.join();
    }

    std::size_t dominated = 0;
    for (std::uint32_t s = 0; s < seeds; ++s)
        if (result.per_seed_lates_loss[s] <= result.per_seed_ts_loss[s] + config.tolerance)
            ++dominated;
    result.dominance_fraction = static_cast<double>(dominated) / static_cast<double>(seeds);
    result.mean_gap = pairwise_mean({result.per_seed_gap.data(), result.per_seed_gap.size()});

    result.bound_beta_norm_sq =
        std::max(1.0, *std::max_element(fitted_norm_sq.begin(), fitted_norm_sq.end()));
    OracleBoundParams bound;
    bound.lambda = result.ridge_lambda;
    bound.rho = config.bound_rho;
    bound.n = holdout_n;
    bound.beta_star_norm_sq = result.bound_beta_norm_sq;
    bound.epsilon = config.bound_epsilon;
    result.oracle_bound = oracle_delta_bound(bound);
    return result;
}

} // namespace lates
