#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lates/dataio.hpp"
#include "lates/probes.hpp"

namespace lates {

enum class LossKind { Nll, Square };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

/// Stacked probe logits: d matrices of shape n x K; slice k holds the logits
/// of probe k+1. The last slice is the model's own logits, exactly.
struct LogitStack {
    std::size_t n_examples = 0;
    std::size_t num_probes = 0;  // d
    std::size_t num_classes = 0; // K
    std::vector<Eigen::MatrixXd> slices;

    void validate() const;
};

/// The aggregator vector beta >= 0 plus its training trace. A freshly
/// initialized aggregator is beta0 = (0, ..., 0, 1).
struct AggregatorWeights {
    Eigen::VectorXd beta;
    LossKind loss_kind = LossKind::Nll;
    std::vector<double> train_trace; // holdout loss; entry 0 is the loss at beta0

    static AggregatorWeights initial(std::size_t d, LossKind kind = LossKind::Nll);
};

struct TemperatureModel {
    double tau = 1.0;
};

struct AggTrainConfig {
    double learning_rate = 0.005;
    std::uint32_t epochs = 50;
    std::uint32_t batch_size = 0; // 0 = full holdout per step
    std::uint64_t seed = 0;
    LossKind loss_kind = LossKind::Nll;
    double momentum = 0.0;
    double ridge_lambda = 0.0; // optional (lambda/2)*||beta||^2 term
    std::uint32_t patience = 0; // 0 = no early stopping

    void validate() const;
};

struct LossFlags {
    std::size_t clipped = 0; // zero probabilities clamped under nll
};

/// Builds the n x d x K representation from one probe per dump layer
/// (matched by layer_index; the identity probe must be included).
LogitStack build_logit_stack(const std::vector<LinearProbe>& probes, const ActivationDump& dump);

/// softmax(sum_k beta_k * slice_k) per example; rows sum to 1.
Eigen::MatrixXd lates_predict(const LogitStack& stack, const Eigen::VectorXd& beta);
Eigen::MatrixXd lates_predict(const LogitStack& stack, const AggregatorWeights& weights);

/// Euclidean projection onto the non-negative orthant.
Eigen::VectorXd project_nonnegative(Eigen::VectorXd v);

/// Projected SGD on the aggregator, starting from beta0, each step followed by
/// clamping to beta >= 0. Returns the best iterate by objective value, so the
/// holdout loss of the result never exceeds the loss at beta0 (+1e-6).
AggregatorWeights fit_lates(const LogitStack& holdout_stack,
                            const std::vector<std::uint32_t>& labels,
                            const AggTrainConfig& config);

/// Scalar temperature minimizing the holdout loss of softmax(logits / tau)
/// over tau in [1e-3, 1e3]. Golden-section search for nll (convex in 1/tau);
/// grid bracketing plus golden refinement for square loss.
TemperatureModel fit_temperature(const Eigen::MatrixXd& logits,
                                 const std::vector<std::uint32_t>& labels,
                                 LossKind kind = LossKind::Nll);

/// Mean per-example loss. nll = -log p_y (p_y clamped at 1e-12, clamp count
/// reported through flags); square = sum_y (p_y - onehot_y)^2.
double loss_value(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels,
                  LossKind kind, LossFlags* flags = nullptr);

/// Exact analytic gradient of the mean loss with respect to beta.
Eigen::VectorXd aggregator_gradient(const LogitStack& stack, const Eigen::VectorXd& beta,
                                    const std::vector<std::uint32_t>& labels, LossKind kind);

/// beta / sum(beta); requires sum(beta) > 0.
Eigen::VectorXd layer_contributions(const Eigen::VectorXd& beta);

/// Fitted calibrator in the JSON interchange form:
/// {"kind":"lates"|"temperature", "beta":[...]|"tau":..., "loss":..., "d":..., "K":...}
struct Calibrator {
    enum class Kind { Lates, Temperature };
    Kind kind = Kind::Temperature;
    Eigen::VectorXd beta; // lates only
    double tau = 1.0;     // temperature only
    LossKind loss = LossKind::Nll;
    std::uint32_t d = 1;
    std::uint32_t k = 0;
};

std::string calibrator_to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(const std::string& json_text);

} // namespace lates
