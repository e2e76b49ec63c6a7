#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lates/dataio.hpp"

namespace lates {

/// Minimal ReLU MLP spec; stands in for full-scale vision models when
/// producing activation dumps end to end. layer_widths runs input..output,
/// with at least two hidden layers so at least three probes exist.
struct RefNetSpec {
    std::vector<std::uint32_t> layer_widths; // e.g. {2, 32, 32, 32, K}
    double l2 = 1e-4;      // coefficient of (l2/2) * sum ||W||^2
    std::uint32_t epochs = 60;
    double lr = 0.1;
    double momentum = 0.9;
    std::uint32_t batch_size = 128;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticTask {
    enum class Kind { GaussianMixture, Spiral };
    Kind kind = Kind::Spiral;
    std::uint32_t n = 5000;
    std::uint32_t k = 3;
    double noise = 0.2;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Eigen::MatrixXd features; // n x 2
    std::vector<std::uint32_t> labels;
};

/// Deterministic 2-D synthetic classification data, class-balanced within one.
SyntheticData generate_task(const SyntheticTask& task);

struct RefNet {
    std::vector<Eigen::MatrixXd> weights; // weights[l]: widths[l+1] x widths[l]
    std::vector<Eigen::VectorXd> biases;

    std::size_t n_layers() const { return weights.size(); }
    Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;
    /// Post-activation values of every hidden layer, in depth order.
    std::vector<Eigen::MatrixXd> hidden_activations(const Eigen::MatrixXd& features) const;
};

/// Full-batch cross-entropy (+ l2) loss; fills per-layer gradients when
/// requested. Shared by the trainer and finite-difference checks.
double refnet_loss_and_gradients(const RefNet& net, const Eigen::MatrixXd& features,
                                 const std::vector<std::uint32_t>& labels, double l2,
                                 std::vector<Eigen::MatrixXd>* grad_weights,
                                 std::vector<Eigen::VectorXd>* grad_biases);

struct RefNetTrainResult {
    RefNet net;
    std::vector<double> epoch_loss;
    double train_accuracy = 0.0;
};

/// Mini-batch SGD with momentum and l2; deterministic per seed. Throws
/// NumericError naming the epoch if the loss diverges.
RefNetTrainResult train_refnet(const RefNetSpec& spec, const Eigen::MatrixXd& features,
                               const std::vector<std::uint32_t>& labels);

/// One LayerBlock per hidden layer (post-activation) plus the final-logits
/// block; round-trips bitwise through the dump format.
ActivationDump export_activations(const RefNet& net, const Eigen::MatrixXd& features,
                                  const std::vector<std::uint32_t>& labels,
                                  std::uint32_t n_classes);

} // namespace lates
