#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lates/dataio.hpp"

namespace lates {

struct PoolSpec {
    enum class Kind { Average };
    Kind kind = Kind::Average;
    std::uint32_t output_dim = 0;
};

/// Per-layer multinomial linear classifier producing class logits.
/// The probe for the final-logits layer is the identity map.
struct LinearProbe {
    std::uint32_t layer_index = 0;
    std::optional<PoolSpec> pool;
    Eigen::MatrixXd weights; // n_classes x pooled feature dim
    Eigen::VectorXd bias;    // n_classes

    static LinearProbe identity(std::uint32_t n_classes, std::uint32_t layer_index);
};

struct ProbeTrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint32_t epochs = 50;
    double decay_factor = 0.5;
    std::uint32_t decay_every = 10; // epochs between learning-rate decays
    std::uint32_t batch_size = 128;
    std::uint64_t seed = 0;
    std::uint32_t pool_dim = 0;  // 0 = auto: min(feature_dim, 512)
    double weight_decay = 0.0;

    void validate() const;
};

struct ProbeTrainResult {
    LinearProbe probe;
    std::vector<double> epoch_loss; // full training loss after each epoch
    bool single_class_warning = false;
};

/// Mean over windows of a balanced contiguous partition of the feature vector
/// into output_dim windows (window lengths differ by at most one).
Eigen::VectorXd average_pool(const Eigen::VectorXd& features, const PoolSpec& spec);

/// average_pool applied to every row.
Eigen::MatrixXd pool_rows(const Eigen::MatrixXd& features, const PoolSpec& spec);

/// Stepped schedule used by train_probe:
/// learning_rate * decay_factor^(epoch / decay_every), epochs counted from 0.
double probe_learning_rate(const ProbeTrainConfig& config, std::uint32_t epoch);

/// Mean cross-entropy of the affine classifier (weights, bias) on (features,
/// labels), plus its analytic gradient. Shared by the trainer and by
/// finite-difference checks.
double probe_loss_and_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                               const Eigen::MatrixXd& features,
                               const std::vector<std::uint32_t>& labels,
                               double weight_decay,
                               Eigen::MatrixXd* grad_weights, Eigen::VectorXd* grad_bias);

/// Trains one probe on a single layer with mini-batch SGD + momentum and
/// stepped learning-rate decay. Deterministic for a fixed seed. The layer must
/// not be the final-logits block (that probe is the identity map).
ProbeTrainResult train_probe(const LayerBlock& layer, const std::vector<std::uint32_t>& labels,
                             std::uint32_t n_classes, const ProbeTrainConfig& config);

/// Logits W * pool(x) + b for every example row of the layer.
Eigen::MatrixXd probe_logits(const LinearProbe& probe, const LayerBlock& layer);

/// Argmax accuracy of each probe on its own layer, in layer order.
std::vector<double> probe_accuracy_curve(const std::vector<LinearProbe>& probes,
                                         const ActivationDump& dump);

/// One probe per dump layer: trained probes for intermediate blocks, the
/// identity probe for the final-logits block. Probes may train concurrently
/// (jobs threads); each probe owns a seed stream derived from (seed,
/// layer_index), so results do not depend on scheduling.
std::vector<ProbeTrainResult> train_probes_for_dump(const ActivationDump& dump,
                                                    const ProbeTrainConfig& config,
                                                    unsigned jobs = 0);

/// Probe-bundle file: magic "LPRB", version, count, per-probe records
/// (layer_index, pool, dims, f32 weights, f32 bias), CRC32 footer.
void write_probe_bundle(const std::filesystem::path& path, const std::vector<LinearProbe>& probes);
std::vector<LinearProbe> read_probe_bundle(const std::filesystem::path& path);

} // namespace lates
