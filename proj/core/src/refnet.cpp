#include "lates/refnet.hpp"

#include <algorithm>
#include <cmath>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

void RefNetSpec::validate() const {
    if (layer_widths.size() < 4)
        throw ValidationError("refnet: need at least two hidden layers (widths input,h1,h2,...,out)");
    for (std::uint32_t w : layer_widths)
        if (w == 0) throw ValidationError("refnet: zero layer width");
    if (!(lr > 0.0)) throw ValidationError("refnet: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("refnet: momentum must be in [0, 1)");
    if (batch_size == 0) throw ValidationError("refnet: batch_size must be > 0");
    if (l2 < 0.0) throw ValidationError("refnet: l2 must be >= 0");
}

SyntheticData generate_task(const SyntheticTask& task) {
    if (task.k < 2) throw ValidationError("task: k must be >= 2");
    if (task.n < task.k) throw ValidationError("task: n must be >= k");

    SyntheticData data;
    data.features.resize(task.n, 2);
    data.labels.resize(task.n);
    // Round-robin labels keep every class within one example of the others.
    for (std::uint32_t i = 0; i < task.n; ++i) data.labels[i] = i % task.k;

    Rng rng(mix_seed(task.seed, task.kind == SyntheticTask::Kind::Spiral ? 0x535049ull /* "SPI" */
                                                                         : 0x474D49ull /* "GMI" */));
    if (task.kind == SyntheticTask::Kind::GaussianMixture) {
        for (std::uint32_t i = 0; i < task.n; ++i) {
            const double angle = 2.0 * M_PI * data.labels[i] / task.k;
            data.features(i, 0) = 2.0 * std::cos(angle) + task.noise * rng.normal();
            data.features(i, 1) = 2.0 * std::sin(angle) + task.noise * rng.normal();
        }
    } else {
        for (std::uint32_t i = 0; i < task.n; ++i) {
            const double t = rng.uniform();
            const double radius = 0.1 + 0.9 * t;
            const double theta = 2.0 * M_PI * data.labels[i] / task.k + 2.25 * M_PI * t +
                                 task.noise * rng.normal();
            data.features(i, 0) = radius * std::cos(theta);
            data.features(i, 1) = radius * std::sin(theta);
        }
    }
    return data;
}

Eigen::MatrixXd RefNet::logits(const Eigen::MatrixXd& features) const {
    Eigen::MatrixXd h = features;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::MatrixXd a = h * weights[l].transpose();
        a.rowwise() += biases[l].transpose();
        if (l + 1 < weights.size()) a = a.cwiseMax(0.0);
        h = std::move(a);
    }
    return h;
}

std::vector<Eigen::MatrixXd> RefNet::hidden_activations(const Eigen::MatrixXd& features) const {
    std::vector<Eigen::MatrixXd> hidden;
    hidden.reserve(weights.size() - 1);
    Eigen::MatrixXd h = features;
    for (std::size_t l = 0; l + 1 < weights.size(); ++l) {
        Eigen::MatrixXd a = h * weights[l].transpose();
        a.rowwise() += biases[l].transpose();
        h = a.cwiseMax(0.0);
        hidden.push_back(h);
    }
    return hidden;
}

double refnet_loss_and_gradients(const RefNet& net, const Eigen::MatrixXd& features,
                                 const std::vector<std::uint32_t>& labels, double l2,
                                 std::vector<Eigen::MatrixXd>* grad_weights,
                                 std::vector<Eigen::VectorXd>* grad_biases) {
    const std::size_t depth = net.weights.size();
    const Eigen::Index n = features.rows();
    if (static_cast<std::size_t>(n) != labels.size())
        throw ValidationError("refnet: label count mismatch");

    // Forward, keeping every post-activation for backprop.
    std::vector<Eigen::MatrixXd> acts(depth + 1);
    acts[0] = features;
    for (std::size_t l = 0; l < depth; ++l) {
        Eigen::MatrixXd a = acts[l] * net.weights[l].transpose();
        a.rowwise() += net.biases[l].transpose();
        if (l + 1 < depth) a = a.cwiseMax(0.0);
        acts[l + 1] = std::move(a);
    }

    Eigen::MatrixXd probs = softmax_rows(acts[depth]);
    std::vector<double> losses(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        losses[static_cast<std::size_t>(i)] =
            -std::log(std::max(probs(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    double loss = pairwise_mean(losses);
    if (l2 > 0.0)
        for (const Eigen::MatrixXd& w : net.weights) loss += 0.5 * l2 * w.squaredNorm();

    if (grad_weights == nullptr && grad_biases == nullptr) return loss;

    if (grad_weights != nullptr) grad_weights->resize(depth);
    if (grad_biases != nullptr) grad_biases->resize(depth);

    Eigen::MatrixXd delta = probs; // (softmax - onehot) / n
    for (Eigen::Index i = 0; i < n; ++i) delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    delta /= static_cast<double>(n);

    for (std::size_t l = depth; l-- > 0;) {
        if (grad_weights != nullptr) {
            (*grad_weights)[l] = delta.transpose() * acts[l];
            if (l2 > 0.0) (*grad_weights)[l] += l2 * net.weights[l];
        }
        if (grad_biases != nullptr) (*grad_biases)[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * net.weights[l];
            // ReLU derivative via the stored post-activation values.
            delta = back.cwiseProduct(
                (acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

RefNetTrainResult train_refnet(const RefNetSpec& spec, const Eigen::MatrixXd& features,
                               const std::vector<std::uint32_t>& labels) {
    spec.validate();
    const std::size_t n = labels.size();
    if (features.rows() != static_cast<Eigen::Index>(n))
        throw ValidationError("refnet: feature rows != label count");
    if (features.cols() != static_cast<Eigen::Index>(spec.layer_widths.front()))
        throw ValidationError("refnet: feature dim != input width");

    RefNetTrainResult result;
    RefNet& net = result.net;
    const std::size_t depth = spec.layer_widths.size() - 1;
    Rng rng(mix_seed(spec.seed, 0x4E4554ull /* "NET" */));
    net.weights.resize(depth);
    net.biases.resize(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const std::uint32_t fan_in = spec.layer_widths[l];
        const std::uint32_t fan_out = spec.layer_widths[l + 1];
        const double scale = std::sqrt(2.0 / fan_in); // He init for ReLU stacks
        net.weights[l].resize(fan_out, fan_in);
        for (std::uint32_t r = 0; r < fan_out; ++r)
            for (std::uint32_t c = 0; c < fan_in; ++c) net.weights[l](r, c) = scale * rng.normal();
        net.biases[l] = Eigen::VectorXd::Zero(fan_out);
    }

    std::vector<Eigen::MatrixXd> vel_w(depth);
    std::vector<Eigen::VectorXd> vel_b(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        vel_w[l] = Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols());
        vel_b[l] = Eigen::VectorXd::Zero(net.biases[l].size());
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<Eigen::MatrixXd> gw;
    std::vector<Eigen::VectorXd> gb;
    const std::size_t batch = std::min<std::size_t>(spec.batch_size, n);
    result.epoch_loss.reserve(spec.epochs);
    for (std::uint32_t epoch = 0; epoch < spec.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            Eigen::MatrixXd xb(count, features.cols());
            std::vector<std::uint32_t> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(i) = features.row(order[start + i]);
                yb[i] = labels[order[start + i]];
            }
            refnet_loss_and_gradients(net, xb, yb, spec.l2, &gw, &gb);
            for (std::size_t l = 0; l < depth; ++l) {
                vel_w[l] = spec.momentum * vel_w[l] - spec.lr * gw[l];
                vel_b[l] = spec.momentum * vel_b[l] - spec.lr * gb[l];
                net.weights[l] += vel_w[l];
                net.biases[l] += vel_b[l];
            }
        }
        const double epoch_loss =
            refnet_loss_and_gradients(net, features, labels, spec.l2, nullptr, nullptr);
        if (!std::isfinite(epoch_loss))
            throw NumericError("refnet: training diverged at epoch " + std::to_string(epoch));
        result.epoch_loss.push_back(epoch_loss);
    }

    const Eigen::MatrixXd final_logits = net.logits(features);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < final_logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < final_logits.cols(); ++j)
            if (final_logits(i, j) > final_logits(i, best)) best = j;
        if (static_cast<std::uint32_t>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return result;
}

ActivationDump export_activations(const RefNet& net, const Eigen::MatrixXd& features,
                                  const std::vector<std::uint32_t>& labels,
                                  std::uint32_t n_classes) {
    ActivationDump dump;
    dump.n_examples = static_cast<std::uint32_t>(features.rows());
    dump.n_classes = n_classes;
    dump.labels = labels;

    const std::vector<Eigen::MatrixXd> hidden = net.hidden_activations(features);
    const Eigen::MatrixXd logits = net.logits(features);

    std::uint32_t index = 1;
    for (const Eigen::MatrixXd& h : hidden) {
        LayerBlock block;
        block.layer_index = index++;
        block.feature_dim = static_cast<std::uint32_t>(h.cols());
        block.data.reserve(static_cast<std::size_t>(h.rows()) * h.cols());
        for (Eigen::Index i = 0; i < h.rows(); ++i)
            for (Eigen::Index j = 0; j < h.cols(); ++j)
                block.data.push_back(static_cast<float>(h(i, j)));
        dump.layers.push_back(std::move(block));
    }
    LayerBlock final_block;
    final_block.layer_index = index;
    final_block.feature_dim = static_cast<std::uint32_t>(logits.cols());
    final_block.is_final_logits = true;
    final_block.data.reserve(static_cast<std::size_t>(logits.rows()) * logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index j = 0; j < logits.cols(); ++j)
            final_block.data.push_back(static_cast<float>(logits(i, j)));
    dump.layers.push_back(std::move(final_block));

    dump.validate();
    return dump;
}

} // namespace lates
