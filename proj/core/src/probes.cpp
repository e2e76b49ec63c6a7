#include "lates/probes.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

namespace {

constexpr std::uint8_t kBundleMagic[4] = {0x4C, 0x50, 0x52, 0x42}; // "LPRB"
constexpr std::uint32_t kBundleVersion = 1;

Eigen::MatrixXd layer_matrix(const LayerBlock& layer, std::size_t n_examples) {
    Eigen::MatrixXd m(n_examples, layer.feature_dim);
    for (std::size_t i = 0; i < n_examples; ++i)
        for (std::uint32_t j = 0; j < layer.feature_dim; ++j)
            m(i, j) = layer.at(i, j);
    return m;
}

} // namespace

LinearProbe LinearProbe::identity(std::uint32_t n_classes, std::uint32_t layer_index) {
    LinearProbe p;
    p.layer_index = layer_index;
    p.weights = Eigen::MatrixXd::Identity(n_classes, n_classes);
    p.bias = Eigen::VectorXd::Zero(n_classes);
    return p;
}

void ProbeTrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("probe config: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("probe config: momentum must be in [0, 1)");
    if (epochs < 1) throw ValidationError("probe config: epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("probe config: batch_size must be > 0");
    if (decay_every == 0) throw ValidationError("probe config: decay_every must be > 0");
}

double probe_learning_rate(const ProbeTrainConfig& config, std::uint32_t epoch) {
    return config.learning_rate * std::pow(config.decay_factor, epoch / config.decay_every);
}

Eigen::VectorXd average_pool(const Eigen::VectorXd& features, const PoolSpec& spec) {
    const Eigen::Index f = features.size();
    const Eigen::Index out = static_cast<Eigen::Index>(spec.output_dim);
    if (out <= 0 || out > f)
        throw ValidationError("average_pool: output_dim must be in [1, feature_dim]");
    // Balanced contiguous windows: the first (f mod out) windows get one extra
    // element, so every window is non-empty for any out <= f.
    const Eigen::Index base = f / out;
    const Eigen::Index rem = f % out;
    Eigen::VectorXd pooled(out);
    Eigen::Index start = 0;
    for (Eigen::Index w = 0; w < out; ++w) {
        const Eigen::Index len = base + (w < rem ? 1 : 0);
        pooled(w) = features.segment(start, len).mean();
        start += len;
    }
    return pooled;
}

Eigen::MatrixXd pool_rows(const Eigen::MatrixXd& features, const PoolSpec& spec) {
    Eigen::MatrixXd out(features.rows(), spec.output_dim);
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        out.row(i) = average_pool(features.row(i).transpose(), spec).transpose();
    return out;
}

double probe_loss_and_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                               const Eigen::MatrixXd& features,
                               const std::vector<std::uint32_t>& labels,
                               double weight_decay,
                               Eigen::MatrixXd* grad_weights, Eigen::VectorXd* grad_bias) {
    const Eigen::Index n = features.rows();
    const Eigen::Index k = weights.rows();
    if (features.cols() != weights.cols())
        throw ValidationError("probe: feature dim mismatch");
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw ValidationError("probe: label count mismatch");

    Eigen::MatrixXd logits = features * weights.transpose();
    logits.rowwise() += bias.transpose();

    Eigen::MatrixXd probs = softmax_rows(logits);
    std::vector<double> losses(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = std::max(probs(i, labels[i]), 1e-300);
        losses[static_cast<std::size_t>(i)] = -std::log(p);
    }
    double loss = pairwise_mean(losses);
    if (weight_decay > 0.0) loss += 0.5 * weight_decay * weights.squaredNorm();

    if (grad_weights != nullptr || grad_bias != nullptr) {
        Eigen::MatrixXd delta = probs; // (softmax - onehot) / n
        for (Eigen::Index i = 0; i < n; ++i) delta(i, labels[i]) -= 1.0;
        delta /= static_cast<double>(n);
        if (grad_weights != nullptr) {
            *grad_weights = delta.transpose() * features;
            if (weight_decay > 0.0) *grad_weights += weight_decay * weights;
        }
        if (grad_bias != nullptr) *grad_bias = delta.colwise().sum().transpose();
    }
    (void)k;
    return loss;
}

ProbeTrainResult train_probe(const LayerBlock& layer, const std::vector<std::uint32_t>& labels,
                             std::uint32_t n_classes, const ProbeTrainConfig& config) {
    config.validate();
    if (layer.is_final_logits)
        throw ValidationError("train_probe: the final-logits probe is the identity map, not trained");
    const std::size_t n = labels.size();
    if (n == 0) throw ValidationError("train_probe: empty training data");
    if (layer.data.size() != n * layer.feature_dim)
        throw ValidationError("train_probe: layer rows != label count");

    ProbeTrainResult result;
    result.probe.layer_index = layer.layer_index;

    std::uint32_t pool_dim = config.pool_dim;
    if (pool_dim == 0) pool_dim = std::min<std::uint32_t>(layer.feature_dim, 512);
    if (pool_dim > layer.feature_dim)
        throw ValidationError("train_probe: pool_dim exceeds feature_dim");
    if (pool_dim < layer.feature_dim)
        result.probe.pool = PoolSpec{PoolSpec::Kind::Average, pool_dim};

    Eigen::MatrixXd x = layer_matrix(layer, n);
    if (result.probe.pool) x = pool_rows(x, *result.probe.pool);
    const Eigen::Index f = x.cols();

    const std::uint32_t first = labels.front();
    result.single_class_warning =
        std::all_of(labels.begin(), labels.end(), [first](std::uint32_t y) { return y == first; });

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_classes, f);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_classes);
    Eigen::MatrixXd vw = Eigen::MatrixXd::Zero(n_classes, f);
    Eigen::VectorXd vb = Eigen::VectorXd::Zero(n_classes);

    Rng rng(mix_seed(config.seed, 0x50524F42ull /* "PROB" */ + layer.layer_index));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    Eigen::MatrixXd gw;
    Eigen::VectorXd gb;
    result.epoch_loss.reserve(config.epochs);
    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = probe_learning_rate(config, epoch);
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t count = std::min<std::size_t>(config.batch_size, n - start);
            Eigen::MatrixXd xb(count, f);
            std::vector<std::uint32_t> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(i) = x.row(order[start + i]);
                yb[i] = labels[order[start + i]];
            }
            probe_loss_and_gradient(w, b, xb, yb, config.weight_decay, &gw, &gb);
            vw = config.momentum * vw - lr * gw;
            vb = config.momentum * vb - lr * gb;
            w += vw;
            b += vb;
        }
        result.epoch_loss.push_back(
            probe_loss_and_gradient(w, b, x, labels, 0.0, nullptr, nullptr));
        if (!std::isfinite(result.epoch_loss.back()))
            throw NumericError("train_probe: non-finite loss at epoch " + std::to_string(epoch));
    }

    result.probe.weights = std::move(w);
    result.probe.bias = std::move(b);
    return result;
}

Eigen::MatrixXd probe_logits(const LinearProbe& probe, const LayerBlock& layer) {
    const std::size_t n = layer.feature_dim == 0 ? 0 : layer.data.size() / layer.feature_dim;
    Eigen::MatrixXd x = layer_matrix(layer, n);
    if (probe.pool) x = pool_rows(x, *probe.pool);
    if (x.cols() != probe.weights.cols())
        throw ValidationError("probe_logits: feature dim " + std::to_string(x.cols()) +
                              " does not match probe weight dim " +
                              std::to_string(probe.weights.cols()));
    Eigen::MatrixXd logits = x * probe.weights.transpose();
    logits.rowwise() += probe.bias.transpose();
    return logits;
}

std::vector<double> probe_accuracy_curve(const std::vector<LinearProbe>& probes,
                                         const ActivationDump& dump) {
    if (probes.size() != dump.layers.size())
        throw ValidationError("probe_accuracy_curve: need exactly one probe per layer");
    std::vector<double> acc;
    acc.reserve(probes.size());
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const Eigen::MatrixXd logits = probe_logits(probes[k], dump.layers[k]);
        std::size_t correct = 0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index argmax = 0;
            logits.row(i).maxCoeff(&argmax);
            if (static_cast<std::uint32_t>(argmax) == dump.labels[static_cast<std::size_t>(i)])
                ++correct;
        }
        acc.push_back(static_cast<double>(correct) / static_cast<double>(logits.rows()));
    }
    return acc;
}

std::vector<ProbeTrainResult> train_probes_for_dump(const ActivationDump& dump,
                                                    const ProbeTrainConfig& config,
                                                    unsigned jobs) {
    dump.validate();
    const std::size_t d = dump.layers.size();
    std::vector<ProbeTrainResult> results(d);

    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(d));

    auto train_one = [&](std::size_t k) {
        const LayerBlock& layer = dump.layers[k];
        if (layer.is_final_logits) {
            results[k].probe = LinearProbe::identity(dump.n_classes, layer.layer_index);
        } else {
            results[k] = train_probe(layer, dump.labels, dump.n_classes, config);
        }
    };

    if (jobs <= 1) {
        for (std::size_t k = 0; k < d; ++k) train_one(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (unsigned t = 0; t < jobs; ++t)
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= d) return;
                    train_one(k);
                }
            });
        for (auto& w : workers) w.join();
    }
    return results;
}

namespace {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
    append_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct BundleReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw FormatError(FormatError::Reason::Truncated, "probe bundle truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                          static_cast<std::uint32_t>(bytes[pos + 1]) << 8 |
                          static_cast<std::uint32_t>(bytes[pos + 2]) << 16 |
                          static_cast<std::uint32_t>(bytes[pos + 3]) << 24;
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

} // namespace

void write_probe_bundle(const std::filesystem::path& path,
                        const std::vector<LinearProbe>& probes) {
    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), std::begin(kBundleMagic), std::end(kBundleMagic));
    append_u32(bytes, kBundleVersion);
    append_u32(bytes, static_cast<std::uint32_t>(probes.size()));
    for (const LinearProbe& p : probes) {
        append_u32(bytes, p.layer_index);
        bytes.push_back(p.pool ? 1 : 0);
        if (p.pool) {
            bytes.push_back(static_cast<std::uint8_t>(p.pool->kind));
            append_u32(bytes, p.pool->output_dim);
        }
        append_u32(bytes, static_cast<std::uint32_t>(p.weights.rows()));
        append_u32(bytes, static_cast<std::uint32_t>(p.weights.cols()));
        for (Eigen::Index i = 0; i < p.weights.rows(); ++i)
            for (Eigen::Index j = 0; j < p.weights.cols(); ++j)
                append_f32(bytes, static_cast<float>(p.weights(i, j)));
        for (Eigen::Index i = 0; i < p.bias.size(); ++i)
            append_f32(bytes, static_cast<float>(p.bias(i)));
    }
    append_u32(bytes, crc32({bytes.data(), bytes.size()}));

    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string());
}

std::vector<LinearProbe> read_probe_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open probe bundle: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0)
        throw FormatError(FormatError::Reason::BadMagic,
                          "not a probe bundle (bad magic): " + path.string());
    if (bytes.size() < 12 + 4)
        throw FormatError(FormatError::Reason::Truncated, "probe bundle truncated");

    const std::uint32_t stored = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                                 static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                                 static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                                 static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
    if (stored != crc32({bytes.data(), bytes.size() - 4}))
        throw FormatError(FormatError::Reason::ChecksumMismatch, "probe bundle checksum mismatch");

    BundleReader reader{bytes};
    reader.u32(); // magic
    const std::uint32_t version = reader.u32();
    if (version != kBundleVersion)
        throw FormatError(FormatError::Reason::BadVersion,
                          "unsupported probe bundle version " + std::to_string(version));
    const std::uint32_t count = reader.u32();
    std::vector<LinearProbe> probes;
    probes.reserve(count);
    for (std::uint32_t c = 0; c < count; ++c) {
        LinearProbe p;
        p.layer_index = reader.u32();
        if (reader.u8() != 0) {
            PoolSpec pool;
            pool.kind = static_cast<PoolSpec::Kind>(reader.u8());
            pool.output_dim = reader.u32();
            p.pool = pool;
        }
        const std::uint32_t rows = reader.u32();
        const std::uint32_t cols = reader.u32();
        p.weights.resize(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j)
                p.weights(i, j) = reader.f32();
        p.bias.resize(rows);
        for (std::uint32_t i = 0; i < rows; ++i) p.bias(i) = reader.f32();
        probes.push_back(std::move(p));
    }
    return probes;
}

} // namespace lates
