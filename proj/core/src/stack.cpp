#include "lates/stack.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

std::string loss_kind_name(LossKind kind) {
    return kind == LossKind::Nll ? "nll" : "square";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "nll") return LossKind::Nll;
    if (name == "square") return LossKind::Square;
    throw ValidationError("unknown loss kind: " + name);
}

void LogitStack::validate() const {
    if (slices.size() != num_probes) throw ValidationError("stack: slice count != d");
    if (num_probes == 0) throw ValidationError("stack: d must be >= 1");
    for (const Eigen::MatrixXd& s : slices) {
        if (s.rows() != static_cast<Eigen::Index>(n_examples) ||
            s.cols() != static_cast<Eigen::Index>(num_classes))
            throw ValidationError("stack: slice shape mismatch");
        if (!s.allFinite()) throw ValidationError("stack: non-finite probe logit");
    }
}

AggregatorWeights AggregatorWeights::initial(std::size_t d, LossKind kind) {
    AggregatorWeights w;
    w.beta = Eigen::VectorXd::Zero(d);
    w.beta(d - 1) = 1.0;
    w.loss_kind = kind;
    return w;
}

void AggTrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("agg config: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("agg config: momentum must be in [0, 1)");
    if (ridge_lambda < 0.0) throw ValidationError("agg config: ridge_lambda must be >= 0");
}

LogitStack build_logit_stack(const std::vector<LinearProbe>& probes, const ActivationDump& dump) {
    dump.validate();
    dump.final_logits_index(); // the identity-probe target must exist
    LogitStack stack;
    stack.n_examples = dump.n_examples;
    stack.num_probes = dump.layers.size();
    stack.num_classes = dump.n_classes;
    stack.slices.reserve(dump.layers.size());
    for (const LayerBlock& layer : dump.layers) {
        auto it = std::find_if(probes.begin(), probes.end(), [&](const LinearProbe& p) {
            return p.layer_index == layer.layer_index;
        });
        if (it == probes.end())
            throw ValidationError("stack: no probe for layer " + std::to_string(layer.layer_index));
        Eigen::MatrixXd logits = probe_logits(*it, layer);
        if (logits.cols() != static_cast<Eigen::Index>(dump.n_classes))
            throw ValidationError("stack: probe for layer " + std::to_string(layer.layer_index) +
                                  " emits " + std::to_string(logits.cols()) + " classes, want " +
                                  std::to_string(dump.n_classes));
        stack.slices.push_back(std::move(logits));
    }
    return stack;
}

Eigen::MatrixXd lates_predict(const LogitStack& stack, const Eigen::VectorXd& beta) {
    if (beta.size() != static_cast<Eigen::Index>(stack.num_probes))
        throw ValidationError("lates_predict: beta length " + std::to_string(beta.size()) +
                              " != d = " + std::to_string(stack.num_probes));
    Eigen::MatrixXd combined = Eigen::MatrixXd::Zero(stack.n_examples, stack.num_classes);
    for (std::size_t k = 0; k < stack.num_probes; ++k)
        combined.noalias() += beta(static_cast<Eigen::Index>(k)) * stack.slices[k];
    return softmax_rows(combined);
}

Eigen::MatrixXd lates_predict(const LogitStack& stack, const AggregatorWeights& weights) {
    return lates_predict(stack, weights.beta);
}

Eigen::VectorXd project_nonnegative(Eigen::VectorXd v) {
    return v.cwiseMax(0.0);
}

namespace {

// Per-example loss and d(loss)/d(combined logits) for one softmax row.
// Returns the loss; writes dz if requested.
double row_loss_and_dz(const Eigen::VectorXd& z, std::uint32_t label, LossKind kind,
                       Eigen::VectorXd* dz) {
    Eigen::VectorXd p = z;
    softmax_inplace(p);
    const Eigen::Index k = p.size();
    if (kind == LossKind::Nll) {
        const double loss = -std::log(std::max(p(label), 1e-300));
        if (dz != nullptr) {
            *dz = p;
            (*dz)(label) -= 1.0;
        }
        return loss;
    }
    double loss = 0.0;
    double s = 0.0; // sum_j (p_j - y_j) p_j
    for (Eigen::Index j = 0; j < k; ++j) {
        const double y = (static_cast<std::uint32_t>(j) == label) ? 1.0 : 0.0;
        const double diff = p(j) - y;
        loss += diff * diff;
        s += diff * p(j);
    }
    if (dz != nullptr) {
        dz->resize(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const double y = (static_cast<std::uint32_t>(j) == label) ? 1.0 : 0.0;
            (*dz)(j) = 2.0 * p(j) * ((p(j) - y) - s);
        }
    }
    return loss;
}

// Mean loss over the given rows (all rows when `rows` is empty), and the
// gradient with respect to beta if requested. Reductions over examples use
// pairwise summation.
double stack_loss_and_gradient(const LogitStack& stack, const Eigen::VectorXd& beta,
                               const std::vector<std::uint32_t>& labels, LossKind kind,
                               const std::vector<std::size_t>& rows, Eigen::VectorXd* grad) {
    const std::size_t d = stack.num_probes;
    const std::size_t m = rows.empty() ? stack.n_examples : rows.size();
    std::vector<double> losses(m);
    Eigen::MatrixXd per_example_grad;
    if (grad != nullptr) per_example_grad.resize(m, d);

    Eigen::VectorXd z(stack.num_classes);
    Eigen::VectorXd dz;
    for (std::size_t idx = 0; idx < m; ++idx) {
        const std::size_t i = rows.empty() ? idx : rows[idx];
        z.setZero();
        for (std::size_t k = 0; k < d; ++k)
            z += beta(static_cast<Eigen::Index>(k)) * stack.slices[k].row(i).transpose();
        losses[idx] = row_loss_and_dz(z, labels[i], kind, grad != nullptr ? &dz : nullptr);
        if (grad != nullptr)
            for (std::size_t k = 0; k < d; ++k)
                per_example_grad(idx, static_cast<Eigen::Index>(k)) =
                    dz.dot(stack.slices[k].row(i));
    }

    if (grad != nullptr) {
        grad->resize(d);
        std::vector<double> column(m);
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t idx = 0; idx < m; ++idx)
                column[idx] = per_example_grad(idx, static_cast<Eigen::Index>(k));
            (*grad)(static_cast<Eigen::Index>(k)) = pairwise_mean(column);
        }
    }
    return pairwise_mean(losses);
}

} // namespace

AggregatorWeights fit_lates(const LogitStack& holdout_stack,
                            const std::vector<std::uint32_t>& labels,
                            const AggTrainConfig& config) {
    config.validate();
    holdout_stack.validate();
    const std::size_t n = holdout_stack.n_examples;
    const std::size_t d = holdout_stack.num_probes;
    if (labels.size() != n) throw ValidationError("fit_lates: label count mismatch");

    AggregatorWeights result = AggregatorWeights::initial(d, config.loss_kind);
    Eigen::VectorXd beta = result.beta;

    auto objective = [&](const Eigen::VectorXd& b, double* plain) {
        const double loss = stack_loss_and_gradient(holdout_stack, b, labels,
                                                    config.loss_kind, {}, nullptr);
        if (plain != nullptr) *plain = loss;
        return loss + 0.5 * config.ridge_lambda * b.squaredNorm();
    };

    double plain0 = 0.0;
    double best_objective = objective(beta, &plain0);
    Eigen::VectorXd best_beta = beta;
    result.train_trace.push_back(plain0);

    const std::size_t batch = (config.batch_size == 0 || config.batch_size >= n)
                                  ? n
                                  : config.batch_size;
    Rng rng(mix_seed(config.seed, 0x414747ull /* "AGG" */));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd grad(d);
    std::vector<std::size_t> batch_rows;
    double best_plain = plain0;
    std::uint32_t epochs_since_improvement = 0;

    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            if (count == n) {
                batch_rows.clear();
            } else {
                batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(start + count));
            }
            const double batch_loss = stack_loss_and_gradient(
                holdout_stack, beta, labels, config.loss_kind, batch_rows, &grad);
            if (!std::isfinite(batch_loss))
                throw NumericError("fit_lates: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", beta = [" + std::to_string(beta.minCoeff()) + ", " +
                                   std::to_string(beta.maxCoeff()) + "]");
            if (config.ridge_lambda > 0.0) grad += config.ridge_lambda * beta;
            velocity = config.momentum * velocity - config.learning_rate * grad;
            beta += velocity;
            beta = project_nonnegative(std::move(beta));
            assert(beta.minCoeff() >= 0.0);
        }

        double plain = 0.0;
        const double obj = objective(beta, &plain);
        if (!std::isfinite(plain))
            throw NumericError("fit_lates: non-finite holdout loss after epoch " +
                               std::to_string(epoch));
        result.train_trace.push_back(plain);
        if (obj < best_objective) {
            best_objective = obj;
            best_beta = beta;
        }
        if (plain < best_plain - 1e-12) {
            best_plain = plain;
            epochs_since_improvement = 0;
        } else if (config.patience > 0 && ++epochs_since_improvement >= config.patience) {
            break;
        }
    }

    result.beta = std::move(best_beta);
    return result;
}

TemperatureModel fit_temperature(const Eigen::MatrixXd& logits,
                                 const std::vector<std::uint32_t>& labels, LossKind kind) {
    if (logits.rows() < 1) throw ValidationError("fit_temperature: need at least one example");
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ValidationError("fit_temperature: label count mismatch");

    auto loss_at = [&](double log_tau) {
        const double tau = std::exp(log_tau);
        return loss_value(softmax_rows(logits / tau), labels, kind);
    };

    const double lo = std::log(1e-3);
    const double hi = std::log(1e3);

    double a = lo;
    double b = hi;
    if (kind == LossKind::Square) {
        // The square loss is not guaranteed unimodal in tau; bracket the grid
        // minimum first, then refine.
        constexpr int kGrid = 240;
        int best = 0;
        double best_v = std::numeric_limits<double>::infinity();
        for (int g = 0; g <= kGrid; ++g) {
            const double t = lo + (hi - lo) * g / kGrid;
            const double v = loss_at(t);
            if (v < best_v) {
                best_v = v;
                best = g;
            }
        }
        a = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
        b = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
    }

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = loss_at(x1);
    double f2 = loss_at(x2);
    for (int iter = 0; iter < 200 && (b - a) > 1e-12; ++iter) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = loss_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = loss_at(x2);
        }
    }
    double log_tau = 0.5 * (a + b);
    // Never come out worse than the identity temperature.
    if (loss_at(log_tau) > loss_at(0.0)) log_tau = 0.0;
    return TemperatureModel{std::exp(log_tau)};
}

double loss_value(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels,
                  LossKind kind, LossFlags* flags) {
    const Eigen::Index n = probs.rows();
    const Eigen::Index k = probs.cols();
    if (static_cast<std::size_t>(n) != labels.size())
        throw ValidationError("loss_value: label count mismatch");
    if (n == 0) throw ValidationError("loss_value: empty input");

    std::vector<double> losses(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint32_t y = labels[static_cast<std::size_t>(i)];
        if (y >= static_cast<std::uint32_t>(k)) throw ValidationError("loss_value: label out of range");
        if (kind == LossKind::Nll) {
            double p = probs(i, y);
            if (p < 1e-12) {
                p = 1e-12;
                if (flags != nullptr) ++flags->clipped;
            }
            losses[static_cast<std::size_t>(i)] = -std::log(p);
        } else {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) {
                const double target = (static_cast<std::uint32_t>(j) == y) ? 1.0 : 0.0;
                const double diff = probs(i, j) - target;
                sum += diff * diff;
            }
            losses[static_cast<std::size_t>(i)] = sum;
        }
    }
    return pairwise_mean(losses);
}

Eigen::VectorXd aggregator_gradient(const LogitStack& stack, const Eigen::VectorXd& beta,
                                    const std::vector<std::uint32_t>& labels, LossKind kind) {
    if (beta.size() != static_cast<Eigen::Index>(stack.num_probes))
        throw ValidationError("aggregator_gradient: beta length mismatch");
    if (labels.size() != stack.n_examples)
        throw ValidationError("aggregator_gradient: label count mismatch");
    Eigen::VectorXd grad;
    stack_loss_and_gradient(stack, beta, labels, kind, {}, &grad);
    return grad;
}

Eigen::VectorXd layer_contributions(const Eigen::VectorXd& beta) {
    const double total = beta.sum();
    if (!(total > 0.0)) throw ValidationError("layer_contributions: sum(beta) must be > 0");
    return beta / total;
}

std::string calibrator_to_json(const Calibrator& calibrator) {
    nlohmann::json j;
    j["kind"] = calibrator.kind == Calibrator::Kind::Lates ? "lates" : "temperature";
    if (calibrator.kind == Calibrator::Kind::Lates) {
        std::vector<double> beta(calibrator.beta.data(),
                                 calibrator.beta.data() + calibrator.beta.size());
        j["beta"] = beta;
    } else {
        j["tau"] = calibrator.tau;
    }
    j["loss"] = loss_kind_name(calibrator.loss);
    j["d"] = calibrator.d;
    j["K"] = calibrator.k;
    return j.dump(2) + "\n";
}

Calibrator calibrator_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("calibrator JSON parse error: ") + e.what());
    }
    Calibrator c;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        c.loss = loss_kind_from_name(j.at("loss").get<std::string>());
        c.d = j.at("d").get<std::uint32_t>();
        c.k = j.at("K").get<std::uint32_t>();
        if (kind == "lates") {
            c.kind = Calibrator::Kind::Lates;
            const auto beta = j.at("beta").get<std::vector<double>>();
            c.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                       static_cast<Eigen::Index>(beta.size()));
            if (c.beta.size() != static_cast<Eigen::Index>(c.d))
                throw ValidationError("calibrator: beta length != d");
            if (c.beta.minCoeff() < 0.0)
                throw ValidationError("calibrator: beta must be non-negative");
        } else if (kind == "temperature") {
            c.kind = Calibrator::Kind::Temperature;
            c.tau = j.at("tau").get<double>();
            if (!(c.tau > 0.0)) throw ValidationError("calibrator: tau must be > 0");
        } else {
            throw ValidationError("calibrator: unknown kind " + kind);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("calibrator JSON missing field: ") + e.what());
    }
    return c;
}

} // namespace lates
