// Acceptance suite: every criterion prints one [PASS]/[FAIL] line; the
// process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "lates/dataio.hpp"
#include "lates/errors.hpp"
#include "lates/metrics.hpp"
#include "lates/numeric.hpp"
#include "lates/probes.hpp"
#include "lates/refnet.hpp"
#include "lates/stack.hpp"
#include "lates/stats.hpp"
#include "lates/theory.hpp"

using namespace lates;
namespace fs = std::filesystem;

namespace {

#ifndef LATES_CLI_PATH
#define LATES_CLI_PATH "lates"
#endif

int g_failures = 0;

void report(int number, const std::string& name, bool ok, double seconds,
            const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                seconds, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void run(int number, const std::string& name,
         const std::function<bool(std::string&)>& criterion) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = criterion(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(number, name, ok, seconds, detail);
}

LogitStack random_stack(Rng& rng, std::size_t n, std::size_t d, std::size_t k) {
    LogitStack stack;
    stack.n_examples = n;
    stack.num_probes = d;
    stack.num_classes = k;
    stack.slices.assign(d, Eigen::MatrixXd(n, k));
    for (auto& slice : stack.slices)
        for (Eigen::Index i = 0; i < slice.rows(); ++i)
            for (Eigen::Index j = 0; j < slice.cols(); ++j) slice(i, j) = 2.5 * rng.normal();
    return stack;
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::uint32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::uint32_t>(rng.uniform_index(k));
    return labels;
}

// ---- criterion 3 oracles: plain-loop implementations, no shared code -------

std::size_t oracle_argmax(const Eigen::MatrixXd& p, Eigen::Index i) {
    std::size_t best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j)
        if (p(i, j) > p(i, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
    return best;
}

double oracle_ece(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y, std::size_t m) {
    const std::size_t n = static_cast<std::size_t>(p.rows());
    double total = 0.0;
    for (std::size_t b = 0; b < m; ++b) {
        const double lo = static_cast<double>(b) / m;
        const double hi = static_cast<double>(b + 1) / m;
        double conf_sum = 0.0;
        std::size_t hits = 0, count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pred = oracle_argmax(p, static_cast<Eigen::Index>(i));
            const double conf = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pred));
            const bool inside = (b + 1 == m) ? (conf >= lo && conf <= hi) : (conf >= lo && conf < hi);
            if (!inside) continue;
            ++count;
            conf_sum += conf;
            if (pred == y[i]) ++hits;
        }
        if (count > 0)
            total += (static_cast<double>(count) / n) *
                     std::abs(static_cast<double>(hits) / count - conf_sum / count);
    }
    return total;
}

double oracle_brier(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) s += p(i, j) * p(i, j);
        total += s - 2.0 * p(i, y[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(p.rows());
}

double oracle_nll(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        total += -std::log(std::max(p(i, y[static_cast<std::size_t>(i)]), 1e-12));
    return total / static_cast<double>(p.rows());
}

double oracle_accuracy(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (oracle_argmax(p, i) == y[static_cast<std::size_t>(i)]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(p.rows());
}

bool oracle_auroc(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y, double& out) {
    std::vector<double> conf(static_cast<std::size_t>(p.rows()));
    std::vector<bool> correct(static_cast<std::size_t>(p.rows()));
    bool any_pos = false, any_neg = false;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const std::size_t pred = oracle_argmax(p, i);
        conf[static_cast<std::size_t>(i)] = p(i, static_cast<Eigen::Index>(pred));
        correct[static_cast<std::size_t>(i)] = pred == y[static_cast<std::size_t>(i)];
        (correct[static_cast<std::size_t>(i)] ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg) return false;
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        if (!correct[i]) continue;
        for (std::size_t j = 0; j < conf.size(); ++j) {
            if (correct[j]) continue;
            ++pairs;
            if (conf[i] > conf[j]) wins += 1.0;
            else if (conf[i] == conf[j]) wins += 0.5;
        }
    }
    out = wins / static_cast<double>(pairs);
    return true;
}

// demo-scale pipeline used by criterion 9: the network and probes depend only
// on the train split, so they are built once per seed, then calibrators are
// fitted on nested holdout subsets.
struct PipelineSetup {
    std::vector<LinearProbe> probes;
    ActivationDump holdout_pool; // 1000 calibration examples
    LogitStack test_stack;
    Eigen::MatrixXd test_logits;
    std::vector<std::uint32_t> test_labels;
};

struct PipelineMetrics {
    double lates_nll_holdout = 0.0, ts_nll_holdout = 0.0;
    double lates_nll_test = 0.0, ts_nll_test = 0.0;
};

PipelineSetup make_pipeline_setup(std::uint64_t seed) {
    SyntheticTask task;
    task.kind = SyntheticTask::Kind::Spiral;
    task.n = 5000;
    task.k = 3;
    task.noise = 0.2;
    task.seed = seed;
    const SyntheticData data = generate_task(task);

    const std::size_t pool_n = 1000;
    Rng split_rng(mix_seed(seed, 0xACC9));
    std::vector<std::size_t> order = shuffled_indices(task.n, split_rng);
    const std::size_t n_train = task.n - pool_n;
    Eigen::MatrixXd train_x(n_train, 2), pool_x(pool_n, 2);
    std::vector<std::uint32_t> train_y(n_train), pool_y(pool_n);
    for (std::size_t i = 0; i < n_train; ++i) {
        train_x.row(static_cast<Eigen::Index>(i)) =
            data.features.row(static_cast<Eigen::Index>(order[i]));
        train_y[i] = data.labels[order[i]];
    }
    for (std::size_t i = 0; i < pool_n; ++i) {
        pool_x.row(static_cast<Eigen::Index>(i)) =
            data.features.row(static_cast<Eigen::Index>(order[n_train + i]));
        pool_y[i] = data.labels[order[n_train + i]];
    }

    RefNetSpec spec;
    spec.layer_widths = {2, 32, 32, 32, 3};
    spec.seed = seed;
    const RefNetTrainResult trained = train_refnet(spec, train_x, train_y);

    const ActivationDump train_dump = export_activations(trained.net, train_x, train_y, 3);

    ProbeTrainConfig probe_config;
    probe_config.seed = seed;
    const auto probe_results = train_probes_for_dump(train_dump, probe_config, 0);

    PipelineSetup setup;
    for (const auto& r : probe_results) setup.probes.push_back(r.probe);
    setup.holdout_pool = export_activations(trained.net, pool_x, pool_y, 3);

    SyntheticTask test_task = task;
    test_task.n = 1250;
    test_task.seed = mix_seed(seed, 0x7E57);
    const SyntheticData test = generate_task(test_task);
    const ActivationDump test_dump =
        export_activations(trained.net, test.features, test.labels, 3);
    setup.test_stack = build_logit_stack(setup.probes, test_dump);
    setup.test_logits = test_dump.layer_as_matrix(test_dump.final_logits_index());
    setup.test_labels = test.labels;
    return setup;
}

PipelineMetrics fit_and_eval(const PipelineSetup& setup, std::size_t holdout_n,
                             std::uint64_t seed) {
    std::vector<std::size_t> rows(holdout_n);
    std::iota(rows.begin(), rows.end(), 0);
    const ActivationDump holdout = take_examples(setup.holdout_pool, rows);

    const LogitStack holdout_stack = build_logit_stack(setup.probes, holdout);
    AggTrainConfig agg;
    agg.epochs = 200;
    agg.learning_rate = 0.05;
    agg.seed = seed;
    const AggregatorWeights fitted = fit_lates(holdout_stack, holdout.labels, agg);

    const Eigen::MatrixXd holdout_logits = holdout.layer_as_matrix(holdout.final_logits_index());
    const TemperatureModel ts = fit_temperature(holdout_logits, holdout.labels);

    PipelineMetrics metrics;
    metrics.lates_nll_holdout =
        loss_value(lates_predict(holdout_stack, fitted), holdout.labels, LossKind::Nll);
    metrics.ts_nll_holdout =
        loss_value(softmax_rows(holdout_logits / ts.tau), holdout.labels, LossKind::Nll);
    metrics.lates_nll_test =
        loss_value(lates_predict(setup.test_stack, fitted), setup.test_labels, LossKind::Nll);
    metrics.ts_nll_test = loss_value(softmax_rows(setup.test_logits / ts.tau), setup.test_labels,
                                     LossKind::Nll);
    return metrics;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

int main() {
    run(1, "reduction identity lates(0,...,0,1/tau) == softmax(logits/tau)", [](std::string&) {
        Rng rng(101);
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t d = 1 + rng.uniform_index(5);
            const std::size_t k = 2 + rng.uniform_index(5);
            const std::size_t n = 1 + rng.uniform_index(30);
            const LogitStack stack = random_stack(rng, n, d, k);
            for (double tau : {0.5, 1.0, 2.0, 10.0}) {
                Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
                beta(static_cast<Eigen::Index>(d - 1)) = 1.0 / tau;
                const Eigen::MatrixXd via_lates = lates_predict(stack, beta);
                const Eigen::MatrixXd via_ts = softmax_rows(stack.slices.back() / tau);
                if ((via_lates - via_ts).cwiseAbs().maxCoeff() >= 1e-12) return false;
            }
        }
        return true;
    });

    run(2, "dominance over temperature scaling (40 seeds, n=1000)", [](std::string& detail) {
        DominanceConfig config;
        config.master_seed = 2024;
        config.tolerance = 0.01;
        const DominanceResult r = dominance_experiment(
            40, 1000, StackTaskSpec::preset(StackTaskSpec::Kind::Default), config);

        OracleBoundParams bound;
        bound.lambda = lambda_schedule(1000, 1.0);
        bound.rho = 1.0;
        bound.n = 1000;
        bound.beta_star_norm_sq = 4.0;
        bound.epsilon = 0.05;
        const double delta = oracle_delta_bound(bound);

        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "dominance %.3f, mean gap %.4f, oracle bound (lambda=%.4f, rho=1, "
                      "||b*||^2<=4, eps=0.05) = %.4f",
                      r.dominance_fraction, r.mean_gap, bound.lambda, delta);
        detail = buf;
        return r.dominance_fraction >= 0.95;
    });

    run(3, "metric oracles on 200 random instances", [](std::string&) {
        Rng rng(103);
        for (int rep = 0; rep < 200; ++rep) {
            const std::size_t n = 1 + rng.uniform_index(50);
            const std::size_t k = 2 + rng.uniform_index(4);
            Eigen::MatrixXd logits(n, k);
            for (Eigen::Index i = 0; i < logits.rows(); ++i)
                for (Eigen::Index j = 0; j < logits.cols(); ++j) logits(i, j) = 2.0 * rng.normal();
            const Eigen::MatrixXd p = softmax_rows(logits);
            const auto y = random_labels(rng, n, k);

            if (std::abs(ece(p, y, 10).ece - oracle_ece(p, y, 10)) > 1e-10) return false;
            if (std::abs(brier(p, y) - oracle_brier(p, y)) > 1e-10) return false;
            if (std::abs(nll(p, y) - oracle_nll(p, y)) > 1e-10) return false;
            if (std::abs(accuracy(p, y) - oracle_accuracy(p, y)) > 1e-10) return false;

            double oracle_auc = 0.0;
            const bool defined = oracle_auroc(p, y, oracle_auc);
            const auto fast = auroc(p, y);
            if (n >= 2) {
                if (defined != fast.has_value()) return false;
                if (defined && std::abs(*fast - oracle_auc) > 1e-10) return false;
            }
            // Brier affine relation
            if (std::abs(brier(p, y) - (loss_value(p, y, LossKind::Square) - 1.0)) > 1e-12)
                return false;
        }
        return true;
    });

    run(4, "equal-width ECE pitfall reproduction", [](std::string& detail) {
        const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
        Eigen::MatrixXd f2(4, 2), f1(4, 2);
        f2 << 0.55, 0.45, 0.55, 0.45, 0.45, 0.55, 0.45, 0.55;
        f1 << 0.95, 0.05, 0.45, 0.55, 0.35, 0.65, 0.05, 0.95;
        const double acc2 = accuracy(f2, labels);
        const double acc1 = accuracy(f1, labels);
        const double ece2 = ece(f2, labels, 10).ece;
        const double ece1 = ece(f1, labels, 10).ece;
        char buf[128];
        std::snprintf(buf, sizeof buf, "acc(f2)=%.2f acc(f1)=%.2f ece(f2)=%.4f ece(f1)=%.4f",
                      acc2, acc1, ece2, ece1);
        detail = buf;
        return acc2 == 1.0 && acc1 == 0.75 && std::abs(ece2 - 0.45) < 1e-12 &&
               std::abs(ece1 - 0.25) < 1e-12 && ece2 > ece1 && acc2 > acc1;
    });

    run(5, "gradient checks vs central finite differences", [](std::string& detail) {
        Rng rng(105);
        const double h = 1e-6;
        auto rel = [](double a, double fd) {
            return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
        };
        double worst = 0.0;

        // aggregator gradient, 20 configurations
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t d = 1 + rng.uniform_index(4);
            const LogitStack stack = random_stack(rng, 20, d, 3);
            const auto y = random_labels(rng, 20, 3);
            const LossKind kind = rep % 2 ? LossKind::Square : LossKind::Nll;
            Eigen::VectorXd beta(d);
            for (Eigen::Index i = 0; i < beta.size(); ++i) beta(i) = rng.uniform();
            const Eigen::VectorXd grad = aggregator_gradient(stack, beta, y, kind);
            for (Eigen::Index i = 0; i < beta.size(); ++i) {
                Eigen::VectorXd bp = beta, bm = beta;
                bp(i) += h;
                bm(i) -= h;
                const double fd = (loss_value(lates_predict(stack, bp), y, kind) -
                                   loss_value(lates_predict(stack, bm), y, kind)) /
                                  (2 * h);
                worst = std::max(worst, rel(grad(i), fd));
            }
        }

        // probe gradient, 20 configurations
        for (int rep = 0; rep < 20; ++rep) {
            const Eigen::Index n = 10, f = 3, k = 3;
            Eigen::MatrixXd x(n, f);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < f; ++j) x(i, j) = rng.normal();
            const auto y = random_labels(rng, n, k);
            Eigen::MatrixXd w(k, f);
            Eigen::VectorXd b(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                b(i) = 0.4 * rng.normal();
                for (Eigen::Index j = 0; j < f; ++j) w(i, j) = 0.4 * rng.normal();
            }
            Eigen::MatrixXd gw;
            Eigen::VectorXd gb;
            probe_loss_and_gradient(w, b, x, y, 0.0, &gw, &gb);
            for (Eigen::Index i = 0; i < k; ++i)
                for (Eigen::Index j = 0; j < f; ++j) {
                    Eigen::MatrixXd wp = w, wm = w;
                    wp(i, j) += h;
                    wm(i, j) -= h;
                    const double fd =
                        (probe_loss_and_gradient(wp, b, x, y, 0.0, nullptr, nullptr) -
                         probe_loss_and_gradient(wm, b, x, y, 0.0, nullptr, nullptr)) /
                        (2 * h);
                    worst = std::max(worst, rel(gw(i, j), fd));
                }
        }

        // refnet backprop, 20 configurations
        for (int rep = 0; rep < 20; ++rep) {
            RefNet net;
            const std::vector<std::uint32_t> widths = {2, 4, 4, 3};
            for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
                net.weights.emplace_back(widths[l + 1], widths[l]);
                net.biases.emplace_back(widths[l + 1]);
                for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
                    net.biases[l](i) = 0.3 * rng.normal();
                    for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
                        net.weights[l](i, j) = 0.6 * rng.normal();
                }
            }
            Eigen::MatrixXd x(6, 2);
            for (Eigen::Index i = 0; i < 6; ++i)
                for (int j = 0; j < 2; ++j) x(i, j) = rng.normal();
            const auto y = random_labels(rng, 6, 3);
            std::vector<Eigen::MatrixXd> gw;
            std::vector<Eigen::VectorXd> gb;
            refnet_loss_and_gradients(net, x, y, 1e-4, &gw, &gb);
            for (std::size_t l = 0; l < net.weights.size(); ++l)
                for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
                    for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) {
                        RefNet np = net, nm = net;
                        np.weights[l](i, j) += h;
                        nm.weights[l](i, j) -= h;
                        const double fd =
                            (refnet_loss_and_gradients(np, x, y, 1e-4, nullptr, nullptr) -
                             refnet_loss_and_gradients(nm, x, y, 1e-4, nullptr, nullptr)) /
                            (2 * h);
                        worst = std::max(worst, rel(gw[l](i, j), fd));
                    }
        }

        char buf[64];
        std::snprintf(buf, sizeof buf, "worst relative error %.3g", worst);
        detail = buf;
        return worst < 1e-5;
    });

    run(6, "statistics reference values", [](std::string& detail) {
        const WilcoxonResult w =
            wilcoxon_signed_rank({{1, 2, 3, 4, 5}}, Sidedness::OneSided);
        if (w.p_value != 0.03125) {
            detail = "wilcoxon exact p != 0.03125";
            return false;
        }

        Rng rng(106);
        double worst = 0.0;
        for (std::size_t n = 10; n <= 25; ++n)
            for (int rep = 0; rep < 30; ++rep) {
                std::vector<double> deltas(n);
                const double shift = (rng.uniform() - 0.5) * 1.6;
                for (auto& d : deltas) d = rng.normal() + shift;
                for (Sidedness sided : {Sidedness::OneSided, Sidedness::TwoSided}) {
                    const double pe =
                        wilcoxon_signed_rank({deltas}, sided, WilcoxonMethod::Exact).p_value;
                    const double pa =
                        wilcoxon_signed_rank({deltas}, sided, WilcoxonMethod::NormalApprox)
                            .p_value;
                    worst = std::max(worst, std::abs(pe - pa));
                }
            }
        if (worst >= 0.02) {
            detail = "exact vs approx disagreement " + std::to_string(worst);
            return false;
        }

        const AnovaResult anova = anova_oneway({{1, 2, 3}, {4, 5, 6}});
        if (std::abs(anova.f_statistic - 13.5) > 1e-9 || anova.df_between != 1 ||
            anova.df_within != 4) {
            detail = "anova F(1,4) != 13.5";
            return false;
        }

        const std::vector<double> holm = holm_correction({0.01, 0.04});
        if (std::abs(holm[0] - 0.02) > 1e-15 || std::abs(holm[1] - 0.04) > 1e-15) {
            detail = "holm([0.01, 0.04]) != [0.02, 0.04]";
            return false;
        }

        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "wilcoxon p=0.03125, worst exact-approx gap %.4f, F(1,4)=13.5", worst);
        detail = buf;
        return true;
    });

    run(7, "end-to-end demo on the spiral task (CLI)", [](std::string& detail) {
        const fs::path dir = fs::temp_directory_path() / "lates_acceptance_demo";
        fs::remove_all(dir);
        const std::string cmd = std::string(LATES_CLI_PATH) +
                                " demo --task spiral --n 5000 --seed 7 --out-dir " + dir.string() +
                                " > " + (dir.string() + ".log") + " 2>&1";
        fs::create_directories(dir.parent_path());
        const auto start = std::chrono::steady_clock::now();
        const int status = std::system(cmd.c_str());
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (WEXITSTATUS(status) != 0) {
            detail = "demo exited with " + std::to_string(WEXITSTATUS(status));
            return false;
        }
        if (seconds >= 300.0) {
            detail = "demo took " + std::to_string(seconds) + "s (limit 300)";
            return false;
        }

        const MetricReport lates_report =
            metric_report_from_json(slurp(dir / "report_lates_holdout.json"));
        const MetricReport ts_report =
            metric_report_from_json(slurp(dir / "report_temperature_holdout.json"));
        const Calibrator calibrator = calibrator_from_json(slurp(dir / "lates.json"));

        const Eigen::VectorXd contributions = layer_contributions(calibrator.beta);
        int nonzero = 0;
        for (Eigen::Index i = 0; i < contributions.size(); ++i)
            if (contributions(i) > 0.0) ++nonzero;

        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "%.1fs; NLL lates %.4f vs ts %.4f; ECE lates %.4f vs ts %.4f; "
                      "%d nonzero contributions, sum err %.1e",
                      seconds, lates_report.nll, ts_report.nll, lates_report.ece, ts_report.ece,
                      nonzero, std::abs(contributions.sum() - 1.0));
        detail = buf;
        return lates_report.nll <= ts_report.nll && lates_report.ece <= ts_report.ece + 0.005 &&
               std::abs(contributions.sum() - 1.0) < 1e-9 && nonzero >= 2;
    });

    run(8, "dump format: byte-identical rewrite, corruption detection, fixture",
        [](std::string&) {
            const fs::path dir = fs::temp_directory_path() / "lates_acceptance_fmt";
            fs::create_directories(dir);

            ActivationDump dump;
            dump.n_examples = 3;
            dump.n_classes = 2;
            dump.labels = {0, 1, 1};
            LayerBlock hidden;
            hidden.layer_index = 1;
            hidden.feature_dim = 2;
            hidden.data = {0.1f, -0.25f, 3.5f, 1e-7f, -42.0f, 0.0f};
            LayerBlock final_block;
            final_block.layer_index = 2;
            final_block.feature_dim = 2;
            final_block.is_final_logits = true;
            final_block.data = {1.0f, -1.0f, 0.5f, 2.0f, -0.125f, 8.0f};
            dump.layers = {hidden, final_block};

            const fs::path p1 = dir / "a.lates";
            const fs::path p2 = dir / "b.lates";
            write_dump(dump, p1);
            write_dump(read_dump(p1), p2);
            if (slurp(p1) != slurp(p2)) return false;

            // flip one payload byte: the checksum must fire
            std::string bytes = slurp(p1);
            bytes[30] = static_cast<char>(bytes[30] ^ 0x08);
            const fs::path corrupted = dir / "c.lates";
            std::ofstream(corrupted, std::ios::binary).write(bytes.data(),
                                                             static_cast<long>(bytes.size()));
            bool checksum_fired = false;
            try {
                read_dump(corrupted);
            } catch (const FormatError& e) {
                checksum_fired = e.reason() == FormatError::Reason::ChecksumMismatch;
            }
            if (!checksum_fired) return false;

            // documented fixture: 1 example, 2 layers, known values
            const std::vector<std::uint8_t> fixture = {
                0x4C, 0x41, 0x54, 0x53, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00,
                0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
                0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xC0, 0x3F, 0x02, 0x00, 0x00,
                0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x80, 0x3E, 0x00, 0x00,
                0x00, 0xC0, 0x01, 0x00, 0x00, 0x00, 0x40, 0xBD, 0x44, 0x30};
            const fs::path fixture_path = dir / "fixture.lates";
            std::ofstream(fixture_path, std::ios::binary)
                .write(reinterpret_cast<const char*>(fixture.data()),
                       static_cast<long>(fixture.size()));
            const ActivationDump parsed = read_dump(fixture_path);
            return parsed.n_examples == 1 && parsed.n_classes == 2 &&
                   parsed.layers.size() == 2 && parsed.layers[0].data[0] == 1.5f &&
                   parsed.layers[1].data[0] == 0.25f && parsed.layers[1].data[1] == -2.0f &&
                   parsed.labels[0] == 1 && parsed.layers[1].is_final_logits;
        });

    run(9, "low-data trend over holdout sizes {50, 200, 1000}", [](std::string& detail) {
        const std::vector<std::size_t> sizes = {50, 200, 1000};
        std::vector<double> mean_gap_test(sizes.size(), 0.0);
        std::vector<double> mean_gap_holdout(sizes.size(), 0.0);
        const int seeds = 20;
        for (int seed = 0; seed < seeds; ++seed) {
            const PipelineSetup setup =
                make_pipeline_setup(3000 + static_cast<std::uint64_t>(seed));
            for (std::size_t s = 0; s < sizes.size(); ++s) {
                const PipelineMetrics m =
                    fit_and_eval(setup, sizes[s], 3000 + static_cast<std::uint64_t>(seed));
                mean_gap_test[s] += (m.ts_nll_test - m.lates_nll_test) / seeds;
                mean_gap_holdout[s] += (m.ts_nll_holdout - m.lates_nll_holdout) / seeds;
            }
        }
        char buf[220];
        std::snprintf(buf, sizeof buf,
                      "test-split NLL gap (TS - LATES): n=50 %.4f, n=200 %.4f, n=1000 %.4f "
                      "(holdout-split gaps %.4f / %.4f / %.4f)",
                      mean_gap_test[0], mean_gap_test[1], mean_gap_test[2], mean_gap_holdout[0],
                      mean_gap_holdout[1], mean_gap_holdout[2]);
        detail = buf;
        return mean_gap_test[2] >= 0.0;
    });

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
}
