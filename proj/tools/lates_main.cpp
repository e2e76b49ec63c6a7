// lates: layer-stack temperature scaling toolkit.
//
// Subcommands: train-probes, fit, evaluate, compare, theory, demo, inspect.
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
// failure. Reports are written atomically (temp file + rename).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lates/dataio.hpp"
#include "lates/errors.hpp"
#include "lates/metrics.hpp"
#include "lates/numeric.hpp"
#include "lates/probes.hpp"
#include "lates/refnet.hpp"
#include "lates/stack.hpp"
#include "lates/stats.hpp"
#include "lates/theory.hpp"

namespace fs = std::filesystem;
using namespace lates;

namespace {

std::uint64_t default_seed(std::uint64_t fallback) {
    if (const char* env = std::getenv("LATES_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ValidationError(std::string("LATES_SEED is not an integer: ") + env);
        }
    }
    return fallback;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << text;
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Eigen::MatrixXd read_probs_csv(const fs::path& path, std::size_t expected_rows) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ValidationError("probs CSV: not a number: '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ValidationError("probs CSV: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("probs CSV: empty file");
    if (rows.size() != expected_rows)
        throw ValidationError("probs CSV has " + std::to_string(rows.size()) +
                              " rows, dump has " + std::to_string(expected_rows));
    Eigen::MatrixXd probs(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.front().size(); ++j)
            probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return probs;
}

Eigen::MatrixXd calibrated_probs(const Calibrator& calibrator, const ActivationDump& dump,
                                 const std::string& probes_path) {
    if (calibrator.kind == Calibrator::Kind::Temperature) {
        const Eigen::MatrixXd logits = dump.layer_as_matrix(dump.final_logits_index());
        return softmax_rows(logits / calibrator.tau);
    }
    if (probes_path.empty())
        throw ValidationError("a lates calibrator needs --probes <bundle> to build the stack");
    const std::vector<LinearProbe> probes = read_probe_bundle(probes_path);
    const LogitStack stack = build_logit_stack(probes, dump);
    return lates_predict(stack, calibrator.beta);
}

double metric_from_report(const MetricReport& report, const std::string& name) {
    if (name == "ece") return report.ece;
    if (name == "nll") return report.nll;
    if (name == "brier") return report.brier;
    if (name == "acc") return report.acc;
    if (name == "auc") {
        if (!report.auc) throw ValidationError("a report has undefined AUC; cannot compare on auc");
        return *report.auc;
    }
    throw ValidationError("unknown metric: " + name);
}

struct DemoOptions {
    std::string task = "spiral";
    std::uint32_t n = 5000;
    std::uint32_t k = 3;
    double noise = 0.2;
    std::uint64_t seed = 7;
    std::string out_dir = "runs/demo";
    double holdout_fraction = 0.1;
    std::vector<std::uint32_t> hidden = {32, 32, 32};
    std::uint32_t refnet_epochs = 60;
    std::uint32_t probe_epochs = 50;
    std::uint32_t agg_epochs = 200;
    double agg_lr = 0.05;
    std::uint32_t agg_batch = 0;
    std::string loss = "nll";
    std::size_t bins = 10;
    unsigned jobs = 0;
};

SyntheticTask::Kind task_kind(const std::string& name) {
    if (name == "spiral") return SyntheticTask::Kind::Spiral;
    if (name == "gaussian") return SyntheticTask::Kind::GaussianMixture;
    throw ValidationError("unknown task: " + name + " (expected spiral|gaussian)");
}

void print_metric_table(std::ostream& out, const std::string& split,
                        const MetricReport& uncal, const MetricReport& ts,
                        const MetricReport& lates) {
    auto fmt = [](std::optional<double> v) {
        if (!v) return std::string("   n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%9.4f", *v);
        return std::string(buf);
    };
    auto gain = [](double base, double improved, bool higher) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+8.1f%%", relative_gain(base, improved, higher));
        return std::string(buf);
    };
    out << "[" << split << "]\n";
    out << "  metric      uncal        TS     LATES   gain(LATES vs TS)\n";
    out << "  ece    " << fmt(uncal.ece) << " " << fmt(ts.ece) << " " << fmt(lates.ece) << "   "
        << gain(ts.ece, lates.ece, false) << "\n";
    out << "  nll    " << fmt(uncal.nll) << " " << fmt(ts.nll) << " " << fmt(lates.nll) << "   "
        << gain(ts.nll, lates.nll, false) << "\n";
    out << "  brier  " << fmt(uncal.brier) << " " << fmt(ts.brier) << " " << fmt(lates.brier)
        << "   " << gain(ts.brier, lates.brier, false) << "\n";
    out << "  acc    " << fmt(uncal.acc) << " " << fmt(ts.acc) << " " << fmt(lates.acc) << "   "
        << gain(ts.acc, lates.acc, true) << "\n";
    out << "  auc    " << fmt(uncal.auc) << " " << fmt(ts.auc) << " " << fmt(lates.auc);
    if (ts.auc && lates.auc) out << "   " << gain(*ts.auc, *lates.auc, true);
    out << "\n";
}

int run_demo(const DemoOptions& opt) {
    const fs::path dir = opt.out_dir;
    fs::create_directories(dir);

    SyntheticTask task;
    task.kind = task_kind(opt.task);
    task.n = opt.n;
    task.k = opt.k;
    task.noise = opt.noise;
    task.seed = opt.seed;
    const SyntheticData data = generate_task(task);

    // deterministic train/holdout index split on the raw features
    Rng split_rng(mix_seed(opt.seed, 0x44454D4Full /* "DEMO" */));
    std::vector<std::size_t> order = shuffled_indices(opt.n, split_rng);
    const std::size_t n_holdout =
        static_cast<std::size_t>(std::llround(opt.holdout_fraction * opt.n));
    if (n_holdout == 0 || n_holdout >= opt.n)
        throw ValidationError("demo: holdout fraction produces an empty split");
    const std::size_t n_train = opt.n - n_holdout;

    Eigen::MatrixXd train_x(n_train, 2), holdout_x(n_holdout, 2);
    std::vector<std::uint32_t> train_y(n_train), holdout_y(n_holdout);
    for (std::size_t i = 0; i < n_train; ++i) {
        train_x.row(static_cast<Eigen::Index>(i)) = data.features.row(
            static_cast<Eigen::Index>(order[i]));
        train_y[i] = data.labels[order[i]];
    }
    for (std::size_t i = 0; i < n_holdout; ++i) {
        holdout_x.row(static_cast<Eigen::Index>(i)) =
            data.features.row(static_cast<Eigen::Index>(order[n_train + i]));
        holdout_y[i] = data.labels[order[n_train + i]];
    }

    // fresh test sample from the same task distribution
    SyntheticTask test_task = task;
    test_task.n = std::max<std::uint32_t>(opt.k, opt.n / 4);
    test_task.seed = mix_seed(opt.seed, 0x54455354ull /* "TEST" */);
    const SyntheticData test = generate_task(test_task);

    std::cerr << "training reference network on " << n_train << " examples..." << std::endl;
    RefNetSpec spec;
    spec.layer_widths.push_back(2);
    for (std::uint32_t w : opt.hidden) spec.layer_widths.push_back(w);
    spec.layer_widths.push_back(opt.k);
    spec.epochs = opt.refnet_epochs;
    spec.seed = opt.seed;
    const RefNetTrainResult trained = train_refnet(spec, train_x, train_y);
    std::cerr << "  train accuracy " << trained.train_accuracy << std::endl;

    const ActivationDump train_dump = export_activations(trained.net, train_x, train_y, opt.k);
    const ActivationDump holdout_dump =
        export_activations(trained.net, holdout_x, holdout_y, opt.k);
    const ActivationDump test_dump =
        export_activations(trained.net, test.features, test.labels, opt.k);

    const std::map<std::string, std::string> provenance = {
        {"model", "refnet " + opt.task}, {"seed", std::to_string(opt.seed)}};
    write_dump(train_dump, dir / "train.lates");
    write_manifest(dir / "train.lates", provenance);
    write_dump(holdout_dump, dir / "holdout.lates");
    write_manifest(dir / "holdout.lates", provenance);
    write_dump(test_dump, dir / "test.lates");
    write_manifest(dir / "test.lates", provenance);

    std::cerr << "training probes..." << std::endl;
    ProbeTrainConfig probe_config;
    probe_config.epochs = opt.probe_epochs;
    probe_config.seed = opt.seed;
    const auto probe_results = train_probes_for_dump(train_dump, probe_config, opt.jobs);
    std::vector<LinearProbe> probes;
    for (const auto& r : probe_results) {
        if (r.single_class_warning)
            std::cerr << "  warning: layer " << r.probe.layer_index
                      << " saw a single class during training" << std::endl;
        probes.push_back(r.probe);
    }
    write_probe_bundle(dir / "probes.lprb", probes);

    std::cerr << "fitting calibrators on " << n_holdout << " holdout examples..." << std::endl;
    const LogitStack holdout_stack = build_logit_stack(probes, holdout_dump);
    AggTrainConfig agg;
    agg.loss_kind = loss_kind_from_name(opt.loss);
    agg.epochs = opt.agg_epochs;
    agg.learning_rate = opt.agg_lr;
    agg.batch_size = opt.agg_batch;
    agg.seed = opt.seed;
    const AggregatorWeights fitted = fit_lates(holdout_stack, holdout_y, agg);

    const Eigen::MatrixXd holdout_logits =
        holdout_dump.layer_as_matrix(holdout_dump.final_logits_index());
    const TemperatureModel ts = fit_temperature(holdout_logits, holdout_y, agg.loss_kind);

    Calibrator lates_cal;
    lates_cal.kind = Calibrator::Kind::Lates;
    lates_cal.beta = fitted.beta;
    lates_cal.loss = agg.loss_kind;
    lates_cal.d = static_cast<std::uint32_t>(fitted.beta.size());
    lates_cal.k = opt.k;
    write_text_atomic(dir / "lates.json", calibrator_to_json(lates_cal));

    Calibrator ts_cal;
    ts_cal.kind = Calibrator::Kind::Temperature;
    ts_cal.tau = ts.tau;
    ts_cal.loss = agg.loss_kind;
    ts_cal.d = 1;
    ts_cal.k = opt.k;
    write_text_atomic(dir / "temperature.json", calibrator_to_json(ts_cal));

    const Eigen::VectorXd contributions = layer_contributions(fitted.beta);
    std::cout << "temperature tau = " << ts.tau << "\n";
    std::cout << "lates beta = [" << fitted.beta.transpose() << "]\n";
    std::cout << "layer contributions = [" << contributions.transpose() << "]\n";

    const std::vector<double> probe_acc = probe_accuracy_curve(probes, holdout_dump);
    std::cout << "probe holdout accuracy by layer = [";
    for (std::size_t i = 0; i < probe_acc.size(); ++i)
        std::cout << (i ? ", " : "") << probe_acc[i];
    std::cout << "]\n";

    for (const auto& [name, dump] :
         std::vector<std::pair<std::string, const ActivationDump*>>{{"holdout", &holdout_dump},
                                                                    {"test", &test_dump}}) {
        const Eigen::MatrixXd logits = dump->layer_as_matrix(dump->final_logits_index());
        const LogitStack stack = build_logit_stack(probes, *dump);
        const MetricReport uncal = evaluate_report(softmax_rows(logits), dump->labels, opt.bins);
        const MetricReport ts_report =
            evaluate_report(softmax_rows(logits / ts.tau), dump->labels, opt.bins);
        const MetricReport lates_report =
            evaluate_report(lates_predict(stack, fitted), dump->labels, opt.bins);
        write_text_atomic(dir / ("report_uncalibrated_" + name + ".json"),
                          metric_report_to_json(uncal));
        write_text_atomic(dir / ("report_temperature_" + name + ".json"),
                          metric_report_to_json(ts_report));
        write_text_atomic(dir / ("report_lates_" + name + ".json"),
                          metric_report_to_json(lates_report));
        print_metric_table(std::cout, name, uncal, ts_report, lates_report);
    }
    std::cout << "artifacts written to " << dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"layer-stack temperature scaling toolkit"};
    app.require_subcommand(1);

    // train-probes ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train-probes", "train one linear probe per dump layer");
    std::string tp_dump, tp_out;
    ProbeTrainConfig tp_config;
    tp_config.seed = default_seed(0);
    unsigned tp_jobs = 0;
    train_cmd->add_option("--dump", tp_dump, "training-split activation dump")->required();
    train_cmd->add_option("--out", tp_out, "output probe bundle path")->required();
    train_cmd->add_option("--epochs", tp_config.epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--lr", tp_config.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", tp_config.momentum, "SGD momentum")->capture_default_str();
    train_cmd->add_option("--batch", tp_config.batch_size, "mini-batch size")->capture_default_str();
    train_cmd->add_option("--decay-every", tp_config.decay_every, "epochs between lr decays")
        ->capture_default_str();
    train_cmd->add_option("--decay-factor", tp_config.decay_factor, "lr decay factor")
        ->capture_default_str();
    train_cmd->add_option("--pool-dim", tp_config.pool_dim,
                          "average-pool width (0 = min(feature_dim, 512))")
        ->capture_default_str();
    train_cmd->add_option("--weight-decay", tp_config.weight_decay, "l2 on probe weights")
        ->capture_default_str();
    train_cmd->add_option("--seed", tp_config.seed, "RNG seed (LATES_SEED overrides the default)")
        ->capture_default_str();
    train_cmd->add_option("--jobs", tp_jobs, "worker threads (0 = hardware)")->capture_default_str();

    // fit --------------------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "fit a calibrator on a holdout dump");
    std::string fit_method = "lates", fit_loss = "nll", fit_holdout, fit_probes, fit_out;
    AggTrainConfig fit_config;
    fit_config.seed = default_seed(0);
    double fit_lambda = 0.0;
    fit_cmd->add_option("--method", fit_method, "lates or temperature")
        ->check(CLI::IsMember({"lates", "temperature"}))
        ->capture_default_str();
    fit_cmd->add_option("--loss", fit_loss, "loss to optimize")
        ->check(CLI::IsMember({"nll", "square"}))
        ->capture_default_str();
    fit_cmd->add_option("--holdout", fit_holdout, "holdout activation dump")->required();
    fit_cmd->add_option("--probes", fit_probes, "probe bundle (required for lates)");
    fit_cmd->add_option("--out", fit_out, "output calibrator JSON")->required();
    fit_cmd->add_option("--lr", fit_config.learning_rate, "aggregator learning rate")
        ->capture_default_str();
    fit_cmd->add_option("--epochs", fit_config.epochs, "aggregator epochs")->capture_default_str();
    fit_cmd->add_option("--batch", fit_config.batch_size, "batch size (0 = full holdout)")
        ->capture_default_str();
    fit_cmd->add_option("--momentum", fit_config.momentum, "aggregator momentum")
        ->capture_default_str();
    fit_cmd->add_option("--lambda", fit_lambda, "ridge coefficient on beta")->capture_default_str();
    fit_cmd->add_option("--patience", fit_config.patience, "early-stopping patience (0 = off)")
        ->capture_default_str();
    fit_cmd->add_option("--seed", fit_config.seed, "RNG seed (LATES_SEED overrides the default)")
        ->capture_default_str();

    // evaluate ----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "compute the metric report on a dump");
    std::string ev_probs, ev_calibrator, ev_probes, ev_dump, ev_out, ev_bins_csv;
    std::size_t ev_bins = 10;
    bool ev_auc_ovr = false;
    eval_cmd->add_option("--probs", ev_probs, "CSV of probabilities, one row per example");
    eval_cmd->add_option("--calibrator", ev_calibrator, "calibrator JSON to apply");
    eval_cmd->add_option("--probes", ev_probes, "probe bundle (for lates calibrators)");
    eval_cmd->add_option("--dump", ev_dump, "activation dump with labels")->required();
    eval_cmd->add_option("--bins", ev_bins, "ECE bin count")->capture_default_str();
    eval_cmd->add_option("--out", ev_out, "output report JSON")->required();
    eval_cmd->add_option("--bins-csv", ev_bins_csv, "also write the reliability bins as CSV");
    eval_cmd->add_flag("--auc-ovr", ev_auc_ovr,
                       "also print macro one-vs-rest AUROC (not part of the report schema)");

    // compare -------------------------------------------------------------------
    auto* cmp_cmd = app.add_subcommand("compare", "statistical comparison of two report files");
    std::string cmp_a, cmp_b, cmp_test = "wilcoxon", cmp_metric = "all", cmp_sided = "two",
                cmp_out;
    cmp_cmd->add_option("--a", cmp_a, "JSON with report(s) for condition A")->required();
    cmp_cmd->add_option("--b", cmp_b, "JSON with report(s) for condition B")->required();
    cmp_cmd->add_option("--test", cmp_test, "wilcoxon or anova")
        ->check(CLI::IsMember({"wilcoxon", "anova"}))
        ->capture_default_str();
    cmp_cmd->add_option("--metric", cmp_metric, "ece|nll|brier|acc|auc|all")
        ->check(CLI::IsMember({"ece", "nll", "brier", "acc", "auc", "all"}))
        ->capture_default_str();
    cmp_cmd->add_option("--sided", cmp_sided, "wilcoxon sidedness")
        ->check(CLI::IsMember({"two", "one"}))
        ->capture_default_str();
    cmp_cmd->add_option("--out", cmp_out, "also write the results as JSON");

    // theory ----------------------------------------------------------------------
    auto* theory_cmd = app.add_subcommand("theory", "dominance experiment plus the oracle bound");
    std::uint32_t th_seeds = 40, th_n = 1000;
    std::string th_task = "default";
    DominanceConfig th_config;
    th_config.master_seed = default_seed(0);
    std::string th_out;
    theory_cmd->add_option("--seeds", th_seeds, "number of seeded repetitions")
        ->capture_default_str();
    theory_cmd->add_option("--n", th_n, "holdout size per seed")->capture_default_str();
    theory_cmd->add_option("--task", th_task, "default|binary|noise|informative|single")
        ->capture_default_str();
    theory_cmd->add_option("--tolerance", th_config.tolerance, "dominance comparison tolerance")
        ->capture_default_str();
    theory_cmd->add_option("--epochs", th_config.agg.epochs, "aggregator epochs per seed")
        ->capture_default_str();
    theory_cmd->add_option("--lr", th_config.agg.learning_rate, "aggregator learning rate")
        ->capture_default_str();
    theory_cmd->add_option("--ridge-c", th_config.ridge_c, "lambda = c / sqrt(n)")
        ->capture_default_str();
    theory_cmd->add_option("--seed", th_config.master_seed,
                           "master seed (LATES_SEED overrides the default)")
        ->capture_default_str();
    theory_cmd->add_option("--jobs", th_config.jobs, "worker threads (0 = hardware)")
        ->capture_default_str();
    theory_cmd->add_option("--out", th_out, "also write the results as JSON");

    // demo -----------------------------------------------------------------------
    auto* demo_cmd = app.add_subcommand("demo", "full pipeline on a synthetic task");
    DemoOptions demo;
    demo.seed = default_seed(7);
    demo_cmd->add_option("--task", demo.task, "spiral or gaussian")->capture_default_str();
    demo_cmd->add_option("--n", demo.n, "examples")->capture_default_str();
    demo_cmd->add_option("--k", demo.k, "classes")->capture_default_str();
    demo_cmd->add_option("--noise", demo.noise, "task noise level")->capture_default_str();
    demo_cmd->add_option("--seed", demo.seed, "pipeline seed (LATES_SEED overrides the default)")
        ->capture_default_str();
    demo_cmd->add_option("--out-dir", demo.out_dir, "output directory")->capture_default_str();
    demo_cmd->add_option("--holdout-fraction", demo.holdout_fraction, "calibration fraction")
        ->capture_default_str();
    demo_cmd->add_option("--hidden", demo.hidden, "hidden layer widths")->capture_default_str();
    demo_cmd->add_option("--refnet-epochs", demo.refnet_epochs, "reference net epochs")
        ->capture_default_str();
    demo_cmd->add_option("--probe-epochs", demo.probe_epochs, "probe epochs")
        ->capture_default_str();
    demo_cmd->add_option("--agg-epochs", demo.agg_epochs, "aggregator epochs")
        ->capture_default_str();
    demo_cmd->add_option("--agg-lr", demo.agg_lr, "aggregator learning rate")
        ->capture_default_str();
    demo_cmd->add_option("--agg-batch", demo.agg_batch, "aggregator batch (0 = full holdout)")
        ->capture_default_str();
    demo_cmd->add_option("--loss", demo.loss, "aggregator loss")
        ->check(CLI::IsMember({"nll", "square"}))
        ->capture_default_str();
    demo_cmd->add_option("--bins", demo.bins, "ECE bin count")->capture_default_str();
    demo_cmd->add_option("--jobs", demo.jobs, "worker threads (0 = hardware)")
        ->capture_default_str();

    // inspect -------------------------------------------------------------------
    auto* inspect_cmd = app.add_subcommand("inspect", "print a dump header");
    std::string ins_path;
    inspect_cmd->add_option("dump", ins_path, "activation dump")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            const ActivationDump dump = read_dump(tp_dump);
            const auto results = train_probes_for_dump(dump, tp_config, tp_jobs);
            std::vector<LinearProbe> probes;
            for (const auto& r : results) {
                if (r.single_class_warning)
                    std::cerr << "warning: layer " << r.probe.layer_index
                              << " saw a single class during training" << std::endl;
                if (!r.epoch_loss.empty())
                    std::cout << "layer " << r.probe.layer_index << ": final training loss "
                              << r.epoch_loss.back() << "\n";
                probes.push_back(r.probe);
            }
            write_probe_bundle(tp_out, probes);
            std::cout << "wrote " << probes.size() << " probes to " << tp_out << "\n";
        } else if (fit_cmd->parsed()) {
            const ActivationDump holdout = read_dump(fit_holdout);
            const LossKind loss = loss_kind_from_name(fit_loss);
            Calibrator calibrator;
            calibrator.loss = loss;
            calibrator.k = holdout.n_classes;
            if (fit_method == "lates") {
                if (fit_probes.empty())
                    throw ValidationError("fit --method lates requires --probes <bundle>");
                const std::vector<LinearProbe> probes = read_probe_bundle(fit_probes);
                const LogitStack stack = build_logit_stack(probes, holdout);
                fit_config.loss_kind = loss;
                fit_config.ridge_lambda = fit_lambda;
                const AggregatorWeights fitted = fit_lates(stack, holdout.labels, fit_config);
                calibrator.kind = Calibrator::Kind::Lates;
                calibrator.beta = fitted.beta;
                calibrator.d = static_cast<std::uint32_t>(fitted.beta.size());
                std::cout << "holdout " << fit_loss << ": " << fitted.train_trace.front()
                          << " -> "
                          << loss_value(lates_predict(stack, fitted), holdout.labels, loss)
                          << "\n";
            } else {
                const Eigen::MatrixXd logits =
                    holdout.layer_as_matrix(holdout.final_logits_index());
                const TemperatureModel ts = fit_temperature(logits, holdout.labels, loss);
                calibrator.kind = Calibrator::Kind::Temperature;
                calibrator.tau = ts.tau;
                calibrator.d = 1;
                std::cout << "tau = " << ts.tau << "\n";
            }
            write_text_atomic(fit_out, calibrator_to_json(calibrator));
            std::cout << "wrote calibrator to " << fit_out << "\n";
        } else if (eval_cmd->parsed()) {
            if (ev_probs.empty() == ev_calibrator.empty())
                throw ValidationError("evaluate needs exactly one of --probs or --calibrator");
            const ActivationDump dump = read_dump(ev_dump);
            Eigen::MatrixXd probs;
            if (!ev_probs.empty()) {
                probs = read_probs_csv(ev_probs, dump.n_examples);
                if (probs.cols() != static_cast<Eigen::Index>(dump.n_classes))
                    throw ValidationError("probs CSV has wrong class count");
            } else {
                const Calibrator calibrator = calibrator_from_json(read_text(ev_calibrator));
                probs = calibrated_probs(calibrator, dump, ev_probes);
            }
            const MetricReport report = evaluate_report(probs, dump.labels, ev_bins);
            write_text_atomic(ev_out, metric_report_to_json(report));
            if (!ev_bins_csv.empty()) write_text_atomic(ev_bins_csv, bins_to_csv(report.bins));
            std::cout << "ece " << report.ece << "  nll " << report.nll << "  brier "
                      << report.brier << "  acc " << report.acc << "  auc ";
            if (report.auc)
                std::cout << *report.auc;
            else
                std::cout << "n/a";
            std::cout << "\n";
            if (ev_auc_ovr) {
                const auto ovr = auroc_one_vs_rest(probs, dump.labels);
                std::cout << "auc (one-vs-rest macro) ";
                if (ovr)
                    std::cout << *ovr;
                else
                    std::cout << "n/a";
                std::cout << "\n";
            }
            std::cout << "wrote report to " << ev_out << "\n";
        } else if (cmp_cmd->parsed()) {
            const std::vector<MetricReport> a = metric_reports_from_json(read_text(cmp_a));
            const std::vector<MetricReport> b = metric_reports_from_json(read_text(cmp_b));
            if (a.empty() || b.empty()) throw ValidationError("compare: empty report file");
            const std::vector<std::string> metrics =
                cmp_metric == "all" ? std::vector<std::string>{"ece", "nll", "brier", "acc", "auc"}
                                    : std::vector<std::string>{cmp_metric};

            nlohmann::json out_json = nlohmann::json::array();
            std::vector<double> p_values;
            std::vector<std::string> rows;
            for (const std::string& metric : metrics) {
                std::vector<double> va, vb;
                for (const MetricReport& r : a) va.push_back(metric_from_report(r, metric));
                for (const MetricReport& r : b) vb.push_back(metric_from_report(r, metric));
                nlohmann::json row;
                row["metric"] = metric;
                row["mean_a"] = pairwise_mean({va.data(), va.size()});
                row["mean_b"] = pairwise_mean({vb.data(), vb.size()});
                char line[160];
                if (cmp_test == "wilcoxon") {
                    if (va.size() != vb.size())
                        throw ValidationError("wilcoxon needs paired reports of equal length");
                    PairedSample sample;
                    for (std::size_t i = 0; i < va.size(); ++i)
                        sample.deltas.push_back(va[i] - vb[i]);
                    const WilcoxonResult r = wilcoxon_signed_rank(
                        sample,
                        cmp_sided == "two" ? Sidedness::TwoSided : Sidedness::OneSided);
                    row["test"] = "wilcoxon";
                    row["w"] = r.w_statistic;
                    row["n_effective"] = r.n_effective;
                    row["p"] = r.p_value;
                    row["method"] =
                        r.method == WilcoxonResult::Method::Exact ? "exact" : "normal_approx";
                    p_values.push_back(r.p_value);
                    std::snprintf(line, sizeof line, "  %-6s W=%-8.1f n=%-4zu p=%-12.4g (%s)",
                                  metric.c_str(), r.w_statistic, r.n_effective, r.p_value,
                                  r.method == WilcoxonResult::Method::Exact ? "exact" : "approx");
                } else {
                    const AnovaResult r = anova_oneway({va, vb});
                    row["test"] = "anova";
                    row["f"] = r.f_statistic;
                    row["df_between"] = r.df_between;
                    row["df_within"] = r.df_within;
                    row["p"] = r.p_value;
                    p_values.push_back(r.p_value);
                    std::snprintf(line, sizeof line, "  %-6s F(%zu,%zu)=%-10.4g p=%-12.4g",
                                  metric.c_str(), r.df_between, r.df_within, r.f_statistic,
                                  r.p_value);
                }
                rows.push_back(line);
                out_json.push_back(row);
            }
            const std::vector<double> adjusted = holm_correction(p_values);
            std::cout << "test = " << cmp_test << ", A = " << cmp_a << ", B = " << cmp_b << "\n";
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::cout << rows[i];
                if (metrics.size() > 1) {
                    char buf[48];
                    std::snprintf(buf, sizeof buf, "  holm=%-12.4g", adjusted[i]);
                    std::cout << buf;
                }
                std::cout << "\n";
                out_json[i]["p_holm"] = adjusted[i];
            }
            if (!cmp_out.empty()) write_text_atomic(cmp_out, out_json.dump(2) + "\n");
        } else if (theory_cmd->parsed()) {
            const StackTaskSpec task = StackTaskSpec::preset(th_task);
            const DominanceResult r = dominance_experiment(th_seeds, th_n, task, th_config);
            std::cout << "task=" << th_task << " seeds=" << th_seeds << " n=" << th_n << "\n";
            std::cout << "dominance fraction (lates <= ts + " << th_config.tolerance
                      << ") = " << r.dominance_fraction << "\n";
            std::cout << "mean loss gap (ts - lates) = " << r.mean_gap << "\n";
            std::cout << "ridge lambda = " << r.ridge_lambda << "\n";
            std::cout << "oracle bound at (lambda=" << r.ridge_lambda
                      << ", rho=" << th_config.bound_rho << ", n=" << th_n
                      << ", ||beta*||^2=" << r.bound_beta_norm_sq
                      << ", eps=" << th_config.bound_epsilon << ") = " << r.oracle_bound << "\n";
            if (!th_out.empty()) {
                nlohmann::json j;
                j["task"] = th_task;
                j["seeds"] = th_seeds;
                j["n"] = th_n;
                j["dominance_fraction"] = r.dominance_fraction;
                j["mean_gap"] = r.mean_gap;
                j["ridge_lambda"] = r.ridge_lambda;
                j["oracle_bound"] = r.oracle_bound;
                j["per_seed_gap"] = r.per_seed_gap;
                write_text_atomic(th_out, j.dump(2) + "\n");
            }
        } else if (demo_cmd->parsed()) {
            return run_demo(demo);
        } else if (inspect_cmd->parsed()) {
            const ActivationDump dump = read_dump(ins_path);
            std::cout << "dump " << ins_path << "\n";
            std::cout << "  version 1, checksum ok\n";
            std::cout << "  n_examples " << dump.n_examples << ", n_classes " << dump.n_classes
                      << ", n_layers " << dump.layers.size() << "\n";
            for (const LayerBlock& b : dump.layers)
                std::cout << "  layer " << b.layer_index << ": dim " << b.feature_dim
                          << (b.is_final_logits ? " (final logits)" : "") << "\n";
            std::vector<std::size_t> hist(dump.n_classes, 0);
            for (std::uint32_t y : dump.labels) ++hist[y];
            std::cout << "  label histogram [";
            for (std::size_t c = 0; c < hist.size(); ++c)
                std::cout << (c ? ", " : "") << hist[c];
            std::cout << "]\n";
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
