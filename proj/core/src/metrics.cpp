#include "lates/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"
#include "lates/stack.hpp"

namespace lates {

namespace {

void check_probs(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels) {
    if (probs.rows() == 0) throw ValidationError("metrics: empty input");
    if (static_cast<std::size_t>(probs.rows()) != labels.size())
        throw ValidationError("metrics: label count mismatch");
    for (std::uint32_t y : labels)
        if (y >= static_cast<std::uint32_t>(probs.cols()))
            throw ValidationError("metrics: label out of range");
}

// Lowest class index among maximal entries.
Eigen::Index argmax_row(const Eigen::MatrixXd& probs, Eigen::Index i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
        if (probs(i, j) > probs(i, best)) best = j;
    return best;
}

} // namespace

EceResult ece(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels,
              std::size_t m_bins) {
    check_probs(probs, labels);
    if (m_bins == 0) throw ValidationError("ece: bin count must be >= 1");

    const Eigen::Index n = probs.rows();
    std::vector<std::size_t> count(m_bins, 0);
    std::vector<double> conf_sum(m_bins, 0.0);
    std::vector<std::size_t> correct(m_bins, 0);

    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index pred = argmax_row(probs, i);
        const double conf = probs(i, pred);
        std::size_t bin = static_cast<std::size_t>(conf * static_cast<double>(m_bins));
        if (bin >= m_bins) bin = m_bins - 1; // conf == 1.0 lands in the closed top bin
        ++count[bin];
        conf_sum[bin] += conf;
        if (static_cast<std::uint32_t>(pred) == labels[static_cast<std::size_t>(i)])
            ++correct[bin];
    }

    EceResult result;
    result.bins.resize(m_bins);
    double total = 0.0;
    for (std::size_t b = 0; b < m_bins; ++b) {
        ReliabilityBin& rb = result.bins[b];
        rb.lower = static_cast<double>(b) / static_cast<double>(m_bins);
        rb.upper = static_cast<double>(b + 1) / static_cast<double>(m_bins);
        rb.count = count[b];
        if (count[b] > 0) {
            rb.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
            rb.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
            total += static_cast<double>(count[b]) / static_cast<double>(n) *
                     std::abs(rb.accuracy - rb.mean_confidence);
        }
    }
    result.ece = total;
    return result;
}

double brier(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels) {
    check_probs(probs, labels);
    const Eigen::Index n = probs.rows();
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum_sq = 0.0;
        for (Eigen::Index j = 0; j < probs.cols(); ++j) sum_sq += probs(i, j) * probs(i, j);
        scores[static_cast<std::size_t>(i)] =
            sum_sq - 2.0 * probs(i, labels[static_cast<std::size_t>(i)]);
    }
    return pairwise_mean(scores);
}

double nll(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels) {
    return loss_value(probs, labels, LossKind::Nll);
}

double accuracy(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels) {
    check_probs(probs, labels);
    const Eigen::Index n = probs.rows();
    std::vector<double> hits(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        hits[static_cast<std::size_t>(i)] =
            (static_cast<std::uint32_t>(argmax_row(probs, i)) ==
             labels[static_cast<std::size_t>(i)])
                ? 1.0
                : 0.0;
    return pairwise_mean(hits);
}

namespace {

// Mann-Whitney AUROC of score-vs-binary-group with mid-ranks for ties.
std::optional<double> rank_auroc(const std::vector<double>& scores,
                                 const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = (static_cast<double>(i + j) / 2.0) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            if (positive[order[t]]) positive_rank_sum += mid_rank;
        i = j + 1;
    }
    const double u = positive_rank_sum -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

} // namespace

std::optional<double> auroc(const Eigen::MatrixXd& probs,
                            const std::vector<std::uint32_t>& labels) {
    check_probs(probs, labels);
    const Eigen::Index n = probs.rows();
    if (n < 2) return std::nullopt;
    std::vector<double> confidence(static_cast<std::size_t>(n));
    std::vector<bool> correct(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index pred = argmax_row(probs, i);
        confidence[static_cast<std::size_t>(i)] = probs(i, pred);
        correct[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(pred) == labels[static_cast<std::size_t>(i)];
    }
    return rank_auroc(confidence, correct);
}

std::optional<double> auroc_one_vs_rest(const Eigen::MatrixXd& probs,
                                        const std::vector<std::uint32_t>& labels) {
    check_probs(probs, labels);
    const Eigen::Index n = probs.rows();
    std::vector<double> class_aucs;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::vector<bool> positive(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] = probs(i, c);
            positive[static_cast<std::size_t>(i)] =
                labels[static_cast<std::size_t>(i)] == static_cast<std::uint32_t>(c);
        }
        if (auto auc = rank_auroc(scores, positive)) class_aucs.push_back(*auc);
    }
    if (class_aucs.empty()) return std::nullopt;
    return pairwise_mean(class_aucs);
}

double relative_gain(double baseline, double improved, bool higher_is_better) {
    if (baseline == 0.0) throw ValidationError("relative_gain: baseline must be nonzero");
    const double gain = 100.0 * (baseline - improved) / std::abs(baseline);
    return higher_is_better ? -gain : gain;
}

MetricReport evaluate_report(const Eigen::MatrixXd& probs,
                             const std::vector<std::uint32_t>& labels, std::size_t m_bins) {
    MetricReport report;
    EceResult e = ece(probs, labels, m_bins);
    report.ece = e.ece;
    report.bins = std::move(e.bins);
    report.nll = nll(probs, labels);
    report.brier = brier(probs, labels);
    report.acc = accuracy(probs, labels);
    report.auc = auroc(probs, labels);
    return report;
}

namespace {

nlohmann::json report_to_json_obj(const MetricReport& r) {
    nlohmann::json j;
    j["ece"] = r.ece;
    j["nll"] = r.nll;
    j["brier"] = r.brier;
    j["acc"] = r.acc;
    if (r.auc)
        j["auc"] = *r.auc;
    else
        j["auc"] = nullptr;
    j["bins"] = nlohmann::json::array();
    for (const ReliabilityBin& b : r.bins) {
        j["bins"].push_back({{"lower", b.lower},
                             {"upper", b.upper},
                             {"count", b.count},
                             {"accuracy", b.accuracy},
                             {"mean_confidence", b.mean_confidence}});
    }
    return j;
}

MetricReport report_from_json_obj(const nlohmann::json& j) {
    MetricReport r;
    r.ece = j.at("ece").get<double>();
    r.nll = j.at("nll").get<double>();
    r.brier = j.at("brier").get<double>();
    r.acc = j.at("acc").get<double>();
    if (j.contains("auc") && !j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    if (j.contains("bins")) {
        for (const auto& bj : j.at("bins")) {
            ReliabilityBin b;
            b.lower = bj.at("lower").get<double>();
            b.upper = bj.at("upper").get<double>();
            b.count = bj.at("count").get<std::size_t>();
            b.accuracy = bj.at("accuracy").get<double>();
            b.mean_confidence = bj.at("mean_confidence").get<double>();
            r.bins.push_back(b);
        }
    }
    return r;
}

} // namespace

std::string metric_report_to_json(const MetricReport& report) {
    return report_to_json_obj(report).dump(2) + "\n";
}

MetricReport metric_report_from_json(const std::string& json_text) {
    try {
        return report_from_json_obj(nlohmann::json::parse(json_text));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("report JSON error: ") + e.what());
    }
}

std::string metric_reports_to_json(const std::vector<MetricReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const MetricReport& r : reports) arr.push_back(report_to_json_obj(r));
    return arr.dump(2) + "\n";
}

std::vector<MetricReport> metric_reports_from_json(const std::string& json_text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(json_text);
        std::vector<MetricReport> reports;
        if (j.is_array()) {
            for (const auto& obj : j) reports.push_back(report_from_json_obj(obj));
        } else {
            reports.push_back(report_from_json_obj(j));
        }
        return reports;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("report JSON error: ") + e.what());
    }
}

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins) {
    std::ostringstream out;
    out << "lower,upper,count,accuracy,mean_confidence\n";
    out.precision(17);
    for (const ReliabilityBin& b : bins)
        out << b.lower << ',' << b.upper << ',' << b.count << ',' << b.accuracy << ','
            << b.mean_confidence << '\n';
    return out.str();
}

} // namespace lates
