#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lates {

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

/// The five headline metrics for one model on one split, plus the reliability
/// bins the ECE was computed from. `auc` is absent when correctness detection
/// is undefined (all predictions correct, or all incorrect).
struct MetricReport {
    double ece = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double acc = 0.0;
    std::optional<double> auc;
    std::vector<ReliabilityBin> bins;
};

struct EceResult {
    double ece = 0.0;
    std::vector<ReliabilityBin> bins;
};

/// Confidence-based ECE with m equal-width bins over the max probability.
/// Empty bins contribute zero; argmax ties break toward the lowest class.
EceResult ece(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels,
              std::size_t m_bins = 10);

/// Mean of sum_y p(y|x)^2 - 2 p(label|x); can be negative.
double brier(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels);

double nll(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels);

double accuracy(const Eigen::MatrixXd& probs, const std::vector<std::uint32_t>& labels);

/// Correctness-detection AUROC: probability that a correctly classified
/// example gets higher confidence than a misclassified one, computed from the
/// rank statistic with half credit for ties. Absent when one of the groups is
/// empty.
std::optional<double> auroc(const Eigen::MatrixXd& probs,
                            const std::vector<std::uint32_t>& labels);

/// Macro-averaged one-vs-rest AUROC over classes that have both positives and
/// negatives. A different convention from `auroc`, offered behind a CLI flag.
std::optional<double> auroc_one_vs_rest(const Eigen::MatrixXd& probs,
                                        const std::vector<std::uint32_t>& labels);

/// Percentage improvement of `improved` over `baseline`; positive means
/// better. Negative values indicate a drop.
double relative_gain(double baseline, double improved, bool higher_is_better);

MetricReport evaluate_report(const Eigen::MatrixXd& probs,
                             const std::vector<std::uint32_t>& labels,
                             std::size_t m_bins = 10);

std::string metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const std::string& json_text);

std::string metric_reports_to_json(const std::vector<MetricReport>& reports);
/// Accepts either a single report object or an array of them.
std::vector<MetricReport> metric_reports_from_json(const std::string& json_text);

/// "lower,upper,count,accuracy,mean_confidence" rows for plotting.
std::string bins_to_csv(const std::vector<ReliabilityBin>& bins);

} // namespace lates
