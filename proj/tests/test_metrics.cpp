#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lates/errors.hpp"
#include "lates/metrics.hpp"
#include "lates/numeric.hpp"
#include "lates/stack.hpp"

using namespace lates;

namespace {

// Independent brute-force implementations used as oracles. They share no code
// with the library path: plain loops, pair enumeration instead of ranks.
namespace oracle {

std::size_t argmax_lowest(const Eigen::MatrixXd& p, Eigen::Index i) {
    std::size_t best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j)
        if (p(i, j) > p(i, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
    return best;
}

double ece(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y, std::size_t m) {
    const std::size_t n = static_cast<std::size_t>(p.rows());
    double total = 0.0;
    for (std::size_t b = 0; b < m; ++b) {
        const double lo = static_cast<double>(b) / m;
        const double hi = static_cast<double>(b + 1) / m;
        double conf_sum = 0.0;
        std::size_t correct = 0, count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pred = argmax_lowest(p, static_cast<Eigen::Index>(i));
            const double conf = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pred));
            const bool inside = b + 1 == m ? (conf >= lo && conf <= hi) : (conf >= lo && conf < hi);
            if (!inside) continue;
            ++count;
            conf_sum += conf;
            if (pred == y[i]) ++correct;
        }
        if (count > 0)
            total += (static_cast<double>(count) / n) *
                     std::abs(static_cast<double>(correct) / count - conf_sum / count);
    }
    return total;
}

double brier(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) s += p(i, j) * p(i, j);
        total += s - 2.0 * p(i, y[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(p.rows());
}

double nll(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        total += -std::log(std::max(p(i, y[static_cast<std::size_t>(i)]), 1e-12));
    return total / static_cast<double>(p.rows());
}

double accuracy(const Eigen::MatrixXd& p, const std::vector<std::uint32_t>& y) {
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (argmax_lowest(p, i) == y[static_cast<std::size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(p.rows());
}

// exhaustive pairwise comparison with half credit for ties
double auroc_pairs(const std::vector<double>& conf, const std::vector<bool>& correct) {
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
    return wins / static_cast<double>(pairs);
}

} // namespace oracle

Eigen::MatrixXd random_probs(Rng& rng, std::size_t n, std::size_t k) {
    Eigen::MatrixXd logits(n, k);
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index j = 0; j < logits.cols(); ++j) logits(i, j) = 2.0 * rng.normal();
    return softmax_rows(logits);
}

} // namespace

TEST_CASE("ece analytic cases") {
    SUBCASE("perfect one-hot predictions give zero ECE") {
        Eigen::MatrixXd p(3, 2);
        p << 1, 0, 0, 1, 1, 0;
        for (std::size_t m : {1u, 5u, 10u, 15u})
            CHECK(ece(p, {0, 1, 0}, m).ece == 0.0);
    }
    SUBCASE("equal-width binning pitfall") {
        // labels {0,0,1,1}; f2 is perfectly accurate yet scores worse than f1
        const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
        Eigen::MatrixXd f2(4, 2);
        f2 << 0.55, 0.45, 0.55, 0.45, 0.45, 0.55, 0.45, 0.55;
        Eigen::MatrixXd f1(4, 2);
        f1 << 0.95, 0.05, 0.45, 0.55, 0.35, 0.65, 0.05, 0.95;

        CHECK(accuracy(f2, labels) == 1.0);
        CHECK(accuracy(f1, labels) == 0.75);
        CHECK(ece(f2, labels, 10).ece == doctest::Approx(0.45).epsilon(1e-12));
        CHECK(ece(f1, labels, 10).ece == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("constant confidence equal to empirical accuracy") {
        const std::size_t n = 10;
        Eigen::MatrixXd p(n, 2);
        std::vector<std::uint32_t> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            p.row(static_cast<Eigen::Index>(i)) << 0.7, 0.3;
            labels[i] = i < 7 ? 0 : 1; // 0.7 accuracy at 0.7 confidence
        }
        CHECK(ece(p, labels, 10).ece == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("m = 0 rejected") {
        Eigen::MatrixXd p(1, 2);
        p << 0.6, 0.4;
        CHECK_THROWS_AS(ece(p, {0}, 0), ValidationError);
    }
}

TEST_CASE("ece recomposes from its bins and stays in [0, 1]") {
    Rng rng(61);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 1 + rng.uniform_index(50);
        const std::size_t k = 2 + rng.uniform_index(4);
        const Eigen::MatrixXd p = random_probs(rng, n, k);
        std::vector<std::uint32_t> y(n);
        for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(k));
        const EceResult r = ece(p, y, 10);

        double recomposed = 0.0;
        std::size_t total = 0;
        for (const ReliabilityBin& b : r.bins) {
            total += b.count;
            recomposed += (static_cast<double>(b.count) / static_cast<double>(n)) *
                          std::abs(b.accuracy - b.mean_confidence);
        }
        CHECK(total == n);
        CHECK(recomposed == doctest::Approx(r.ece).epsilon(1e-15));
        CHECK(r.ece >= 0.0);
        CHECK(r.ece <= 1.0);
    }
}

TEST_CASE("brier analytic cases") {
    SUBCASE("uniform, K=10") {
        Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2, 10, 0.1);
        CHECK(brier(p, {0, 9}) == doctest::Approx(-0.1).epsilon(1e-12));
    }
    SUBCASE("one-hot correct is the minimum -1") {
        Eigen::MatrixXd p(1, 4);
        p << 0, 1, 0, 0;
        CHECK(brier(p, {1}) == -1.0);
    }
    SUBCASE("one-hot wrong is the maximum +1") {
        Eigen::MatrixXd p(1, 4);
        p << 0, 1, 0, 0;
        CHECK(brier(p, {2}) == 1.0);
    }
}

TEST_CASE("nll and accuracy analytic cases") {
    Eigen::MatrixXd uniform2 = Eigen::MatrixXd::Constant(2, 2, 0.5);
    CHECK(nll(uniform2, {0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Eigen::MatrixXd sure(2, 2);
    sure << 1, 0, 0, 1;
    CHECK(nll(sure, {0, 1}) == 0.0);
    CHECK(accuracy(sure, {0, 1}) == 1.0);

    Eigen::MatrixXd quarter = Eigen::MatrixXd::Constant(2, 4, 0.25);
    CHECK(nll(quarter, {1, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Eigen::MatrixXd split(2, 2);
    split << 0.6, 0.4, 0.6, 0.4;
    CHECK(accuracy(split, {0, 1}) == 0.5);

    // lowest-index tie break: uniform rows predict class 0
    Eigen::MatrixXd tie = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
    CHECK(accuracy(tie, {0, 0, 0}) == 1.0);
}

TEST_CASE("auroc analytic cases") {
    SUBCASE("perfect separation") {
        // correct rows carry confidences {0.9, 0.8}, incorrect {0.6, 0.55}
        Eigen::MatrixXd p(4, 2);
        p << 0.9, 0.1, 0.8, 0.2, 0.6, 0.4, 0.55, 0.45;
        const auto auc = auroc(p, {0, 0, 1, 1});
        REQUIRE(auc.has_value());
        CHECK(*auc == 1.0);
    }
    SUBCASE("all confidences equal gives half credit") {
        Eigen::MatrixXd p(4, 2);
        p << 0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4;
        const auto auc = auroc(p, {0, 1, 0, 1});
        REQUIRE(auc.has_value());
        CHECK(*auc == 0.5);
    }
    SUBCASE("pair enumeration example") {
        // correct confidences {0.9, 0.3}, incorrect {0.5}:
        // pairs (0.9 > 0.5) = 1 and (0.3 < 0.5) = 0 average to 0.5
        Eigen::MatrixXd p(3, 4);
        p << 0.90, 0.04, 0.03, 0.03,  // pred 0, correct, conf 0.9
             0.50, 0.30, 0.10, 0.10,  // pred 0, label 1, incorrect, conf 0.5
             0.30, 0.25, 0.25, 0.20;  // pred 0, correct, conf 0.3
        const auto auc = auroc(p, {0, 1, 0});
        REQUIRE(auc.has_value());
        CHECK(*auc == 0.5);
    }
    SUBCASE("undefined when all predictions are correct") {
        Eigen::MatrixXd p(2, 2);
        p << 0.9, 0.1, 0.2, 0.8;
        CHECK_FALSE(auroc(p, {0, 1}).has_value());
        CHECK_FALSE(auroc(p, {1, 0}).has_value()); // all incorrect
    }
}

TEST_CASE("rank-based auroc equals exhaustive pair counting") {
    Rng rng(62);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t n = 2 + rng.uniform_index(49);
        // two-class rows (c, 1-c) with c quantized to eighths so ties happen
        Eigen::MatrixXd p(n, 2);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double c = (4.0 + static_cast<double>(rng.uniform_index(5))) / 8.0;
            p(i, 0) = c;
            p(i, 1) = 1.0 - c;
        }
        const std::size_t k = 2;
        std::vector<std::uint32_t> y(n);
        for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(k));

        const auto fast = auroc(p, y);
        std::vector<double> conf(n);
        std::vector<bool> correct(n);
        bool any_correct = false, any_wrong = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pred = oracle::argmax_lowest(p, static_cast<Eigen::Index>(i));
            conf[i] = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pred));
            correct[i] = pred == y[i];
            (correct[i] ? any_correct : any_wrong) = true;
        }
        if (!any_correct || !any_wrong) {
            CHECK_FALSE(fast.has_value());
            continue;
        }
        REQUIRE(fast.has_value());
        CHECK(*fast == doctest::Approx(oracle::auroc_pairs(conf, correct)).epsilon(1e-12));
    }
}

TEST_CASE("metrics match brute-force oracles on random instances") {
    Rng rng(63);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 1 + rng.uniform_index(50);
        const std::size_t k = 2 + rng.uniform_index(4);
        const Eigen::MatrixXd p = random_probs(rng, n, k);
        std::vector<std::uint32_t> y(n);
        for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(k));

        CHECK(ece(p, y, 10).ece == doctest::Approx(oracle::ece(p, y, 10)).epsilon(1e-10));
        CHECK(brier(p, y) == doctest::Approx(oracle::brier(p, y)).epsilon(1e-10));
        CHECK(nll(p, y) == doctest::Approx(oracle::nll(p, y)).epsilon(1e-10));
        CHECK(accuracy(p, y) == doctest::Approx(oracle::accuracy(p, y)).epsilon(1e-10));
    }
}

TEST_CASE("brier equals square loss minus one") {
    Rng rng(64);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 1 + rng.uniform_index(40);
        const std::size_t k = 2 + rng.uniform_index(4);
        const Eigen::MatrixXd p = random_probs(rng, n, k);
        std::vector<std::uint32_t> y(n);
        for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(k));
        const double affine = loss_value(p, y, LossKind::Square) - 1.0;
        CHECK(brier(p, y) == doctest::Approx(affine).epsilon(1e-12));
    }
}

TEST_CASE("accuracy and auroc are invariant under increasing confidence transforms") {
    Rng rng(65);
    const std::size_t n = 40;
    Eigen::MatrixXd p(n, 2);
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = 0.5 + 0.5 * rng.uniform(); // confidence in [0.5, 1)
        p.row(static_cast<Eigen::Index>(i)) << c, 1.0 - c;
        y[i] = static_cast<std::uint32_t>(rng.uniform_index(2));
    }
    // strictly increasing map on [0.5, 1): t -> 0.5 + 0.5 t^3 of the margin
    Eigen::MatrixXd q(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = p(static_cast<Eigen::Index>(i), 0);
        const double t = 2.0 * c - 1.0;
        const double mapped = 0.5 + 0.5 * t * t * t;
        q.row(static_cast<Eigen::Index>(i)) << mapped, 1.0 - mapped;
    }
    CHECK(accuracy(p, y) == accuracy(q, y));
    const auto a1 = auroc(p, y);
    const auto a2 = auroc(q, y);
    REQUIRE(a1.has_value());
    REQUIRE(a2.has_value());
    CHECK(*a1 == doctest::Approx(*a2).epsilon(1e-12));
}

TEST_CASE("relative gain sign conventions") {
    CHECK(relative_gain(0.060, 0.023, false) == doctest::Approx(61.6667).epsilon(1e-4));
    CHECK(relative_gain(0.5, 0.5, false) == 0.0);
    CHECK(relative_gain(0.10, 0.12, false) == doctest::Approx(-20.0).epsilon(1e-12));
    CHECK(relative_gain(0.8, 0.9, true) == doctest::Approx(12.5).epsilon(1e-12));
    CHECK_THROWS_AS(relative_gain(0.0, 0.1, false), ValidationError);
}

TEST_CASE("one-vs-rest macro AUROC behaves on a separable case") {
    Eigen::MatrixXd p(4, 2);
    p << 0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8;
    const auto auc = auroc_one_vs_rest(p, {0, 0, 1, 1});
    REQUIRE(auc.has_value());
    CHECK(*auc == 1.0);
}

TEST_CASE("report JSON round-trip and bins CSV") {
    Rng rng(66);
    const Eigen::MatrixXd p = random_probs(rng, 30, 3);
    std::vector<std::uint32_t> y(30);
    for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(3));
    const MetricReport report = evaluate_report(p, y, 10);

    const MetricReport back = metric_report_from_json(metric_report_to_json(report));
    CHECK(back.ece == doctest::Approx(report.ece).epsilon(1e-15));
    CHECK(back.nll == doctest::Approx(report.nll).epsilon(1e-15));
    CHECK(back.brier == doctest::Approx(report.brier).epsilon(1e-15));
    CHECK(back.acc == report.acc);
    CHECK(back.auc.has_value() == report.auc.has_value());
    REQUIRE(back.bins.size() == report.bins.size());
    for (std::size_t i = 0; i < back.bins.size(); ++i)
        CHECK(back.bins[i].count == report.bins[i].count);

    const auto list = metric_reports_from_json(metric_reports_to_json({report, report}));
    CHECK(list.size() == 2);
    // single-object files parse as a one-element list
    CHECK(metric_reports_from_json(metric_report_to_json(report)).size() == 1);

    const std::string csv = bins_to_csv(report.bins);
    CHECK(csv.find("lower,upper,count,accuracy,mean_confidence") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11); // header + 10 bins
}
