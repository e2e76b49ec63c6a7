#include <benchmark/benchmark.h>

#include <vector>

#include "lates/metrics.hpp"
#include "lates/numeric.hpp"
#include "lates/probes.hpp"
#include "lates/stack.hpp"
#include "lates/stats.hpp"
#include "lates/theory.hpp"

using namespace lates;

namespace {

StackSample make_sample(std::size_t n) {
    return sample_stack(StackTaskSpec::preset(StackTaskSpec::Kind::Default), n, 42);
}

void BM_LatesPredict(benchmark::State& state) {
    const StackSample sample = make_sample(static_cast<std::size_t>(state.range(0)));
    Eigen::VectorXd beta(3);
    beta << 0.4, 0.1, 0.9;
    for (auto _ : state) {
        benchmark::DoNotOptimize(lates_predict(sample.stack, beta));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LatesPredict)->Arg(1000)->Arg(10000);

void BM_FitLates(benchmark::State& state) {
    const StackSample sample = make_sample(1000);
    AggTrainConfig config;
    config.epochs = static_cast<std::uint32_t>(state.range(0));
    config.learning_rate = 0.05;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_lates(sample.stack, sample.labels, config));
    }
}
BENCHMARK(BM_FitLates)->Arg(50)->Arg(400);

void BM_FitTemperature(benchmark::State& state) {
    const StackSample sample = make_sample(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_temperature(sample.stack.slices.back(), sample.labels));
    }
}
BENCHMARK(BM_FitTemperature)->Arg(1000)->Arg(10000);

void BM_TrainProbe(benchmark::State& state) {
    Rng rng(7);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    LayerBlock layer;
    layer.layer_index = 1;
    layer.feature_dim = 32;
    layer.data.resize(n * 32);
    for (auto& v : layer.data) v = static_cast<float>(rng.normal());
    std::vector<std::uint32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::uint32_t>(rng.uniform_index(3));
    ProbeTrainConfig config;
    config.epochs = 10;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_probe(layer, labels, 3, config));
    }
    state.SetItemsProcessed(state.iterations() * n * 10);
}
BENCHMARK(BM_TrainProbe)->Arg(1000)->Arg(4000);

void BM_MetricReport(benchmark::State& state) {
    Rng rng(9);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Eigen::MatrixXd logits(n, 10);
    std::vector<std::uint32_t> labels(n);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(rng.uniform_index(10));
        for (int j = 0; j < 10; ++j) logits(i, j) = rng.normal();
    }
    const Eigen::MatrixXd probs = softmax_rows(logits);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_report(probs, labels, 10));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MetricReport)->Arg(1000)->Arg(50000);

void BM_WilcoxonExact(benchmark::State& state) {
    Rng rng(11);
    std::vector<double> deltas(static_cast<std::size_t>(state.range(0)));
    for (auto& d : deltas) d = rng.normal() + 0.3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            wilcoxon_signed_rank({deltas}, Sidedness::TwoSided, WilcoxonMethod::Exact));
    }
}
BENCHMARK(BM_WilcoxonExact)->Arg(15)->Arg(25);

} // namespace

BENCHMARK_MAIN();
