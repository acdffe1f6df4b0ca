#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "riskforge/eval.hpp"
#include "riskforge/model.hpp"
#include "riskforge/pce.hpp"

using namespace riskforge;

namespace {

const std::string kCoeffPath = std::string(RISKFORGE_DATA_DIR) + "/pce_coefficients.json";

std::vector<double> random_scores(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(n);
    for (auto& v : s) v = u(rng);
    return s;
}

LabelVector random_labels(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(0.35);
    LabelVector y(n);
    for (auto& v : y) v = b(rng) ? 1 : 0;
    return y;
}

void bm_auc(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    auto scores = random_scores(n, 1);
    auto labels = random_labels(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
}
BENCHMARK(bm_auc)->Arg(1000)->Arg(10000);

void bm_pce_risk(benchmark::State& state) {
    auto table = PceCoefficientTable::load(kCoeffPath);
    KnownFactorProfile p;
    p.gender_male = 1;
    p.age_years = 55;
    p.tc = 213;
    p.hdl_c = 50;
    p.sbp = 120;
    p.smoker = false;
    for (auto _ : state) benchmark::DoNotOptimize(pce_risk(p, table));
}
BENCHMARK(bm_pce_risk);

void bm_cox_fit(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    SurvivalData d;
    d.covariate_names = {"x"};
    for (std::size_t i = 0; i < n; ++i) {
        double x = (i % 2) ? 1.0 : 0.0;
        double t = -std::log(u(rng)) / (0.01 * std::exp(0.7 * x));
        d.covariates.push_back(x);
        d.time_days.push_back(1 + static_cast<int>(t));
        d.event.push_back(u(rng) < 0.7);
    }
    for (auto _ : state) benchmark::DoNotOptimize(fit_cox(d));
}
BENCHMARK(bm_cox_fit)->Arg(500)->Arg(2000);

void bm_mlp_epoch(benchmark::State& state) {
    std::size_t n = 800, m = 7;
    FeatureMatrix fm;
    fm.n = n;
    fm.m = m;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    for (std::size_t j = 0; j < m; ++j) fm.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        fm.instance_ids.push_back(std::to_string(i));
        for (std::size_t j = 0; j < m; ++j) fm.values.push_back(normal(rng));
    }
    auto y = random_labels(n, 5);
    MlpConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 6;
    for (auto _ : state)
        benchmark::DoNotOptimize(train_mlp(fm, y, cfg, nullptr, nullptr, ModelKind::nn));
}
BENCHMARK(bm_mlp_epoch);

} // namespace

BENCHMARK_MAIN();
