#include "xsdep/dgp.hpp"
#include "xsdep/families.hpp"
#include "xsdep/robust_cov.hpp"

#include <benchmark/benchmark.h>

using namespace xsdep;

namespace {

PanelData bench_panel(Eigen::Index n, Eigen::Index t) {
    DgpSpec spec;
    spec.cross_section = EquicorrFamily{1.0, 0.3};
    spec.beta = Eigen::Vector3d(1.0, 0.5, -0.5);
    return gen_panel(spec, n, t, 42).panel;
}

void BM_FixedEffectFit(benchmark::State& state) {
    const PanelData p = bench_panel(state.range(0), state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(fit(p, EstimatorKind::FixedEffect).beta_hat);
}
BENCHMARK(BM_FixedEffectFit)->Args({100, 100})->Args({500, 200})->Args({1000, 500});

void BM_CrossSectionCov(benchmark::State& state) {
    const FitResult f = fit(bench_panel(state.range(0), state.range(1)), EstimatorKind::FixedEffect);
    const WeightBlocks w = weight_blocks(f);
    for (auto _ : state) benchmark::DoNotOptimize(cov_cross_section(w, f.residuals).matrix);
}
BENCHMARK(BM_CrossSectionCov)->Args({100, 100})->Args({1000, 500});

void BM_KernelCov(benchmark::State& state) {
    const FitResult f = fit(bench_panel(200, state.range(0)), EstimatorKind::FixedEffect);
    const WeightBlocks w = weight_blocks(f);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            cov_kernel(w, f.residuals, KernelKind::Bartlett, Truncation{std::nullopt, {}}).matrix);
}
BENCHMARK(BM_KernelCov)->Arg(100)->Arg(1000);

void BM_Classify(benchmark::State& state) {
    const CovFamily fam = as_generator(EquicorrFamily{1.0, 0.5});
    for (auto _ : state) benchmark::DoNotOptimize(classify(fam, {25, 50, 100, 200}).headline.alpha);
}
BENCHMARK(BM_Classify);

void BM_GeneratePanel(benchmark::State& state) {
    DgpSpec spec;
    spec.cross_section = parse_family("factor(1,1)");
    spec.time_memory = TimeDependenceSpec::factor_summable(0.5);
    const auto model = prepare(spec, state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(gen_panel(model, 200, ++seed).errors);
}
BENCHMARK(BM_GeneratePanel)->Arg(100)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
