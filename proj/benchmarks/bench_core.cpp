#include "deleaker/analysis.hpp"
#include "deleaker/assignment.hpp"
#include "deleaker/defaults.hpp"
#include "deleaker/evalkit.hpp"
#include "deleaker/intervention.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace deleaker;

namespace {

Mat random_mat(std::mt19937& rng, int rows, int cols) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Mat m(rows, cols);
    for (float& v : m.data)
        v = dist(rng);
    return m;
}

} // namespace

static void ScaledScoresSoftmax(benchmark::State& state) {
    std::mt19937 rng(1);
    const int n = static_cast<int>(state.range(0));
    const Mat q = random_mat(rng, n, 16);
    const Mat k = random_mat(rng, n, 16);
    for (auto _ : state) {
        Mat w = softmax_rows(scaled_scores(q, k, 16));
        benchmark::DoNotOptimize(w.data.data());
    }
}
BENCHMARK(ScaledScoresSoftmax)->Arg(80)->Arg(160);

static void ApplyDeleakerBlock(benchmark::State& state) {
    std::mt19937 rng(2);
    ToyModelConfig cfg;
    const FieldDims dims = cfg.dims();
    const PlantSpec plant = default_plant();
    const EntityLayout layout = layout_from_plant(plant);
    EntityMaskSet masks;
    masks.grid = cfg.grid;
    masks.frozen = true;
    for (const PlantEntity& e : plant.entities)
        masks.masks.push_back(e.rect.image_tokens(cfg.grid));

    std::vector<Mat> heads;
    for (int h = 0; h < cfg.heads; ++h)
        heads.push_back(random_mat(rng, dims.n(), dims.n()));
    const Mat avg = head_average(heads);
    const DeleakerConfig dcfg;

    for (auto _ : state) {
        std::vector<Mat> work = heads;
        apply_deleaker(work, avg, masks, layout, dcfg, dims, 10, 80);
        benchmark::DoNotOptimize(work.data());
    }
}
BENCHMARK(ApplyDeleakerBlock);

static void RunDiffusionDefault(benchmark::State& state) {
    ToyModelConfig cfg;
    cfg.seed = 5;
    const PlantSpec plant = default_plant();
    for (auto _ : state) {
        RunTrace trace = run_diffusion(cfg, &plant);
        benchmark::DoNotOptimize(trace.blocks.data());
    }
}
BENCHMARK(RunDiffusionDefault)->Unit(benchmark::kMillisecond);

static void HungarianSolve(benchmark::State& state) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 10.0);
    const int n = static_cast<int>(state.range(0));
    CostMatrix m(n, n);
    for (double& v : m.data)
        v = dist(rng);
    for (auto _ : state) {
        Assignment a = hungarian(m);
        benchmark::DoNotOptimize(a.total_cost);
    }
}
BENCHMARK(HungarianSolve)->Arg(8)->Arg(16)->Arg(32);

static void FleissKappa(benchmark::State& state) {
    std::mt19937 rng(4);
    RaterMatrix m;
    m.items = static_cast<int>(state.range(0));
    m.raters = 3;
    std::uniform_int_distribution<int> label(1, 5);
    for (int i = 0; i < m.items * m.raters; ++i)
        m.labels.push_back(label(rng));
    for (auto _ : state) {
        const double kappa = fleiss_kappa_qw(m);
        benchmark::DoNotOptimize(kappa);
    }
}
BENCHMARK(FleissKappa)->Arg(100)->Arg(1000);

BENCHMARK_MAIN();
