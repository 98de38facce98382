#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "exifcons/localizer.hpp"
#include "exifcons/rng.hpp"

using namespace exifcons;

namespace {

AffinityMatrix noisy_blocks(int p, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  AffinityMatrix m(p, p);
  const int a = p * 3 / 5;
  for (int i = 0; i < p; ++i) {
    m(i, i) = 1.0;
    for (int j = i + 1; j < p; ++j) {
      const double base = (i < a) == (j < a) ? 0.9 : 0.1;
      m(i, j) = m(j, i) = std::clamp(base + noise(rng), 0.0, 1.0);
    }
  }
  return m;
}

}  // namespace

static void BM_MeanShift(benchmark::State& state) {
  const auto a = noisy_blocks(int(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(mean_shift(a));
}
BENCHMARK(BM_MeanShift)->Arg(100)->Arg(425)->Unit(benchmark::kMillisecond);

static void BM_Ncuts(benchmark::State& state) {
  const auto a = noisy_blocks(int(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(segment_ncuts(a));
}
BENCHMARK(BM_Ncuts)->Arg(100)->Arg(425)->Unit(benchmark::kMillisecond);

// Overlap-averaged rendering of one affinity row on a 512x384 image.
static void BM_RenderRow(benchmark::State& state) {
  const auto grid = plan_grid(512, 384);
  Eigen::VectorXd row = Eigen::VectorXd::Random(Eigen::Index(grid.size())).cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(render_row(row, grid, 512, 384));
}
BENCHMARK(BM_RenderRow)->Unit(benchmark::kMillisecond);
