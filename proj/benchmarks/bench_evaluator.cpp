#include <benchmark/benchmark.h>

#include "exifcons/evaluator.hpp"
#include "exifcons/rng.hpp"

using namespace exifcons;

namespace {

struct Example {
  FloatMap pred;
  Mask truth;
};

Example random_example(int w, int h) {
  Rng rng(1);
  Example e{FloatMap(w, h), Mask(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      e.truth.at(x, y) = x < w / 3;
      e.pred.at(x, y) = uniform_int(rng, 0, 255) / 255.0;
    }
  }
  return e;
}

}  // namespace

static void BM_LocalizationAp(benchmark::State& state) {
  const auto e = random_example(512, 384);
  for (auto _ : state) benchmark::DoNotOptimize(localization_ap(e.pred, e.truth));
}
BENCHMARK(BM_LocalizationAp)->Unit(benchmark::kMillisecond);

// cIOU, MCC and F1 share one sorted sweep over 256 thresholds.
static void BM_ThresholdMetrics(benchmark::State& state) {
  const auto e = random_example(512, 384);
  const auto th = threshold_sweep(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ciou(e.pred, e.truth, th));
    benchmark::DoNotOptimize(mcc_f1(e.pred, e.truth, th));
  }
}
BENCHMARK(BM_ThresholdMetrics)->Unit(benchmark::kMillisecond);
