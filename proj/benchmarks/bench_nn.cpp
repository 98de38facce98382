#include <benchmark/benchmark.h>

#include "exifcons/consistency_net.hpp"
#include "exifcons/rng.hpp"

using namespace exifcons;

namespace {

std::vector<Patch> random_patches(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Patch> ps(static_cast<std::size_t>(n));
  for (auto& p : ps) {
    for (auto& v : p.pixels) v = float(uniform_real(rng));
  }
  return ps;
}

ModelConfig small_config() {
  ModelConfig c;
  c.output_dim = 83;
  return c;
}

}  // namespace

// Patch embeddings with the default small backbone.
static void BM_Embed(benchmark::State& state) {
  ConsistencyNet<float> net(small_config(), 1);
  const auto ps = random_patches(int(state.range(0)), 2);
  const auto x = patches_to_matrix<float>(std::span<const Patch>(ps));
  for (auto _ : state) benchmark::DoNotOptimize(net.embed(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Embed)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

// Head evaluation for every ordered pair of a 425-patch grid.
static void BM_AllPairsHead(benchmark::State& state) {
  ConsistencyNet<float> net(small_config(), 1);
  const int p = int(state.range(0));
  nn::Matrix<float> e = nn::Matrix<float>::Random(p, 256).cwiseAbs();
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(net.pair_logits_indexed(e, pairs));
  state.SetItemsProcessed(state.iterations() * std::int64_t(pairs.size()));
}
BENCHMARK(BM_AllPairsHead)->Arg(100)->Arg(425)->Unit(benchmark::kMillisecond);

// One optimizer step at the desk batch size.
static void BM_TrainStep(benchmark::State& state) {
  ConsistencyNet<float> net(small_config(), 1);
  nn::Adam<float> opt(net.parameters(), 1e-4);
  const int b = int(state.range(0));
  const auto pa = random_patches(b, 3);
  const auto pb = random_patches(b, 4);
  const auto xa = patches_to_matrix<float>(std::span<const Patch>(pa));
  const auto xb = patches_to_matrix<float>(std::span<const Patch>(pb));
  const nn::Matrix<float> y = nn::Matrix<float>::Zero(b, 83);
  const nn::Matrix<float> mask = nn::Matrix<float>::Ones(b, 83);
  for (auto _ : state) {
    opt.zero_grad();
    const auto r = masked_bce(net.train_forward(xa, xb), y, mask);
    net.train_backward(r.grad.cast<float>());
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);
