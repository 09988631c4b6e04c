#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "antigan/fedsim.hpp"
#include "antigan/obfuscation.hpp"
#include "antigan/obfuscation_torch.hpp"
#include "antigan/similarity.hpp"

namespace {

std::vector<double> random_pixels(size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> px(n);
  for (auto& p : px) p = u(rng);
  return px;
}

void BM_LObfGradient(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto grid = antigan::obf::make_grid(side, side, 5);
  const auto px = random_pixels(static_cast<size_t>(side) * side, 1);
  const antigan::obf::ObfuscationParams params{0.4, 5};
  for (auto _ : state) {
    auto out = antigan::obf::l_obf(antigan::obf::ImageView<double>{px, 1, side, side}, grid,
                                   params);
    benchmark::DoNotOptimize(out.loss);
  }
}
BENCHMARK(BM_LObfGradient)->Arg(32)->Arg(64);

void BM_BatchLObfBackward(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto grid = antigan::obf::make_grid(32, 32, 5);
  const auto base = torch::rand({state.range(0), 1, 32, 32}) * 2 - 1;
  for (auto _ : state) {
    auto x = base.clone().requires_grad_(true);
    antigan::obf::batch_obfuscation_loss(x, grid, {0.4, 5}).backward();
    benchmark::DoNotOptimize(x.grad().data_ptr());
  }
}
BENCHMARK(BM_BatchLObfBackward)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const auto a = random_pixels(32 * 32, 2);
  const auto b = random_pixels(32 * 32, 3);
  const std::vector<float> fa(a.begin(), a.end());
  const std::vector<float> fb(b.begin(), b.end());
  for (auto _ : state) benchmark::DoNotOptimize(antigan::attack::ssim(fa, fb, 1, 32, 32));
}
BENCHMARK(BM_Ssim);

void BM_Aggregate(benchmark::State& state) {
  const auto d = static_cast<size_t>(state.range(0));
  std::vector<antigan::fed::GradientUpdate> ups(4);
  for (size_t k = 0; k < ups.size(); ++k) {
    const auto v = random_pixels(d, 10 + k);
    ups[k].values.assign(v.begin(), v.end());
    ups[k].mask.assign(d, 1);
  }
  const std::vector<double> w{1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(antigan::fed::aggregate(ups, w).data());
}
BENCHMARK(BM_Aggregate)->Arg(100000);

void BM_UploadMask(benchmark::State& state) {
  const auto v = random_pixels(100000, 5);
  for (auto _ : state) {
    antigan::fed::GradientUpdate u;
    u.values.assign(v.begin(), v.end());
    u.mask.assign(v.size(), 1);
    antigan::fed::apply_upload_mask(u, 0.1);
    benchmark::DoNotOptimize(u.values.data());
  }
}
BENCHMARK(BM_UploadMask);

}  // namespace

BENCHMARK_MAIN();
