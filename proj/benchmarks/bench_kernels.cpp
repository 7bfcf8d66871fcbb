#include <random>

#include <benchmark/benchmark.h>

#include "ltmx/aggregation.hpp"
#include "ltmx/losses.hpp"
#include "ltmx/model.hpp"
#include "ltmx/nn/layers.hpp"

namespace {

ltmx::Mat noise(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  ltmx::Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

void BM_Conv2dForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const int batch = static_cast<int>(state.range(0));
  ltmx::nn::Conv2d conv("c", 3, 8, 5, 32, 32);
  conv.weight.value = noise(rng, 8, 3 * 25);
  const auto x = noise(rng, batch, 3 * 32 * 32);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  ltmx::nn::Conv2d conv("c", 3, 8, 5, 32, 32);
  conv.weight.value = noise(rng, 8, 3 * 25);
  const auto x = noise(rng, 64, 3 * 32 * 32);
  const auto dy = noise(rng, 64, 8 * conv.out_height() * conv.out_width());
  for (auto _ : state) {
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    benchmark::DoNotOptimize(conv.backward(x, dy));
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_CompositeLoss(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto v = noise(rng, 3, 10);
  ltmx::Vector priors = ltmx::Vector::Constant(10, 0.1);
  ltmx::ExpertLogitGrads g;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ltmx::loss_experts_composite(v.row(0).transpose(), v.row(1).transpose(),
                                                          v.row(2).transpose(), 4, priors, &g));
  }
}
BENCHMARK(BM_CompositeLoss);

void BM_BatchStability(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  ltmx::ExpertLogits a, b;
  for (int j = 0; j < ltmx::kNumExperts; ++j) {
    a.v[j] = noise(rng, n, 10);
    b.v[j] = noise(rng, n, 10);
  }
  ltmx::Theta grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ltmx::batch_stability(a, b, ltmx::Theta(0.1, 0.2, -0.3), ltmx::StabilityMode::probs, &grad));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BatchStability)->Arg(128)->Arg(2048);

void BM_BundleForward(benchmark::State& state) {
  ltmx::ModelConfig cfg;
  cfg.num_classes = 10;
  cfg.modalities = {ltmx::ModalityShape::image(1, 28, 28), ltmx::ModalityShape::image(3, 32, 32)};
  ltmx::ExpertBundle bundle(cfg, 1);
  ltmx::PairedDataset data;
  data.num_classes = 10;
  data.shapes = cfg.modalities;
  for (int i = 0; i < 64; ++i) {
    data.samples.push_back({{ltmx::Image(1, 28, 28, 0.5), ltmx::Image(3, 32, 32, 0.25)}, i % 10, i});
  }
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = ltmx::make_batch(data, idx);
  for (auto _ : state) benchmark::DoNotOptimize(bundle.forward(batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_BundleForward);

}  // namespace
BENCHMARK_MAIN();
