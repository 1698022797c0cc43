#include <random>

#include <benchmark/benchmark.h>

#include "ssvo/dataset.hpp"
#include "ssvo/log.hpp"
#include "ssvo/models.hpp"
#include "ssvo/ops.hpp"
#include "ssvo/synth.hpp"
#include "ssvo/trainer.hpp"
#include "ssvo/warp.hpp"

namespace {

using namespace ssvo;

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& x : t.mutable_data()) x = d(rng);
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({8, c, 32, 104}, 1);
  Tensor w = random_tensor({c, c, 3, 3}, 2, -1, 1, true);
  Tensor b = random_tensor({c}, 3, -1, 1, true);
  for (auto _ : state) {
    sum(conv2d(x, w, b, 1)).backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 32 * 104);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_InverseWarp(benchmark::State& state) {
  const CameraIntrinsics k = default_intrinsics(32, 104);
  Tensor src = random_tensor({8, 3, 32, 104}, 4, 0, 1);
  Tensor depth = random_tensor({8, 1, 32, 104}, 5, 0.8, 1.2);
  Tensor pose = random_tensor({8, 6}, 6, -0.01, 0.01);
  for (auto _ : state) {
    WarpResult w = inverse_warp(src, depth, pose, k);
    benchmark::DoNotOptimize(w.synthesized.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 32 * 104);
}
BENCHMARK(BM_InverseWarp)->Unit(benchmark::kMicrosecond);

void BM_TrainingIteration(benchmark::State& state) {
  SceneSpec scene = random_scene(1);
  const auto poses = random_trajectory({12, 0.015, 2.0, 1});
  const Dataset data = dataset_from_sequence(generate_dataset(scene, poses, default_intrinsics(32, 104), 32, 104));
  TrainConfig cfg;
  cfg.iterations = static_cast<std::size_t>(state.range(0));
  cfg.validation_interval = 1000000;
  cfg.validation_triplets = 1;
  for (auto _ : state) {
    TrainingRun run = run_training(cfg, data, data, init_parameters(cfg.model, 1));
    benchmark::DoNotOptimize(run.train_log.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainingIteration)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  ssvo::set_log_level("error");
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
