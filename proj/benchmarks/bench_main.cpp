#include <benchmark/benchmark.h>

#include "archshape/datagen.hpp"
#include "archshape/layers.hpp"
#include "archshape/mesh.hpp"
#include "archshape/model.hpp"
#include "archshape/random.hpp"
#include "archshape/saliency.hpp"
#include "archshape/voxelize.hpp"

using namespace archshape;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Model inference_model(std::uint64_t seed) {
  Model model = build_model(ArchConfig{}, seed);
  for (auto& b : model.blocks) b.bn.has_running_stats = true;
  return model;
}

// Second conv block of the default network at batch 16.
void BM_Conv3dForward(benchmark::State& state) {
  Rng rng(1);
  auto p = make_conv3d(16, 8, 3);
  p.weights = random_tensor(p.weights.shape(), rng);
  const Tensor x = random_tensor({16, 8, 16, 16, 16}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d_forward(x, p).y.values().data());
}
BENCHMARK(BM_Conv3dForward)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  Rng rng(2);
  auto p = make_conv3d(16, 8, 3);
  p.weights = random_tensor(p.weights.shape(), rng);
  const Tensor x = random_tensor({16, 8, 16, 16, 16}, rng);
  auto f = conv3d_forward(x, p);
  const Tensor g = random_tensor(f.y.shape(), rng);
  for (auto _ : state) {
    f.ctx.consumed = false;
    benchmark::DoNotOptimize(conv3d_backward(g, f.ctx, p).grad_w.values().data());
  }
}
BENCHMARK(BM_Conv3dBackward)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const Model model = inference_model(3);
  Rng rng(3);
  const Tensor x = random_tensor({1, 1, 32, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x).logits.values().data());
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_Saliency(benchmark::State& state) {
  const Model model = inference_model(4);
  const VoxelGrid grid = gen_machine_form(draw_machine_spec(4), 32);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        compute_saliency(model, grid, ImportanceMode::abs, TargetSource::predicted).normalized.values().data());
}
BENCHMARK(BM_Saliency)->Unit(benchmark::kMillisecond);

void BM_VoxelizeSolid(benchmark::State& state) {
  TriangleMesh m;
  for (int n = 0; n < 8; ++n) m.vertices.push_back({(n & 1) ? 3.0 : 0.0, (n & 2) ? 2.0 : 0.0, (n & 4) ? 5.0 : 0.0});
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  const auto mesh = standardize(m).first;
  const auto res = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(voxelize(mesh, res, FillMode::solid).occupied_count());
}
BENCHMARK(BM_VoxelizeSolid)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GenHumanForm(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen_human_form(draw_human_spec(++seed), 32).occupied_count());
}
BENCHMARK(BM_GenHumanForm)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
