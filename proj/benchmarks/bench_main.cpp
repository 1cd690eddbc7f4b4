// Microbenchmarks for the hot paths: projection, the encoder/decoder layer
// kernels, and end-to-end single-image inference.
#include <benchmark/benchmark.h>

#include "dmn/config.hpp"
#include "dmn/drr.hpp"
#include "dmn/layers.hpp"
#include "dmn/model.hpp"
#include "dmn/phantom.hpp"
#include "dmn/rng.hpp"

namespace {

using namespace dmn;

Tensor rand_tensor(std::vector<int> shape, RngStream& rng,
                   bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

const Volume3D& phantom_volume() {
  static const Volume3D volume =
      build_phantom_volume(PhantomConfig{}, /*seed=*/1);
  return volume;
}

void BM_SiddonDrr(benchmark::State& state) {
  const Volume3D& volume = phantom_volume();
  ProjectionGeometry geometry;
  double angle = 0.0;
  for (auto _ : state) {
    ProjImage img = siddon_drr(volume, geometry.with_angle(angle));
    benchmark::DoNotOptimize(img.pixels.data());
    angle += 17.0;
    if (angle >= 360.0) angle -= 360.0;
  }
}
BENCHMARK(BM_SiddonDrr)->Unit(benchmark::kMillisecond);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  RngStream rng(7, "bench-conv");
  Tensor x = rand_tensor({8, 16, 32, 32}, rng);
  Tensor w = rand_tensor({32, 16, 3, 3}, rng);
  Tensor b = rand_tensor({32}, rng);
  for (auto _ : state) {
    Tensor s = sum(conv2d(x, w, b));
    backward(s);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Unit(benchmark::kMillisecond);

void BM_LinearForwardBackward(benchmark::State& state) {
  RngStream rng(8, "bench-linear");
  Tensor x = rand_tensor({8, 49 * 128}, rng);
  Tensor w = rand_tensor({1500, 49 * 128}, rng);
  Tensor b = rand_tensor({1500}, rng);
  for (auto _ : state) {
    Tensor s = sum(linear(x, w, b));
    backward(s);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_LinearForwardBackward)->Unit(benchmark::kMillisecond);

void BM_GatLayerForwardBackward(benchmark::State& state) {
  RngStream rng(9, "bench-gat");
  const TetMesh mesh = make_ellipsoid_mesh({0, 0, 0}, {55, 45, 65}, 300);
  const Adjacency adj = make_adjacency(mesh);
  Tensor x = rand_tensor({8, mesh.num_vertices(), 64}, rng);
  Tensor w = rand_tensor({64, 64}, rng);
  Tensor a = rand_tensor({128}, rng);
  for (auto _ : state) {
    Tensor s = sum(gat_layer(x, adj, w, a));
    backward(s);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_GatLayerForwardBackward)->Unit(benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  RunConfig config = default_run_config();
  const TetMesh mesh = build_template_mesh(config.phantom);
  ModelConfig mc = config.model;
  mc.n_vertices = mesh.num_vertices();
  Model model(mc, mesh);
  RngStream rng(10, "bench-predict");
  model.init_params(rng);
  ProjImage image = siddon_drr(phantom_volume(), config.geometry);
  for (auto _ : state) {
    NodalField out = model.predict(image);
    benchmark::DoNotOptimize(out.values.data());
  }
}
BENCHMARK(BM_ModelPredict)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
