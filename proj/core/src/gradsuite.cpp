#include "dmn/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "dmn/layers.hpp"
#include "dmn/model.hpp"
#include "dmn/rng.hpp"

namespace dmn {

namespace {

Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Adjacency ring_graph(int n) {
  auto adj = std::make_shared<std::vector<std::vector<int>>>(n);
  for (int i = 0; i < n; ++i) {
    (*adj)[i].push_back((i + n - 1) % n);
    (*adj)[i].push_back((i + 1) % n);
    std::sort((*adj)[i].begin(), (*adj)[i].end());
  }
  return adj;
}

double check_layer(const std::string& name, int seeds,
                   const std::function<double(RngStream&)>& one_seed) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    RngStream rng(1234, "gradcheck-" + name, static_cast<std::uint64_t>(s));
    worst = std::max(worst, one_seed(rng));
  }
  return worst;
}

double end_to_end_check(RngStream& rng) {
  const TetMesh mesh = make_ellipsoid_mesh({0.0, 0.0, 0.0},
                                           {30.0, 28.0, 32.0}, 20, 10, 80);
  ModelConfig config;
  config.image_size = 32;
  config.encoder_channels = {2, 2, 2, 2};
  config.fpn_features_per_vertex = 1;
  config.gnn_hidden = 4;
  config.gnn_blocks = 1;
  config.n_vertices = mesh.num_vertices();
  Model model(config, mesh);
  model.init_params(rng);
  // Leave nothing at exactly zero (the head starts zeroed) so the loss has
  // no non-differentiable absolute-value kinks at the evaluation point.
  for (const auto& name : model.params().names())
    for (double& v : model.params().get(name).data())
      v += rng.uniform(0.01, 0.05);

  const int H = config.image_size;
  Tensor image = Tensor::zeros({1, 1, H, H});
  for (double& v : image.data()) v = rng.uniform(0.0, 1.0);
  const double angle = rng.uniform(0.0, 360.0);

  // Keep every |pred - target| component away from zero so the finite
  // difference does not step across an L1 kink at the evaluation point, but
  // keep the offsets small: the absolute-error gradient only depends on the
  // sign of the residual, while the cancellation noise of the central
  // difference scales with the magnitude of the loss itself.
  Tensor target = model.template_batch(1);
  for (double& v : target.data())
    v += (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.1);

  auto f = [&]() {
    Tensor pred = model.forward(image, {angle});
    return loss_total(pred, target, model.template_batch(1),
                      model.adjacency(), config.lambda);
  };
  std::vector<Tensor> params;
  for (const auto& name : model.params().names())
    params.push_back(model.params().get(name));
  // The loss is O(100), so a small step leaves the central difference of
  // small-gradient elements dominated by floating-point cancellation, while a
  // large step crosses max-pooling argmax ties near other elements. No single
  // step serves every element; agreement at any of these steps validates it.
  return grad_check_multi(f, params, {1e-5, 1e-6, 1e-4, 1e-3});
}

}  // namespace

std::vector<GradSuiteEntry> run_gradcheck_suite(int layer_seeds,
                                                int end_to_end_seeds) {
  std::vector<GradSuiteEntry> out;
  auto add = [&out](const std::string& name, double err) {
    out.push_back({name, err});
  };

  add("conv2d", check_layer("conv2d", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({1, 2, 6, 6}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        auto f = [&]() { return sum(square(conv2d(x, w, b))); };
        return grad_check(f, {x, w, b});
      }));
  add("maxpool2", check_layer("maxpool2", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({1, 2, 4, 4}, rng);
        auto f = [&]() { return sum(square(maxpool2(x))); };
        return grad_check(f, {x});
      }));
  add("group_norm", check_layer("group_norm", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({2, 4, 3, 3}, rng);
        Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({4}, rng);
        auto f = [&]() { return sum(square(group_norm(x, 2, gamma, beta))); };
        return grad_check(f, {x, gamma, beta});
      }));
  add("group_norm_nodes",
      check_layer("group_norm_nodes", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({2, 6, 4}, rng);
        Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({4}, rng);
        auto f = [&]() {
          return sum(square(group_norm_nodes(x, 2, gamma, beta)));
        };
        return grad_check(f, {x, gamma, beta});
      }));
  add("elu", check_layer("elu", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
        auto f = [&]() { return sum(square(elu(x))); };
        return grad_check(f, {x});
      }));
  add("linear", check_layer("linear", layer_seeds, [](RngStream& rng) {
        Tensor x = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({6, 4}, rng);
        Tensor b = random_tensor({6}, rng);
        auto f = [&]() { return sum(square(linear(x, w, b))); };
        return grad_check(f, {x, w, b});
      }));
  add("adaptive_avg_pool",
      check_layer("adaptive_avg_pool", layer_seeds, [](RngStream& rng) {
        Tensor big = random_tensor({1, 2, 9, 9}, rng);
        Tensor small = random_tensor({1, 2, 4, 4}, rng);
        auto f = [&]() {
          return dmn::add(sum(square(adaptive_avg_pool(big))),
                          sum(square(adaptive_avg_pool(small))));
        };
        return grad_check(f, {big, small});
      }));
  add("gat_layer", check_layer("gat_layer", layer_seeds, [](RngStream& rng) {
        const Adjacency adj = ring_graph(6);
        Tensor h = random_tensor({1, 6, 4}, rng);
        Tensor w = random_tensor({5, 4}, rng);
        Tensor a = random_tensor({10}, rng);
        auto f = [&]() { return sum(square(gat_layer(h, adj, w, a))); };
        return grad_check(f, {h, w, a});
      }));
  add("gcn_layer", check_layer("gcn_layer", layer_seeds, [](RngStream& rng) {
        const Adjacency adj = ring_graph(6);
        Tensor h = random_tensor({1, 6, 4}, rng);
        Tensor w = random_tensor({5, 4}, rng);
        auto f = [&]() { return sum(square(gcn_layer(h, adj, w))); };
        return grad_check(f, {h, w});
      }));
  add("loss_total", check_layer("loss_total", end_to_end_seeds,
                                [](RngStream& rng) { return end_to_end_check(rng); }));
  return out;
}

double gradcheck_suite_worst(const std::vector<GradSuiteEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

}  // namespace dmn
