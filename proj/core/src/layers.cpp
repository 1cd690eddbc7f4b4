#include "dmn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace dmn {

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape().size() != rank)
    throw ShapeMismatch(std::string(op) + ": unexpected tensor rank");
}

// Four independent accumulators break the serial add-latency chain of a
// naive dot product; summation order is fixed, so results stay deterministic.
double dot(const double* __restrict a, const double* __restrict b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3));
}

// y[i] += s * x[i] over disjoint buffers.
void axpy(double s, const double* __restrict x, double* __restrict y, int n) {
  for (int i = 0; i < n; ++i) y[i] += s * x[i];
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  expect_rank(input, 4, "conv2d");
  expect_rank(weight, 4, "conv2d");
  const int B = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  const int O = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  if (weight.shape()[1] != C || bias.shape() != std::vector<int>{O})
    throw ShapeMismatch("conv2d: weight/bias shapes inconsistent with input");
  if (stride < 1) throw InvalidArgument("conv2d: stride must be >= 1");
  const int Ho = (H + 2 * padding - kh) / stride + 1;
  const int Wo = (W + 2 * padding - kw) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeMismatch("conv2d: kernel larger than input");

  auto pin = input.node(), pw = weight.node(), pb = bias.node();
  std::vector<double> out(static_cast<std::size_t>(B) * O * Ho * Wo);
  const auto& x = pin->value;
  const auto& w = pw->value;
  const auto in_plane = static_cast<std::size_t>(H) * W;
  const auto out_plane = static_cast<std::size_t>(Ho) * Wo;

  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o) {
      double* op = out.data() + (static_cast<std::size_t>(b) * O + o) * out_plane;
      const double bv = pb->value[o];
      for (std::size_t i = 0; i < out_plane; ++i) op[i] = bv;
      for (int c = 0; c < C; ++c) {
        const double* ip = x.data() + (static_cast<std::size_t>(b) * C + c) * in_plane;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = w[((static_cast<std::size_t>(o) * C + c) * kh + ky) * kw + kx];
            if (wv == 0.0) continue;
            for (int y = 0; y < Ho; ++y) {
              const int iy = y * stride + ky - padding;
              if (iy < 0 || iy >= H) continue;
              const int x0 = std::max(0, (padding - kx + stride - 1) / stride);
              const int x1 = std::min(Wo - 1, (W - 1 - kx + padding) / stride);
              double* orow = op + static_cast<std::size_t>(y) * Wo;
              const double* irow = ip + static_cast<std::size_t>(iy) * W - padding + kx;
              if (stride == 1) {
                axpy(wv, irow + x0, orow + x0, x1 - x0 + 1);
              } else {
                for (int xo = x0; xo <= x1; ++xo)
                  orow[xo] += wv * irow[xo * stride];
              }
            }
          }
      }
    }

  return detail::make_op(
      {B, O, Ho, Wo}, std::move(out), {pin, pw, pb},
      [=](TensorNode& n) {
        const auto& g = n.grad;
        for (int b = 0; b < B; ++b)
          for (int o = 0; o < O; ++o) {
            const double* gp =
                g.data() + (static_cast<std::size_t>(b) * O + o) * out_plane;
            if (pb->requires_grad) {
              double acc = 0.0;
              for (std::size_t i = 0; i < out_plane; ++i) acc += gp[i];
              pb->grad[o] += acc;
            }
            for (int c = 0; c < C; ++c) {
              const double* ip =
                  pin->value.data() + (static_cast<std::size_t>(b) * C + c) * in_plane;
              double* dip =
                  pin->requires_grad
                      ? pin->grad.data() + (static_cast<std::size_t>(b) * C + c) * in_plane
                      : nullptr;
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  const std::size_t widx =
                      ((static_cast<std::size_t>(o) * C + c) * kh + ky) * kw + kx;
                  const double wv = pw->value[widx];
                  double dw = 0.0;
                  for (int y = 0; y < Ho; ++y) {
                    const int iy = y * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    const int x0 = std::max(0, (padding - kx + stride - 1) / stride);
                    const int x1 = std::min(Wo - 1, (W - 1 - kx + padding) / stride);
                    const double* grow = gp + static_cast<std::size_t>(y) * Wo;
                    const std::size_t ioff =
                        static_cast<std::size_t>(iy) * W - padding + kx;
                    if (stride == 1) {
                      const int len = x1 - x0 + 1;
                      dw += dot(grow + x0, ip + ioff + x0, len);
                      if (dip) axpy(wv, grow + x0, dip + ioff + x0, len);
                    } else {
                      for (int xo = x0; xo <= x1; ++xo) {
                        dw += grow[xo] * ip[ioff + xo * stride];
                        if (dip) dip[ioff + xo * stride] += wv * grow[xo];
                      }
                    }
                  }
                  if (pw->requires_grad) pw->grad[widx] += dw;
                }
            }
          }
      });
}

Tensor maxpool2(const Tensor& input) {
  expect_rank(input, 4, "maxpool2");
  const int B = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  if (H % 2 != 0 || W % 2 != 0)
    throw OddSpatialDims("maxpool2: spatial dims must be even");
  const int Ho = H / 2, Wo = W / 2;
  auto pin = input.node();
  std::vector<double> out(static_cast<std::size_t>(B) * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& x = pin->value;
  std::size_t oi = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* plane = x.data() + static_cast<std::size_t>(bc) * H * W;
    for (int y = 0; y < Ho; ++y)
      for (int xo = 0; xo < Wo; ++xo, ++oi) {
        // first-index tie-break: strict comparison keeps the earliest max
        std::size_t best = static_cast<std::size_t>(2 * y) * W + 2 * xo;
        double bv = plane[best];
        const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
        for (std::size_t ci : cand)
          if (plane[ci] > bv) {
            bv = plane[ci];
            best = ci;
          }
        out[oi] = bv;
        (*argmax)[oi] = static_cast<std::size_t>(bc) * H * W + best;
      }
  }
  return detail::make_op({B, C, Ho, Wo}, std::move(out), {pin},
                         [pin, argmax](TensorNode& n) {
                           for (std::size_t i = 0; i < n.grad.size(); ++i)
                             pin->grad[(*argmax)[i]] += n.grad[i];
                         });
}

namespace {

// Shared group-norm core over explicit (group element) index sets.
struct GnSaved {
  std::vector<double> mean, inv_std;
};

}  // namespace

Tensor group_norm(const Tensor& input, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  if (input.shape().size() < 2) throw ShapeMismatch("group_norm: rank < 2");
  const int B = input.shape()[0], C = input.shape()[1];
  if (groups < 1 || C % groups != 0)
    throw IndivisibleGroups("group_norm: channels not divisible by groups");
  if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
    throw ShapeMismatch("group_norm: gamma/beta must have C elements");
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < input.shape().size(); ++d)
    spatial *= static_cast<std::size_t>(input.shape()[d]);
  const int Cg = C / groups;
  const std::size_t gsize = static_cast<std::size_t>(Cg) * spatial;

  auto pin = input.node(), pg = gamma.node(), pb = beta.node();
  const auto& x = pin->value;
  std::vector<double> out(x.size());
  auto saved = std::make_shared<GnSaved>();
  saved->mean.resize(static_cast<std::size_t>(B) * groups);
  saved->inv_std.resize(saved->mean.size());

  for (int b = 0; b < B; ++b)
    for (int g = 0; g < groups; ++g) {
      const std::size_t base =
          (static_cast<std::size_t>(b) * C + static_cast<std::size_t>(g) * Cg) * spatial;
      double mean = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) mean += x[base + i];
      mean /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) {
        const double d = x[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      saved->mean[b * groups + g] = mean;
      saved->inv_std[b * groups + g] = inv_std;
      for (int cg = 0; cg < Cg; ++cg) {
        const int c = g * Cg + cg;
        const double ga = pg->value[c], be = pb->value[c];
        const std::size_t coff = base + static_cast<std::size_t>(cg) * spatial;
        for (std::size_t s = 0; s < spatial; ++s)
          out[coff + s] = ga * (x[coff + s] - mean) * inv_std + be;
      }
    }

  return detail::make_op(
      input.shape(), std::move(out), {pin, pg, pb},
      [=](TensorNode& n) {
        const auto& g = n.grad;
        for (int b = 0; b < B; ++b)
          for (int grp = 0; grp < groups; ++grp) {
            const std::size_t base =
                (static_cast<std::size_t>(b) * C +
                 static_cast<std::size_t>(grp) * Cg) * spatial;
            const double mean = saved->mean[b * groups + grp];
            const double inv_std = saved->inv_std[b * groups + grp];
            double sum_gh = 0.0, sum_gh_xhat = 0.0;
            for (int cg = 0; cg < Cg; ++cg) {
              const int c = grp * Cg + cg;
              const double ga = pg->value[c];
              const std::size_t coff = base + static_cast<std::size_t>(cg) * spatial;
              double dgamma = 0.0, dbeta = 0.0;
              for (std::size_t s = 0; s < spatial; ++s) {
                const double xhat = (pin->value[coff + s] - mean) * inv_std;
                const double go = g[coff + s];
                dgamma += go * xhat;
                dbeta += go;
                const double gh = go * ga;
                sum_gh += gh;
                sum_gh_xhat += gh * xhat;
              }
              if (pg->requires_grad) pg->grad[c] += dgamma;
              if (pb->requires_grad) pb->grad[c] += dbeta;
            }
            if (!pin->requires_grad) continue;
            const double inv_m = 1.0 / static_cast<double>(gsize);
            for (int cg = 0; cg < Cg; ++cg) {
              const int c = grp * Cg + cg;
              const double ga = pg->value[c];
              const std::size_t coff = base + static_cast<std::size_t>(cg) * spatial;
              for (std::size_t s = 0; s < spatial; ++s) {
                const double xhat = (pin->value[coff + s] - mean) * inv_std;
                const double gh = g[coff + s] * ga;
                pin->grad[coff + s] +=
                    inv_std * (gh - inv_m * sum_gh - xhat * inv_m * sum_gh_xhat);
              }
            }
          }
      });
}

Tensor group_norm_nodes(const Tensor& input, int groups, const Tensor& gamma,
                        const Tensor& beta, double eps) {
  expect_rank(input, 3, "group_norm_nodes");
  const int B = input.shape()[0], N = input.shape()[1], F = input.shape()[2];
  if (groups < 1 || F % groups != 0)
    throw IndivisibleGroups("group_norm_nodes: features not divisible by groups");
  if (gamma.shape() != std::vector<int>{F} || beta.shape() != std::vector<int>{F})
    throw ShapeMismatch("group_norm_nodes: gamma/beta must have F elements");
  const int Fg = F / groups;
  const std::size_t gsize = static_cast<std::size_t>(Fg) * N;

  auto pin = input.node(), pg = gamma.node(), pb = beta.node();
  const auto& x = pin->value;
  std::vector<double> out(x.size());
  auto saved = std::make_shared<GnSaved>();
  saved->mean.resize(static_cast<std::size_t>(B) * groups);
  saved->inv_std.resize(saved->mean.size());

  auto idx = [N, F](int b, int n, int f) {
    return (static_cast<std::size_t>(b) * N + n) * F + f;
  };

  for (int b = 0; b < B; ++b)
    for (int g = 0; g < groups; ++g) {
      double mean = 0.0;
      for (int n = 0; n < N; ++n)
        for (int fg = 0; fg < Fg; ++fg) mean += x[idx(b, n, g * Fg + fg)];
      mean /= static_cast<double>(gsize);
      double var = 0.0;
      for (int n = 0; n < N; ++n)
        for (int fg = 0; fg < Fg; ++fg) {
          const double d = x[idx(b, n, g * Fg + fg)] - mean;
          var += d * d;
        }
      var /= static_cast<double>(gsize);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      saved->mean[b * groups + g] = mean;
      saved->inv_std[b * groups + g] = inv_std;
      for (int n = 0; n < N; ++n)
        for (int fg = 0; fg < Fg; ++fg) {
          const int f = g * Fg + fg;
          out[idx(b, n, f)] =
              pg->value[f] * (x[idx(b, n, f)] - mean) * inv_std + pb->value[f];
        }
    }

  return detail::make_op(
      input.shape(), std::move(out), {pin, pg, pb},
      [=](TensorNode& nd) {
        const auto& g = nd.grad;
        for (int b = 0; b < B; ++b)
          for (int grp = 0; grp < groups; ++grp) {
            const double mean = saved->mean[b * groups + grp];
            const double inv_std = saved->inv_std[b * groups + grp];
            double sum_gh = 0.0, sum_gh_xhat = 0.0;
            for (int fg = 0; fg < Fg; ++fg) {
              const int f = grp * Fg + fg;
              double dgamma = 0.0, dbeta = 0.0;
              for (int n = 0; n < N; ++n) {
                const std::size_t i = idx(b, n, f);
                const double xhat = (pin->value[i] - mean) * inv_std;
                dgamma += g[i] * xhat;
                dbeta += g[i];
                const double gh = g[i] * pg->value[f];
                sum_gh += gh;
                sum_gh_xhat += gh * xhat;
              }
              if (pg->requires_grad) pg->grad[f] += dgamma;
              if (pb->requires_grad) pb->grad[f] += dbeta;
            }
            if (!pin->requires_grad) continue;
            const double inv_m = 1.0 / static_cast<double>(gsize);
            for (int fg = 0; fg < Fg; ++fg) {
              const int f = grp * Fg + fg;
              for (int n = 0; n < N; ++n) {
                const std::size_t i = idx(b, n, f);
                const double xhat = (pin->value[i] - mean) * inv_std;
                const double gh = g[i] * pg->value[f];
                pin->grad[i] +=
                    inv_std * (gh - inv_m * sum_gh - xhat * inv_m * sum_gh_xhat);
              }
            }
          }
      });
}

Tensor elu(const Tensor& input, double alpha) {
  auto pin = input.node();
  std::vector<double> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = pin->value[i];
    out[i] = x > 0.0 ? x : alpha * (std::exp(x) - 1.0);
  }
  return detail::make_op(input.shape(), std::move(out), {pin},
                         [pin, alpha](TensorNode& n) {
                           for (std::size_t i = 0; i < n.grad.size(); ++i) {
                             const double x = pin->value[i];
                             const double d =
                                 x > 0.0 ? 1.0 : n.value[i] + alpha;  // alpha e^x
                             pin->grad[i] += d * n.grad[i];
                           }
                         });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  expect_rank(weight, 2, "linear");
  if (input.shape().empty()) throw ShapeMismatch("linear: scalar input");
  const int in = input.shape().back();
  const int out_f = weight.shape()[0];
  if (weight.shape()[1] != in || bias.shape() != std::vector<int>{out_f})
    throw ShapeMismatch("linear: weight/bias shapes inconsistent with input");
  const std::size_t rows = input.numel() / static_cast<std::size_t>(in);

  auto pin = input.node(), pw = weight.node(), pb = bias.node();
  std::vector<double> out(rows * out_f);
  // For a large weight matrix (feature-pooling layers) the weight row is the
  // streamed operand: visit it once and reuse it across every input row so
  // the matrix is read once per call, not once per row.
  const bool weight_major = pw->value.size() > pin->value.size();
  if (weight_major) {
    for (int o = 0; o < out_f; ++o) {
      const double* wr = pw->value.data() + static_cast<std::size_t>(o) * in;
      const double bv = pb->value[o];
      for (std::size_t r = 0; r < rows; ++r)
        out[r * out_f + o] = bv + dot(pin->value.data() + r * in, wr, in);
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = pin->value.data() + r * in;
      double* yr = out.data() + r * out_f;
      for (int o = 0; o < out_f; ++o)
        yr[o] = pb->value[o] +
                dot(xr, pw->value.data() + static_cast<std::size_t>(o) * in, in);
    }
  }
  std::vector<int> out_shape = input.shape();
  out_shape.back() = out_f;

  return detail::make_op(
      std::move(out_shape), std::move(out), {pin, pw, pb},
      [=](TensorNode& n) {
        if (weight_major) {
          for (int o = 0; o < out_f; ++o) {
            const double* wr =
                pw->value.data() + static_cast<std::size_t>(o) * in;
            double* dwr =
                pw->requires_grad
                    ? pw->grad.data() + static_cast<std::size_t>(o) * in
                    : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
              const double go = n.grad[r * out_f + o];
              if (go == 0.0) continue;
              if (pin->requires_grad)
                axpy(go, wr, pin->grad.data() + r * in, in);
              if (dwr) axpy(go, pin->value.data() + r * in, dwr, in);
              if (pb->requires_grad) pb->grad[o] += go;
            }
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = n.grad.data() + r * out_f;
            const double* xr = pin->value.data() + r * in;
            double* dxr =
                pin->requires_grad ? pin->grad.data() + r * in : nullptr;
            for (int o = 0; o < out_f; ++o) {
              const double go = gr[o];
              if (go == 0.0) continue;
              if (dxr)
                axpy(go, pw->value.data() + static_cast<std::size_t>(o) * in,
                     dxr, in);
              if (pw->requires_grad)
                axpy(go, xr,
                     pw->grad.data() + static_cast<std::size_t>(o) * in, in);
              if (pb->requires_grad) pb->grad[o] += go;
            }
          }
        }
      });
}

Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w) {
  expect_rank(input, 4, "adaptive_avg_pool");
  const int B = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  if (H < 1 || W < 1 || out_h < 1 || out_w < 1)
    throw InputTooSmall("adaptive_avg_pool: empty input or output");
  // The floor/ceil bin bounds also cover H < out_h: bins then overlap and
  // are never empty, so small late-stage encoder maps pool cleanly.

  auto bin = [](int i, int n, int out) {
    return std::pair<int, int>{(i * n) / out,
                               (static_cast<int>(i) + 1) * n % out == 0
                                   ? ((i + 1) * n) / out
                                   : ((i + 1) * n + out - 1) / out};
  };
  auto pin = input.node();
  std::vector<double> out(static_cast<std::size_t>(B) * C * out_h * out_w);
  std::size_t oi = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* plane = pin->value.data() + static_cast<std::size_t>(bc) * H * W;
    for (int y = 0; y < out_h; ++y) {
      const auto [y0, y1] = bin(y, H, out_h);
      for (int x = 0; x < out_w; ++x, ++oi) {
        const auto [x0, x1] = bin(x, W, out_w);
        double acc = 0.0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) acc += plane[iy * W + ix];
        out[oi] = acc / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  return detail::make_op(
      {B, C, out_h, out_w}, std::move(out), {pin}, [=](TensorNode& n) {
        std::size_t gi = 0;
        for (int bc = 0; bc < B * C; ++bc) {
          double* dplane = pin->grad.data() + static_cast<std::size_t>(bc) * H * W;
          for (int y = 0; y < out_h; ++y) {
            const auto [y0, y1] = bin(y, H, out_h);
            for (int x = 0; x < out_w; ++x, ++gi) {
              const auto [x0, x1] = bin(x, W, out_w);
              const double g = n.grad[gi] / ((y1 - y0) * (x1 - x0));
              for (int iy = y0; iy < y1; ++iy)
                for (int ix = x0; ix < x1; ++ix) dplane[iy * W + ix] += g;
            }
          }
        }
      });
}

namespace {

struct GatSaved {
  // per sample: z [N, Fout]; per (sample, node): alpha + leaky factor per
  // neighbor (self last).
  std::vector<double> z;
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> slope_factor;
};

void expect_graph_feats(const Tensor& t, const Adjacency& adj, const char* op) {
  if (t.shape().size() != 3)
    throw ShapeMismatch(std::string(op) + ": node features must be [B, N, F]");
  if (static_cast<std::size_t>(t.shape()[1]) != adj->size())
    throw ShapeMismatch(std::string(op) + ": node count != adjacency size");
}

}  // namespace

Tensor gat_layer(const Tensor& node_feats, const Adjacency& adjacency,
                 const Tensor& weight, const Tensor& attn_vec,
                 double leaky_slope) {
  expect_graph_feats(node_feats, adjacency, "gat_layer");
  expect_rank(weight, 2, "gat_layer");
  const int B = node_feats.shape()[0], N = node_feats.shape()[1];
  const int Fin = node_feats.shape()[2];
  const int Fout = weight.shape()[0];
  if (weight.shape()[1] != Fin ||
      attn_vec.shape() != std::vector<int>{2 * Fout})
    throw ShapeMismatch("gat_layer: weight/attention shapes inconsistent");

  auto ph = node_feats.node(), pw = weight.node(), pa = attn_vec.node();
  auto saved = std::make_shared<GatSaved>();
  saved->z.resize(static_cast<std::size_t>(B) * N * Fout);
  saved->alpha.resize(static_cast<std::size_t>(B) * N);
  saved->slope_factor.resize(saved->alpha.size());

  std::vector<double> out(static_cast<std::size_t>(B) * N * Fout, 0.0);
  std::vector<double> s1(N), s2(N);
  const double* a1 = pa->value.data();
  const double* a2 = pa->value.data() + Fout;

  for (int b = 0; b < B; ++b) {
    double* zb = saved->z.data() + static_cast<std::size_t>(b) * N * Fout;
    const double* hb = ph->value.data() + static_cast<std::size_t>(b) * N * Fin;
    for (int n = 0; n < N; ++n) {
      const double* hn = hb + static_cast<std::size_t>(n) * Fin;
      double* zn = zb + static_cast<std::size_t>(n) * Fout;
      for (int f = 0; f < Fout; ++f) {
        const double* wr = pw->value.data() + static_cast<std::size_t>(f) * Fin;
        double acc = 0.0;
        for (int i = 0; i < Fin; ++i) acc += wr[i] * hn[i];
        zn[f] = acc;
      }
      double d1 = 0.0, d2 = 0.0;
      for (int f = 0; f < Fout; ++f) {
        d1 += a1[f] * zn[f];
        d2 += a2[f] * zn[f];
      }
      s1[n] = d1;
      s2[n] = d2;
    }
    for (int i = 0; i < N; ++i) {
      const auto& nbrs = (*adjacency)[i];
      const int deg = static_cast<int>(nbrs.size()) + 1;  // + self
      auto& alpha = saved->alpha[static_cast<std::size_t>(b) * N + i];
      auto& sf = saved->slope_factor[static_cast<std::size_t>(b) * N + i];
      alpha.resize(deg);
      sf.resize(deg);
      double emax = -1e300;
      for (int t = 0; t < deg; ++t) {
        const int j = t < deg - 1 ? nbrs[t] : i;
        const double pre = s1[i] + s2[j];
        sf[t] = pre > 0.0 ? 1.0 : leaky_slope;
        alpha[t] = pre > 0.0 ? pre : leaky_slope * pre;
        emax = std::max(emax, alpha[t]);
      }
      double esum = 0.0;
      for (int t = 0; t < deg; ++t) {
        alpha[t] = std::exp(alpha[t] - emax);
        esum += alpha[t];
      }
      double* oi = out.data() + (static_cast<std::size_t>(b) * N + i) * Fout;
      for (int t = 0; t < deg; ++t) {
        alpha[t] /= esum;
        const int j = t < deg - 1 ? nbrs[t] : i;
        const double* zj = zb + static_cast<std::size_t>(j) * Fout;
        for (int f = 0; f < Fout; ++f) oi[f] += alpha[t] * zj[f];
      }
    }
  }

  Adjacency adj = adjacency;
  return detail::make_op(
      {B, N, Fout}, std::move(out), {ph, pw, pa},
      [=](TensorNode& nd) {
        std::vector<double> dz(static_cast<std::size_t>(N) * Fout);
        std::vector<double> ds1(N), ds2(N);
        for (int b = 0; b < B; ++b) {
          std::fill(dz.begin(), dz.end(), 0.0);
          std::fill(ds1.begin(), ds1.end(), 0.0);
          std::fill(ds2.begin(), ds2.end(), 0.0);
          const double* zb = saved->z.data() + static_cast<std::size_t>(b) * N * Fout;
          const double* gb = nd.grad.data() + static_cast<std::size_t>(b) * N * Fout;
          for (int i = 0; i < N; ++i) {
            const auto& nbrs = (*adj)[i];
            const int deg = static_cast<int>(nbrs.size()) + 1;
            const auto& alpha = saved->alpha[static_cast<std::size_t>(b) * N + i];
            const auto& sf = saved->slope_factor[static_cast<std::size_t>(b) * N + i];
            const double* gi = gb + static_cast<std::size_t>(i) * Fout;
            // d_alpha, then softmax backward to the logits
            double dot = 0.0;
            std::vector<double> dalpha(deg);
            for (int t = 0; t < deg; ++t) {
              const int j = t < deg - 1 ? nbrs[t] : i;
              const double* zj = zb + static_cast<std::size_t>(j) * Fout;
              double da = 0.0;
              for (int f = 0; f < Fout; ++f) {
                da += gi[f] * zj[f];
                dz[static_cast<std::size_t>(j) * Fout + f] += alpha[t] * gi[f];
              }
              dalpha[t] = da;
              dot += alpha[t] * da;
            }
            for (int t = 0; t < deg; ++t) {
              const int j = t < deg - 1 ? nbrs[t] : i;
              const double dpre = alpha[t] * (dalpha[t] - dot) * sf[t];
              ds1[i] += dpre;
              ds2[j] += dpre;
            }
          }
          // fan ds1/ds2 into attention vector and z
          for (int n = 0; n < N; ++n) {
            const double* zn = zb + static_cast<std::size_t>(n) * Fout;
            double* dzn = dz.data() + static_cast<std::size_t>(n) * Fout;
            for (int f = 0; f < Fout; ++f) {
              if (pa->requires_grad) {
                pa->grad[f] += ds1[n] * zn[f];
                pa->grad[Fout + f] += ds2[n] * zn[f];
              }
              dzn[f] += ds1[n] * pa->value[f] + ds2[n] * pa->value[Fout + f];
            }
          }
          // z = h W^T
          const double* hb = ph->value.data() + static_cast<std::size_t>(b) * N * Fin;
          double* dhb =
              ph->requires_grad
                  ? ph->grad.data() + static_cast<std::size_t>(b) * N * Fin
                  : nullptr;
          for (int n = 0; n < N; ++n) {
            const double* hn = hb + static_cast<std::size_t>(n) * Fin;
            const double* dzn = dz.data() + static_cast<std::size_t>(n) * Fout;
            for (int f = 0; f < Fout; ++f) {
              const double g = dzn[f];
              if (g == 0.0) continue;
              const double* wr = pw->value.data() + static_cast<std::size_t>(f) * Fin;
              if (pw->requires_grad) {
                double* dwr = pw->grad.data() + static_cast<std::size_t>(f) * Fin;
                for (int i = 0; i < Fin; ++i) dwr[i] += g * hn[i];
              }
              if (dhb) {
                double* dhn = dhb + static_cast<std::size_t>(n) * Fin;
                for (int i = 0; i < Fin; ++i) dhn[i] += g * wr[i];
              }
            }
          }
        }
      });
}

Tensor gcn_layer(const Tensor& node_feats, const Adjacency& adjacency,
                 const Tensor& weight) {
  expect_graph_feats(node_feats, adjacency, "gcn_layer");
  expect_rank(weight, 2, "gcn_layer");
  const int B = node_feats.shape()[0], N = node_feats.shape()[1];
  const int Fin = node_feats.shape()[2];
  const int Fout = weight.shape()[0];
  if (weight.shape()[1] != Fin)
    throw ShapeMismatch("gcn_layer: weight shape inconsistent with input");

  auto inv_sqrt_deg = std::make_shared<std::vector<double>>(N);
  for (int i = 0; i < N; ++i)
    (*inv_sqrt_deg)[i] = 1.0 / std::sqrt(static_cast<double>((*adjacency)[i].size() + 1));

  auto ph = node_feats.node(), pw = weight.node();
  auto z = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(B) * N * Fout);
  std::vector<double> out(z->size(), 0.0);

  for (int b = 0; b < B; ++b) {
    const double* hb = ph->value.data() + static_cast<std::size_t>(b) * N * Fin;
    double* zb = z->data() + static_cast<std::size_t>(b) * N * Fout;
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < Fout; ++f) {
        const double* wr = pw->value.data() + static_cast<std::size_t>(f) * Fin;
        const double* hn = hb + static_cast<std::size_t>(n) * Fin;
        double acc = 0.0;
        for (int i = 0; i < Fin; ++i) acc += wr[i] * hn[i];
        zb[static_cast<std::size_t>(n) * Fout + f] = acc;
      }
    double* ob = out.data() + static_cast<std::size_t>(b) * N * Fout;
    for (int i = 0; i < N; ++i) {
      double* oi = ob + static_cast<std::size_t>(i) * Fout;
      const double di = (*inv_sqrt_deg)[i];
      for (int j : (*adjacency)[i]) {
        const double c = di * (*inv_sqrt_deg)[j];
        const double* zj = zb + static_cast<std::size_t>(j) * Fout;
        for (int f = 0; f < Fout; ++f) oi[f] += c * zj[f];
      }
      const double cself = di * di;
      const double* zi = zb + static_cast<std::size_t>(i) * Fout;
      for (int f = 0; f < Fout; ++f) oi[f] += cself * zi[f];
    }
  }

  Adjacency adj = adjacency;
  return detail::make_op(
      {B, N, Fout}, std::move(out), {ph, pw},
      [=](TensorNode& nd) {
        std::vector<double> dz(static_cast<std::size_t>(N) * Fout);
        for (int b = 0; b < B; ++b) {
          std::fill(dz.begin(), dz.end(), 0.0);
          const double* gb = nd.grad.data() + static_cast<std::size_t>(b) * N * Fout;
          for (int i = 0; i < N; ++i) {
            const double* gi = gb + static_cast<std::size_t>(i) * Fout;
            const double di = (*inv_sqrt_deg)[i];
            for (int j : (*adj)[i]) {
              const double c = di * (*inv_sqrt_deg)[j];
              double* dzj = dz.data() + static_cast<std::size_t>(j) * Fout;
              for (int f = 0; f < Fout; ++f) dzj[f] += c * gi[f];
            }
            const double cself = di * di;
            double* dzi = dz.data() + static_cast<std::size_t>(i) * Fout;
            for (int f = 0; f < Fout; ++f) dzi[f] += cself * gi[f];
          }
          const double* hb = ph->value.data() + static_cast<std::size_t>(b) * N * Fin;
          double* dhb =
              ph->requires_grad
                  ? ph->grad.data() + static_cast<std::size_t>(b) * N * Fin
                  : nullptr;
          for (int n = 0; n < N; ++n) {
            const double* hn = hb + static_cast<std::size_t>(n) * Fin;
            const double* dzn = dz.data() + static_cast<std::size_t>(n) * Fout;
            for (int f = 0; f < Fout; ++f) {
              const double g = dzn[f];
              if (g == 0.0) continue;
              const double* wr = pw->value.data() + static_cast<std::size_t>(f) * Fin;
              if (pw->requires_grad) {
                double* dwr = pw->grad.data() + static_cast<std::size_t>(f) * Fin;
                for (int i = 0; i < Fin; ++i) dwr[i] += g * hn[i];
              }
              if (dhb) {
                double* dhn = dhb + static_cast<std::size_t>(n) * Fin;
                for (int i = 0; i < Fin; ++i) dhn[i] += g * wr[i];
              }
            }
          }
        }
      });
}

Tensor graph_laplacian(const Tensor& positions, const Adjacency& adjacency) {
  expect_graph_feats(positions, adjacency, "graph_laplacian");
  const int B = positions.shape()[0], N = positions.shape()[1];
  const int F = positions.shape()[2];
  for (int i = 0; i < N; ++i)
    if ((*adjacency)[i].empty())
      throw IsolatedVertex("graph_laplacian: vertex " + std::to_string(i) +
                           " has no neighbors");

  auto pin = positions.node();
  std::vector<double> out(pin->value.size());
  for (int b = 0; b < B; ++b) {
    const double* pb = pin->value.data() + static_cast<std::size_t>(b) * N * F;
    double* ob = out.data() + static_cast<std::size_t>(b) * N * F;
    for (int i = 0; i < N; ++i) {
      const auto& nbrs = (*adjacency)[i];
      const double inv = 1.0 / static_cast<double>(nbrs.size());
      for (int f = 0; f < F; ++f) {
        double acc = 0.0;
        for (int j : nbrs) acc += pb[static_cast<std::size_t>(j) * F + f];
        ob[static_cast<std::size_t>(i) * F + f] =
            pb[static_cast<std::size_t>(i) * F + f] - acc * inv;
      }
    }
  }
  Adjacency adj = adjacency;
  return detail::make_op(
      positions.shape(), std::move(out), {pin}, [=](TensorNode& nd) {
        for (int b = 0; b < B; ++b) {
          const double* gb = nd.grad.data() + static_cast<std::size_t>(b) * N * F;
          double* db = pin->grad.data() + static_cast<std::size_t>(b) * N * F;
          for (int i = 0; i < N; ++i) {
            const auto& nbrs = (*adj)[i];
            const double inv = 1.0 / static_cast<double>(nbrs.size());
            for (int f = 0; f < F; ++f) {
              const double g = gb[static_cast<std::size_t>(i) * F + f];
              db[static_cast<std::size_t>(i) * F + f] += g;
              for (int j : nbrs) db[static_cast<std::size_t>(j) * F + f] -= g * inv;
            }
          }
        }
      });
}

}  // namespace dmn
