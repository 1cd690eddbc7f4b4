#pragma once

#include <memory>
#include <vector>

#include "dmn/tensor.hpp"

namespace dmn {

struct OddSpatialDims : Error {
  using Error::Error;
};
struct IndivisibleGroups : Error {
  using Error::Error;
};
struct InputTooSmall : Error {
  using Error::Error;
};

// Neighbor lists (no self-loops); graph layers add the self contribution.
using Adjacency = std::shared_ptr<const std::vector<std::vector<int>>>;

// Cross-correlation, NCHW. Output spatial dims follow stride/padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 1);

// 2x2 max pooling, stride 2; gradient routed to the first argmax per window.
Tensor maxpool2(const Tensor& input);

// Group normalization over [B, C, *]; statistics per (sample, group).
Tensor group_norm(const Tensor& input, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

// Group normalization for node features [B, N, F]; statistics per
// (sample, feature group) over all nodes, affine per feature.
Tensor group_norm_nodes(const Tensor& input, int groups, const Tensor& gamma,
                        const Tensor& beta, double eps = 1e-5);

Tensor elu(const Tensor& input, double alpha = 1.0);

// Affine map over the last axis: input [..., in] x weight [out, in] + bias.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Adaptive average pooling to out_h x out_w; bin i spans
// [floor(i*H/out), ceil((i+1)*H/out)).
Tensor adaptive_avg_pool(const Tensor& input, int out_h = 7, int out_w = 7);

// Single-head graph attention over [B, N, F_in]:
//   e_ij = LeakyReLU(a . [W h_i || W h_j]), softmax over j in S(i) u {i},
//   h'_i = sum_j alpha_ij W h_j  (activation left to the caller).
Tensor gat_layer(const Tensor& node_feats, const Adjacency& adjacency,
                 const Tensor& weight, const Tensor& attn_vec,
                 double leaky_slope = 0.2);

// Symmetric-normalized graph convolution with self-loops:
//   H' = D^{-1/2} (A + I) D^{-1/2} H W^T.
Tensor gcn_layer(const Tensor& node_feats, const Adjacency& adjacency,
                 const Tensor& weight);

// Mean edge-difference operator per node, applied to [B, N, 3] positions.
Tensor graph_laplacian(const Tensor& positions, const Adjacency& adjacency);

}  // namespace dmn
