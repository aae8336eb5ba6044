#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "uwmmse/autodiff.hpp"
#include "uwmmse/channel.hpp"

namespace uwmmse {

inline constexpr std::size_t kFeatureDim = 3;
inline constexpr double kFeatureScale = 4.0;
inline constexpr std::size_t kDefaultHidden = 5;
inline constexpr double kEpsAdjacency = 1e-12;

// Two-layer graph convolution producing one real per node:
//   X1  = relu(A X0 W1 + b1)
//   out = A (X1 w2) + b2
// with A the normalized adjacency and X0 the node features.
struct GcnParams {
  std::size_t in_dim = kFeatureDim;
  std::size_t hidden = kDefaultHidden;
  Matrix w1;  // in_dim x hidden
  Vector b1;  // hidden
  Vector w2;  // hidden (the hidden x 1 output weight)
  double b2 = 0.0;

  std::size_t parameter_count() const noexcept { return in_dim * hidden + 2 * hidden + 1; }
  void validate() const;
  friend bool operator==(const GcnParams&, const GcnParams&) = default;
};

enum class GcnInit {
  standard,           // Glorot-uniform weights, zero biases
  identity_unfold_a,  // output is exactly 1 for every H
  identity_unfold_b,  // output is exactly 0 for every H
};

GcnParams init_params(std::uint64_t seed, GcnInit mode, std::size_t hidden = kDefaultHidden);

// A = D^-1 H + I with D the row sums of H (plus eps); row i mixes the
// neighbours of receiver i in proportion to their gains.
Matrix normalize_adjacency(const Matrix& h);

// Row i = (log(h_ii^2 / (s^2 + sum_{j!=i} h_ij^2)) / 4, 1,
//          log(h_ii^2 / (s^2 + sum_{j!=i} h_ji^2)) / 4):
// the worst-case SINR of link i and its signal-to-leakage ratio, both in a
// log scale so the features stay O(1) across path-loss spreads.
Matrix node_features(const ChannelMatrix& ch);

// The per-H quantities shared by every GCN evaluated on the same channel.
struct GraphInput {
  Matrix adjacency;   // M x M
  Matrix aggregated;  // A X0, M x kFeatureDim
};

GraphInput prepare_graph(const ChannelMatrix& ch);

Vector gcn_forward(const GraphInput& graph, const GcnParams& theta);
inline Vector gcn_forward(const ChannelMatrix& ch, const GcnParams& theta) {
  return gcn_forward(prepare_graph(ch), theta);
}

// Smallest |pre-activation| of the hidden relu; distance to the kink.
double gcn_relu_margin(const GraphInput& graph, const GcnParams& theta);

// Differentiable evaluation.
struct GcnVars {
  ad::Var w1, b1, w2, b2;  // shapes [in,h], [1,h], [h,1], [1,1]
};
struct GraphVars {
  ad::Var adjacency;   // [M,M]
  ad::Var aggregated;  // [M,in]
};

GcnVars gcn_leaves(ad::Tape& tape, const GcnParams& theta, bool requires_grad);
GraphVars graph_constants(ad::Tape& tape, const GraphInput& graph);
ad::Var gcn_forward(const GraphVars& graph, const GcnVars& theta);  // shape [M]

// Text serialization: a "gcn" line with the dimensions, then one line per
// tensor: name, dims, row-major values at round-trip precision.
void write_gcn_params(std::ostream& out, const GcnParams& theta);
// `line` tracks the current line number for error messages.
GcnParams read_gcn_params(std::istream& in, std::size_t& line);

}  // namespace uwmmse
