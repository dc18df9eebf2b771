#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "smoothlab/matrix.hpp"

namespace smoothlab {

// Hierarchical fusion of per-layer representations H_1..H_L (all n x d).

struct ConcatParams {
  Vector alphas;

  static ConcatParams uniform(std::size_t layers);
};

/// Shared scoring function g(x) = w.x + b applied to every layer.
struct GateParams {
  Vector w;
  double b = 0.0;
};

struct GateResult {
  Matrix output;
  Matrix weights;  // n x L importance weights, rows sum to 1
};

struct GateGradient {
  Vector grad_w;
  double grad_b = 0.0;
  std::vector<Matrix> grad_layers;
};

/// sum_k alpha_k H_k.
Matrix concat_fuse(std::span<const Matrix> layers, const ConcatParams& p);

/// Elementwise maximum across layers.
Matrix max_fuse(std::span<const Matrix> layers);

/// Per token t: I^t = softmax_k(g(H_k^t)), output row t = sum_k I_k^t H_k^t.
GateResult gate_fuse(std::span<const Matrix> layers, const GateParams& p);

/// Gradient of <upstream, gate_fuse(layers, p).output> with respect to w, b
/// and every H_k.
GateGradient gate_fuse_grad(std::span<const Matrix> layers, const GateParams& p,
                            const Matrix& upstream);

/// CSV with header layer_1..layer_L and one row per token.
std::string gate_weights_csv(const Matrix& weights);

}  // namespace smoothlab
