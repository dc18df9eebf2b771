#include "smoothlab/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smoothlab/format.hpp"

namespace smoothlab {

namespace {

void check_layers(std::span<const Matrix> layers, const char* what) {
  if (layers.empty()) {
    throw std::invalid_argument(std::string(what) + ": need at least one layer");
  }
  for (const auto& h : layers) require_same_shape(layers.front(), h, what);
}

// Stabilized softmax of gate scores for token t, written into `weights` row t.
void gate_weights_for_token(std::span<const Matrix> layers, const GateParams& p,
                            std::size_t t, std::span<double> out) {
  double mx = -INFINITY;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    out[k] = dot(p.w, layers[k].row(t)) + p.b;
    mx = std::max(mx, out[k]);
  }
  if (!std::isfinite(mx)) throw std::invalid_argument("gate_fuse: non-finite score");
  double sum = 0.0;
  for (double& s : out) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (double& s : out) s /= sum;
}

}  // namespace

ConcatParams ConcatParams::uniform(std::size_t layers) {
  if (layers == 0) throw std::invalid_argument("ConcatParams: no layers");
  return {Vector(layers, 1.0 / static_cast<double>(layers))};
}

Matrix concat_fuse(std::span<const Matrix> layers, const ConcatParams& p) {
  check_layers(layers, "concat_fuse");
  if (p.alphas.size() != layers.size()) {
    throw std::invalid_argument("concat_fuse: " + std::to_string(p.alphas.size()) +
                                " alphas for " + std::to_string(layers.size()) +
                                " layers");
  }
  Matrix out(layers.front().rows(), layers.front().cols());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto in = layers[k].data();
    auto acc = out.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.alphas[k] * in[i];
  }
  return out;
}

Matrix max_fuse(std::span<const Matrix> layers) {
  check_layers(layers, "max_fuse");
  Matrix out = layers.front();
  for (std::size_t k = 1; k < layers.size(); ++k) {
    const auto in = layers[k].data();
    auto acc = out.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::max(acc[i], in[i]);
  }
  return out;
}

GateResult gate_fuse(std::span<const Matrix> layers, const GateParams& p) {
  check_layers(layers, "gate_fuse");
  const std::size_t n = layers.front().rows();
  const std::size_t d = layers.front().cols();
  if (p.w.size() != d) {
    throw std::invalid_argument("gate_fuse: gate weight length must equal d");
  }
  GateResult r{Matrix(n, d), Matrix(n, layers.size())};
  for (std::size_t t = 0; t < n; ++t) {
    auto weights = r.weights.row(t);
    gate_weights_for_token(layers, p, t, weights);
    auto out = r.output.row(t);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto h = layers[k].row(t);
      for (std::size_t j = 0; j < d; ++j) out[j] += weights[k] * h[j];
    }
  }
  return r;
}

GateGradient gate_fuse_grad(std::span<const Matrix> layers, const GateParams& p,
                            const Matrix& upstream) {
  check_layers(layers, "gate_fuse_grad");
  require_same_shape(layers.front(), upstream, "gate_fuse_grad");
  const std::size_t n = upstream.rows();
  const std::size_t d = upstream.cols();
  const std::size_t L = layers.size();
  if (p.w.size() != d) {
    throw std::invalid_argument("gate_fuse_grad: gate weight length must equal d");
  }

  GateGradient g;
  g.grad_w.assign(d, 0.0);
  g.grad_layers.assign(L, Matrix(n, d));
  Vector weights(L), score_grad(L);
  for (std::size_t t = 0; t < n; ++t) {
    gate_weights_for_token(layers, p, t, weights);
    const auto u = upstream.row(t);
    // f_t = sum_k I_k c_k with c_k = <u_t, H_k^t>; the softmax Jacobian
    // diag(I) - I I^T gives df/ds_k = I_k (c_k - sum_j I_j c_j).
    double mean_c = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      score_grad[k] = dot(u, layers[k].row(t));
      mean_c += weights[k] * score_grad[k];
    }
    for (std::size_t k = 0; k < L; ++k) {
      score_grad[k] = weights[k] * (score_grad[k] - mean_c);
      g.grad_b += score_grad[k];
    }
    for (std::size_t k = 0; k < L; ++k) {
      const auto h = layers[k].row(t);
      auto gh = g.grad_layers[k].row(t);
      for (std::size_t j = 0; j < d; ++j) {
        g.grad_w[j] += score_grad[k] * h[j];
        // Direct path through the weighted sum plus the path through s_k.
        gh[j] = weights[k] * u[j] + score_grad[k] * p.w[j];
      }
    }
  }
  return g;
}

std::string gate_weights_csv(const Matrix& weights) {
  std::ostringstream out;
  for (std::size_t k = 0; k < weights.cols(); ++k) {
    out << (k ? "," : "") << "layer_" << (k + 1);
  }
  out << '\n';
  for (std::size_t t = 0; t < weights.rows(); ++t) {
    for (std::size_t k = 0; k < weights.cols(); ++k) {
      out << (k ? "," : "") << format_real(weights(t, k));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace smoothlab
