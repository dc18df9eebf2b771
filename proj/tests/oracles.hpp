#pragma once

// Scalar-loop reference implementations. None of these call into the library
// except for the Matrix container itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smoothlab/matrix.hpp"
#include "smoothlab/rng.hpp"
#include "smoothlab/transformer.hpp"

namespace oracle {

using smoothlab::Matrix;
using smoothlab::Vector;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += (long double)a(i, k) * b(k, j);
      c(i, j) = (double)s;
    }
  return c;
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    long double mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max<long double>(mx, m(i, j));
    long double z = 0;
    for (std::size_t j = 0; j < m.cols(); ++j) z += std::exp((long double)m(i, j) - mx);
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(i, j) = (double)(std::exp((long double)m(i, j) - mx) / z);
  }
  return out;
}

struct LayerNormOut {
  Matrix y;
  Vector std;
};

inline LayerNormOut layer_norm(const Matrix& h, const Vector& gamma, const Vector& beta,
                               double eps) {
  LayerNormOut r{Matrix(h.rows(), h.cols()), Vector(h.rows())};
  const std::size_t d = h.cols();
  for (std::size_t i = 0; i < h.rows(); ++i) {
    long double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += h(i, j);
    mean /= d;
    long double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (h(i, j) - mean) * (h(i, j) - mean);
    var /= d;
    r.std[i] = (double)std::sqrt(var);
    const long double den = std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const long double z = den == 0 ? 0 : (h(i, j) - mean) / den;
      r.y(i, j) = (double)(gamma[j] * z + beta[j]);
    }
  }
  return r;
}

inline Matrix attention(const Matrix& x, const smoothlab::HeadParams& hp) {
  const std::size_t n = x.rows();
  const Matrix q = oracle::matmul(x, hp.wq);
  const Matrix k = oracle::matmul(x, hp.wk);
  Matrix logits(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += (long double)q(i, c) * k(j, c);
      logits(i, j) = (double)s;
    }
  return oracle::softmax_rows(logits);
}

struct BlockOut {
  Matrix y;
  std::vector<Matrix> attn;
  Vector std1;
  Vector std2;
};

inline BlockOut block_forward(const Matrix& x, const smoothlab::BlockParams& p) {
  const std::size_t n = x.rows(), d = x.cols(), dff = p.w1.cols();
  BlockOut out;
  Matrix pre1 = x;
  for (const auto& hp : p.heads) {
    const Matrix a = oracle::attention(x, hp);
    out.attn.push_back(a);
    const Matrix ax = oracle::matmul(a, x);
    const Matrix axw = oracle::matmul(ax, hp.wvo);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) pre1(i, j) += axw(i, j);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) pre1(i, j) += p.attn_bias[j];
  auto ln1 = oracle::layer_norm(pre1, p.ln1.gamma, p.ln1.beta, p.ln1.eps);
  out.std1 = ln1.std;
  const Matrix& z = ln1.y;

  Matrix hidden(n, dff);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < dff; ++f) {
      long double s = p.b1[f];
      for (std::size_t j = 0; j < d; ++j) s += (long double)z(i, j) * p.w1(j, f);
      hidden(i, f) = s > 0 ? (double)s : 0.0;
    }
  Matrix pre2(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      long double s = (long double)z(i, j) + p.b2[j];
      for (std::size_t f = 0; f < dff; ++f) s += (long double)hidden(i, f) * p.w2(f, j);
      pre2(i, j) = (double)s;
    }
  auto ln2 = oracle::layer_norm(pre2, p.ln2.gamma, p.ln2.beta, p.ln2.eps);
  out.std2 = ln2.std;
  out.y = ln2.y;
  return out;
}

// min over C of ||H - 1 C^T||_F: the minimizer is the column mean.
inline double distance_to_M(const Matrix& h) {
  long double total = 0;
  for (std::size_t j = 0; j < h.cols(); ++j) {
    long double mean = 0;
    for (std::size_t i = 0; i < h.rows(); ++i) mean += h(i, j);
    mean /= h.rows();
    for (std::size_t i = 0; i < h.rows(); ++i) total += (h(i, j) - mean) * (h(i, j) - mean);
  }
  return (double)std::sqrt(total);
}

inline double cos_sim(const Matrix& h) {
  const std::size_t n = h.rows();
  long double acc = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      long double ij = 0, ii = 0, jj = 0;
      for (std::size_t c = 0; c < h.cols(); ++c) {
        ij += (long double)h(i, c) * h(j, c);
        ii += (long double)h(i, c) * h(i, c);
        jj += (long double)h(j, c) * h(j, c);
      }
      acc += ij / std::sqrt(ii * jj);
    }
  return (double)(acc / (n * (n - 1)));
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)});
}

inline Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c,
                            double lo = -1.0, double hi = 1.0) {
  smoothlab::SplitMix64 rng(seed);
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

// A fresh, empty directory under the system temp dir, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("smoothlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
