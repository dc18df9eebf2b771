#pragma once

#include <cstddef>

#include "smoothlab/matrix.hpp"

namespace smoothlab {

struct LayerNormParams {
  Vector gamma;
  Vector beta;
  double eps = 1e-12;

  static LayerNormParams identity(std::size_t d, double eps = 1e-12) {
    return {Vector(d, 1.0), Vector(d, 0.0), eps};
  }
};

struct LayerNormResult {
  Matrix output;
  // Per-token sqrt(population variance), without eps.
  Vector std;
};

/// Result of a power iteration.
struct SpectralEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
};

struct PowerIterationOptions {
  double rel_tol = 1e-10;
  std::size_t max_iter = 10000;
};

/// Row-wise softmax in max-subtracted form. Throws on non-finite input.
Matrix softmax_rows(const Matrix& m);

/// Post-residual LayerNorm over each row using the population variance.
/// Requires at least two columns. Rows with zero variance and eps == 0 map to
/// beta.
LayerNormResult layer_norm(const Matrix& h, const LayerNormParams& p);

/// Largest eigenvalue of a symmetric positive-semidefinite matrix.
///
/// Deterministic starts: the normalized ones vector, the alternating +-1
/// vector with its mean removed, and the matrix column of largest norm.
/// Starts annihilated by the matrix are skipped; the largest estimate over
/// the remaining starts is returned, with `iterations` summed over them.
SpectralEstimate top_eigenvalue_psd(const Matrix& s,
                                    const PowerIterationOptions& opt = {});

/// Largest singular value via power iteration on W^T W. Zero matrix gives 0.
SpectralEstimate sigma_max(const Matrix& w, const PowerIterationOptions& opt = {});

/// A^T (I - e e^T) A with e = n^{-1/2} * ones.
Matrix centered_gram(const Matrix& ahat);

/// Largest eigenvalue of A^T (I - e e^T) A, clamped to >= 0.
SpectralEstimate lambda_max_centered(const Matrix& ahat,
                                     const PowerIterationOptions& opt = {});

/// Max over rows of |row sum - 1|.
double row_stochastic_error(const Matrix& a);

}  // namespace smoothlab
