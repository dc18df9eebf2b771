#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "smoothlab/linalg.hpp"

using namespace smoothlab;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix random_stochastic(SplitMix64& rng, std::size_t n) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (double& x : a.row(i)) s += (x = rng.uniform(0.01, 1.0));
    for (double& x : a.row(i)) x /= s;
  }
  return a;
}

}  // namespace

TEST(Softmax, ZerosAreUniform) {
  const Matrix p = softmax_rows(Matrix(2, 2));
  EXPECT_EQ(p, (Matrix{{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const Matrix p = softmax_rows(Matrix{{1000.0, 0.0}});
  EXPECT_NEAR(p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-12);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  const Matrix m = oracle::random_matrix(11, 4, 4, -5, 5);
  EXPECT_LT(max_abs_diff(softmax_rows(m), oracle::softmax_rows(m)), 1e-14);
}

TEST(Softmax, RejectsNonFinite) {
  Matrix m(1, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax_rows(m), std::invalid_argument);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax_rows(m), std::invalid_argument);
}

TEST(SoftmaxProperty, RowsSumToOne) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t r = rng.between(1, 6), c = rng.between(1, 12);
    const double scale = std::exp(rng.uniform(-4.0, 6.0));
    const Matrix p = softmax_rows(random_matrix(rng, r, c, scale));
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (double x : p.row(i)) {
        ASSERT_GE(x, 0.0);
        ASSERT_LE(x, 1.0);
        s += x;
      }
      ASSERT_NEAR(s, 1.0, 1e-12) << "trial " << trial;
    }
  }
}

TEST(LayerNorm, ZeroMeanUnitRowIsFixed) {
  const auto r = layer_norm(Matrix{{1.0, -1.0}}, {{1, 1}, {0, 0}, 0.0});
  EXPECT_EQ(r.output, (Matrix{{1.0, -1.0}}));
  EXPECT_EQ(r.std[0], 1.0);
}

TEST(LayerNorm, ConstantRowGivesBeta) {
  LayerNormParams p{{2, 3, 4}, {0.5, -1, 7}, 1e-12};
  const auto r = layer_norm(Matrix{{3.3, 3.3, 3.3}}, p);
  EXPECT_EQ(r.std[0], 0.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.output(0, j), p.beta[j]);
  p.eps = 0.0;
  EXPECT_EQ(layer_norm(Matrix{{-2, -2, -2}}, p).output, (Matrix{{0.5, -1, 7}}));
}

TEST(LayerNorm, MatchesLoopOracle) {
  const Matrix h = oracle::random_matrix(5, 3, 5, -3, 3);
  SplitMix64 rng(6);
  LayerNormParams p{random_vector(rng, 5, 2.0), random_vector(rng, 5, 1.0), 1e-5};
  const auto r = layer_norm(h, p);
  const auto o = oracle::layer_norm(h, p.gamma, p.beta, p.eps);
  EXPECT_LT(max_abs_diff(r.output, o.y), 1e-13);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.std[i], o.std[i], 1e-14);
}

TEST(LayerNorm, RejectsDegenerateWidth) {
  EXPECT_THROW(layer_norm(Matrix(2, 1), LayerNormParams::identity(1)), std::invalid_argument);
  EXPECT_THROW(layer_norm(Matrix(2, 3), LayerNormParams::identity(2)), std::invalid_argument);
}

TEST(LayerNormProperty, StandardizesNonConstantRows) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng.between(1, 6), d = rng.between(2, 16);
    const Matrix h = add_row_vector(random_matrix(rng, n, d, rng.uniform(0.01, 50.0)),
                                    random_vector(rng, d, 100.0));
    const auto r = layer_norm(h, LayerNormParams::identity(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0, sq = 0;
      for (double x : r.output.row(i)) mean += x;
      mean /= d;
      for (double x : r.output.row(i)) sq += (x - mean) * (x - mean);
      ASSERT_NEAR(mean, 0.0, 1e-10);
      ASSERT_NEAR(std::sqrt(sq / d), 1.0, 1e-10);
    }
  }
}

TEST(SigmaMax, IdentityAndDiagonal) {
  EXPECT_NEAR(sigma_max(Matrix::identity(3)).value, 1.0, 1e-12);
  EXPECT_NEAR(sigma_max(Matrix{{3, 0}, {0, 2}}).value, 3.0, 1e-9);
}

TEST(SigmaMax, ZeroMatrixIsZero) {
  const auto r = sigma_max(Matrix(3, 2));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(SigmaMax, TwoByTwoClosedForm) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix w = random_matrix(rng, 2, 2, 2.0);
    // Eigenvalues of W^T W from its characteristic polynomial.
    const double a = w(0, 0) * w(0, 0) + w(1, 0) * w(1, 0);
    const double b = w(0, 0) * w(0, 1) + w(1, 0) * w(1, 1);
    const double c = w(0, 1) * w(0, 1) + w(1, 1) * w(1, 1);
    const double tr = a + c, det = a * c - b * b;
    const double top = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det)));
    EXPECT_LT(oracle::rel_diff(sigma_max(w).value, std::sqrt(top)), 1e-9) << trial;
  }
}

TEST(SigmaMax, MatchesEigenSvd) {
  SplitMix64 rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix w = random_matrix(rng, rng.between(1, 9), rng.between(1, 9), 1.5);
    const double ref = Eigen::JacobiSVD<Eigen::MatrixXd>(to_eigen(w)).singularValues()(0);
    const auto r = sigma_max(w);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(oracle::rel_diff(r.value, ref), 1e-8) << trial;
  }
}

TEST(SigmaMax, OnesStartOrthogonalToTopVector) {
  // W^T W = diag(4, 1) after rotation by 45 degrees: the ones vector is the
  // small eigenvector, so the first start never sees the top direction.
  const double r = 1.0 / std::sqrt(2.0);
  const Matrix w{{2 * r, -2 * r}, {r, r}};
  EXPECT_NEAR(sigma_max(w).value, 2.0, 1e-9);
}

TEST(SigmaMaxProperty, AbsoluteHomogeneity) {
  SplitMix64 rng(33);
  for (int trial = 0; trial < 300; ++trial) {
    const Matrix w = random_matrix(rng, rng.between(1, 7), rng.between(1, 7), 1.0);
    const double c = rng.uniform(-10, 10);
    EXPECT_LT(oracle::rel_diff(sigma_max(c * w).value, std::abs(c) * sigma_max(w).value),
              1e-9);
  }
}

TEST(PowerIteration, ReportsNonConvergenceAtCap) {
  // Generic PSD matrix: no start is an eigenvector, so 3 steps cannot settle.
  const Matrix b = oracle::random_matrix(77, 4, 4);
  const auto r = top_eigenvalue_psd(matmul(transpose(b), b), {1e-10, 3});
  EXPECT_FALSE(r.converged);
  EXPECT_GE(r.iterations, 3u);
  EXPECT_GT(r.value, 0.0);
}

TEST(LambdaMaxCentered, UniformIsZero) {
  EXPECT_NEAR(lambda_max_centered(Matrix(4, 4, 0.25)).value, 0.0, 1e-15);
}

TEST(LambdaMaxCentered, IdentityIsOne) {
  EXPECT_NEAR(lambda_max_centered(Matrix::identity(2)).value, 1.0, 1e-12);
}

TEST(LambdaMaxCentered, HandComputedTwoByTwo) {
  const Matrix a{{1.0, 0.0}, {0.5, 0.5}};
  const Matrix g = centered_gram(a);
  EXPECT_LT(max_abs_diff(g, Matrix{{0.125, -0.125}, {-0.125, 0.125}}), 1e-15);
  EXPECT_NEAR(lambda_max_centered(a).value, 0.25, 1e-12);
}

TEST(LambdaMaxCentered, RejectsNonSquare) {
  EXPECT_THROW(lambda_max_centered(Matrix(2, 3)), std::invalid_argument);
}

TEST(LambdaMaxCentered, MatchesEigenSolver) {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng.between(2, 10);
    const Matrix a = random_stochastic(rng, n);
    const Eigen::MatrixXd e = to_eigen(a);
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    const Eigen::MatrixXd s = e.transpose() * proj * e;
    const double ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().maxCoeff();
    const auto r = lambda_max_centered(a);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, ref, 1e-9 * std::max(1.0, ref)) << trial;
  }
}

TEST(LambdaMaxCenteredProperty, RowPermutationInvariant) {
  SplitMix64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng.between(2, 9);
    const Matrix a = random_stochastic(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.between(0, i)]);
    const double x = lambda_max_centered(a).value;
    const double y = lambda_max_centered(permute_rows(a, perm)).value;
    EXPECT_NEAR(x, y, 1e-9 * std::max(1.0, x));
  }
}

TEST(LambdaMaxCenteredProperty, OnesVectorIsAnnihilated) {
  SplitMix64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng.between(2, 9);
    const Matrix a = random_stochastic(rng, n);
    // (I - ee^T) A e with e = n^{-1/2} ones.
    Vector ae(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ae[i] += a(i, j) / std::sqrt(double(n));
    double mean = 0;
    for (double x : ae) mean += x / n;
    double norm = 0;
    for (double x : ae) norm += (x - mean) * (x - mean);
    EXPECT_LT(std::sqrt(norm), 1e-12);
    EXPECT_LT(row_stochastic_error(a), 1e-12);
  }
}
