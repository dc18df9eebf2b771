#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smoothlab/matrix.hpp"
#include "smoothlab/transformer.hpp"

namespace smoothlab {

/// Relative slack used for every proved inequality.
inline constexpr double kBoundSlack = 1e-9;

/// Mean cosine similarity over ordered pairs of distinct tokens.
/// Requires n >= 2 and no zero rows.
double cos_sim(const Matrix& h);

/// Cosine of two flat vectors; exactly 1 for bitwise-equal inputs.
double cosine(std::span<const double> a, std::span<const double> b);

/// Frobenius distance from H to the subspace of matrices with identical
/// rows, i.e. ||(I - ee^T) H||_F.
double distance_to_M(const Matrix& h);

/// H minus its column-mean row. Constant columns centre to exact zeros.
Matrix center_columns(const Matrix& h);

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs

  bool holds(double rel = kBoundSlack) const;
};

/// The four contraction inequalities for d_M:
///   weight:      d_M(HW)          <= s d_M(H)
///   relu:        d_M(ReLU(H))     <= d_M(H)
///   combination: d_M(a1 H + a2 B) <= a1 d_M(H) + a2 d_M(B)
///   attention:   d_M(A H)         <= sqrt(lambda_max) d_M(H)
struct Lemma1Report {
  InequalityCheck weight;
  InequalityCheck relu;
  InequalityCheck combination;
  InequalityCheck attention;

  bool holds(double rel = kBoundSlack) const;
};

/// Rejects non-row-stochastic `ahat` (tolerance 1e-10) and negative weights.
Lemma1Report verify_lemma1(const Matrix& h, const Matrix& b, const Matrix& w,
                           const Matrix& ahat, double a1, double a2);

/// Per-block contraction bound d_M(H_out) <= v d_M(H_in) with
/// v = (1 + s^2)(1 + sqrt(lambda) h s) / (sigma1 sigma2).
struct ContractionReport {
  double s = 0.0;
  double lambda = 0.0;
  std::size_t heads = 0;
  double sigma1 = 0.0;  // min pre-LN1 std over tokens, without eps
  double sigma2 = 0.0;
  double sigma1_eps = 0.0;  // sqrt(sigma1^2 + eps1)
  double sigma2_eps = 0.0;
  double v = 0.0;
  double dm_in = 0.0;
  double dm_out = 0.0;
  bool bound_holds = true;
  bool spectra_converged = true;
};

double contraction_factor(double s, double lambda, std::size_t heads, double sigma1,
                          double sigma2);

/// Largest singular value over every head's Wvo, W1 and W2.
double block_max_singular_value(const BlockParams& p, bool* converged = nullptr);

ContractionReport contraction_report(const BlockTrace& t, const BlockParams& p);

struct StackReport {
  std::vector<ContractionReport> layers;
  double v_product = 1.0;
  double dm_ratio = 0.0;  // d_M(H_L) / d_M(H_0); 0 when both vanish
};

StackReport check_stack(const StackTrace& trace, std::span<const BlockParams> params);

/// sigma1 * sigma2 of layer `layer` (1-based).
double sigma_product(const StackTrace& trace, std::size_t layer);

/// Gaussian kernel density estimate.
class DensityEstimate {
 public:
  /// Default bandwidth is Scott's rule m^{-1/5} * sample std (ddof = 1),
  /// falling back to 1 when the spread is zero.
  explicit DensityEstimate(std::vector<double> samples);
  DensityEstimate(std::vector<double> samples, double bandwidth);

  double bandwidth() const noexcept { return bandwidth_; }
  const std::vector<double>& samples() const noexcept { return samples_; }

  double operator()(double x) const;
  std::vector<double> evaluate(std::span<const double> grid) const;

 private:
  std::vector<double> samples_;
  double bandwidth_ = 1.0;
};

double scott_bandwidth(std::span<const double> samples);

/// Cosine similarity between the flattened multi-head attention of each pair
/// of consecutive layers; length L-1.
std::vector<double> attn_layer_similarity(const StackTrace& trace);

}  // namespace smoothlab
