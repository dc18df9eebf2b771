#include "smoothlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace smoothlab {

double cosine(std::span<const double> a, std::span<const double> b) {
  const double ab = dot(a, b);
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) {
    throw std::invalid_argument("cosine: zero vector");
  }
  // sqrt(aa * aa) == aa exactly, so identical inputs give exactly 1.
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double cos_sim(const Matrix& h) {
  const std::size_t n = h.rows();
  if (n < 2) throw std::invalid_argument("cos_sim: need at least 2 tokens");
  Vector norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = dot(h.row(i), h.row(i));
    if (norms[i] == 0.0) {
      throw std::invalid_argument("cos_sim: token " + std::to_string(i) +
                                  " has zero norm");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = dot(h.row(i), h.row(j)) / std::sqrt(norms[i] * norms[j]);
      total += 2.0 * std::clamp(c, -1.0, 1.0);
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

Matrix center_columns(const Matrix& h) {
  Matrix c = h;
  const std::size_t n = h.rows();
  if (n == 0) return c;
  for (std::size_t j = 0; j < h.cols(); ++j) {
    const double ref = h(0, j);
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift += h(i, j) - ref;
    const double mean = ref + shift / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) c(i, j) = h(i, j) - mean;
  }
  return c;
}

double distance_to_M(const Matrix& h) { return frobenius_norm(center_columns(h)); }

bool InequalityCheck::holds(double rel) const {
  return slack >= -rel * std::max(1.0, std::abs(rhs));
}

bool Lemma1Report::holds(double rel) const {
  return weight.holds(rel) && relu.holds(rel) && combination.holds(rel) &&
         attention.holds(rel);
}

namespace {

InequalityCheck check(double lhs, double rhs) { return {lhs, rhs, rhs - lhs}; }

}  // namespace

Lemma1Report verify_lemma1(const Matrix& h, const Matrix& b, const Matrix& w,
                           const Matrix& ahat, double a1, double a2) {
  require_same_shape(h, b, "verify_lemma1");
  if (w.rows() != h.cols()) {
    throw std::invalid_argument("verify_lemma1: W must have d rows");
  }
  if (ahat.rows() != h.rows() || ahat.cols() != h.rows()) {
    throw std::invalid_argument("verify_lemma1: attention matrix must be n x n");
  }
  if (row_stochastic_error(ahat) > 1e-10) {
    throw std::invalid_argument("verify_lemma1: attention rows must sum to 1");
  }
  if (!(a1 >= 0.0 && a2 >= 0.0)) {
    throw std::invalid_argument("verify_lemma1: coefficients must be non-negative");
  }
  const double dm_h = distance_to_M(h);
  Lemma1Report r;
  r.weight = check(distance_to_M(matmul(h, w)), sigma_max(w).value * dm_h);
  r.relu = check(distance_to_M(relu(h)), dm_h);
  r.combination = check(distance_to_M(a1 * h + a2 * b),
                        a1 * dm_h + a2 * distance_to_M(b));
  r.attention = check(distance_to_M(matmul(ahat, h)),
                      std::sqrt(lambda_max_centered(ahat).value) * dm_h);
  return r;
}

double contraction_factor(double s, double lambda, std::size_t heads, double sigma1,
                          double sigma2) {
  const double num = (1.0 + s * s) *
                     (1.0 + std::sqrt(lambda) * static_cast<double>(heads) * s);
  const double den = sigma1 * sigma2;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

double block_max_singular_value(const BlockParams& p, bool* converged) {
  double s = 0.0;
  bool ok = true;
  auto take = [&](const Matrix& m) {
    const auto e = sigma_max(m);
    s = std::max(s, e.value);
    ok = ok && e.converged;
  };
  for (const auto& h : p.heads) take(h.wvo);
  take(p.w1);
  take(p.w2);
  if (converged) *converged = ok;
  return s;
}

ContractionReport contraction_report(const BlockTrace& t, const BlockParams& p) {
  if (t.attn.size() != p.heads.size() || t.input.cols() != p.d()) {
    throw std::invalid_argument("contraction_report: trace does not match params");
  }
  if (t.pre_ln1_std.empty() || t.pre_ln2_std.empty()) {
    throw std::invalid_argument("contraction_report: trace has no tokens");
  }
  ContractionReport r;
  bool s_ok = true;
  r.s = block_max_singular_value(p, &s_ok);
  r.spectra_converged = s_ok;
  for (const auto& a : t.attn) {
    const auto e = lambda_max_centered(a);
    r.lambda = std::max(r.lambda, e.value);
    r.spectra_converged = r.spectra_converged && e.converged;
  }
  r.heads = p.heads.size();
  r.sigma1 = *std::min_element(t.pre_ln1_std.begin(), t.pre_ln1_std.end());
  r.sigma2 = *std::min_element(t.pre_ln2_std.begin(), t.pre_ln2_std.end());
  r.sigma1_eps = std::sqrt(r.sigma1 * r.sigma1 + p.ln1.eps);
  r.sigma2_eps = std::sqrt(r.sigma2 * r.sigma2 + p.ln2.eps);
  r.v = contraction_factor(r.s, r.lambda, r.heads, r.sigma1, r.sigma2);
  r.dm_in = distance_to_M(t.input);
  r.dm_out = distance_to_M(t.output);
  r.bound_holds = std::isinf(r.v) || r.dm_out <= r.v * r.dm_in + kBoundSlack * r.dm_in;
  return r;
}

StackReport check_stack(const StackTrace& trace, std::span<const BlockParams> params) {
  if (params.size() != trace.layers()) {
    throw std::invalid_argument("check_stack: " + std::to_string(params.size()) +
                                " parameter blocks for " +
                                std::to_string(trace.layers()) + " layers");
  }
  StackReport r;
  for (std::size_t l = 0; l < params.size(); ++l) {
    r.layers.push_back(contraction_report(trace.blocks[l], params[l]));
    r.v_product *= r.layers.back().v;
  }
  const double first = distance_to_M(trace.embeddings);
  const double last = distance_to_M(trace.hidden(trace.layers()));
  r.dm_ratio = first == 0.0 ? (last == 0.0 ? 0.0 : std::numeric_limits<double>::infinity())
                            : last / first;
  return r;
}

double sigma_product(const StackTrace& trace, std::size_t layer) {
  if (layer < 1 || layer > trace.layers()) {
    throw std::out_of_range("sigma_product: layer " + std::to_string(layer) +
                            " out of range");
  }
  const auto& b = trace.blocks[layer - 1];
  if (b.pre_ln1_std.empty()) throw std::invalid_argument("sigma_product: empty layer");
  const double s1 = *std::min_element(b.pre_ln1_std.begin(), b.pre_ln1_std.end());
  const double s2 = *std::min_element(b.pre_ln2_std.begin(), b.pre_ln2_std.end());
  return s1 * s2;
}

double scott_bandwidth(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m == 0) throw std::invalid_argument("kde: no samples");
  if (m == 1) return 1.0;
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  if (sd == 0.0) return 1.0;
  return std::pow(static_cast<double>(m), -0.2) * sd;
}

DensityEstimate::DensityEstimate(std::vector<double> samples)
    : samples_(std::move(samples)) {
  bandwidth_ = scott_bandwidth(samples_);
}

DensityEstimate::DensityEstimate(std::vector<double> samples, double bandwidth)
    : samples_(std::move(samples)), bandwidth_(bandwidth) {
  if (samples_.empty()) throw std::invalid_argument("kde: no samples");
  if (!(bandwidth_ > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
}

double DensityEstimate::operator()(double x) const {
  const double inv = 1.0 / bandwidth_;
  double s = 0.0;
  for (double xi : samples_) {
    const double u = (x - xi) * inv;
    s += std::exp(-0.5 * u * u);
  }
  return s * std::numbers::inv_sqrtpi / std::numbers::sqrt2 /
         (static_cast<double>(samples_.size()) * bandwidth_);
}

std::vector<double> DensityEstimate::evaluate(std::span<const double> grid) const {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double x : grid) out.push_back((*this)(x));
  return out;
}

std::vector<double> attn_layer_similarity(const StackTrace& trace) {
  if (trace.layers() < 2) {
    throw std::invalid_argument("attn_layer_similarity: need at least 2 layers");
  }
  auto flatten = [](const BlockTrace& b) {
    Vector v;
    for (const auto& a : b.attn) v.insert(v.end(), a.data().begin(), a.data().end());
    return v;
  };
  std::vector<double> sims;
  Vector prev = flatten(trace.blocks[0]);
  for (std::size_t l = 1; l < trace.layers(); ++l) {
    Vector cur = flatten(trace.blocks[l]);
    if (cur.size() != prev.size()) {
      throw std::invalid_argument("attn_layer_similarity: head counts differ");
    }
    sims.push_back(cosine(prev, cur));
    prev = std::move(cur);
  }
  return sims;
}

}  // namespace smoothlab
