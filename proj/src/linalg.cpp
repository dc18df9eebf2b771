#include "smoothlab/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smoothlab {

Matrix softmax_rows(const Matrix& m) {
  if (!m.all_finite()) {
    throw std::invalid_argument("softmax_rows: non-finite input");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& x : o) x /= sum;
  }
  return out;
}

LayerNormResult layer_norm(const Matrix& h, const LayerNormParams& p) {
  const std::size_t d = h.cols();
  if (d < 2) {
    throw std::invalid_argument("layer_norm: need at least 2 features, got " +
                                std::to_string(d));
  }
  if (p.gamma.size() != d || p.beta.size() != d) {
    throw std::invalid_argument("layer_norm: gamma/beta length must equal " +
                                std::to_string(d));
  }
  if (!(p.eps >= 0.0)) {
    throw std::invalid_argument("layer_norm: eps must be non-negative");
  }

  LayerNormResult r{Matrix(h.rows(), d), Vector(h.rows(), 0.0)};
  Vector dev(d);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto x = h.row(i);
    // Mean taken relative to the first entry so constant rows centre to
    // exact zeros.
    const double ref = x[0];
    double shift = 0.0;
    for (double v : x) shift += v - ref;
    const double mean = ref + shift / static_cast<double>(d);

    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dev[j] = x[j] - mean;
      var += dev[j] * dev[j];
    }
    var /= static_cast<double>(d);
    r.std[i] = std::sqrt(var);

    const double denom = std::sqrt(var + p.eps);
    auto o = r.output.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double z = denom > 0.0 ? dev[j] / denom : 0.0;
      o[j] = p.gamma[j] * z + p.beta[j];
    }
  }
  return r;
}

namespace {

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector mat_vec(const Matrix& s, const Vector& v) {
  Vector w(s.rows(), 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i) w[i] = dot(s.row(i), v);
  return w;
}

std::array<Vector, 3> start_vectors(const Matrix& s) {
  const std::size_t n = s.rows();
  Vector ones(n, 1.0 / std::sqrt(static_cast<double>(n)));

  Vector alt(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    alt[i] = (i % 2 == 0) ? 1.0 : -1.0;
    mean += alt[i];
  }
  mean /= static_cast<double>(n);
  for (double& x : alt) x -= mean;

  std::size_t best = 0;
  double best_norm = -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += s(i, j) * s(i, j);
    if (c > best_norm) {
      best_norm = c;
      best = j;
    }
  }
  Vector col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = s(i, best);

  for (Vector* v : {&alt, &col}) {
    const double nv = norm2(*v);
    if (nv > 0.0) {
      for (double& x : *v) x /= nv;
    }
  }
  return {ones, alt, col};
}

}  // namespace

SpectralEstimate top_eigenvalue_psd(const Matrix& s,
                                    const PowerIterationOptions& opt) {
  if (s.rows() != s.cols()) {
    throw std::invalid_argument("top_eigenvalue_psd: matrix must be square");
  }
  const double scale = frobenius_norm(s);
  if (s.rows() == 0 || scale == 0.0) return {0.0, 0, true};

  // A start counts as orthogonal to the dominant direction when the first
  // product vanishes relative to the matrix scale.
  constexpr double kAnnihilated = 1e-12;

  // A start orthogonal to the top eigenvector converges to a smaller
  // eigenvalue, so every usable start runs and the largest estimate wins.
  SpectralEstimate best{0.0, 0, true};
  std::size_t total_iterations = 0;
  for (const Vector& start : start_vectors(s)) {
    if (norm2(start) == 0.0) continue;
    Vector v = start;
    Vector w = mat_vec(s, v);
    double estimate = norm2(w);
    if (estimate <= kAnnihilated * scale) continue;

    // ||S v|| with unit v is a lower bound on lambda_max for PSD S and
    // converges to it.
    SpectralEstimate run{estimate, opt.max_iter, false};
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / estimate;
      w = mat_vec(s, v);
      const double next = norm2(w);
      if (next == 0.0) {
        run = {0.0, it, true};
        break;
      }
      const double rayleigh = dot(v, w);
      double residual = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = w[i] - rayleigh * v[i];
        residual += r * r;
      }
      residual = std::sqrt(residual);
      const bool settled = std::abs(next - estimate) <= opt.rel_tol * next &&
                           residual <= std::sqrt(opt.rel_tol) * next;
      estimate = next;
      run.value = estimate;
      if (settled) {
        run.iterations = it;
        run.converged = true;
        break;
      }
    }
    total_iterations += run.iterations;
    if (run.value > best.value) best = run;
  }
  // When every start was annihilated the matrix is numerically zero on them.
  best.iterations = total_iterations;
  return best;
}

SpectralEstimate sigma_max(const Matrix& w, const PowerIterationOptions& opt) {
  if (frobenius_norm(w) == 0.0) return {0.0, 0, true};
  const Matrix gram = matmul(transpose(w), w);
  SpectralEstimate e = top_eigenvalue_psd(gram, opt);
  e.value = std::sqrt(std::max(e.value, 0.0));
  return e;
}

Matrix centered_gram(const Matrix& ahat) {
  if (ahat.rows() != ahat.cols()) {
    throw std::invalid_argument("centered_gram: matrix must be square");
  }
  const std::size_t n = ahat.rows();
  Matrix c = ahat;
  for (std::size_t j = 0; j < n; ++j) {
    const double ref = ahat(0, j);
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift += ahat(i, j) - ref;
    const double mean = ref + shift / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) c(i, j) = ahat(i, j) - mean;
  }
  // (I - ee^T) is an orthogonal projector, so A^T (I - ee^T) A = C^T C.
  return matmul(transpose(c), c);
}

SpectralEstimate lambda_max_centered(const Matrix& ahat,
                                     const PowerIterationOptions& opt) {
  if (ahat.rows() != ahat.cols() || ahat.rows() == 0) {
    throw std::invalid_argument("lambda_max_centered: matrix must be square");
  }
  SpectralEstimate e = top_eigenvalue_psd(centered_gram(ahat), opt);
  e.value = std::max(e.value, 0.0);
  return e;
}

double row_stochastic_error(const Matrix& a) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) s += x;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace smoothlab
