#include "smoothlab/graphview.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "smoothlab/format.hpp"

namespace smoothlab {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square, got " +
                                std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
}

}  // namespace

double AttentionGraph::degree(std::size_t i) const {
  return std::exp(log_degrees.at(i));
}

AttentionGraph graph_from_logits(const Matrix& logits) {
  require_square(logits, "graph_from_logits");
  if (!logits.all_finite()) {
    throw std::invalid_argument("graph_from_logits: non-finite logits");
  }
  AttentionGraph g;
  g.n = logits.rows();
  g.logits = logits;
  g.log_degrees.resize(g.n);
  g.rw_normalized = Matrix(g.n, g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    g.log_degrees[i] = mx + std::log(s);
    for (std::size_t j = 0; j < g.n; ++j) {
      g.rw_normalized(i, j) = std::exp(row[j] - g.log_degrees[i]);
    }
  }
  return g;
}

AttentionGraph graph_from_head(const Matrix& x, const HeadParams& head) {
  return graph_from_logits(attention(x, head).logits);
}

AttentionGraph graph_from_attention(const Matrix& ahat) {
  require_square(ahat, "graph_from_attention");
  if (row_stochastic_error(ahat) > 1e-10) {
    throw std::invalid_argument("graph_from_attention: rows must sum to 1");
  }
  AttentionGraph g;
  g.n = ahat.rows();
  g.rw_normalized = ahat;
  g.logits = Matrix(g.n, g.n);
  for (std::size_t k = 0; k < ahat.size(); ++k) {
    const double a = ahat.data()[k];
    if (a < 0.0) throw std::invalid_argument("graph_from_attention: negative weight");
    g.logits.data()[k] = a > 0.0 ? std::log(a) : -std::numeric_limits<double>::infinity();
  }
  g.log_degrees.assign(g.n, 0.0);
  return g;
}

Matrix sym_normalize(const Matrix& weights) {
  require_square(weights, "sym_normalize");
  const std::size_t n = weights.rows();
  Vector inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : weights.row(i)) s += v;
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("sym_normalize: row " + std::to_string(i) +
                                  " has nonpositive degree");
    }
    inv_sqrt[i] = 1.0 / std::sqrt(s);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = inv_sqrt[i] * weights(i, j) * inv_sqrt[j];
  return out;
}

Matrix resgcn_forward(const Matrix& x, const Matrix& ahat, const Matrix& w) {
  if (ahat.rows() != x.rows() || ahat.cols() != x.rows() || w.rows() != x.cols() ||
      w.cols() != x.cols()) {
    throw std::invalid_argument("resgcn_forward: shape mismatch");
  }
  return x + relu(matmul(matmul(ahat, x), w));
}

namespace {

double doubly_stochastic_error(const Matrix& m) {
  const std::size_t n = m.rows();
  double worst = row_stochastic_error(m);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& a, double tol, std::size_t max_iter) {
  require_square(a, "sinkhorn");
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be positive");
  for (double v : a.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("sinkhorn: entries must be positive and finite");
    }
  }
  const std::size_t n = a.rows();
  SinkhornResult r{a, 0, false, doubly_stochastic_error(a)};
  while (r.deviation >= tol && r.iterations < max_iter) {
    Matrix& m = r.matrix;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v;
      for (double& v : m.row(i)) v /= s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += m(i, j);
      for (std::size_t i = 0; i < n; ++i) m(i, j) /= s;
    }
    ++r.iterations;
    r.deviation = doubly_stochastic_error(m);
  }
  r.converged = r.deviation < tol;
  return r;
}

GraphFormat parse_graph_format(std::string_view name) {
  if (name == "dot") return GraphFormat::Dot;
  if (name == "edge-list" || name == "edgelist" || name == "tsv") {
    return GraphFormat::EdgeList;
  }
  throw std::invalid_argument("unknown graph format '" + std::string(name) +
                              "' (expected dot or edge-list)");
}

std::string export_graph(const AttentionGraph& g, GraphFormat format,
                         double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("export_graph: threshold must lie in [0, 1)");
  }
  std::ostringstream out;
  if (format == GraphFormat::Dot) {
    out << "digraph attention {\n";
    for (std::size_t i = 0; i < g.n; ++i) out << "  " << i << ";\n";
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      const double w = g.rw_normalized(i, j);
      if (i == j || !(w > threshold)) continue;
      const std::string label = format_fixed(w, 4);
      if (format == GraphFormat::Dot) {
        out << "  " << i << " -> " << j << " [label=\"" << label
            << "\", weight=" << label << "];\n";
      } else {
        out << i << '\t' << j << '\t' << label << '\n';
      }
    }
  }
  if (format == GraphFormat::Dot) out << "}\n";
  return out.str();
}

std::vector<Edge> parse_edge_list(std::string_view text) {
  std::vector<Edge> edges;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                  ": expected 3 tab-separated fields");
    }
    Edge e;
    auto index = [&](std::string_view s) {
      std::size_t v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                    ": bad node id");
      }
      return v;
    };
    e.from = index(line.substr(0, t1));
    e.to = index(line.substr(t1 + 1, t2 - t1 - 1));
    e.weight = parse_real(line.substr(t2 + 1));
    edges.push_back(e);
  }
  return edges;
}

}  // namespace smoothlab
