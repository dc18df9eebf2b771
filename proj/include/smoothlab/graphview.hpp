#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "smoothlab/matrix.hpp"
#include "smoothlab/transformer.hpp"

namespace smoothlab {

/// Attention read as a weighted directed graph over tokens: edge i->j has
/// weight exp(L_ij). Weights stay in log form; only the random-walk
/// normalization D^{-1}A is materialized.
struct AttentionGraph {
  std::size_t n = 0;
  Matrix logits;
  Vector log_degrees;   // log sum_j exp(L_ij)
  Matrix rw_normalized; // exp(L_ij - log_degree_i)

  double degree(std::size_t i) const;
};

AttentionGraph graph_from_logits(const Matrix& logits);
/// Graph whose logits are X Wq (X Wk)^T for one head.
AttentionGraph graph_from_head(const Matrix& x, const HeadParams& head);
/// Graph of an already normalized (row-stochastic) attention matrix; logits
/// are log(A), degrees are 1.
AttentionGraph graph_from_attention(const Matrix& ahat);

/// D^{-1/2} A D^{-1/2} with D = diag(row sums). Rejects nonpositive row sums.
Matrix sym_normalize(const Matrix& weights);

/// X + ReLU(Ahat X W).
Matrix resgcn_forward(const Matrix& x, const Matrix& ahat, const Matrix& w);

struct SinkhornResult {
  Matrix matrix;
  std::size_t iterations = 0;
  bool converged = false;
  double deviation = 0.0;  // max |row or column sum - 1| of `matrix`
};

/// Alternating row-then-column scaling of an entrywise positive matrix.
SinkhornResult sinkhorn(const Matrix& a, double tol = 1e-12,
                        std::size_t max_iter = 100000);

enum class GraphFormat { Dot, EdgeList };

GraphFormat parse_graph_format(std::string_view name);

inline constexpr double kDefaultEdgeThreshold = 0.05;

/// Edges i->j (i != j) whose normalized weight exceeds `threshold`, as DOT or
/// as "i<TAB>j<TAB>weight" lines. Weights print with 4 decimals.
std::string export_graph(const AttentionGraph& g, GraphFormat format,
                         double threshold = kDefaultEdgeThreshold);

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
};

std::vector<Edge> parse_edge_list(std::string_view text);

}  // namespace smoothlab
