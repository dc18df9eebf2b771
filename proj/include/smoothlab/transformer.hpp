#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smoothlab/linalg.hpp"
#include "smoothlab/matrix.hpp"
#include "smoothlab/rng.hpp"
#include "smoothlab/sharing.hpp"

namespace smoothlab {

/// One attention head. `wvo` is the combined value-output map W^V W^{O T}.
struct HeadParams {
  Matrix wq;   // d x d_h
  Matrix wk;   // d x d_h
  Matrix wvo;  // d x d

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct BlockShape {
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t d_ff = 0;

  std::size_t head_dim() const { return d / heads; }
  void validate() const;
};

/// Desk-scale stand-in for a BERT-base layer (n = 128 tokens).
inline constexpr BlockShape kBertBaseShape{768, 12, 3072};
inline constexpr std::size_t kBertBaseTokens = 128;
inline constexpr std::size_t kBertBaseLayers = 12;

/// Weights of one post-LayerNorm block:
///   Z = LN1(X + sum_k A_k X Wvo_k + 1 b^T)
///   Y = LN2(Z + ReLU(Z W1 + 1 b1^T) W2 + 1 b2^T)
struct BlockParams {
  std::vector<HeadParams> heads;
  Vector attn_bias;
  Matrix w1;  // d x d_ff
  Vector b1;
  Matrix w2;  // d_ff x d
  Vector b2;
  LayerNormParams ln1;
  LayerNormParams ln2;

  std::size_t d() const { return w1.rows(); }
  std::size_t d_ff() const { return w1.cols(); }
  BlockShape shape() const { return {d(), heads.size(), d_ff()}; }

  /// Throws std::invalid_argument naming the first inconsistent field.
  void validate() const;

  friend bool operator==(const BlockParams& a, const BlockParams& b) {
    auto ln_eq = [](const LayerNormParams& x, const LayerNormParams& y) {
      return x.gamma == y.gamma && x.beta == y.beta && x.eps == y.eps;
    };
    return a.heads == b.heads && a.attn_bias == b.attn_bias && a.w1 == b.w1 &&
           a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2 && ln_eq(a.ln1, b.ln1) &&
           ln_eq(a.ln2, b.ln2);
  }
};

struct AttentionScores {
  Matrix logits;  // (X Wq)(X Wk)^T, unscaled
  Matrix probs;   // row softmax of logits
};

struct BlockTrace {
  Matrix input;
  std::vector<Matrix> attn;
  Vector pre_ln1_std;
  Vector pre_ln2_std;
  Matrix post_attn;
  Matrix output;
};

struct StackTrace {
  Matrix embeddings;
  std::vector<BlockTrace> blocks;
  std::optional<std::vector<std::size_t>> share_map;

  std::size_t layers() const { return blocks.size(); }
  std::size_t heads() const { return blocks.empty() ? 0 : blocks.front().attn.size(); }
  /// H_l; layer 0 is the embeddings.
  const Matrix& hidden(std::size_t layer) const;
};

/// Attention logits and probabilities of one head. No 1/sqrt(d_h) scaling.
AttentionScores attention(const Matrix& x, const HeadParams& head);
Matrix attention_matrix(const Matrix& x, const HeadParams& head);

BlockTrace block_forward(const Matrix& x, const BlockParams& p);

/// Runs the block with externally supplied attention matrices, one per head.
BlockTrace block_forward(const Matrix& x, const BlockParams& p,
                         std::span<const Matrix> attention);

/// Runs the blocks in order. Layers in the shared range reuse the attention
/// matrices their source layer recorded (see share_sources).
StackTrace stack_forward(const Matrix& x0, std::span<const BlockParams> blocks,
                         const std::optional<ShareConfig>& share = {});
StackTrace stack_forward(const Matrix& x0, std::span<const BlockParams> blocks,
                         const std::vector<std::size_t>& sources);

/// Draw order per block: for each head Wq, Wk, Wvo; then attn_bias, W1, b1,
/// W2, b2. Every entry is uniform in [-scale, scale]; LayerNorms are unit
/// scale, zero shift, eps 1e-12.
BlockParams random_block(SplitMix64& rng, const BlockShape& shape, double weight_scale);
BlockParams random_block(std::uint64_t seed, const BlockShape& shape,
                         double weight_scale);
/// All blocks drawn from one stream seeded with `seed`.
std::vector<BlockParams> random_stack(std::uint64_t seed, const BlockShape& shape,
                                      std::size_t layers, double weight_scale);

}  // namespace smoothlab
