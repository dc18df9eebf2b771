#include "smoothlab/transformer.hpp"

#include <stdexcept>
#include <string>

namespace smoothlab {

namespace {

void expect(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

void BlockShape::validate() const {
  expect(heads >= 1, "block shape: need at least one head");
  expect(d >= 2, "block shape: d must be at least 2");
  expect(d % heads == 0, "block shape: heads (" + std::to_string(heads) +
                             ") must divide d (" + std::to_string(d) + ")");
  expect(d_ff >= 1, "block shape: d_ff must be positive");
}

void BlockParams::validate() const {
  const std::size_t dm = d();
  expect(!heads.empty(), "block: no attention heads");
  expect(dm >= 2, "block: W1 must have at least 2 rows");
  expect(dm % heads.size() == 0, "block: head count must divide d");
  const std::size_t dh = dm / heads.size();
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& h = heads[k];
    const std::string tag = "block: head " + std::to_string(k) + " ";
    expect(h.wq.rows() == dm && h.wq.cols() == dh, tag + "Wq is " + dims(h.wq));
    expect(h.wk.rows() == dm && h.wk.cols() == dh, tag + "Wk is " + dims(h.wk));
    expect(h.wvo.rows() == dm && h.wvo.cols() == dm, tag + "Wvo is " + dims(h.wvo));
  }
  expect(attn_bias.size() == dm, "block: attn_bias length");
  expect(d_ff() >= 1, "block: d_ff must be positive");
  expect(b1.size() == d_ff(), "block: b1 length");
  expect(w2.rows() == d_ff() && w2.cols() == dm, "block: W2 is " + dims(w2));
  expect(b2.size() == dm, "block: b2 length");
  for (const auto* ln : {&ln1, &ln2}) {
    expect(ln->gamma.size() == dm && ln->beta.size() == dm,
           "block: layer norm gamma/beta length");
    expect(ln->eps >= 0.0, "block: layer norm eps must be non-negative");
  }
}

const Matrix& StackTrace::hidden(std::size_t layer) const {
  if (layer == 0) return embeddings;
  if (layer > blocks.size()) {
    throw std::out_of_range("layer " + std::to_string(layer) + " out of range");
  }
  return blocks[layer - 1].output;
}

AttentionScores attention(const Matrix& x, const HeadParams& head) {
  if (x.cols() != head.wq.rows() || x.cols() != head.wk.rows() ||
      head.wq.cols() != head.wk.cols()) {
    throw std::invalid_argument("attention: X is " + dims(x) + ", Wq " +
                                dims(head.wq) + ", Wk " + dims(head.wk));
  }
  const Matrix q = matmul(x, head.wq);
  const Matrix k = matmul(x, head.wk);
  AttentionScores s;
  s.logits = matmul(q, transpose(k));
  s.probs = softmax_rows(s.logits);
  return s;
}

Matrix attention_matrix(const Matrix& x, const HeadParams& head) {
  return attention(x, head).probs;
}

BlockTrace block_forward(const Matrix& x, const BlockParams& p,
                         std::span<const Matrix> attn) {
  p.validate();
  const std::size_t n = x.rows();
  if (x.cols() != p.d()) {
    throw std::invalid_argument("block_forward: X is " + dims(x) +
                                " but block width is " + std::to_string(p.d()));
  }
  if (attn.size() != p.heads.size()) {
    throw std::invalid_argument("block_forward: expected " +
                                std::to_string(p.heads.size()) +
                                " attention matrices");
  }

  BlockTrace t;
  t.input = x;
  Matrix mixed = x;
  for (std::size_t k = 0; k < attn.size(); ++k) {
    if (attn[k].rows() != n || attn[k].cols() != n) {
      throw std::invalid_argument("block_forward: attention matrix " +
                                  std::to_string(k) + " is " + dims(attn[k]));
    }
    mixed = mixed + matmul(matmul(attn[k], x), p.heads[k].wvo);
    t.attn.push_back(attn[k]);
  }
  const auto ln1 = layer_norm(add_row_vector(mixed, p.attn_bias), p.ln1);
  t.pre_ln1_std = ln1.std;
  t.post_attn = ln1.output;

  const Matrix& z = t.post_attn;
  const Matrix hidden = relu(add_row_vector(matmul(z, p.w1), p.b1));
  const Matrix ff = add_row_vector(matmul(hidden, p.w2), p.b2);
  auto ln2 = layer_norm(z + ff, p.ln2);
  t.pre_ln2_std = std::move(ln2.std);
  t.output = std::move(ln2.output);
  return t;
}

BlockTrace block_forward(const Matrix& x, const BlockParams& p) {
  p.validate();
  std::vector<Matrix> attn;
  attn.reserve(p.heads.size());
  for (const auto& h : p.heads) attn.push_back(attention_matrix(x, h));
  return block_forward(x, p, attn);
}

StackTrace stack_forward(const Matrix& x0, std::span<const BlockParams> blocks,
                         const std::vector<std::size_t>& sources) {
  if (sources.size() != blocks.size()) {
    throw std::invalid_argument("stack_forward: share map has " +
                                std::to_string(sources.size()) + " entries for " +
                                std::to_string(blocks.size()) + " layers");
  }
  validate_share_map(sources);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    blocks[l].validate();
    if (blocks[l].d() != x0.cols()) {
      throw std::invalid_argument("stack_forward: layer " + std::to_string(l + 1) +
                                  " width differs from the embeddings");
    }
    const std::size_t src = sources[l] - 1;
    if (blocks[src].heads.size() != blocks[l].heads.size()) {
      throw std::invalid_argument("stack_forward: layer " + std::to_string(l + 1) +
                                  " head count differs from its source layer");
    }
  }

  StackTrace trace;
  trace.embeddings = x0;
  const bool shared = sources != identity_sources(blocks.size());
  if (shared) trace.share_map = sources;

  trace.blocks.reserve(blocks.size());
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const Matrix& input = trace.hidden(l);
    const std::size_t src = sources[l] - 1;
    if (src == l) {
      trace.blocks.push_back(block_forward(input, blocks[l]));
    } else {
      const std::vector<Matrix> reused = trace.blocks[src].attn;
      trace.blocks.push_back(block_forward(input, blocks[l], reused));
    }
  }
  return trace;
}

StackTrace stack_forward(const Matrix& x0, std::span<const BlockParams> blocks,
                         const std::optional<ShareConfig>& share) {
  if (!share) return stack_forward(x0, blocks, identity_sources(blocks.size()));
  if (share->layers != blocks.size()) {
    throw std::invalid_argument("stack_forward: share config is for " +
                                std::to_string(share->layers) + " layers, stack has " +
                                std::to_string(blocks.size()));
  }
  return stack_forward(x0, blocks, share_sources(*share));
}

BlockParams random_block(SplitMix64& rng, const BlockShape& shape,
                         double weight_scale) {
  shape.validate();
  if (!(weight_scale >= 0.0)) {
    throw std::invalid_argument("random_block: weight_scale must be non-negative");
  }
  const std::size_t d = shape.d;
  const std::size_t dh = shape.head_dim();
  BlockParams p;
  for (std::size_t k = 0; k < shape.heads; ++k) {
    HeadParams h;
    h.wq = random_matrix(rng, d, dh, weight_scale);
    h.wk = random_matrix(rng, d, dh, weight_scale);
    h.wvo = random_matrix(rng, d, d, weight_scale);
    p.heads.push_back(std::move(h));
  }
  p.attn_bias = random_vector(rng, d, weight_scale);
  p.w1 = random_matrix(rng, d, shape.d_ff, weight_scale);
  p.b1 = random_vector(rng, shape.d_ff, weight_scale);
  p.w2 = random_matrix(rng, shape.d_ff, d, weight_scale);
  p.b2 = random_vector(rng, d, weight_scale);
  p.ln1 = LayerNormParams::identity(d);
  p.ln2 = LayerNormParams::identity(d);
  return p;
}

BlockParams random_block(std::uint64_t seed, const BlockShape& shape,
                         double weight_scale) {
  SplitMix64 rng(seed);
  return random_block(rng, shape, weight_scale);
}

std::vector<BlockParams> random_stack(std::uint64_t seed, const BlockShape& shape,
                                      std::size_t layers, double weight_scale) {
  SplitMix64 rng(seed);
  std::vector<BlockParams> blocks;
  blocks.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    blocks.push_back(random_block(rng, shape, weight_scale));
  }
  return blocks;
}

}  // namespace smoothlab
