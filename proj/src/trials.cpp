#include "smoothlab/trials.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smoothlab/format.hpp"
#include "smoothlab/parallel.hpp"
#include "smoothlab/rng.hpp"

namespace smoothlab {

namespace {

void check_sizes(const TrialSizes& s) {
  if (s.max_n < 2 || s.max_d < 1 || s.max_heads < 1 || s.max_dff < 1) {
    throw std::invalid_argument("trial sizes: need n >= 2 and positive d, heads, d_ff");
  }
}

// Random token matrix, sometimes close to the identical-rows subspace.
Matrix random_tokens(SplitMix64& rng, std::size_t n, std::size_t d) {
  const double scale = rng.uniform(0.1, 3.0);
  Matrix m = random_matrix(rng, n, d, scale);
  const Vector offset = random_vector(rng, d, 2.0 * scale);
  if (rng.uniform() < 0.25) m = rng.uniform(1e-3, 1e-1) * m;
  return add_row_vector(m, offset);
}

Matrix random_stochastic(SplitMix64& rng, std::size_t n) {
  const double kind = rng.uniform();
  if (kind < 0.5) {
    // Softmax of logits at a random temperature: near-uniform to near-one-hot.
    const double temp = std::exp(rng.uniform(-3.0, 3.0));
    return softmax_rows(random_matrix(rng, n, n, temp));
  }
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& x : a.row(i)) {
      x = rng.uniform(1e-3, 1.0);
      if (kind > 0.8) x = x * x * x * x;
      s += x;
    }
    for (double& x : a.row(i)) x /= s;
  }
  return a;
}

}  // namespace

DmBoundsInstance make_dm_bounds_instance(std::uint64_t trial_seed, const TrialSizes& sizes) {
  check_sizes(sizes);
  SplitMix64 rng(trial_seed);
  const std::size_t n = rng.between(2, sizes.max_n);
  const std::size_t d = rng.between(1, sizes.max_d);
  const std::size_t d_out = rng.between(1, sizes.max_d);
  DmBoundsInstance in;
  in.h = random_tokens(rng, n, d);
  in.b = random_tokens(rng, n, d);
  in.w = random_matrix(rng, d, d_out, rng.uniform(0.05, 2.0));
  in.ahat = random_stochastic(rng, n);
  in.a1 = rng.uniform(0.0, 3.0);
  in.a2 = rng.uniform(0.0, 3.0);
  return in;
}

DmBoundsTrial run_dm_bounds_trial(std::uint64_t trial_seed, const TrialSizes& sizes,
                             std::size_t index) {
  const auto in = make_dm_bounds_instance(trial_seed, sizes);
  return {index, trial_seed, in.h.rows(), in.h.cols(),
          verify_lemma1(in.h, in.b, in.w, in.ahat, in.a1, in.a2)};
}

std::vector<DmBoundsTrial> run_dm_bounds_trials(std::uint64_t base_seed, std::size_t trials,
                                           const TrialSizes& sizes) {
  check_sizes(sizes);
  std::vector<DmBoundsTrial> out(trials);
  parallel_for(trials, [&](std::size_t i) {
    out[i] = run_dm_bounds_trial(derive_seed(base_seed, i), sizes, i);
  });
  return out;
}

BlockInstance make_block_instance(std::uint64_t trial_seed, const TrialSizes& sizes) {
  check_sizes(sizes);
  SplitMix64 rng(trial_seed);
  BlockShape shape;
  shape.heads = rng.between(1, sizes.max_heads);
  const std::size_t min_k = (2 + shape.heads - 1) / shape.heads;
  const std::size_t max_k = sizes.max_d / shape.heads;
  if (max_k < min_k) {
    throw std::invalid_argument("trial sizes: max_d too small for the head count");
  }
  shape.d = shape.heads * rng.between(min_k, max_k);
  shape.d_ff = rng.between(1, sizes.max_dff);
  const std::size_t n = rng.between(2, sizes.max_n);
  const double weight_scale = rng.uniform(0.05, 1.5);
  BlockInstance in;
  in.x = random_tokens(rng, n, shape.d);
  in.block = random_block(rng, shape, weight_scale);
  return in;
}

ContractionTrial run_contraction_trial(std::uint64_t trial_seed, const TrialSizes& sizes,
                                       std::size_t index) {
  const auto in = make_block_instance(trial_seed, sizes);
  const auto trace = block_forward(in.x, in.block);
  return {index, trial_seed, in.block.shape(), in.x.rows(),
          contraction_report(trace, in.block)};
}

std::vector<ContractionTrial> run_contraction_trials(std::uint64_t base_seed,
                                                     std::size_t trials,
                                                     const TrialSizes& sizes) {
  check_sizes(sizes);
  std::vector<ContractionTrial> out(trials);
  parallel_for(trials, [&](std::size_t i) {
    out[i] = run_contraction_trial(derive_seed(base_seed, i), sizes, i);
  });
  return out;
}

std::string slack_csv(const std::vector<DmBoundsTrial>& bounds,
                      const std::vector<ContractionTrial>& contraction) {
  std::ostringstream out;
  out << "suite,trial,seed,check,lhs,rhs,slack,holds\n";
  auto row = [&](const char* suite, std::size_t trial, std::uint64_t seed,
                 const char* check, double lhs, double rhs, bool holds) {
    out << suite << ',' << trial << ',' << seed << ',' << check << ','
        << format_real(lhs) << ',' << format_real(rhs) << ','
        << format_real(rhs - lhs) << ',' << (holds ? "true" : "false") << '\n';
  };
  for (const auto& t : bounds) {
    const auto& r = t.report;
    row("dm_bounds", t.index, t.seed, "weight", r.weight.lhs, r.weight.rhs, r.weight.holds());
    row("dm_bounds", t.index, t.seed, "relu", r.relu.lhs, r.relu.rhs, r.relu.holds());
    row("dm_bounds", t.index, t.seed, "combination", r.combination.lhs, r.combination.rhs,
        r.combination.holds());
    row("dm_bounds", t.index, t.seed, "attention", r.attention.lhs, r.attention.rhs,
        r.attention.holds());
  }
  for (const auto& t : contraction) {
    const auto& r = t.report;
    row("block", t.index, t.seed, "contraction", r.dm_out, r.v * r.dm_in, r.bound_holds);
  }
  return out.str();
}

ContractingStack engineer_contracting_stack(std::uint64_t seed,
                                            const ContractingStackOptions& opt) {
  opt.shape.validate();
  SplitMix64 rng(seed);
  ContractingStack out;
  out.embeddings = random_matrix(rng, opt.n, opt.shape.d, 1.0);
  std::vector<BlockParams> base;
  for (std::size_t l = 0; l < opt.layers; ++l) {
    base.push_back(random_block(rng, opt.shape, opt.weight_scale));
  }

  // Zero-mean pattern with unit population std.
  Vector pattern = random_vector(rng, opt.shape.d, 1.0);
  double mean = 0.0;
  for (double x : pattern) mean += x;
  mean /= static_cast<double>(pattern.size());
  double var = 0.0;
  for (double& x : pattern) {
    x -= mean;
    var += x * x;
  }
  const double sd = std::sqrt(var / static_cast<double>(pattern.size()));
  for (double& x : pattern) x /= sd;

  double scale = opt.initial_bias_scale;
  for (std::size_t step = 1; step <= opt.max_steps; ++step, scale *= opt.growth) {
    out.blocks = base;
    for (auto& b : out.blocks) {
      for (std::size_t j = 0; j < pattern.size(); ++j) {
        b.attn_bias[j] = scale * pattern[j];
        b.b2[j] = scale * pattern[j];
      }
    }
    out.trace = stack_forward(out.embeddings, out.blocks);
    out.report = check_stack(out.trace, out.blocks);
    out.bias_scale = scale;
    out.sweep_steps = step;
    bool all_below = true;
    for (const auto& r : out.report.layers) all_below = all_below && r.v < 1.0;
    if (all_below) {
      out.found = true;
      break;
    }
  }
  return out;
}

}  // namespace smoothlab
