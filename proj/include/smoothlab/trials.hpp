#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smoothlab/diagnostics.hpp"
#include "smoothlab/transformer.hpp"

namespace smoothlab {

// Seeded randomized instances for the contraction inequalities. Trial i of a
// suite started from `base` uses derive_seed(base, i), and every instance is
// reproducible from that trial seed alone.

struct TrialSizes {
  std::size_t max_n = 8;
  std::size_t max_d = 8;
  std::size_t max_heads = 2;
  std::size_t max_dff = 32;
};

struct DmBoundsInstance {
  Matrix h;
  Matrix b;
  Matrix w;
  Matrix ahat;
  double a1 = 0.0;
  double a2 = 0.0;
};

DmBoundsInstance make_dm_bounds_instance(std::uint64_t trial_seed, const TrialSizes& sizes);

struct DmBoundsTrial {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  Lemma1Report report;
};

std::vector<DmBoundsTrial> run_dm_bounds_trials(std::uint64_t base_seed, std::size_t trials,
                                           const TrialSizes& sizes);
DmBoundsTrial run_dm_bounds_trial(std::uint64_t trial_seed, const TrialSizes& sizes,
                             std::size_t index = 0);

struct BlockInstance {
  Matrix x;
  BlockParams block;
};

BlockInstance make_block_instance(std::uint64_t trial_seed, const TrialSizes& sizes);

struct ContractionTrial {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  BlockShape shape;
  std::size_t n = 0;
  ContractionReport report;
};

std::vector<ContractionTrial> run_contraction_trials(std::uint64_t base_seed,
                                                     std::size_t trials,
                                                     const TrialSizes& sizes);
ContractionTrial run_contraction_trial(std::uint64_t trial_seed, const TrialSizes& sizes,
                                       std::size_t index = 0);

/// CSV `suite,trial,seed,check,lhs,rhs,slack,holds`, one row per inequality.
std::string slack_csv(const std::vector<DmBoundsTrial>& bounds,
                      const std::vector<ContractionTrial>& contraction);

/// A stack whose every layer has contraction factor v < 1.
///
/// The construction keeps the random weights small and sweeps the scale of a
/// fixed, zero-mean, non-constant pattern added through the attention bias
/// and the second feed-forward bias (factor 2 per step, at most 40 steps).
/// Row-constant biases leave d_M unchanged but raise the per-token spread
/// entering both LayerNorms, which drives sigma1 * sigma2 up.
struct ContractingStack {
  Matrix embeddings;
  std::vector<BlockParams> blocks;
  StackTrace trace;
  StackReport report;
  double bias_scale = 0.0;
  std::size_t sweep_steps = 0;
  bool found = false;
};

struct ContractingStackOptions {
  std::size_t layers = 12;
  std::size_t n = 6;
  BlockShape shape{8, 2, 16};
  double weight_scale = 0.05;
  double initial_bias_scale = 1.0 / 64.0;
  double growth = 2.0;
  std::size_t max_steps = 40;
};

ContractingStack engineer_contracting_stack(std::uint64_t seed,
                                            const ContractingStackOptions& opt = {});

}  // namespace smoothlab
