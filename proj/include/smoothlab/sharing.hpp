#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smoothlab {

/// Layers start..end (1-based, inclusive) of an L-layer stack reuse
/// attention matrices instead of computing their own.
struct ShareConfig {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t layers = 0;

  void validate() const;
  std::string label() const;  // "start-end"
};

/// Parses "a..b" or "a-b".
ShareConfig parse_share_range(std::string_view text, std::size_t layers);

/// Entry l-1 holds the 1-based layer whose attention layer l uses.
///
/// Layers inside the range read from layer start-1; a range that starts at
/// layer 1 keeps layer 1 computing and the rest of the range reads from it.
std::vector<std::size_t> share_sources(const ShareConfig& c);
std::vector<std::size_t> identity_sources(std::size_t layers);

/// Throws unless every entry points at itself or at an earlier layer that
/// computes its own attention.
void validate_share_map(const std::vector<std::size_t>& sources);

struct FlopReport {
  std::uint64_t total = 0;
  std::vector<std::uint64_t> per_layer;
  double saved_fraction = 0.0;
};

/// Self-attention projection FLOPs, one multiply-accumulate per FLOP: a layer
/// that computes attention pays 3*n*d^2 for Q, K and V; a layer that reuses
/// attention pays n*d^2 for V alone.
FlopReport flops_self_attention(std::size_t layers, std::size_t n, std::size_t d,
                                const std::optional<ShareConfig>& share = {});

struct FlopRow {
  std::string label;  // "none" or "start-end"
  FlopReport report;
  std::string giga;   // total in G at 2 significant figures
};

std::vector<FlopRow> flops_table(std::size_t n, std::size_t d, std::size_t layers,
                                 const std::vector<std::optional<ShareConfig>>& ranges);

/// Rounds to 2 significant figures, fixed notation ("2.7", "1.1", "27").
std::string two_significant(double value);

std::string render_flops_tsv(const std::vector<FlopRow>& rows);
std::string render_flops_text(const std::vector<FlopRow>& rows);

}  // namespace smoothlab
