#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "smoothlab/diagnostics.hpp"
#include "smoothlab/matrix.hpp"
#include "smoothlab/transformer.hpp"

namespace smoothlab::io {

using json = nlohmann::json;

/// Raised for malformed files; the message names the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Matrix files: CSV (first line "rows,cols", then one row per line) or JSON
// {"rows", "cols", "data"} with row-major data. Chosen by the .json suffix.
std::string matrix_to_csv(const Matrix& m);
Matrix matrix_from_csv(std::string_view text);
json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j, const std::string& field = "matrix");
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Matrix& m);

json nested_rows(const Matrix& m);
Matrix from_nested_rows(const json& j, const std::string& field);

/// Stack parameter file.
struct StackFile {
  std::optional<std::uint64_t> seed;
  std::optional<double> weight_scale;
  std::vector<BlockParams> blocks;
};

json stack_to_json(const StackFile& s);
StackFile stack_from_json(const json& j);

/// Trace file: n, d, h, L, embeddings (layer 0), layers[] with H, attn,
/// pre_ln1_std, pre_ln2_std, and optional share_map. A file without
/// "embeddings" carries layer 0 as layers[0] and has L + 1 entries; only its
/// "H" is read.
json trace_to_json(const StackTrace& t);
StackTrace trace_from_json(const json& j);

json parse_json(std::string_view text, const std::string& what);

struct MetricsRow {
  std::size_t layer = 0;
  std::optional<double> cos_sim;
  double d_m = 0.0;
  std::optional<double> sigma1;
  std::optional<double> sigma2;
  std::optional<double> sigma_product;
  std::optional<double> s;
  std::optional<double> lambda;
  std::optional<double> v;
  std::optional<bool> bound_holds;
  std::optional<double> attn_sim_to_next;
};

/// One row for layer 0 and one per block. `params` may be empty when only a
/// trace is available; s, v and bound_holds are then left blank.
std::vector<MetricsRow> compute_metrics(const StackTrace& trace,
                                        std::span<const BlockParams> params = {});

inline constexpr std::string_view kMetricsHeader =
    "layer,cos_sim,d_M,sigma1,sigma2,sigma_product,s,lambda,v,bound_holds,"
    "attn_sim_to_next";

std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Row appended for a fused output: label, cos_sim and d_M only.
std::string fused_metrics_line(const std::string& label, std::optional<double> cos,
                               double d_m);

}  // namespace smoothlab::io
