#include "smoothlab/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "smoothlab/format.hpp"

namespace smoothlab::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": invalid JSON (" + e.what() + ")");
  }
}

// ---- matrices --------------------------------------------------------------

std::string matrix_to_csv(const Matrix& m) {
  std::string out = std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_real(m(i, j));
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_count(std::string_view s, const std::string& field) {
  const double v = [&] {
    try {
      return parse_real(s);
    } catch (const std::invalid_argument&) {
      throw FormatError(field + ": expected a count, got '" + std::string(s) + "'");
    }
  }();
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw FormatError(field + ": expected a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

Matrix matrix_from_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw FormatError("matrix csv: missing 'rows,cols' header");
  const auto header = split(lines[0], ',');
  if (header.size() != 2) throw FormatError("matrix csv: header must be 'rows,cols'");
  const std::size_t rows = parse_count(header[0], "matrix csv rows");
  const std::size_t cols = parse_count(header[1], "matrix csv cols");
  if (lines.size() - 1 != rows) {
    throw FormatError("matrix csv: header declares " + std::to_string(rows) +
                      " rows but file has " + std::to_string(lines.size() - 1));
  }
  Vector data;
  data.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto cells = split(lines[i + 1], ',');
    if (cells.size() != cols) {
      throw FormatError("matrix csv: row " + std::to_string(i) + " has " +
                        std::to_string(cells.size()) + " values, expected " +
                        std::to_string(cols));
    }
    for (auto c : cells) {
      try {
        data.push_back(parse_real(c));
      } catch (const std::invalid_argument& e) {
        throw FormatError("matrix csv: row " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return Matrix(rows, cols, std::move(data));
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

namespace {

const json& member(const json& j, const std::string& key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(field + ": missing \"" + key + "\"");
  }
  return j.at(key);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw FormatError(field + ": expected a number");
  return j.get<double>();
}

std::size_t count(const json& j, const std::string& field) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw FormatError(field + ": expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

Vector vector_of(const json& j, const std::string& field) {
  if (!j.is_array()) throw FormatError(field + ": expected an array");
  Vector v;
  v.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return v;
}

}  // namespace

Matrix matrix_from_json(const json& j, const std::string& field) {
  const std::size_t rows = count(member(j, "rows", field), field + ".rows");
  const std::size_t cols = count(member(j, "cols", field), field + ".cols");
  Vector data = vector_of(member(j, "data", field), field + ".data");
  if (data.size() != rows * cols) {
    throw FormatError(field + ": declared " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " but data has " +
                      std::to_string(data.size()) + " values");
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix read_matrix(const fs::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".json") {
    return matrix_from_json(parse_json(text, path.string()), path.string());
  }
  return matrix_from_csv(text);
}

void write_matrix(const fs::path& path, const Matrix& m) {
  if (path.extension() == ".json") {
    write_file_atomic(path, matrix_to_json(m).dump() + "\n");
  } else {
    write_file_atomic(path, matrix_to_csv(m));
  }
}

json nested_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows.push_back(Vector(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

Matrix from_nested_rows(const json& j, const std::string& field) {
  if (!j.is_array()) throw FormatError(field + ": expected an array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  Vector data;
  for (std::size_t i = 0; i < rows; ++i) {
    Vector r = vector_of(j[i], field + "[" + std::to_string(i) + "]");
    if (i == 0) cols = r.size();
    if (r.size() != cols) {
      throw FormatError(field + "[" + std::to_string(i) + "]: ragged row");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows, cols, std::move(data));
}

// ---- stack parameters ------------------------------------------------------

namespace {

json layer_norm_to_json(const LayerNormParams& p) {
  return json{{"gamma", p.gamma}, {"beta", p.beta}, {"eps", p.eps}};
}

LayerNormParams layer_norm_from_json(const json& j, const std::string& field) {
  return {vector_of(member(j, "gamma", field), field + ".gamma"),
          vector_of(member(j, "beta", field), field + ".beta"),
          number(member(j, "eps", field), field + ".eps")};
}

}  // namespace

json stack_to_json(const StackFile& s) {
  json blocks = json::array();
  for (const auto& b : s.blocks) {
    json heads = json::array();
    for (const auto& h : b.heads) {
      heads.push_back(json{{"Wq", matrix_to_json(h.wq)},
                           {"Wk", matrix_to_json(h.wk)},
                           {"Wvo", matrix_to_json(h.wvo)}});
    }
    blocks.push_back(json{{"heads", heads},
                          {"attn_bias", b.attn_bias},
                          {"W1", matrix_to_json(b.w1)},
                          {"b1", b.b1},
                          {"W2", matrix_to_json(b.w2)},
                          {"b2", b.b2},
                          {"ln1", layer_norm_to_json(b.ln1)},
                          {"ln2", layer_norm_to_json(b.ln2)}});
  }
  json j;
  j["format"] = "smoothlab-stack";
  if (!s.blocks.empty()) {
    const auto shape = s.blocks.front().shape();
    j["d"] = shape.d;
    j["h"] = shape.heads;
    j["d_ff"] = shape.d_ff;
  }
  j["L"] = s.blocks.size();
  if (s.seed) j["seed"] = *s.seed;
  if (s.weight_scale) j["weight_scale"] = *s.weight_scale;
  j["blocks"] = blocks;
  return j;
}

StackFile stack_from_json(const json& j) {
  StackFile s;
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("weight_scale")) s.weight_scale = number(j.at("weight_scale"), "weight_scale");
  const json& blocks = member(j, "blocks", "params");
  if (!blocks.is_array()) throw FormatError("params.blocks: expected an array");
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string f = "blocks[" + std::to_string(l) + "]";
    const json& b = blocks[l];
    BlockParams p;
    const json& heads = member(b, "heads", f);
    if (!heads.is_array()) throw FormatError(f + ".heads: expected an array");
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const std::string hf = f + ".heads[" + std::to_string(k) + "]";
      p.heads.push_back({matrix_from_json(member(heads[k], "Wq", hf), hf + ".Wq"),
                         matrix_from_json(member(heads[k], "Wk", hf), hf + ".Wk"),
                         matrix_from_json(member(heads[k], "Wvo", hf), hf + ".Wvo")});
    }
    p.attn_bias = vector_of(member(b, "attn_bias", f), f + ".attn_bias");
    p.w1 = matrix_from_json(member(b, "W1", f), f + ".W1");
    p.b1 = vector_of(member(b, "b1", f), f + ".b1");
    p.w2 = matrix_from_json(member(b, "W2", f), f + ".W2");
    p.b2 = vector_of(member(b, "b2", f), f + ".b2");
    p.ln1 = layer_norm_from_json(member(b, "ln1", f), f + ".ln1");
    p.ln2 = layer_norm_from_json(member(b, "ln2", f), f + ".ln2");
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(f + ": " + e.what());
    }
    s.blocks.push_back(std::move(p));
  }
  if (j.contains("L") && count(j.at("L"), "L") != s.blocks.size()) {
    throw FormatError("L: declares " + std::to_string(j.at("L").get<std::size_t>()) +
                      " layers but blocks has " + std::to_string(s.blocks.size()));
  }
  return s;
}

// ---- traces ----------------------------------------------------------------

json trace_to_json(const StackTrace& t) {
  json j;
  j["n"] = t.embeddings.rows();
  j["d"] = t.embeddings.cols();
  j["h"] = t.heads();
  j["L"] = t.layers();
  j["embeddings"] = nested_rows(t.embeddings);
  json layers = json::array();
  for (const auto& b : t.blocks) {
    json attn = json::array();
    for (const auto& a : b.attn) attn.push_back(nested_rows(a));
    layers.push_back(json{{"H", nested_rows(b.output)},
                          {"attn", attn},
                          {"pre_ln1_std", b.pre_ln1_std},
                          {"pre_ln2_std", b.pre_ln2_std}});
  }
  j["layers"] = layers;
  if (t.share_map) j["share_map"] = *t.share_map;
  return j;
}

StackTrace trace_from_json(const json& j) {
  const std::size_t n = count(member(j, "n", "trace"), "n");
  const std::size_t d = count(member(j, "d", "trace"), "d");
  const std::size_t h = count(member(j, "h", "trace"), "h");
  const std::size_t L = count(member(j, "L", "trace"), "L");
  StackTrace t;
  const json& layers = member(j, "layers", "trace");
  // Without an "embeddings" key, layer 0 is the first of L + 1 entries.
  const bool leading_input = !j.contains("embeddings");
  const std::size_t first = leading_input ? 1 : 0;
  if (!layers.is_array() || layers.size() != L + first) {
    throw FormatError(leading_input
                          ? "layers: expected L + 1 entries when \"embeddings\" is absent"
                          : "layers: expected an array of L entries");
  }
  t.embeddings = leading_input
                     ? from_nested_rows(member(layers[0], "H", "layers[0]"), "layers[0].H")
                     : from_nested_rows(j.at("embeddings"), "embeddings");
  if (t.embeddings.rows() != n || t.embeddings.cols() != d) {
    throw FormatError("embeddings: shape does not match n, d");
  }
  for (std::size_t l = 0; l < L; ++l) {
    const std::string f = "layers[" + std::to_string(l + first) + "]";
    const json& entry = layers[l + first];
    BlockTrace b;
    b.input = t.hidden(l);
    b.output = from_nested_rows(member(entry, "H", f), f + ".H");
    if (b.output.rows() != n || b.output.cols() != d) {
      throw FormatError(f + ".H: shape does not match n, d");
    }
    const json& attn = member(entry, "attn", f);
    if (!attn.is_array() || attn.size() != h) {
      throw FormatError(f + ".attn: expected h matrices");
    }
    for (std::size_t k = 0; k < h; ++k) {
      const std::string af = f + ".attn[" + std::to_string(k) + "]";
      Matrix a = from_nested_rows(attn[k], af);
      if (a.rows() != n || a.cols() != n) throw FormatError(af + ": expected n x n");
      b.attn.push_back(std::move(a));
    }
    b.pre_ln1_std = vector_of(member(entry, "pre_ln1_std", f), f + ".pre_ln1_std");
    b.pre_ln2_std = vector_of(member(entry, "pre_ln2_std", f), f + ".pre_ln2_std");
    if (b.pre_ln1_std.size() != n || b.pre_ln2_std.size() != n) {
      throw FormatError(f + ": std vectors must have n entries");
    }
    t.blocks.push_back(std::move(b));
  }
  if (j.contains("share_map") && !j.at("share_map").is_null()) {
    std::vector<std::size_t> m;
    for (const auto& v : j.at("share_map")) m.push_back(count(v, "share_map"));
    if (m.size() != L) throw FormatError("share_map: expected L entries");
    try {
      validate_share_map(m);
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("share_map: ") + e.what());
    }
    t.share_map = std::move(m);
  }
  return t;
}

// ---- metrics ---------------------------------------------------------------

namespace {

std::optional<double> try_cos_sim(const Matrix& h) {
  try {
    return cos_sim(h);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<MetricsRow> compute_metrics(const StackTrace& trace,
                                        std::span<const BlockParams> params) {
  if (!params.empty() && params.size() != trace.layers()) {
    throw std::invalid_argument("compute_metrics: params do not match trace layers");
  }
  std::vector<MetricsRow> rows;
  MetricsRow first;
  first.cos_sim = try_cos_sim(trace.embeddings);
  first.d_m = distance_to_M(trace.embeddings);
  rows.push_back(first);

  std::vector<double> attn_sim;
  if (trace.layers() >= 2) attn_sim = attn_layer_similarity(trace);

  for (std::size_t l = 1; l <= trace.layers(); ++l) {
    const auto& b = trace.blocks[l - 1];
    MetricsRow r;
    r.layer = l;
    r.cos_sim = try_cos_sim(b.output);
    r.d_m = distance_to_M(b.output);
    if (!params.empty()) {
      const auto c = contraction_report(b, params[l - 1]);
      r.sigma1 = c.sigma1;
      r.sigma2 = c.sigma2;
      r.s = c.s;
      r.lambda = c.lambda;
      r.v = c.v;
      r.bound_holds = c.bound_holds;
    } else {
      r.sigma1 = *std::min_element(b.pre_ln1_std.begin(), b.pre_ln1_std.end());
      r.sigma2 = *std::min_element(b.pre_ln2_std.begin(), b.pre_ln2_std.end());
      double lam = 0.0;
      for (const auto& a : b.attn) lam = std::max(lam, lambda_max_centered(a).value);
      r.lambda = lam;
    }
    r.sigma_product = sigma_product(trace, l);
    if (l < trace.layers()) r.attn_sim_to_next = attn_sim[l - 1];
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::string cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.layer) + ',' + cell(r.cos_sim) + ',' + format_real(r.d_m) +
           ',' + cell(r.sigma1) + ',' + cell(r.sigma2) + ',' + cell(r.sigma_product) +
           ',' + cell(r.s) + ',' + cell(r.lambda) + ',' + cell(r.v) + ',' +
           (r.bound_holds ? (*r.bound_holds ? "true" : "false") : "") + ',' +
           cell(r.attn_sim_to_next) + '\n';
  }
  return out;
}

std::string fused_metrics_line(const std::string& label, std::optional<double> cos,
                               double d_m) {
  return label + ',' + cell(cos) + ',' + format_real(d_m) + ",,,,,,,,\n";
}

}  // namespace smoothlab::io
