#include "smoothlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "smoothlab/diagnostics.hpp"
#include "smoothlab/format.hpp"
#include "smoothlab/fusion.hpp"
#include "smoothlab/graphview.hpp"
#include "smoothlab/io.hpp"
#include "smoothlab/rng.hpp"
#include "smoothlab/sharing.hpp"
#include "smoothlab/transformer.hpp"
#include "smoothlab/trials.hpp"

namespace smoothlab::cli {

namespace {

namespace fs = std::filesystem;
using io::json;

// Thrown for errors that must exit with the usage code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    io::write_file_atomic(path, content);
  }
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t n = 8;
  std::size_t d = 16;
  std::size_t heads = 2;
  std::size_t dff = 32;
  std::size_t layers = 12;
  double scale = 0.5;
  std::string preset;
  std::string out;
  std::string embeddings_out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  BlockShape shape{a.d, a.heads, a.dff};
  std::size_t n = a.n;
  std::size_t layers = a.layers;
  if (a.preset == "bert-base") {
    shape = kBertBaseShape;
    n = kBertBaseTokens;
    layers = kBertBaseLayers;
  } else if (!a.preset.empty()) {
    throw UsageError("unknown preset '" + a.preset + "'");
  }
  if (layers == 0) throw UsageError("--layers must be positive");
  if (n == 0) throw UsageError("--n must be positive");
  try {
    shape.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(a.scale >= 0.0)) throw UsageError("--scale must be non-negative");

  // Embeddings come from their own stream so the parameter file does not
  // depend on n.
  io::StackFile file{a.seed, a.scale, random_stack(a.seed, shape, layers, a.scale)};
  io::write_file_atomic(a.out, io::stack_to_json(file).dump() + "\n");
  if (!a.embeddings_out.empty()) {
    SplitMix64 rng(derive_seed(a.seed, 0xE3BEDD11));
    io::write_matrix(a.embeddings_out, random_matrix(rng, n, shape.d, 1.0));
  }
  out << "wrote " << layers << " blocks (d=" << shape.d << ", heads=" << shape.heads
      << ", d_ff=" << shape.d_ff << ") to " << a.out << '\n';
  return kOk;
}

// ---- run -------------------------------------------------------------------

struct RunArgs {
  std::string params;
  std::string embeddings;
  std::string share;
  std::string trace_out;
  std::string metrics_out;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  const auto file = io::stack_from_json(io::parse_json(io::read_file(a.params), a.params));
  if (file.blocks.empty()) throw io::FormatError("blocks: stack has no layers");
  const Matrix x0 = io::read_matrix(a.embeddings);
  if (x0.cols() != file.blocks.front().d()) {
    throw io::FormatError("embeddings: width " + std::to_string(x0.cols()) +
                          " does not match block width d=" +
                          std::to_string(file.blocks.front().d()));
  }
  std::optional<ShareConfig> share;
  if (!a.share.empty()) {
    try {
      share = parse_share_range(a.share, file.blocks.size());
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const StackTrace trace = stack_forward(x0, file.blocks, share);
  if (!a.trace_out.empty()) {
    io::write_file_atomic(a.trace_out, io::trace_to_json(trace).dump() + "\n");
  }
  emit(a.metrics_out, io::metrics_csv(io::compute_metrics(trace, file.blocks)), out);
  return kOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::uint64_t seed = 0;
  std::size_t trials = 1000;
  std::size_t n = 8;
  std::size_t d = 8;
  std::size_t heads = 2;
  std::size_t dff = 32;
  std::string out;
  std::optional<std::uint64_t> replay;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  if (a.trials == 0 && !a.replay) throw UsageError("--trials must be at least 1");
  const TrialSizes sizes{a.n, a.d, a.heads, a.dff};
  try {
    make_block_instance(0, sizes);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::vector<DmBoundsTrial> bounds;
  std::vector<ContractionTrial> blocks;
  if (a.replay) {
    bounds.push_back(run_dm_bounds_trial(*a.replay, sizes));
    blocks.push_back(run_contraction_trial(*a.replay, sizes));
  } else {
    bounds = run_dm_bounds_trials(a.seed, a.trials, sizes);
    blocks = run_contraction_trials(a.seed, a.trials, sizes);
  }
  emit(a.out, slack_csv(bounds, blocks), out);

  std::size_t violations = 0;
  for (const auto& t : bounds) {
    if (!t.report.holds()) {
      ++violations;
      err << "violation: d_M bound trial " << t.index << " seed " << t.seed
          << " (replay with --replay " << t.seed << ")\n";
    }
  }
  for (const auto& t : blocks) {
    if (!t.report.bound_holds) {
      ++violations;
      err << "violation: block contraction trial " << t.index << " seed " << t.seed
          << " (replay with --replay " << t.seed << ")\n";
    }
  }
  double worst = INFINITY;
  for (const auto& t : bounds) {
    for (const auto* c : {&t.report.weight, &t.report.relu, &t.report.combination,
                          &t.report.attention}) {
      worst = std::min(worst, c->slack / std::max(1.0, std::abs(c->rhs)));
    }
  }
  if (a.out.empty() || a.out == "-") {
    err << bounds.size() << " d_M bound trials, " << blocks.size()
        << " block trials, violations: " << violations << '\n';
  } else {
    out << bounds.size() << " d_M bound trials, " << blocks.size()
        << " block trials, violations: " << violations
        << ", min relative d_M bound slack: " << format_real(worst, 6) << '\n';
  }
  return violations == 0 ? kOk : kVerificationFailed;
}

// ---- fuse ------------------------------------------------------------------

struct FuseArgs {
  std::string trace;
  std::string strategy;
  std::string params;
  std::string out;
  std::string weights_out;
  std::string metrics;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const StackTrace trace =
      io::trace_from_json(io::parse_json(io::read_file(a.trace), a.trace));
  if (trace.layers() == 0) throw io::FormatError("layers: trace has no layers");
  std::vector<Matrix> layers;
  for (std::size_t l = 1; l <= trace.layers(); ++l) layers.push_back(trace.hidden(l));

  std::optional<json> params;
  if (!a.params.empty()) params = io::parse_json(io::read_file(a.params), a.params);
  auto vector_field = [&](const char* key) {
    if (!params || !params->contains(key)) {
      throw UsageError("strategy " + a.strategy + " needs --params with \"" + key + "\"");
    }
    try {
      return params->at(key).get<Vector>();
    } catch (const json::exception&) {
      throw io::FormatError(std::string(key) + ": expected an array of numbers");
    }
  };

  Matrix fused;
  if (a.strategy == "concat") {
    const ConcatParams p = params ? ConcatParams{vector_field("alphas")}
                                  : ConcatParams::uniform(layers.size());
    fused = concat_fuse(layers, p);
  } else if (a.strategy == "max") {
    fused = max_fuse(layers);
  } else if (a.strategy == "gate") {
    GateParams p{vector_field("w"), 0.0};
    if (params->contains("b")) p.b = params->at("b").get<double>();
    auto r = gate_fuse(layers, p);
    fused = std::move(r.output);
    const std::string weights_path =
        a.weights_out.empty() ? a.out + ".gate_weights.csv" : a.weights_out;
    io::write_file_atomic(weights_path, gate_weights_csv(r.weights));
  } else {
    throw UsageError("unknown strategy '" + a.strategy + "' (concat, max or gate)");
  }
  io::write_matrix(a.out, fused);

  std::optional<double> cs;
  try {
    cs = cos_sim(fused);
  } catch (const std::invalid_argument&) {
  }
  const std::string line = io::fused_metrics_line("F", cs, distance_to_M(fused));
  if (!a.metrics.empty()) {
    std::string existing = fs::exists(a.metrics) ? io::read_file(a.metrics)
                                                 : std::string(io::kMetricsHeader) + "\n";
    if (!existing.empty() && existing.back() != '\n') existing += '\n';
    io::write_file_atomic(a.metrics, existing + line);
  }
  out << "fused " << a.strategy << ": cos_sim="
      << (cs ? format_real(*cs) : std::string("undefined"))
      << " d_M=" << format_real(distance_to_M(fused)) << '\n';
  return kOk;
}

// ---- graph -----------------------------------------------------------------

struct GraphArgs {
  std::string trace;
  std::size_t layer = 1;
  std::size_t head = 0;
  std::string format = "dot";
  double threshold = kDefaultEdgeThreshold;
  std::string out;
};

int cmd_graph(const GraphArgs& a, std::ostream& out) {
  const StackTrace trace =
      io::trace_from_json(io::parse_json(io::read_file(a.trace), a.trace));
  if (a.layer < 1 || a.layer > trace.layers()) {
    throw UsageError("--layer " + std::to_string(a.layer) + " out of range 1.." +
                     std::to_string(trace.layers()));
  }
  const auto& attn = trace.blocks[a.layer - 1].attn;
  if (a.head >= attn.size()) {
    throw UsageError("--head " + std::to_string(a.head) + " out of range 0.." +
                     std::to_string(attn.size() - 1));
  }
  GraphFormat format;
  try {
    format = parse_graph_format(a.format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(a.threshold >= 0.0 && a.threshold < 1.0)) {
    throw UsageError("--threshold must lie in [0, 1)");
  }
  emit(a.out, export_graph(graph_from_attention(attn[a.head]), format, a.threshold), out);
  return kOk;
}

// ---- kde -------------------------------------------------------------------

struct KdeArgs {
  std::string values;
  std::vector<std::string> traces;
  std::optional<double> bandwidth;
  std::string grid;
  std::string out;
};

std::vector<double> read_values(const std::string& path) {
  std::string text = io::read_file(path);
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream lines(text);
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    std::istringstream tokens(line);
    std::string tok;
    std::vector<double> row;
    bool header = false;
    while (tokens >> tok) {
      try {
        row.push_back(parse_real(tok));
      } catch (const std::invalid_argument&) {
        if (!first) throw io::FormatError(path + ": not a number: '" + tok + "'");
        header = true;
      }
    }
    if (!header) values.insert(values.end(), row.begin(), row.end());
    if (!line.empty()) first = false;
  }
  return values;
}

struct Grid {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t steps = 0;
};

Grid parse_grid(const std::string& text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string::npos) throw UsageError("--grid must look like lo:hi:steps");
  Grid g;
  try {
    g.lo = parse_real(text.substr(0, c1));
    g.hi = parse_real(text.substr(c1 + 1, c2 - c1 - 1));
    const double steps = parse_real(text.substr(c2 + 1));
    if (steps < 2 || steps != std::floor(steps)) throw std::invalid_argument("steps");
    g.steps = static_cast<std::size_t>(steps);
  } catch (const std::invalid_argument&) {
    throw UsageError("--grid must look like lo:hi:steps with steps >= 2");
  }
  if (!(g.hi > g.lo)) throw UsageError("--grid needs hi > lo");
  return g;
}

int cmd_kde(const KdeArgs& a, std::ostream& out) {
  std::vector<double> samples;
  if (!a.values.empty()) samples = read_values(a.values);
  for (const auto& path : a.traces) {
    const StackTrace t = io::trace_from_json(io::parse_json(io::read_file(path), path));
    if (t.layers() == 0) throw io::FormatError(path + ": trace has no layers");
    samples.push_back(sigma_product(t, t.layers()));
  }
  if (samples.empty()) throw UsageError("kde: no samples collected");
  if (a.bandwidth && !(*a.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");

  const DensityEstimate kde = a.bandwidth ? DensityEstimate(samples, *a.bandwidth)
                                          : DensityEstimate(samples);
  Grid grid;
  if (a.grid.empty()) {
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    grid = {*mn - 5.0 * kde.bandwidth(), *mx + 5.0 * kde.bandwidth(), 512};
  } else {
    grid = parse_grid(a.grid);
  }
  std::string csv = "x,density\n";
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double x = i + 1 == grid.steps
                         ? grid.hi
                         : grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) /
                                         static_cast<double>(grid.steps - 1);
    csv += format_real(x) + ',' + format_real(kde(x)) + '\n';
  }
  emit(a.out, csv, out);

  const auto above = std::count_if(samples.begin(), samples.end(),
                                   [](double s) { return s > 1.0; });
  std::ostream& report = (a.out.empty() || a.out == "-") ? std::cerr : out;
  report << "samples=" << samples.size() << " bandwidth=" << format_real(kde.bandwidth())
         << " fraction_sigma_product_above_1="
         << format_real(static_cast<double>(above) / static_cast<double>(samples.size()))
         << '\n';
  return kOk;
}

// ---- share-table -----------------------------------------------------------

struct ShareTableArgs {
  std::size_t n = kBertBaseTokens;
  std::size_t d = kBertBaseShape.d;
  std::size_t layers = kBertBaseLayers;
  std::vector<std::string> ranges;
  std::string format = "text";
  std::string out;
};

int cmd_share_table(const ShareTableArgs& a, std::ostream& out) {
  if (a.n == 0 || a.d == 0 || a.layers == 0) {
    throw UsageError("--n, --d and --layers must be positive");
  }
  std::vector<std::optional<ShareConfig>> ranges;
  std::vector<std::string> tokens;
  for (const auto& r : a.ranges) {
    std::stringstream ss(r);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) tokens.push_back(tok);
    }
  }
  if (tokens.empty()) tokens.push_back("none");
  for (const auto& tok : tokens) {
    if (tok == "none") {
      ranges.emplace_back(std::nullopt);
      continue;
    }
    try {
      ranges.emplace_back(parse_share_range(tok, a.layers));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const auto rows = flops_table(a.n, a.d, a.layers, ranges);
  if (a.format == "tsv") {
    emit(a.out, render_flops_tsv(rows), out);
  } else if (a.format == "text") {
    emit(a.out, render_flops_text(rows), out);
  } else {
    throw UsageError("--format must be tsv or text");
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"smoothlab: over-smoothing diagnostics for post-LayerNorm Transformer stacks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a seeded random stack parameter file");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--n", gen.n, "Tokens in the optional embeddings file");
  g->add_option("--d", gen.d, "Model width");
  g->add_option("--heads", gen.heads, "Attention heads");
  g->add_option("--dff", gen.dff, "Feed-forward width");
  g->add_option("--layers", gen.layers, "Number of blocks");
  g->add_option("--scale", gen.scale, "Weights drawn uniformly from [-scale, scale]");
  g->add_option("--preset", gen.preset, "bert-base: n=128, d=768, 12 heads, d_ff=3072, 12 layers");
  g->add_option("--out", gen.out, "Parameter file (JSON)")->required();
  g->add_option("--embeddings-out", gen.embeddings_out, "Also write seeded n x d embeddings");

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "Run a stack and write its trace and per-layer metrics");
  r->add_option("--params", run_args.params, "Stack parameter file")->required();
  r->add_option("--embeddings", run_args.embeddings, "Embeddings matrix (CSV or JSON)")
      ->required();
  r->add_option("--share", run_args.share, "Shared attention range a..b");
  r->add_option("--trace-out", run_args.trace_out, "Trace file (JSON)");
  r->add_option("--metrics-out,--out", run_args.metrics_out, "Metrics CSV (default stdout)");

  VerifyArgs verify;
  std::uint64_t replay = 0;
  auto* v = app.add_subcommand("verify", "Randomized checks of the d_M contraction inequalities");
  v->add_option("--seed", verify.seed, "Base seed");
  v->add_option("--trials", verify.trials, "Trials per suite");
  v->add_option("--n", verify.n, "Maximum tokens");
  v->add_option("--d", verify.d, "Maximum width");
  v->add_option("--heads", verify.heads, "Maximum heads");
  v->add_option("--dff", verify.dff, "Maximum feed-forward width");
  v->add_option("--out", verify.out, "Per-check slack CSV (default stdout)");
  auto* replay_opt = v->add_option("--replay", replay, "Run only the trial with this seed");

  FuseArgs fuse;
  auto* f = app.add_subcommand("fuse", "Fuse per-layer representations of a trace");
  f->add_option("--trace", fuse.trace, "Trace file")->required();
  f->add_option("--strategy", fuse.strategy, "concat, max or gate")->required();
  f->add_option("--params", fuse.params, "JSON with \"alphas\" (concat) or \"w\", \"b\" (gate)");
  f->add_option("--out", fuse.out, "Fused matrix (CSV or JSON)")->required();
  f->add_option("--weights-out", fuse.weights_out, "Gate importance weights CSV");
  f->add_option("--metrics", fuse.metrics, "Metrics CSV to append the fused row to");

  GraphArgs graph;
  auto* gr = app.add_subcommand("graph", "Export one head's attention as a graph");
  gr->add_option("--trace", graph.trace, "Trace file")->required();
  gr->add_option("--layer", graph.layer, "Layer, 1-based");
  gr->add_option("--head", graph.head, "Head, 0-based");
  gr->add_option("--format", graph.format, "dot or edge-list");
  gr->add_option("--threshold", graph.threshold, "Keep edges with weight above this");
  gr->add_option("--out", graph.out, "Output file (default stdout)");

  KdeArgs kde;
  double bandwidth = 0.0;
  auto* k = app.add_subcommand("kde", "Kernel density estimate of sigma1*sigma2 samples");
  k->add_option("--values", kde.values, "File of sample values");
  k->add_option("--traces", kde.traces, "Trace files; each contributes its last layer");
  auto* bw_opt = k->add_option("--bandwidth", bandwidth, "Kernel bandwidth (default Scott)");
  k->add_option("--grid", kde.grid, "lo:hi:steps");
  k->add_option("--out", kde.out, "x,density CSV (default stdout)");

  ShareTableArgs table;
  auto* t = app.add_subcommand("share-table", "Self-attention FLOPs under attention sharing");
  t->add_option("--n", table.n, "Tokens");
  t->add_option("--d", table.d, "Model width");
  t->add_option("--layers", table.layers, "Number of layers");
  t->add_option("--share", table.ranges, "Ranges a..b, or none; repeatable or comma-separated");
  t->add_option("--format", table.format, "text or tsv");
  t->add_option("--out", table.out, "Output file (default stdout)");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*r) return cmd_run(run_args, out);
    if (*v) {
      if (*replay_opt) verify.replay = replay;
      return cmd_verify(verify, out, err);
    }
    if (*f) return cmd_fuse(fuse, out);
    if (*gr) return cmd_graph(graph, out);
    if (*k) {
      if (*bw_opt) kde.bandwidth = bandwidth;
      return cmd_kde(kde, out);
    }
    if (*t) return cmd_share_table(table, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace smoothlab::cli
