#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "smoothlab/diagnostics.hpp"
#include "smoothlab/format.hpp"
#include "smoothlab/io.hpp"

using namespace smoothlab;
namespace fs = std::filesystem;

namespace {

Matrix awkward_values() {
  return Matrix{{0.1, -1.0 / 3.0, 1e-300},
                {std::numeric_limits<double>::max(), -0.0, 6.02214076e23},
                {std::nextafter(1.0, 2.0), 5e-324, -123456789.123456789}};
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(MatrixFile, CsvRoundTripIsExact) {
  const Matrix m = awkward_values();
  const Matrix back = io::matrix_from_csv(io::matrix_to_csv(m));
  EXPECT_EQ(back, m);
  EXPECT_TRUE(std::signbit(back(1, 1)));
  EXPECT_EQ(io::matrix_to_csv(Matrix{{1.5, 2}}), "1,2\n1.5,2\n");
}

TEST(MatrixFile, JsonRoundTripIsExact) {
  const Matrix m = awkward_values();
  EXPECT_EQ(io::matrix_from_json(io::matrix_to_json(m)), m);
  const auto dir = oracle::scratch_dir("matrix_json");
  io::write_matrix(dir / "m.json", m);
  io::write_matrix(dir / "m.csv", m);
  EXPECT_EQ(io::read_matrix(dir / "m.json"), m);
  EXPECT_EQ(io::read_matrix(dir / "m.csv"), m);
  EXPECT_EQ(io::parse_json(io::read_file(dir / "m.json"), "m").at("rows"), 3);
}

TEST(MatrixFile, ShapeMismatchesAreRejected) {
  EXPECT_THROW(io::matrix_from_csv("2,2\n1,2\n3\n"), io::FormatError);
  EXPECT_THROW(io::matrix_from_csv("3,1\n1\n2\n"), io::FormatError);
  EXPECT_THROW(io::matrix_from_csv("1,2\n1,x\n"), io::FormatError);
  EXPECT_THROW(io::matrix_from_csv(""), io::FormatError);
  EXPECT_THROW(io::matrix_from_json(io::json{{"rows", 2}, {"cols", 2}, {"data", {1, 2, 3}}}),
               io::FormatError);
}

TEST(MatrixFile, RandomRoundTripProperty) {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix m(rng.between(1, 5), rng.between(1, 5));
    for (double& x : m.data()) {
      // Random bit patterns cover subnormals and extreme exponents.
      std::uint64_t bits = rng.next();
      std::memcpy(&x, &bits, sizeof x);
      if (!std::isfinite(x)) x = rng.uniform(-1, 1);
    }
    ASSERT_EQ(io::matrix_from_csv(io::matrix_to_csv(m)), m);
  }
}

TEST(StackFile, RoundTrip) {
  io::StackFile s{42, 0.5, random_stack(42, {8, 2, 16}, 3, 0.5)};
  s.blocks[1].ln2.gamma[3] = 1.7;
  s.blocks[2].ln1.eps = 1e-5;
  const auto back = io::stack_from_json(io::stack_to_json(s));
  ASSERT_EQ(back.blocks.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_TRUE(back.blocks[l] == s.blocks[l]) << l;
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.weight_scale, 0.5);
  // Text form round-trips too.
  const auto text = io::stack_to_json(s).dump();
  EXPECT_TRUE(io::stack_from_json(io::parse_json(text, "params")).blocks[2] == s.blocks[2]);
}

TEST(StackFile, ErrorsNameTheField) {
  io::StackFile s{1, 1.0, random_stack(1, {4, 2, 4}, 2, 1.0)};
  auto j = io::stack_to_json(s);
  j["blocks"][1]["heads"][0].erase("Wq");
  try {
    io::stack_from_json(j);
    FAIL() << "expected FormatError";
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("blocks[1].heads[0]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("Wq"), std::string::npos) << e.what();
  }
  j = io::stack_to_json(s);
  j["blocks"][0]["b1"] = {1, 2};
  try {
    io::stack_from_json(j);
    FAIL() << "expected FormatError";
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("blocks[0]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::parse_json("{\"blocks\": [", "params"), io::FormatError);
}

TEST(TraceFile, RoundTripIsBitwise) {
  const auto blocks = random_stack(5, {6, 2, 8}, 4, 0.8);
  const auto t = stack_forward(oracle::random_matrix(6, 5, 6, -2, 2), blocks, ShareConfig{3, 4, 4});
  const auto back = io::trace_from_json(io::parse_json(io::trace_to_json(t).dump(), "trace"));
  EXPECT_EQ(back.embeddings, t.embeddings);
  ASSERT_EQ(back.layers(), 4u);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(back.blocks[l].input, t.blocks[l].input);
    EXPECT_EQ(back.blocks[l].output, t.blocks[l].output);
    EXPECT_EQ(back.blocks[l].attn, t.blocks[l].attn);
    EXPECT_EQ(back.blocks[l].pre_ln1_std, t.blocks[l].pre_ln1_std);
    EXPECT_EQ(back.blocks[l].pre_ln2_std, t.blocks[l].pre_ln2_std);
  }
  EXPECT_EQ(back.share_map, t.share_map);
}

TEST(TraceFile, LayerZeroInsideLayersArray) {
  const auto blocks = random_stack(7, {4, 1, 4}, 2, 0.8);
  const auto t = stack_forward(oracle::random_matrix(8, 3, 4), blocks);
  auto j = io::trace_to_json(t);
  const auto emb = j["embeddings"];
  j.erase("embeddings");
  auto& layers = j["layers"];
  layers.insert(layers.begin(), io::json{{"H", emb}});
  const auto back = io::trace_from_json(j);
  EXPECT_EQ(back.embeddings, t.embeddings);
  EXPECT_EQ(back.blocks[1].output, t.blocks[1].output);
  layers.erase(layers.begin());
  EXPECT_THROW(io::trace_from_json(j), io::FormatError);
}

TEST(TraceFile, SchemaErrors) {
  const auto t = stack_forward(oracle::random_matrix(9, 3, 4), random_stack(9, {4, 2, 4}, 2, 1.0));
  auto j = io::trace_to_json(t);
  j["layers"][1]["attn"].erase(1);
  EXPECT_THROW(io::trace_from_json(j), io::FormatError);
  j = io::trace_to_json(t);
  j["layers"][0]["pre_ln1_std"] = {1.0};
  try {
    io::trace_from_json(j);
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("layers[0]"), std::string::npos);
  }
  j = io::trace_to_json(t);
  j["share_map"] = {2, 1};
  EXPECT_THROW(io::trace_from_json(j), io::FormatError);
}

TEST(Metrics, RowsAndBlanks) {
  const auto blocks = random_stack(10, {6, 2, 8}, 3, 0.7);
  const auto t = stack_forward(oracle::random_matrix(11, 4, 6, -2, 2), blocks);
  const auto rows = io::compute_metrics(t, blocks);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].sigma1.has_value());
  EXPECT_FALSE(rows[0].v.has_value());
  EXPECT_EQ(rows[0].d_m, distance_to_M(t.embeddings));
  const auto sims = attn_layer_similarity(t);
  for (std::size_t l = 1; l <= 3; ++l) {
    const auto r = contraction_report(t.blocks[l - 1], blocks[l - 1]);
    EXPECT_EQ(rows[l].v, r.v);
    EXPECT_EQ(rows[l].bound_holds, r.bound_holds);
    EXPECT_EQ(rows[l].sigma_product, sigma_product(t, l));
    EXPECT_EQ(rows[l].cos_sim, cos_sim(t.hidden(l)));
  }
  EXPECT_EQ(rows[1].attn_sim_to_next, sims[0]);
  EXPECT_FALSE(rows[3].attn_sim_to_next.has_value());

  const auto lines = split_lines(io::metrics_csv(rows));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], io::kMetricsHeader);
  EXPECT_EQ(lines[1].substr(lines[1].find(',', lines[1].find(',') + 1)), "," +
            format_real(distance_to_M(t.embeddings)) + ",,,,,,,,");
  EXPECT_EQ(lines[3].substr(0, 2), "2,");
  EXPECT_EQ(lines[4].back(), ',');

  const auto no_params = io::compute_metrics(t);
  EXPECT_FALSE(no_params[1].v.has_value());
  EXPECT_FALSE(no_params[1].s.has_value());
  EXPECT_EQ(no_params[1].lambda, rows[1].lambda);
  EXPECT_EQ(no_params[1].sigma1, rows[1].sigma1);
}

TEST(Metrics, FusedLine) {
  EXPECT_EQ(io::fused_metrics_line("F", 0.5, 2.0), "F,0.5,2,,,,,,,,\n");
  EXPECT_EQ(io::fused_metrics_line("F", std::nullopt, 0.0), "F,,0,,,,,,,,\n");
}

TEST(AtomicWrite, ReplacesWithoutLeftovers) {
  const auto dir = oracle::scratch_dir("atomic");
  io::write_file_atomic(dir / "a.txt", "first");
  io::write_file_atomic(dir / "a.txt", "second");
  EXPECT_EQ(io::read_file(dir / "a.txt"), "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(io::read_file(dir / "missing.txt"), io::FormatError);
}
