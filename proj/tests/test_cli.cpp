#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deepcabac/cli.hpp"
#include "test_util.hpp"

using namespace deepcabac;
using namespace deepcabac::cli;
using deepcabac::testutil::TempDir;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(7);
    std::normal_distribution<float> g(0.0f, 0.05f);
    std::uniform_real_distribution<float> s(0.005f, 0.05f);
    std::vector<float> w1(30 * 20), sig1(30 * 20), w2(8 * 3 * 3 * 3), bias(8);
    for (auto& x : w1) x = g(rng);
    for (auto& x : sig1) x = s(rng);
    for (auto& x : w2) x = g(rng);
    for (auto& x : bias) x = g(rng);
    std::vector<float> sig2(w2.size());
    for (auto& x : sig2) x = s(rng);
    npy::save(dir / "fc.npy", std::vector<std::size_t>{30, 20}, w1);
    npy::save(dir / "fc_sigma.npy", std::vector<std::size_t>{30, 20}, sig1);
    npy::save(dir / "conv.npy", std::vector<std::size_t>{8, 3, 3, 3}, w2);
    npy::save(dir / "conv_sigma.npy", std::vector<std::size_t>{8, 3, 3, 3}, sig2);
    npy::save(dir / "bias.npy", std::vector<std::size_t>{8}, bias);
    std::ofstream(dir / "model.json") << R"({"tensors": [
      {"name": "conv.weight", "weights": "conv.npy", "importance": "conv_sigma.npy"},
      {"name": "fc.weight", "weights": "fc.npy", "importance": "fc_sigma.npy"},
      {"name": "conv.bias", "weights": "bias.npy", "importance": null, "raw": true}]})";
    opts.manifest = dir / "model.json";
  }

  std::string compress_to_string(Options o, int* code = nullptr) {
    std::ostringstream out, err;
    const int rc = cmd_compress(o, out, err);
    if (code) *code = rc;
    return out.str();
  }

  TempDir dir;
  Options opts;
};

}  // namespace

TEST_F(CliTest, CompressDecompressRoundTrip) {
  opts.mode = "dcv2";
  opts.deltas = {0.01};
  opts.lambdas = {0.0005};
  opts.out = dir / "model.dcbc";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compress(opts, out, err), kOk) << err.str();
  EXPECT_NE(out.str().find("total "), std::string::npos);
  EXPECT_NE(out.str().find("conv.bias\traw"), std::string::npos);

  std::ostringstream dout, derr;
  ASSERT_EQ(cmd_decompress(dir / "model.dcbc", dir / "decoded", dout, derr), kOk) << derr.str();
  const auto layers = load_layers(opts.manifest, ImportanceKind::Uniform);
  const auto expected = compress_layers(layers, compress_params(opts, Mode::DcV2));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto t = npy::load_tensor(dir / "decoded" / file_name_for(layers[i].name));
    EXPECT_EQ(t.shape, layers[i].tensor.shape);
    EXPECT_EQ(t.values, expected.layers[i].recon);
  }
  EXPECT_EQ(npy::load_tensor(dir / "decoded" / "conv.bias.npy").values, layers[2].tensor.values);
  EXPECT_EQ(lines_of(dout.str()).size(), 3u);
  EXPECT_NE(dout.str().find("fnv1a64="), std::string::npos);
}

TEST_F(CliTest, StreamToStdoutWithSummaryOnStderr) {
  opts.mode = "uniform";
  opts.deltas = {0.02};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compress(opts, out, err), kOk);
  EXPECT_EQ(out.str().substr(0, 4), "DCBC");
  EXPECT_NE(err.str().find("bits/weight"), std::string::npos);
}

TEST_F(CliTest, ZeroLambdaDcv2EqualsUniformByteForByte) {
  Options u = opts, d = opts;
  u.mode = "uniform";
  d.mode = "dcv2";
  u.deltas = d.deltas = {0.013};
  d.lambdas = {0.0};
  int cu = -1, cd = -1;
  const auto su = compress_to_string(u, &cu);
  const auto sd = compress_to_string(d, &cd);
  ASSERT_EQ(cu, kOk);
  ASSERT_EQ(cd, kOk);
  EXPECT_EQ(su, sd);
}

TEST_F(CliTest, CompressionIsDeterministicAcrossRunsAndThreads) {
  for (const char* mode : {"dcv1", "dcv2", "lloyd"}) {
    Options o = opts;
    o.mode = mode;
    o.deltas = {0.01};
    o.lambdas = {std::string(mode) == "lloyd" ? 0.001 : 0.0002};
    o.s_values = {32};
    o.clusters = 16;
    if (std::string(mode) == "dcv1") o.importance_kind = "sigma";
    int code = -1;
    const auto a = compress_to_string(o, &code);
    ASSERT_EQ(code, kOk) << mode;
    o.threads = 3;
    EXPECT_EQ(a, compress_to_string(o)) << mode;
    EXPECT_EQ(a, compress_to_string(o)) << mode;
  }
}

TEST_F(CliTest, DecompressCorruptStreamWritesNothing) {
  opts.mode = "uniform";
  opts.deltas = {0.01};
  opts.out = dir / "m.dcbc";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compress(opts, out, err), kOk);
  auto bytes = read_bytes(dir / "m.dcbc");

  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  write_bytes(dir / "t.dcbc", truncated);
  std::ostringstream o1, e1;
  EXPECT_EQ(cmd_decompress(dir / "t.dcbc", dir / "out_t", o1, e1), kIngestion);
  EXPECT_FALSE(std::filesystem::exists(dir / "out_t"));
  EXPECT_NE(e1.str().find("conv.bias"), std::string::npos) << e1.str();

  auto magic = bytes;
  magic[1] = 'X';
  write_bytes(dir / "x.dcbc", magic);
  std::ostringstream o2, e2;
  EXPECT_EQ(cmd_decompress(dir / "x.dcbc", dir / "out_x", o2, e2), kIngestion);
  EXPECT_FALSE(std::filesystem::exists(dir / "out_x"));

  std::ostringstream o3, e3;
  EXPECT_EQ(cmd_decompress(dir / "absent.dcbc", dir / "out_a", o3, e3), kIngestion);
}

TEST_F(CliTest, DecompressEmptyStream) {
  write_bytes(dir / "empty.dcbc", write_stream({}));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_decompress(dir / "empty.dcbc", dir / "e", out, err), kOk);
  EXPECT_TRUE(std::filesystem::is_empty(dir / "e"));
  EXPECT_TRUE(out.str().empty());
}

TEST_F(CliTest, InspectReportsTensors) {
  opts.mode = "dcv2";
  opts.deltas = {0.01};
  opts.out = dir / "m.dcbc";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compress(opts, out, err), kOk);
  std::ostringstream iout, ierr;
  ASSERT_EQ(cmd_inspect(dir / "m.dcbc", iout, ierr), kOk);
  const auto text = iout.str();
  EXPECT_NE(text.find("magic DCBC, version 1, 3 tensors"), std::string::npos);
  EXPECT_NE(text.find("tensor fc.weight"), std::string::npos);
  EXPECT_NE(text.find("dims [30, 20], 600 weights"), std::string::npos);
  EXPECT_NE(text.find("kind raw, 32 bytes"), std::string::npos);
  EXPECT_NE(text.find("histogram"), std::string::npos);
}

TEST_F(CliTest, UsageAndIngestionErrors) {
  std::ostringstream out, err;
  Options o = opts;
  o.mode = "bogus";
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);
  o = opts;
  o.mode = "uniform";
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);  // no --delta
  o.deltas = {-1.0};
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);
  o = opts;
  o.mode = "dcv1";
  o.importance_kind = "uniform";
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);
  o.importance_kind = "nonsense";
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);
  o = opts;
  o.deltas = {0.01};
  o.n_flags = 0;
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);
  o = opts;
  o.deltas = {0.01};
  o.manifest = dir / "missing.json";
  EXPECT_EQ(cmd_compress(o, out, err), kIngestion);
  o = opts;
  o.mode = "uniform";
  o.deltas = {1e-30};
  EXPECT_EQ(cmd_compress(o, out, err), kUsage);  // level overflow
}

TEST_F(CliTest, Dcv1UsesFisherByDefault) {
  Options o = opts;
  o.mode = "dcv1";
  o.s_values = {0};
  std::ostringstream out, err;
  // Sigma files read as Fisher values still compress; the step-size differs.
  EXPECT_EQ(cmd_compress(o, out, err), kOk) << err.str();
  Options s = o;
  s.importance_kind = "sigma";
  EXPECT_NE(compress_to_string(o), compress_to_string(s));
}

TEST(SweepGrid, DefaultSizes) {
  EXPECT_EQ(sweep_grid(Mode::DcV1, {}, {}, {}).size(), 1100u);
  EXPECT_EQ(sweep_grid(Mode::DcV2, {}, {}, {}).size(), 21u * 102u);
  EXPECT_EQ(sweep_grid(Mode::DcV2, {}, {0.1, 0.2}, {0.01}).size(), 2u);
  EXPECT_THROW(sweep_grid(Mode::Uniform, {}, {}, {}), ContractViolation);
}

TEST(SweepGrid, ParetoFrontier) {
  std::vector<SweepRow> rows(5);
  const double bits[] = {100, 50, 200, 80, 60};
  const double wmse[] = {0.5, 1.0, 0.1, 0.7, 0.6};
  for (int i = 0; i < 5; ++i) {
    rows[i].stats.total_bits = bits[i];
    rows[i].stats.weighted_mse = wmse[i];
  }
  rows[4].status = "error: x";
  EXPECT_EQ(pareto_frontier(rows), (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST_F(CliTest, SweepWritesCsvAndFrontier) {
  Options o = opts;
  o.mode = "dcv2";
  o.lambdas = {0.0, 0.001, 0.01};
  o.deltas = {0.005, 0.01, 0.02, 0.04};
  o.csv = dir / "sweep.csv";
  o.out = dir / "sweep";
  o.timing = false;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep(o, out, err), kOk) << err.str();
  const auto lines = lines_of(slurp(dir / "sweep.csv"));
  ASSERT_EQ(lines.size(), 1u + 12u);
  EXPECT_EQ(lines[0], kSweepHeader);

  std::vector<SweepRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    ASSERT_EQ(f.size(), 11u) << lines[i];
    EXPECT_EQ(f[0], "dcv2");
    EXPECT_EQ(f[1], "");
    EXPECT_EQ(f[9], "0");
    EXPECT_EQ(f[10], "ok");
    SweepRow r;
    r.stats.total_bits = std::stod(f[4]);
    r.stats.weighted_mse = std::stod(f[7]);
    rows.push_back(r);
  }
  const auto frontier = pareto_frontier(rows);
  ASSERT_FALSE(frontier.empty());
  for (std::size_t i = 1; i < frontier.size(); ++i) {
    EXPECT_GT(rows[frontier[i]].stats.total_bits, rows[frontier[i - 1]].stats.total_bits);
    EXPECT_LT(rows[frontier[i]].stats.weighted_mse, rows[frontier[i - 1]].stats.weighted_mse);
  }
  for (const auto idx : frontier) {
    EXPECT_TRUE(std::filesystem::exists(dir / "sweep" / "frontier" / std::to_string(idx) / "fc.weight.npy"));
  }

  // Reproducible output with --no-timing.
  std::ostringstream out2, err2;
  o.csv = dir / "sweep2.csv";
  o.out.reset();
  ASSERT_EQ(cmd_sweep(o, out2, err2), kOk);
  EXPECT_EQ(slurp(dir / "sweep.csv"), slurp(dir / "sweep2.csv"));
}

TEST_F(CliTest, SweepDcv1UsesSAndLambda) {
  Options o = opts;
  o.mode = "dcv1";
  o.importance_kind = "sigma";
  o.s_values = {0, 64};
  o.lambdas = {0.0001, 0.001};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep(o, out, err), kOk) << err.str();
  const auto lines = lines_of(out.str());
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(split(lines[1], ',')[1], "0");
  EXPECT_EQ(split(lines[1], ',')[2], "");
  EXPECT_EQ(split(lines[4], ',')[1], "64");
}

TEST_F(CliTest, BaselineReportsThreeCoders) {
  Options o = opts;
  o.mode = "uniform";
  o.deltas = {0.01};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_baseline(o, out, err), kOk) << err.str();
  const auto lines = lines_of(out.str());
  ASSERT_EQ(lines.size(), 4u);  // header, two quantized tensors, TOTAL
  EXPECT_EQ(lines[0], kBaselineHeader);
  const auto total = split(lines[3], ',');
  EXPECT_EQ(total[0], "TOTAL");
  EXPECT_EQ(total[1], std::to_string(8 * 27 + 600));
  const auto huff = std::stoull(total[3]);
  const auto table = std::stoull(total[4]);
  EXPECT_EQ(std::stoull(total[5]), huff + table);
  EXPECT_GE(static_cast<double>(huff), std::stod(total[2]));
}

TEST(BaselineSizes, MatchesDirectComputation) {
  const std::vector<std::int32_t> levels{0, 0, 0, 1, -1, 0, 2, 0};
  const auto payload = encode_levels(levels, stream_binarizer(10));
  const auto row = baseline_sizes("x", levels, payload);
  EXPECT_EQ(row.weights, 8u);
  EXPECT_EQ(row.cabac_bits, 8 * payload.size());
  EXPECT_NEAR(row.entropy_bits, 8 * entropy(epmd(levels)), 1e-12);
  EXPECT_EQ(row.huffman_bits, 5u * 1 + 2u + 3u + 3u);  // lengths 1, 2, 3, 3
  EXPECT_EQ(row.huffman_table_bits, 8u * (4 + 5 * 4));
}

TEST(CsvField, QuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv_field("ok"), "ok");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST_F(CliTest, BinaryEndToEnd) {
  const std::string exe = DEEPCABAC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int status = std::system((exe + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string m = (dir / "model.json").string();
  const std::string s = (dir / "b.dcbc").string();
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("compress --mode dcv2"), 1);
  EXPECT_EQ(run("compress --manifest " + m + " --mode dcv2 --delta 0.01 --lambda 0.001 --out " + s), 0);
  EXPECT_EQ(run("inspect " + s), 0);
  EXPECT_EQ(run("decompress " + s + " --out " + (dir / "bin_out").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "bin_out" / "fc.weight.npy"));
  EXPECT_EQ(run("decompress " + (dir / "model.json").string() + " --out " + (dir / "bad").string()), 2);
  EXPECT_EQ(run("sweep --manifest " + m + " --mode dcv2 --delta 0.01,0.02 --lambda 0,0.01 --no-timing --csv " +
                (dir / "s.csv").string()),
            0);
  EXPECT_EQ(lines_of(slurp(dir / "s.csv")).size(), 5u);
  EXPECT_EQ(run("baseline --manifest " + m + " --mode uniform --delta 0.01"), 0);
}
