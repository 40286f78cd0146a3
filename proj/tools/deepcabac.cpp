#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "deepcabac/cli.hpp"

namespace {

void add_common(CLI::App* cmd, deepcabac::cli::Options& o, bool grids) {
  cmd->add_option("--manifest", o.manifest, "JSON manifest listing tensors")->required();
  cmd->add_option("--mode", o.mode, "dcv1 | dcv2 | uniform | lloyd");
  cmd->add_option("--delta", o.deltas, grids ? "step-size grid" : "step-size")->delimiter(',');
  cmd->add_option("--lambda", o.lambdas, grids ? "lambda grid" : "rate weight lambda")->delimiter(',');
  cmd->add_option("--s-values", o.s_values, "DC-v1 coarseness S (comma separated)")->delimiter(',');
  cmd->add_option("--n-flags", o.n_flags, "number of AbsGr flags")->capture_default_str();
  cmd->add_option("--importance-kind", o.importance_kind, "fisher | sigma | uniform");
  cmd->add_option("--clusters", o.clusters, "cluster count for lloyd mode")->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  namespace dc = deepcabac::cli;
  CLI::App app{"deepcabac: context-adaptive arithmetic coding of neural-network weights"};
  app.require_subcommand(1);

  dc::Options opts;
  std::string in_path, out_dir;

  auto* compress = app.add_subcommand("compress", "quantize and encode the tensors of a manifest");
  add_common(compress, opts, false);
  compress->add_option("--out", opts.out, "output stream (stdout when absent)");

  auto* decompress = app.add_subcommand("decompress", "decode a stream into one NPY file per tensor");
  decompress->add_option("input", in_path, "compressed stream")->required();
  decompress->add_option("--out", out_dir, "output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "print stream header and per-tensor statistics");
  inspect->add_option("input", in_path, "compressed stream")->required();

  auto* sweep = app.add_subcommand("sweep", "run a hyperparameter grid and report bits vs distortion");
  add_common(sweep, opts, true);
  sweep->add_option("--csv", opts.csv, "CSV report path (stdout when absent)");
  sweep->add_option("--out", opts.out, "directory for Pareto-frontier reconstructions");
  sweep->add_flag("!--no-timing", opts.timing, "write 0 in wall_time_ms for reproducible CSVs");

  auto* baseline = app.add_subcommand("baseline", "compare scalar Huffman, CABAC and the EPMD entropy");
  add_common(baseline, opts, false);
  baseline->add_option("--csv", opts.csv, "CSV report path (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dc::kUsage;
  }

  if (*compress) return dc::cmd_compress(opts, std::cout, std::cerr);
  if (*decompress) return dc::cmd_decompress(in_path, out_dir, std::cout, std::cerr);
  if (*inspect) return dc::cmd_inspect(in_path, std::cout, std::cerr);
  if (*sweep) return dc::cmd_sweep(opts, std::cout, std::cerr);
  if (*baseline) return dc::cmd_baseline(opts, std::cout, std::cerr);
  return dc::kUsage;
}
