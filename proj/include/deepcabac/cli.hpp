#pragma once

// Command implementations behind the `deepcabac` executable. Each command
// takes parsed options plus output/error streams and returns the exit code:
//   0 success, 1 usage, 2 ingestion / stream format, 3 internal.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepcabac/container.hpp"
#include "deepcabac/huffman.hpp"
#include "deepcabac/ingest.hpp"
#include "deepcabac/npy.hpp"
#include "deepcabac/pipeline.hpp"

namespace deepcabac::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIngestion = 2, kInternal = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::filesystem::path manifest;
  std::string mode = "dcv2";
  std::vector<double> deltas;   // compress uses the first; sweep uses all
  std::vector<double> lambdas;  // likewise
  std::vector<double> s_values;
  unsigned n_flags = 10;
  std::optional<std::string> importance_kind;
  std::size_t clusters = 64;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> csv;
  unsigned threads = 1;
  bool timing = true;
};

inline Mode parse_mode(const std::string& s) {
  if (s == "dcv1") return Mode::DcV1;
  if (s == "dcv2") return Mode::DcV2;
  if (s == "uniform") return Mode::Uniform;
  if (s == "lloyd") return Mode::Lloyd;
  throw UsageError("unknown mode '" + s + "' (expected dcv1, dcv2, uniform or lloyd)");
}

inline ImportanceKind importance_kind(const Options& o, Mode mode) {
  const std::string k = o.importance_kind.value_or(mode == Mode::DcV1 ? "fisher" : "uniform");
  if (k == "fisher") return ImportanceKind::Fisher;
  if (k == "sigma") return ImportanceKind::Sigma;
  if (k == "uniform") {
    if (mode == Mode::DcV1) throw UsageError("dcv1 needs --importance-kind fisher or sigma");
    return ImportanceKind::Uniform;
  }
  throw UsageError("unknown importance kind '" + k + "' (expected fisher, sigma or uniform)");
}

inline CompressParams compress_params(const Options& o, Mode mode) {
  CompressParams p;
  p.mode = mode;
  p.n_flags = o.n_flags;
  p.threads = std::max(1u, o.threads);
  p.clusters = o.clusters;
  if (o.n_flags < 1 || o.n_flags > 255) throw UsageError("--n-flags must be in 1..255");
  p.lambda = o.lambdas.empty() ? 0.0 : o.lambdas.front();
  if (p.lambda < 0.0) throw UsageError("--lambda must be >= 0");
  if (mode == Mode::Uniform || mode == Mode::DcV2) {
    if (o.deltas.empty()) throw UsageError(std::string(mode_name(mode)) + " mode needs --delta");
    if (!(o.deltas.front() > 0.0)) throw UsageError("--delta must be > 0");
    p.delta = static_cast<float>(o.deltas.front());
  }
  if (mode == Mode::DcV1) p.s = o.s_values.empty() ? 0.0 : o.s_values.front();
  if (mode == Mode::Lloyd && o.clusters < 2) throw UsageError("--clusters must be >= 2");
  return p;
}

// Runs `body`, mapping library exceptions onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << "\n";
    return kIngestion;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIngestion;
  } catch (const CorruptStream& e) {
    err << "error: " << e.what() << "\n";
    return kIngestion;
  } catch (const TruncatedStream& e) {
    err << "error: " << e.what() << "\n";
    return kIngestion;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kIngestion;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

inline std::string fmt_num(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// RFC-4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (const char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::uint64_t fnv1a(std::span<const float> values) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  for (std::size_t i = 0; i < values.size() * 4; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_name_for(const std::string& tensor) {
  std::string s = tensor;
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  return s + ".npy";
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("short write to " + p.string());
}

// ---------------------------------------------------------------------------

inline int cmd_compress(const Options& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Mode mode = parse_mode(o.mode);
    const auto params = compress_params(o, mode);
    const auto layers = load_layers(o.manifest, importance_kind(o, mode));
    const auto result = compress_layers(layers, params);
    const auto stats = point_stats(layers, result);

    std::ostream& report = o.out ? out : err;
    if (o.out) {
      write_bytes(*o.out, result.stream);
    } else {
      out.write(reinterpret_cast<const char*>(result.stream.data()),
                static_cast<std::streamsize>(result.stream.size()));
    }
    const std::size_t n = result.total_weights();
    report << "mode " << mode_name(mode) << ", " << layers.size() << " tensors, " << n << " weights\n";
    report << "tensor\tkind\tweights\tdelta\tpayload_bytes\tbits_per_weight\tsparsity\n";
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& r = result.layers[i];
      const std::size_t zeros = static_cast<std::size_t>(std::count(r.levels.begin(), r.levels.end(), 0));
      const double bpw = r.recon.empty() ? 0.0 : 8.0 * static_cast<double>(r.record.payload.size()) /
                                                     static_cast<double>(r.recon.size());
      const char* kind = layers[i].raw ? "raw" : (mode == Mode::Lloyd ? "codebook" : "quantized");
      report << layers[i].name << "\t" << kind << "\t" << r.recon.size() << "\t"
             << (r.delta > 0.0f ? fmt_num(r.delta, 8) : std::string("-")) << "\t" << r.record.payload.size() << "\t"
             << fmt_num(bpw, 6) << "\t"
             << (layers[i].raw || r.levels.empty() ? std::string("-")
                                                   : fmt_num(static_cast<double>(zeros) / r.levels.size(), 6))
             << "\n";
    }
    const double ratio = stats.total_bits > 0 ? 32.0 * static_cast<double>(n) / stats.total_bits : 0.0;
    report << "total " << result.stream.size() << " bytes, " << fmt_num(stats.bits_per_weight, 6)
           << " bits/weight, ratio x" << fmt_num(ratio, 6) << " vs float32, mse " << fmt_num(stats.mse, 6)
           << ", weighted mse " << fmt_num(stats.weighted_mse, 6) << "\n";
    return kOk;
  });
}

inline int cmd_decompress(const std::filesystem::path& in, const std::filesystem::path& out_dir, std::ostream& out,
                          std::ostream& err) {
  return guarded(err, [&] {
    const auto bytes = read_bytes(in);
    const auto records = read_stream(bytes);
    // Decode everything before touching the filesystem so a corrupt record
    // leaves no partial output behind.
    std::vector<DecodedTensor> tensors;
    tensors.reserve(records.size());
    for (const auto& r : records) tensors.push_back(decode_record(r));

    const bool created = !std::filesystem::exists(out_dir);
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    try {
      for (const auto& t : tensors) {
        const auto path = out_dir / file_name_for(t.name);
        npy::save(path, t.shape, t.values);
        written.push_back(path);
      }
    } catch (...) {
      for (const auto& p : written) std::filesystem::remove(p);
      if (created) std::filesystem::remove_all(out_dir);
      throw;
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      out << tensors[i].name << "\t" << written[i].filename().string() << "\t" << tensors[i].values.size()
          << "\tfnv1a64=" << hex64(fnv1a(tensors[i].values)) << "\n";
    }
    return kOk;
  });
}

inline int cmd_inspect(const std::filesystem::path& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto bytes = read_bytes(in);
    const auto records = read_stream(bytes);
    out << "magic DCBC, version " << kStreamVersion << ", " << records.size() << " tensors, " << bytes.size()
        << " bytes\n";
    for (const auto& r : records) {
      const auto t = decode_record(r);
      out << "tensor " << r.name << "\n";
      out << "  dims [";
      for (std::size_t i = 0; i < r.dims.size(); ++i) out << (i ? ", " : "") << r.dims[i];
      out << "], " << r.element_count() << " weights\n";
      if (r.kind == RecordKind::Raw) {
        out << "  kind raw, " << r.payload.size() << " bytes\n";
        continue;
      }
      if (r.kind == RecordKind::Quantized) {
        out << "  kind quantized, delta " << fmt_num(r.delta, 9);
      } else {
        out << "  kind codebook, " << r.centers.size() << " centers";
      }
      out << ", n_flags " << unsigned{r.n_flags} << ", payload " << r.payload.size() << " bytes\n";
      if (t.levels.empty()) continue;
      const auto h = epmd(t.levels);
      const double zeros = static_cast<double>(h.counts.count(0) ? h.counts.at(0) : 0);
      out << "  entropy " << fmt_num(entropy(h), 8) << " bits/weight, sparsity "
          << fmt_num(zeros / static_cast<double>(h.total), 8) << ", coded "
          << fmt_num(8.0 * r.payload.size() / static_cast<double>(h.total), 8) << " bits/weight\n";
      out << "  histogram";
      for (const auto& [level, count] : h.counts) out << " " << level << ":" << count;
      out << "\n";
    }
    return kOk;
  });
}

inline const char* kSweepHeader =
    "mode,S,delta,lambda,total_bits,bits_per_weight,mse,weighted_mse,sparsity_fraction,wall_time_ms,status";

inline int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Mode mode = parse_mode(o.mode);
    if (o.n_flags < 1 || o.n_flags > 255) throw UsageError("--n-flags must be in 1..255");
    const auto layers = load_layers(o.manifest, importance_kind(o, mode));
    const auto points = sweep_grid(mode, o.s_values, o.lambdas, o.deltas);

    std::vector<SweepRow> rows(points.size());
    parallel_for(points.size(), std::max(1u, o.threads), [&](std::size_t i) {
      rows[i].point = points[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto r = compress_layers(layers, params_for(points[i], o.n_flags));
        rows[i].stats = point_stats(layers, r);
      } catch (const std::exception& e) {
        rows[i].status = std::string("error: ") + e.what();
      }
      const auto t1 = std::chrono::steady_clock::now();
      rows[i].wall_time_ms = o.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
    });

    std::ostringstream csv;
    csv << kSweepHeader << "\n";
    for (const auto& r : rows) {
      const auto& s = r.stats;
      csv << mode_name(r.point.mode) << "," << (mode == Mode::DcV1 ? fmt_num(r.point.s) : "") << ","
          << (mode == Mode::DcV2 ? fmt_num(r.point.delta) : "") << "," << fmt_num(r.point.lambda) << ","
          << fmt_num(s.total_bits, 15) << "," << fmt_num(s.bits_per_weight) << "," << fmt_num(s.mse) << ","
          << fmt_num(s.weighted_mse) << "," << fmt_num(s.sparsity) << "," << fmt_num(r.wall_time_ms, 6) << ","
          << csv_field(r.status) << "\n";
    }
    if (o.csv) {
      std::ofstream f(*o.csv, std::ios::binary);
      if (!f) throw IngestionError("cannot write " + o.csv->string());
      f << csv.str();
    } else {
      out << csv.str();
    }

    const auto frontier = pareto_frontier(rows);
    if (o.out) {
      for (const auto idx : frontier) {
        const auto dir = *o.out / "frontier" / std::to_string(idx);
        std::filesystem::create_directories(dir);
        const auto r = compress_layers(layers, params_for(rows[idx].point, o.n_flags));
        for (std::size_t i = 0; i < layers.size(); ++i) {
          npy::save(dir / file_name_for(layers[i].name), layers[i].tensor.shape, r.layers[i].recon);
        }
      }
    }
    err << points.size() << " grid points, " << frontier.size() << " on the bits/weighted-mse frontier\n";
    return kOk;
  });
}

inline const char* kBaselineHeader =
    "tensor,weights,entropy_bits,huffman_bits,huffman_table_bits,huffman_total_bits,cabac_bits";

struct BaselineRow {
  std::string tensor;
  std::size_t weights = 0;
  double entropy_bits = 0.0;
  std::size_t huffman_bits = 0;
  std::size_t huffman_table_bits = 0;
  std::size_t cabac_bits = 0;
};

/// Sizes of one level sequence under scalar Huffman, CABAC and the EPMD bound.
inline BaselineRow baseline_sizes(const std::string& name, std::span<const std::int32_t> levels,
                                  std::span<const std::uint8_t> cabac_payload) {
  BaselineRow row;
  row.tensor = name;
  row.weights = levels.size();
  row.cabac_bits = 8 * cabac_payload.size();
  if (levels.empty()) return row;
  const auto h = epmd(levels);
  const auto code = huffman_build(h);
  row.entropy_bits = entropy(h) * static_cast<double>(levels.size());
  row.huffman_bits = huffman_encode(code, levels).bit_count;
  row.huffman_table_bits = table_bits(code);
  return row;
}

inline int cmd_baseline(const Options& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Mode mode = parse_mode(o.mode);
    const auto params = compress_params(o, mode);
    const auto layers = load_layers(o.manifest, importance_kind(o, mode));
    const auto result = compress_layers(layers, params);

    std::vector<BaselineRow> rows;
    BaselineRow total;
    total.tensor = "TOTAL";
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].raw) continue;
      auto row = baseline_sizes(layers[i].name, result.layers[i].levels, result.layers[i].record.payload);
      total.weights += row.weights;
      total.entropy_bits += row.entropy_bits;
      total.huffman_bits += row.huffman_bits;
      total.huffman_table_bits += row.huffman_table_bits;
      total.cabac_bits += row.cabac_bits;
      rows.push_back(std::move(row));
    }
    rows.push_back(total);

    std::ostringstream csv;
    csv << kBaselineHeader << "\n";
    for (const auto& r : rows) {
      csv << csv_field(r.tensor) << "," << r.weights << "," << fmt_num(r.entropy_bits, 12) << "," << r.huffman_bits
          << "," << r.huffman_table_bits << "," << (r.huffman_bits + r.huffman_table_bits) << "," << r.cabac_bits
          << "\n";
    }
    if (o.csv) {
      std::ofstream f(*o.csv, std::ios::binary);
      if (!f) throw IngestionError("cannot write " + o.csv->string());
      f << csv.str();
    } else {
      out << csv.str();
    }
    return kOk;
  });
}

}  // namespace deepcabac::cli
