#pragma once

// Layer-level compression driver shared by the CLI commands: loads a
// manifest, quantizes each layer in the chosen mode and builds stream records.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "deepcabac/container.hpp"
#include "deepcabac/ingest.hpp"
#include "deepcabac/quantizers.hpp"

namespace deepcabac {

enum class Mode { DcV1, DcV2, Uniform, Lloyd };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::DcV1:
      return "dcv1";
    case Mode::DcV2:
      return "dcv2";
    case Mode::Uniform:
      return "uniform";
    case Mode::Lloyd:
      return "lloyd";
  }
  return "?";
}

struct Layer {
  std::string name;
  WeightTensor tensor;
  ImportanceMap importance;
  bool raw = false;
};

inline std::vector<Layer> load_layers(const std::filesystem::path& manifest, ImportanceKind kind) {
  std::vector<Layer> layers;
  for (const auto& entry : manifest_parse(manifest)) {
    Layer layer;
    layer.name = entry.name;
    layer.raw = entry.raw;
    layer.tensor = npy::load_tensor(entry.weights);
    layer.tensor.name = entry.name;
    try {
      layer.tensor.validate();
    } catch (const InputError& e) {
      throw IngestionError(e.what());
    }
    layer.importance = layer.raw ? ImportanceMap::uniform(layer.tensor.size())
                                 : load_importance(entry.importance, layer.tensor, kind);
    layers.push_back(std::move(layer));
  }
  return layers;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

struct CompressParams {
  Mode mode = Mode::DcV2;
  float delta = 0.01f;      // uniform, dcv2
  double lambda = 0.0;      // dcv1, dcv2, lloyd
  double s = 0.0;           // dcv1
  unsigned n_flags = 10;
  std::size_t clusters = 64;  // lloyd
  unsigned threads = 1;
};

struct LayerResult {
  TensorRecord record;
  std::vector<std::int32_t> levels;  // empty for raw layers
  std::vector<float> recon;
  float delta = 0.0f;  // 0 for raw and codebook layers
};

struct CompressResult {
  std::vector<LayerResult> layers;
  std::vector<std::uint8_t> stream;

  std::size_t total_weights() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.recon.size();
    return n;
  }
};

/// Step-size for one layer in DC-v1: sigma_min and w_max are per layer.
inline float dcv1_layer_delta(const Layer& layer, double s) {
  const double smin = sigma_min(layer.importance);
  if (!std::isfinite(smin)) throw InputError("tensor '" + layer.name + "': importance has no positive entry");
  double wmax = 0.0;
  for (const float w : layer.tensor.values) wmax = std::max(wmax, std::abs(static_cast<double>(w)));
  if (wmax == 0.0) return static_cast<float>(smin);
  const double s_values[] = {s};
  return static_cast<float>(stepsizes_v1(wmax, smin, s_values).front());
}

namespace detail {

inline LayerResult quantize_layer(const Layer& layer, const CompressParams& p) {
  LayerResult out;
  if (layer.raw) {
    out.record = make_raw_record(layer.tensor);
    out.recon = layer.tensor.values;
    return out;
  }
  QuantGrid grid;
  switch (p.mode) {
    case Mode::Uniform:
      grid = uniform_quantize(layer.tensor, p.delta);
      break;
    case Mode::DcV2:
      grid = rd_quantize(layer.tensor, nullptr, RdHyperParams{p.lambda, p.delta, p.n_flags});
      break;
    case Mode::DcV1:
      grid = rd_quantize(layer.tensor, &layer.importance,
                         RdHyperParams{p.lambda, dcv1_layer_delta(layer, p.s), p.n_flags});
      break;
    case Mode::Lloyd:
      throw ContractViolation("quantize_layer: lloyd mode is network-wide");
  }
  out.record = make_quantized_record(layer.name, layer.tensor.shape, grid, p.n_flags);
  out.delta = grid.delta;
  out.recon = dequantize(grid);
  out.levels = std::move(grid.levels);
  return out;
}

// Weighted Lloyd over all quantized layers at once; one shared codebook.
inline std::vector<LayerResult> lloyd_layers(const std::vector<Layer>& layers, const CompressParams& p) {
  std::vector<float> w;
  std::vector<double> f;
  for (const auto& l : layers) {
    if (l.raw) continue;
    w.insert(w.end(), l.tensor.values.begin(), l.tensor.values.end());
    f.insert(f.end(), l.importance.values.begin(), l.importance.values.end());
  }
  std::vector<LayerResult> out(layers.size());
  std::vector<float> centers;
  std::vector<std::int32_t> rank_of;
  std::uint32_t zero_index = 0;
  LloydResult lr;
  if (!w.empty()) {
    lr = lloyd_quantize(w, f, p.clusters, p.lambda);
    std::vector<std::size_t> order(lr.centers.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return lr.centers[a] < lr.centers[b]; });
    rank_of.resize(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      rank_of[order[r]] = static_cast<std::int32_t>(r);
      centers.push_back(static_cast<float>(lr.centers[order[r]]));
    }
    zero_index = static_cast<std::uint32_t>(rank_of[lr.zero_cluster]);
  }
  std::size_t offset = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    auto& r = out[li];
    if (l.raw) {
      r.record = make_raw_record(l.tensor);
      r.recon = l.tensor.values;
      continue;
    }
    r.levels.resize(l.tensor.size());
    r.recon.resize(l.tensor.size());
    for (std::size_t i = 0; i < l.tensor.size(); ++i) {
      const auto cluster = lr.assignments[offset + i];
      r.levels[i] = rank_of[cluster] - static_cast<std::int32_t>(zero_index);
      r.recon[i] = centers[static_cast<std::size_t>(rank_of[cluster])];
    }
    offset += l.tensor.size();
    r.record = make_codebook_record(l.name, l.tensor.shape, centers, zero_index, r.levels, p.n_flags);
  }
  return out;
}

}  // namespace detail

inline CompressResult compress_layers(const std::vector<Layer>& layers, const CompressParams& p) {
  CompressResult result;
  if (p.mode == Mode::Lloyd) {
    result.layers = detail::lloyd_layers(layers, p);
  } else {
    result.layers.resize(layers.size());
    parallel_for(layers.size(), p.threads,
                 [&](std::size_t i) { result.layers[i] = detail::quantize_layer(layers[i], p); });
  }
  std::vector<TensorRecord> records;
  records.reserve(result.layers.size());
  for (const auto& l : result.layers) records.push_back(l.record);
  result.stream = write_stream(records);
  return result;
}

struct PointStats {
  double total_bits = 0.0;
  double bits_per_weight = 0.0;
  double mse = 0.0;
  double weighted_mse = 0.0;
  double sparsity = 0.0;
};

/// Aggregates over all weights; distortion and sparsity over quantized layers only.
inline PointStats point_stats(const std::vector<Layer>& layers, const CompressResult& r) {
  PointStats s;
  s.total_bits = 8.0 * static_cast<double>(r.stream.size());
  const std::size_t all = r.total_weights();
  s.bits_per_weight = all ? s.total_bits / static_cast<double>(all) : 0.0;
  std::size_t quantized = 0, zeros = 0;
  double se = 0.0, wse = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].raw) continue;
    const auto d = distortion(layers[i].tensor.values, r.layers[i].recon, &layers[i].importance);
    const auto n = static_cast<double>(layers[i].tensor.size());
    se += d.mse * n;
    wse += d.weighted_mse * n;
    quantized += layers[i].tensor.size();
    zeros += static_cast<std::size_t>(std::count(r.layers[i].levels.begin(), r.layers[i].levels.end(), 0));
  }
  if (quantized) {
    s.mse = se / static_cast<double>(quantized);
    s.weighted_mse = wse / static_cast<double>(quantized);
    s.sparsity = static_cast<double>(zeros) / static_cast<double>(quantized);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep

struct SweepPoint {
  Mode mode = Mode::DcV2;
  double s = 0.0;
  double delta = 0.0;
  double lambda = 0.0;
};

/// dcv1: S x lambda (defaults: 11 S values, 100 lambdas).
/// dcv2: lambda x delta (defaults: 21 lambdas, 71 + 31 deltas).
inline std::vector<SweepPoint> sweep_grid(Mode mode, std::vector<double> s_values, std::vector<double> lambdas,
                                          std::vector<double> deltas) {
  std::vector<SweepPoint> points;
  if (mode == Mode::DcV1) {
    if (s_values.empty()) s_values = default_s_values();
    if (lambdas.empty()) lambdas = default_v1_lambdas();
    for (const double s : s_values)
      for (const double l : lambdas) points.push_back(SweepPoint{mode, s, 0.0, l});
  } else if (mode == Mode::DcV2) {
    const auto grids = stepsizes_v2(std::move(lambdas), std::move(deltas));
    for (const double l : grids.lambdas)
      for (const double d : grids.deltas) points.push_back(SweepPoint{mode, 0.0, d, l});
  } else {
    throw ContractViolation(std::string("sweep: mode must be dcv1 or dcv2, got ") + mode_name(mode));
  }
  return points;
}

struct SweepRow {
  SweepPoint point;
  PointStats stats;
  double wall_time_ms = 0.0;
  std::string status = "ok";
};

inline CompressParams params_for(const SweepPoint& pt, unsigned n_flags) {
  CompressParams p;
  p.mode = pt.mode;
  p.s = pt.s;
  p.delta = static_cast<float>(pt.delta);
  p.lambda = pt.lambda;
  p.n_flags = n_flags;
  p.threads = 1;
  return p;
}

/// Indices of rows on the (total_bits, weighted_mse) Pareto frontier, sorted by bits.
inline std::vector<std::size_t> pareto_frontier(const std::vector<SweepRow>& rows) {
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].status == "ok") ok.push_back(i);
  }
  std::sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = rows[a].stats;
    const auto& sb = rows[b].stats;
    if (sa.total_bits != sb.total_bits) return sa.total_bits < sb.total_bits;
    if (sa.weighted_mse != sb.weighted_mse) return sa.weighted_mse < sb.weighted_mse;
    return a < b;
  });
  std::vector<std::size_t> frontier;
  double best = std::numeric_limits<double>::infinity();
  for (const auto i : ok) {
    if (rows[i].stats.weighted_mse < best) {
      frontier.push_back(i);
      best = rows[i].stats.weighted_mse;
    }
  }
  return frontier;
}

}  // namespace deepcabac
