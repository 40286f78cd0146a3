#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "deepcabac/binarizer.hpp"
#include "deepcabac/errors.hpp"

namespace deepcabac {

struct WeightTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;  // row-major

  std::size_t size() const noexcept { return values.size(); }

  void validate() const {
    const std::size_t expected =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    if (expected != values.size()) {
      throw InputError("tensor '" + name + "': shape holds " + std::to_string(expected) + " elements but " +
                       std::to_string(values.size()) + " values given");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw InputError("tensor '" + name + "': non-finite weight at index " + std::to_string(i));
      }
    }
  }
};

struct ImportanceMap {
  std::vector<double> values;

  static ImportanceMap uniform(std::size_t n) { return ImportanceMap{std::vector<double>(n, 1.0)}; }

  void validate(std::size_t expected) const {
    if (values.size() != expected) {
      throw InputError("importance map has " + std::to_string(values.size()) + " entries, tensor has " +
                       std::to_string(expected));
    }
    bool any_positive = values.empty();
    for (const double f : values) {
      if (!(f >= 0.0) || !std::isfinite(f)) throw InputError("importance values must be finite and >= 0");
      any_positive = any_positive || f > 0.0;
    }
    if (!any_positive) throw InputError("importance map has no positive entry");
  }
};

struct QuantGrid {
  float delta = 1.0f;
  std::vector<std::int32_t> levels;
};

struct RdHyperParams {
  double lambda = 0.0;
  float delta = 1.0f;
  unsigned n_flags = 10;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractViolation("lambda must be finite and >= 0");
    if (!(delta > 0.0f) || !std::isfinite(delta)) throw ContractViolation("delta must be finite and > 0");
    if (n_flags < 1) throw ContractViolation("n_flags must be >= 1");
  }
};

namespace detail {

inline void check_delta(float delta) {
  if (!(delta > 0.0f) || !std::isfinite(delta)) {
    throw ContractViolation("step-size must be finite and > 0");
  }
}

// round(w / delta), ties away from zero. Computed in double on the float
// step so quantizer and dequantizer agree on the grid.
inline std::int32_t nearest_level(float w, float delta) {
  const double r = std::round(static_cast<double>(w) / static_cast<double>(delta));
  if (r > std::numeric_limits<std::int32_t>::max() || r < std::numeric_limits<std::int32_t>::min()) {
    throw RangeError("quantization level of " + std::to_string(w) + " at step " + std::to_string(delta) +
                     " overflows 32 bits");
  }
  return static_cast<std::int32_t>(r);
}

}  // namespace detail

/// Nearest-neighbour quantization onto the grid delta * Z.
inline QuantGrid uniform_quantize(const WeightTensor& t, float delta) {
  detail::check_delta(delta);
  t.validate();
  QuantGrid g{delta, {}};
  g.levels.reserve(t.size());
  for (const float w : t.values) g.levels.push_back(detail::nearest_level(w, delta));
  return g;
}

/// value_i = delta * level_i in float arithmetic.
inline std::vector<float> dequantize(const QuantGrid& g) {
  std::vector<float> out(g.levels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.delta * static_cast<float>(g.levels[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Rate-distortion quantizer

inline constexpr std::int32_t kRdWindowRadius = 4;

enum class ContextMode {
  Commit,  // chosen level's bins update the contexts before the next weight
  Frozen,  // contexts stay as given for the whole tensor
};

/// Candidate levels scored for one weight: nearest level +- radius, plus 0.
inline std::vector<std::int32_t> rd_candidates(std::int32_t nearest) {
  std::vector<std::int32_t> c;
  c.reserve(2 * kRdWindowRadius + 2);
  const std::int64_t lo = std::max<std::int64_t>(std::int64_t{nearest} - kRdWindowRadius,
                                                 std::numeric_limits<std::int32_t>::min());
  const std::int64_t hi = std::min<std::int64_t>(std::int64_t{nearest} + kRdWindowRadius,
                                                 std::numeric_limits<std::int32_t>::max());
  for (std::int64_t k = lo; k <= hi; ++k) c.push_back(static_cast<std::int32_t>(k));
  if (lo > 0 || hi < 0) c.push_back(0);
  return c;
}

/// True if candidate `a` (with cost ca) beats the incumbent `b` (cost cb).
/// Equal costs: the nearest-neighbour level wins, then smaller |k|, then smaller k.
inline bool rd_prefer(double ca, std::int32_t a, double cb, std::int32_t b, std::int32_t nearest) {
  if (ca != cb) return ca < cb;
  if ((a == nearest) != (b == nearest)) return a == nearest;
  const auto ma = detail::magnitude(a), mb = detail::magnitude(b);
  if (ma != mb) return ma < mb;
  return a < b;
}

/// Sequential greedy minimisation of F_i (w_i - delta k)^2 + lambda * bits(k)
/// in row-major order. Bits come from `ctxs`, which the chosen levels update
/// as the encoder would (ContextMode::Commit).
inline QuantGrid rd_quantize(const WeightTensor& t, const ImportanceMap* importance, const RdHyperParams& hp,
                             ContextSet& ctxs, ContextMode mode = ContextMode::Commit) {
  hp.validate();
  t.validate();
  if (importance) importance->validate(t.size());
  const BinarizerConfig cfg{hp.n_flags, 31};
  if (ctxs.absgr.size() != cfg.n_flags) throw ContractViolation("rd_quantize: ContextSet built for another n_flags");

  const double delta = hp.delta;
  const double delta_sq = delta * delta;
  QuantGrid g{hp.delta, {}};
  g.levels.reserve(t.size());
  bool prev_significant = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = static_cast<double>(t.values[i]) / delta;
    const std::int32_t nearest = detail::nearest_level(t.values[i], hp.delta);
    const double f = importance ? importance->values[i] : 1.0;

    std::int32_t best = nearest;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const std::int32_t k : rd_candidates(nearest)) {
      const double e = x - static_cast<double>(k);
      double cost = f * delta_sq * e * e;
      if (hp.lambda > 0.0) cost += hp.lambda * estimate_level_bits(ctxs, k, cfg, prev_significant);
      if (rd_prefer(cost, k, best_cost, best, nearest)) {
        best = k;
        best_cost = cost;
      }
    }
    if (mode == ContextMode::Commit) commit_level(ctxs, best, cfg, prev_significant);
    g.levels.push_back(best);
    prev_significant = best != 0;
  }
  return g;
}

inline QuantGrid rd_quantize(const WeightTensor& t, const ImportanceMap* importance, const RdHyperParams& hp) {
  ContextSet ctxs(BinarizerConfig{hp.n_flags, 31});
  return rd_quantize(t, importance, hp, ctxs);
}

// ---------------------------------------------------------------------------
// Weighted Lloyd with a forced zero cluster

struct LloydOptions {
  std::size_t max_iterations = 300;
  double relative_tolerance = 1e-9;
};

struct LloydResult {
  std::vector<double> centers;
  std::vector<std::uint32_t> assignments;
  std::vector<double> loss_history;
  std::size_t zero_cluster = 0;
  // Set when fewer distinct weights than requested clusters were available.
  bool reduced_k = false;
};

namespace detail {

struct LloydState {
  std::vector<double> centers;
  std::vector<double> probs;
  std::vector<std::uint32_t> assignments;
};

inline double lloyd_loss(std::span<const float> w, std::span<const double> f, const LloydState& s, double lambda) {
  double j = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto a = s.assignments[i];
    const double e = static_cast<double>(w[i]) - s.centers[a];
    j += f[i] * e * e - lambda * std::log2(s.probs[a]);
  }
  return j;
}

}  // namespace detail

/// Alternates assignment (argmin F_i (w_i - C_j)^2 - lambda log2 P_j over
/// populated clusters) and update (importance-weighted centroids, empirical
/// P_j). The cluster nearest 0 at initialisation is pinned to exactly 0.
inline LloydResult lloyd_quantize(std::span<const float> w, std::span<const double> importance, std::size_t k,
                                  double lambda, const LloydOptions& opts = {}) {
  if (k < 2) throw ContractViolation("lloyd_quantize: need at least 2 clusters");
  if (w.size() != importance.size()) throw InputError("lloyd_quantize: weights and importance differ in length");
  if (w.empty()) throw InputError("lloyd_quantize: no weights");
  if (!(lambda >= 0.0)) throw ContractViolation("lloyd_quantize: lambda must be >= 0");

  LloydResult result;
  // The pinned zero center is always usable, so 0 counts as a distinct value.
  std::unordered_set<float> distinct(w.begin(), w.end());
  distinct.insert(0.0f);
  if (distinct.size() < k) {
    result.reduced_k = true;
    k = std::max<std::size_t>(distinct.size(), 2);
  }

  const auto [min_it, max_it] = std::minmax_element(w.begin(), w.end());
  const double lo = *min_it, hi = *max_it;
  detail::LloydState state;
  state.centers.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    state.centers[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(k - 1);
  }
  state.probs.assign(k, 1.0 / static_cast<double>(k));
  const auto zero = static_cast<std::size_t>(
      std::min_element(state.centers.begin(), state.centers.end(),
                       [](double a, double b) { return std::abs(a) < std::abs(b); }) -
      state.centers.begin());
  state.centers[zero] = 0.0;
  result.zero_cluster = zero;
  state.assignments.assign(w.size(), 0);

  const std::size_t n = w.size();
  std::vector<double> rate(k);
  std::vector<double> sum_fw(k), sum_f(k);
  std::vector<std::size_t> count(k);
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    detail::LloydState next = state;

    for (std::size_t j = 0; j < k; ++j) {
      rate[j] = next.probs[j] > 0.0 ? -lambda * std::log2(next.probs[j]) : std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w[i];
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if (next.probs[j] <= 0.0) continue;
        const double e = wi - next.centers[j];
        const double c = importance[i] * e * e + rate[j];
        if (c < best) {
          best = c;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      next.assignments[i] = arg;
    }

    std::fill(sum_fw.begin(), sum_fw.end(), 0.0);
    std::fill(sum_f.begin(), sum_f.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = next.assignments[i];
      sum_fw[a] += importance[i] * static_cast<double>(w[i]);
      sum_f[a] += importance[i];
      ++count[a];
    }
    std::size_t populated = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != zero && sum_f[j] > 0.0) next.centers[j] = sum_fw[j] / sum_f[j];
      next.probs[j] = static_cast<double>(count[j]) / static_cast<double>(n);
      populated += count[j] > 0 ? 1 : 0;
    }
    // Enforce 0-cluster: the pinned centre already sits at 0, so this only
    // ever rewrites a zero.
    auto smallest = std::min_element(next.centers.begin(), next.centers.end(),
                                      [](double a, double b) { return std::abs(a) < std::abs(b); });
    *smallest = 0.0;

    const double loss = detail::lloyd_loss(w, importance, next, lambda);
    const bool first = result.loss_history.empty();
    const double previous = first ? loss : result.loss_history.back();
    if (loss > previous) break;
    state = std::move(next);
    result.loss_history.push_back(loss);
    if (!first && previous - loss <= opts.relative_tolerance * std::abs(previous)) break;
    if (populated < 2) break;
  }

  result.centers = std::move(state.centers);
  result.assignments = std::move(state.assignments);
  return result;
}

// ---------------------------------------------------------------------------
// Step-size candidates

/// Delta = 2|w_max| / (2|w_max| / sigma_min + S), evaluated as
/// sigma_min / (1 + S sigma_min / (2|w_max|)) so S = 0 gives sigma_min exactly.
inline std::vector<double> stepsizes_v1(double w_max_abs, double sigma_min, std::span<const double> s_values) {
  if (!(w_max_abs > 0.0) || !(sigma_min > 0.0) || !std::isfinite(w_max_abs) || !std::isfinite(sigma_min)) {
    throw InputError("stepsizes_v1: w_max and sigma_min must be positive and finite");
  }
  std::vector<double> out;
  out.reserve(s_values.size());
  for (const double s : s_values) {
    if (!(s >= 0.0)) throw InputError("stepsizes_v1: S must be >= 0");
    out.push_back(sigma_min / (1.0 + s * sigma_min / (2.0 * w_max_abs)));
  }
  return out;
}

inline std::vector<double> default_s_values() {
  return {0.0, 8.0, 16.0, 32.0, 64.0, 96.0, 128.0, 160.0, 172.0, 192.0, 256.0};
}

// 0.0001 * 2^(log2(10^2) i / 100), i = 0..99
inline std::vector<double> default_v1_lambdas() {
  std::vector<double> out;
  for (int i = 0; i < 100; ++i) out.push_back(0.0001 * std::exp2(std::log2(100.0) * i / 100.0));
  return out;
}

struct StepsizeGrids {
  std::vector<double> lambdas;
  std::vector<double> deltas;
};

/// DC-v2 grids. Empty overrides fall back to the defaults:
/// lambda_i = 0.02/20 i + 0.01 (i = 0..20); deltas are two log-spaced
/// families 0.001..0.15 (71 points) and 0.064..0.128 (31 points).
inline StepsizeGrids stepsizes_v2(std::vector<double> lambdas = {}, std::vector<double> deltas = {}) {
  StepsizeGrids g{std::move(lambdas), std::move(deltas)};
  if (g.lambdas.empty()) {
    for (int i = 0; i <= 20; ++i) g.lambdas.push_back(0.02 / 20.0 * i + 0.01);
  }
  if (g.deltas.empty()) {
    for (int i = 0; i <= 70; ++i) g.deltas.push_back(0.001 * std::exp2(std::log2(0.15 / 0.001) * i / 70.0));
    for (int i = 0; i <= 30; ++i) g.deltas.push_back(0.064 * std::exp2(std::log2(0.128 / 0.064) * i / 30.0));
  }
  return g;
}

// ---------------------------------------------------------------------------

struct Distortion {
  double mse = 0.0;
  double weighted_mse = 0.0;
};

inline Distortion distortion(std::span<const float> original, std::span<const float> recon,
                             const ImportanceMap* importance = nullptr) {
  if (original.size() != recon.size()) throw InputError("distortion: length mismatch");
  if (importance && importance->values.size() != original.size()) {
    throw InputError("distortion: importance length mismatch");
  }
  Distortion d;
  if (original.empty()) return d;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double e = static_cast<double>(original[i]) - static_cast<double>(recon[i]);
    d.mse += e * e;
    d.weighted_mse += (importance ? importance->values[i] : 1.0) * e * e;
  }
  d.mse /= static_cast<double>(original.size());
  d.weighted_mse /= static_cast<double>(original.size());
  return d;
}

}  // namespace deepcabac
