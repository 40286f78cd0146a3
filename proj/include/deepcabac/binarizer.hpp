#pragma once

// Level binarization: sigFlag, signFlag, AbsGr(j) flags, Exp-Golomb tail.
//
//   level 0            -> [sig=0]
//   level != 0         -> [sig=1] [sign] [AbsGr(1)..AbsGr(m)] [unary k] [k bypass]
//
// AbsGr(j) = (|level| > j) for j = 1..n_flags, stopping at the first 0. When
// every flag is 1 the remainder i = |level| - n_flags >= 1 is coded as
// Exp-Golomb with k = floor(log2 i): k context-coded ones, a context-coded
// zero, then the k low bits of i (i - 2^k) as bypass bins, MSB first.
//
// Context assignment (normative for the stream format):
//   sig          2 models, chosen by whether the previous weight in scan order was nonzero
//   sign         1 model (bin 1 = negative)
//   AbsGr(j)     one model per flag position
//   unary pos p  model min(p, G-1), G = min(max_golomb_order + 1, 16)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "deepcabac/cabac.hpp"
#include "deepcabac/errors.hpp"

namespace deepcabac {

struct BinarizerConfig {
  unsigned n_flags = 10;
  unsigned max_golomb_order = 31;

  void validate() const {
    if (n_flags < 1) throw ContractViolation("BinarizerConfig: n_flags must be >= 1");
    if (max_golomb_order > 62) throw ContractViolation("BinarizerConfig: max_golomb_order must be <= 62");
  }
};

enum class BinRole : std::uint8_t { Sig, Sign, AbsGr, GolombUnary, Bypass };

struct Bin {
  unsigned value;
  BinRole role;
  // AbsGr: flag position (0 = AbsGr(1)); GolombUnary: prefix position; else 0.
  unsigned index;

  friend bool operator==(const Bin&, const Bin&) = default;
};

inline constexpr unsigned kMaxGolombContexts = 16;

struct ContextSet {
  explicit ContextSet(const BinarizerConfig& cfg)
      : absgr(cfg.n_flags), golomb(std::min(cfg.max_golomb_order + 1, kMaxGolombContexts)) {
    cfg.validate();
  }

  std::array<ContextModel, 2> sig{};
  ContextModel sign{};
  std::vector<ContextModel> absgr;
  std::vector<ContextModel> golomb;

  std::size_t model_count() const noexcept { return sig.size() + 1 + absgr.size() + golomb.size(); }

  ContextModel& model(BinRole role, unsigned index, bool prev_significant) {
    return const_cast<ContextModel&>(std::as_const(*this).model(role, index, prev_significant));
  }
  const ContextModel& model(BinRole role, unsigned index, bool prev_significant) const {
    switch (role) {
      case BinRole::Sig:
        return sig[prev_significant ? 1 : 0];
      case BinRole::Sign:
        return sign;
      case BinRole::AbsGr:
        return absgr[index];
      case BinRole::GolombUnary:
        return golomb[std::min<std::size_t>(index, golomb.size() - 1)];
      case BinRole::Bypass:
        break;
    }
    throw ContractViolation("ContextSet::model: bypass bins have no context");
  }

  friend bool operator==(const ContextSet&, const ContextSet&) = default;
};

namespace detail {

inline std::uint64_t magnitude(std::int64_t level) {
  return level < 0 ? std::uint64_t{0} - static_cast<std::uint64_t>(level) : static_cast<std::uint64_t>(level);
}

// Calls f(Bin) for every bin of `level` in coding order.
template <typename F>
void for_each_bin(std::int64_t level, const BinarizerConfig& cfg, F&& f) {
  if (level == 0) {
    f(Bin{0, BinRole::Sig, 0});
    return;
  }
  const std::uint64_t mag = magnitude(level);
  std::uint64_t remainder = 0;
  if (mag > cfg.n_flags) {
    remainder = mag - cfg.n_flags;
    if (std::bit_width(remainder) > cfg.max_golomb_order + 1) {
      throw RangeError("binarize: |level| " + std::to_string(mag) + " exceeds Exp-Golomb order " +
                       std::to_string(cfg.max_golomb_order));
    }
  }
  f(Bin{1, BinRole::Sig, 0});
  f(Bin{level < 0 ? 1u : 0u, BinRole::Sign, 0});
  for (unsigned j = 1; j <= cfg.n_flags; ++j) {
    const unsigned greater = mag > j ? 1u : 0u;
    f(Bin{greater, BinRole::AbsGr, j - 1});
    if (!greater) return;
  }
  const auto k = static_cast<unsigned>(std::bit_width(remainder) - 1);
  for (unsigned p = 0; p < k; ++p) f(Bin{1, BinRole::GolombUnary, p});
  f(Bin{0, BinRole::GolombUnary, k});
  for (unsigned b = k; b-- > 0;) f(Bin{static_cast<unsigned>((remainder >> b) & 1u), BinRole::Bypass, 0});
}

// Shared decode walk; `next(role, index)` yields the next bin value.
template <typename Next>
std::int64_t read_level(const BinarizerConfig& cfg, Next&& next) {
  if (next(BinRole::Sig, 0u) == 0) return 0;
  const bool negative = next(BinRole::Sign, 0u) != 0;
  std::uint64_t mag = 0;
  for (unsigned j = 1; j <= cfg.n_flags; ++j) {
    if (next(BinRole::AbsGr, j - 1) == 0) {
      mag = j;
      break;
    }
  }
  if (mag == 0) {
    unsigned k = 0;
    while (next(BinRole::GolombUnary, k) != 0) {
      if (++k > cfg.max_golomb_order) {
        throw CorruptStream("debinarize: Exp-Golomb prefix longer than " + std::to_string(cfg.max_golomb_order));
      }
    }
    std::uint64_t remainder = 1;
    for (unsigned b = 0; b < k; ++b) remainder = (remainder << 1) | next(BinRole::Bypass, 0u);
    mag = remainder + cfg.n_flags;
    constexpr std::uint64_t kLimit = std::uint64_t{1} << 63;  // |INT64_MIN|
    if (mag < remainder || mag > kLimit || (mag == kLimit && !negative)) {
      throw CorruptStream("debinarize: level magnitude overflows 64 bits");
    }
  }
  return negative ? static_cast<std::int64_t>(std::uint64_t{0} - mag) : static_cast<std::int64_t>(mag);
}

}  // namespace detail

inline std::vector<Bin> binarize(std::int64_t level, const BinarizerConfig& cfg) {
  cfg.validate();
  std::vector<Bin> bins;
  detail::for_each_bin(level, cfg, [&](const Bin& b) { bins.push_back(b); });
  return bins;
}

// Bin values only, as a '0'/'1' string; handy for golden tests and debugging.
inline std::string bin_string(std::span<const Bin> bins) {
  std::string s;
  s.reserve(bins.size());
  for (const auto& b : bins) s.push_back(b.value ? '1' : '0');
  return s;
}

/// Reads one level from a sequence of bin values. `consumed` receives the
/// number of bins used. Throws CorruptStream if the bins end mid-level.
inline std::int64_t debinarize(std::span<const unsigned char> bins, const BinarizerConfig& cfg,
                               std::size_t* consumed = nullptr) {
  cfg.validate();
  std::size_t pos = 0;
  const auto value = detail::read_level(cfg, [&](BinRole, unsigned) -> unsigned {
    if (pos >= bins.size()) throw CorruptStream("debinarize: bin sequence ends inside a level");
    return bins[pos++] ? 1u : 0u;
  });
  if (consumed) *consumed = pos;
  return value;
}

inline std::int64_t debinarize(std::span<const Bin> bins, const BinarizerConfig& cfg,
                               std::size_t* consumed = nullptr) {
  std::vector<unsigned char> values(bins.size());
  std::transform(bins.begin(), bins.end(), values.begin(), [](const Bin& b) { return b.value ? 1 : 0; });
  return debinarize(values, cfg, consumed);
}

inline void encode_level(ArithmeticEncoder& enc, ContextSet& ctxs, std::int64_t level, const BinarizerConfig& cfg,
                         bool prev_significant) {
  detail::for_each_bin(level, cfg, [&](const Bin& b) {
    if (b.role == BinRole::Bypass) {
      enc.encode_bypass(b.value);
    } else {
      enc.encode_bin(ctxs.model(b.role, b.index, prev_significant), b.value);
    }
  });
}

inline std::int64_t decode_level(ArithmeticDecoder& dec, ContextSet& ctxs, const BinarizerConfig& cfg,
                                 bool prev_significant) {
  return detail::read_level(cfg, [&](BinRole role, unsigned index) -> unsigned {
    if (role == BinRole::Bypass) return dec.decode_bypass();
    return dec.decode_bin(ctxs.model(role, index, prev_significant));
  });
}

/// Context updates identical to encode_level, without producing bits.
inline void commit_level(ContextSet& ctxs, std::int64_t level, const BinarizerConfig& cfg, bool prev_significant) {
  detail::for_each_bin(level, cfg, [&](const Bin& b) {
    if (b.role != BinRole::Bypass) ctxs.model(b.role, b.index, prev_significant).update(b.value);
  });
}

/// Estimated bits of `level` under the current context states (not mutated).
inline double estimate_level_bits(const ContextSet& ctxs, std::int64_t level, const BinarizerConfig& cfg,
                                  bool prev_significant) {
  double bits = 0.0;
  detail::for_each_bin(level, cfg, [&](const Bin& b) {
    bits += b.role == BinRole::Bypass ? kBypassCost : bin_cost(ctxs.model(b.role, b.index, prev_significant), b.value);
  });
  return bits;
}

}  // namespace deepcabac
