#pragma once

// Binary arithmetic coding with adaptive context models.
//
// The engine is a 32-bit range coder: `range` lives in [2^24, 2^32) after
// every renormalization and bytes leave the encoder through a one-byte cache
// plus a run counter of pending 0xFF bytes, so carries out of `low` resolve
// without bit stuffing. Bin 0 always takes the lower subinterval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "deepcabac/bitio.hpp"
#include "deepcabac/errors.hpp"

namespace deepcabac {

// Probability of the 0-bin with 16 fractional bits.
using Probability = std::uint32_t;

inline constexpr unsigned kProbabilityBits = 16;
inline constexpr Probability kProbabilityOne = Probability{1} << kProbabilityBits;
inline constexpr Probability kProbabilityHalf = kProbabilityOne / 2;
// p_min = 2^-10.
inline constexpr Probability kProbabilityMin = kProbabilityOne >> 10;
inline constexpr Probability kProbabilityMax = kProbabilityOne - kProbabilityMin;
// Exponential smoothing rate 2^-5.
inline constexpr unsigned kAdaptationShift = 5;

inline constexpr Probability probability_from_real(double p0) {
  const double scaled = p0 * static_cast<double>(kProbabilityOne) + 0.5;
  const auto q = static_cast<Probability>(scaled < 0.0 ? 0.0 : scaled);
  return std::clamp(q, kProbabilityMin, kProbabilityMax);
}

class ContextModel {
 public:
  constexpr ContextModel() = default;
  constexpr explicit ContextModel(Probability p0) : p0_(std::clamp(p0, kProbabilityMin, kProbabilityMax)) {}

  constexpr Probability p0() const noexcept { return p0_; }
  constexpr double p0_real() const noexcept {
    return static_cast<double>(p0_) / static_cast<double>(kProbabilityOne);
  }

  // p0 <- p0 + ((1 - bin) - p0) * 2^-5, then clamp.
  constexpr void update(unsigned bin) noexcept {
    if (bin == 0) {
      p0_ += (kProbabilityOne - p0_) >> kAdaptationShift;
    } else {
      p0_ -= p0_ >> kAdaptationShift;
    }
    p0_ = std::clamp(p0_, kProbabilityMin, kProbabilityMax);
  }

  friend constexpr bool operator==(const ContextModel&, const ContextModel&) = default;

 private:
  Probability p0_ = kProbabilityHalf;
};

inline ContextModel context_new() { return ContextModel{}; }
inline void context_update(ContextModel& ctx, unsigned bin) { ctx.update(bin); }

namespace detail {

// -log2(p / 2^16) for every 16-bit probability, rounded to 2^-16 bit so the
// RD search sees identical costs on every IEEE platform.
inline const std::vector<float>& cost_table() {
  static const std::vector<float> table = [] {
    std::vector<float> t(kProbabilityOne + 1, 0.0f);
    t[0] = 64.0f;
    for (Probability p = 1; p <= kProbabilityOne; ++p) {
      const double bits = -std::log2(static_cast<double>(p) / static_cast<double>(kProbabilityOne));
      t[p] = static_cast<float>(std::round(bits * 65536.0) / 65536.0);
    }
    return t;
  }();
  return table;
}

// Canonical subdivision shared by encoder and decoder: width of the 0-bin.
inline constexpr std::uint32_t split(std::uint32_t range, Probability p0) noexcept {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(range) * p0) >> kProbabilityBits);
}

inline constexpr std::uint32_t kRangeFloor = 1u << 24;

}  // namespace detail

inline constexpr double kBypassCost = 1.0;

/// Estimated code length in bits of coding `bin` under `ctx`; never mutates ctx.
inline double bin_cost(const ContextModel& ctx, unsigned bin) {
  const Probability p = bin == 0 ? ctx.p0() : kProbabilityOne - ctx.p0();
  return detail::cost_table()[p];
}

class ArithmeticEncoder {
 public:
  ArithmeticEncoder() = default;

  // Codes one bin at a fixed probability (no adaptation).
  void encode(unsigned bin, Probability p0) {
    check_open();
    const std::uint32_t bound = detail::split(range_, p0);
    if (bin == 0) {
      range_ = bound;
    } else {
      low_ += bound;
      range_ -= bound;
    }
    normalize();
  }

  void encode_bin(ContextModel& ctx, unsigned bin) {
    encode(bin, ctx.p0());
    ctx.update(bin);
  }

  void encode_bypass(unsigned bin) {
    check_open();
    range_ >>= 1;
    if (bin != 0) low_ += range_;
    normalize();
  }

  // Writes the shortest byte string that selects a value inside the final
  // interval; the decoder supplies the zero bytes that follow it.
  std::vector<std::uint8_t> finish() {
    check_open();
    for (unsigned nbytes = 1; nbytes <= 4; ++nbytes) {
      const std::uint64_t unit = std::uint64_t{1} << (32 - 8 * nbytes);
      const std::uint64_t value = (low_ + unit - 1) & ~(unit - 1);
      if (value - low_ < range_) {
        low_ = value;
        for (unsigned i = 0; i < nbytes; ++i) shift_low();
        break;
      }
    }
    if (has_cache_) sink_.write_byte(cache_);
    for (; pending_ff_ > 0; --pending_ff_) sink_.write_byte(0xFF);
    finished_ = true;
    return std::move(sink_).take();
  }

  std::uint32_t range() const noexcept { return range_; }
  // Bytes already committed to the sink (excludes cache and pending run).
  std::size_t bytes_written() const noexcept { return sink_.bytes().size(); }

 private:
  void check_open() const {
    if (finished_) throw ContractViolation("ArithmeticEncoder used after finish()");
  }

  void normalize() {
    while (range_ < detail::kRangeFloor) {
      shift_low();
      range_ <<= 8;
    }
  }

  void shift_low() {
    if (low_ < 0xFF000000ull || low_ >= 0x100000000ull) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      if (has_cache_) sink_.write_byte(static_cast<std::uint8_t>(cache_ + carry));
      for (; pending_ff_ > 0; --pending_ff_) sink_.write_byte(static_cast<std::uint8_t>(0xFF + carry));
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
      has_cache_ = true;
    } else {
      ++pending_ff_;
    }
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  BitSink sink_;
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  bool has_cache_ = false;
  std::uint64_t pending_ff_ = 0;
  bool finished_ = false;
};

class ArithmeticDecoder {
 public:
  // A finished stream never needs more than this many implicit zero bytes.
  static constexpr unsigned kMaxPadding = 3;

  explicit ArithmeticDecoder(std::span<const std::uint8_t> payload) : source_(payload) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    if (code_ >= range_) throw CorruptStream("arithmetic decoder: code value outside initial interval");
  }

  unsigned decode(Probability p0) {
    const std::uint32_t bound = detail::split(range_, p0);
    unsigned bin;
    if (code_ < bound) {
      range_ = bound;
      bin = 0;
    } else {
      code_ -= bound;
      range_ -= bound;
      bin = 1;
    }
    normalize();
    return bin;
  }

  unsigned decode_bin(ContextModel& ctx) {
    const unsigned bin = decode(ctx.p0());
    ctx.update(bin);
    return bin;
  }

  unsigned decode_bypass() {
    range_ >>= 1;
    unsigned bin = 0;
    if (code_ >= range_) {
      code_ -= range_;
      bin = 1;
    }
    normalize();
    return bin;
  }

  std::uint32_t range() const noexcept { return range_; }

 private:
  std::uint8_t next_byte() {
    if (source_.bits_remaining() >= 8) return source_.read_byte();
    if (padding_ < kMaxPadding) {
      ++padding_;
      return 0;
    }
    throw TruncatedStream("arithmetic decoder: payload exhausted");
  }

  void normalize() {
    while (range_ < detail::kRangeFloor) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
    if (code_ >= range_) throw CorruptStream("arithmetic decoder: code value left the coding interval");
  }

  BitSource source_;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
  unsigned padding_ = 0;
};

}  // namespace deepcabac
