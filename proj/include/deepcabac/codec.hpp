#pragma once

// Whole-tensor level coding: row-major scan, fresh contexts per tensor,
// sig context keyed on the previous level's significance.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "deepcabac/binarizer.hpp"
#include "deepcabac/cabac.hpp"

namespace deepcabac {

inline std::vector<std::uint8_t> encode_levels(std::span<const std::int32_t> levels, const BinarizerConfig& cfg) {
  ContextSet ctxs(cfg);
  ArithmeticEncoder enc;
  bool prev_significant = false;
  for (const auto level : levels) {
    encode_level(enc, ctxs, level, cfg, prev_significant);
    prev_significant = level != 0;
  }
  return enc.finish();
}

inline std::vector<std::int32_t> decode_levels(std::span<const std::uint8_t> payload, std::size_t count,
                                               const BinarizerConfig& cfg) {
  ContextSet ctxs(cfg);
  ArithmeticDecoder dec(payload);
  std::vector<std::int32_t> levels;
  levels.reserve(std::min<std::size_t>(count, std::size_t{1} << 20));
  bool prev_significant = false;
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t level = decode_level(dec, ctxs, cfg, prev_significant);
    if (level < std::numeric_limits<std::int32_t>::min() || level > std::numeric_limits<std::int32_t>::max()) {
      throw CorruptStream("decode_levels: level outside 32-bit range");
    }
    levels.push_back(static_cast<std::int32_t>(level));
    prev_significant = level != 0;
  }
  return levels;
}

}  // namespace deepcabac
