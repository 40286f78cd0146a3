#pragma once

// Compressed stream container.
//
//   header   "DCBC" | version u16 | tensor_count u32                (10 bytes)
//   record   kind u8 | name_len u32 | name UTF-8 | rank u32 | dims u32 x rank | body
//     kind 0 (quantized)  delta f32 | n_flags u8 | payload_len u32 | CABAC payload
//     kind 1 (raw)        payload_len u32 | float32 values
//     kind 2 (codebook)   n_flags u8 | center_count u32 | zero_index u32 |
//                         centers f32 x count | payload_len u32 | CABAC payload
//
// All integers and floats little-endian. Version 1 pins the context model
// (16-bit probabilities, 2^-5 adaptation, 2^-10 clamp) and the binarization
// (max Exp-Golomb order 31, context template documented in binarizer.hpp).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "deepcabac/bitio.hpp"
#include "deepcabac/codec.hpp"
#include "deepcabac/errors.hpp"
#include "deepcabac/quantizers.hpp"

namespace deepcabac {

inline constexpr char kStreamMagic[4] = {'D', 'C', 'B', 'C'};
inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr unsigned kStreamGolombOrder = 31;
inline constexpr std::size_t kStreamHeaderBytes = 10;

enum class RecordKind : std::uint8_t { Quantized = 0, Raw = 1, Codebook = 2 };

struct TensorRecord {
  RecordKind kind = RecordKind::Quantized;
  std::string name;
  std::vector<std::uint32_t> dims;
  float delta = 1.0f;
  std::uint8_t n_flags = 10;
  std::vector<float> centers;
  std::uint32_t zero_index = 0;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

namespace detail {

class LittleEndianWriter {
 public:
  void u8(std::uint8_t v) { sink_.write_byte(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { sink_.write_bytes(b); }
  std::vector<std::uint8_t> take() && { return std::move(sink_).take(); }

 private:
  BitSink sink_;
};

class LittleEndianReader {
 public:
  explicit LittleEndianReader(std::span<const std::uint8_t> b) : src_(b) {}

  std::uint8_t u8() { return src_.read_byte(); }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8() << (8 * i));
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::size_t n) { return src_.read_span(n); }
  std::size_t remaining() const { return src_.bits_remaining() / 8; }

 private:
  BitSource src_;
};

}  // namespace detail

inline std::vector<std::uint8_t> write_stream(std::span<const TensorRecord> records) {
  detail::LittleEndianWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kStreamMagic), 4});
  w.u16(kStreamVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(r.name.data()), r.name.size()});
    w.u32(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) w.u32(d);
    switch (r.kind) {
      case RecordKind::Quantized:
        w.f32(r.delta);
        w.u8(r.n_flags);
        break;
      case RecordKind::Raw:
        break;
      case RecordKind::Codebook:
        w.u8(r.n_flags);
        w.u32(static_cast<std::uint32_t>(r.centers.size()));
        w.u32(r.zero_index);
        for (auto c : r.centers) w.f32(c);
        break;
    }
    w.u32(static_cast<std::uint32_t>(r.payload.size()));
    w.bytes(r.payload);
  }
  return std::move(w).take();
}

inline std::vector<TensorRecord> read_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kStreamMagic, 4) != 0) {
    throw BadMagic("stream does not start with \"DCBC\"");
  }
  if (bytes.size() < kStreamHeaderBytes) throw TruncatedRecord("", "stream header truncated");
  detail::LittleEndianReader r(bytes.subspan(4));
  const std::uint16_t version = r.u16();
  if (version != kStreamVersion) throw BadVersion("unsupported stream version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  std::vector<TensorRecord> records;
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorRecord rec;
    const std::string where = "record " + std::to_string(t);
    try {
      const std::uint8_t kind = r.u8();
      if (kind > 2) throw FormatError(where + ": unknown record kind " + std::to_string(kind));
      rec.kind = static_cast<RecordKind>(kind);
      const auto name = r.bytes(r.u32());
      rec.name.assign(name.begin(), name.end());
      const std::uint32_t rank = r.u32();
      if (rank > r.remaining() / 4) throw TruncatedStream("rank exceeds remaining bytes");
      for (std::uint32_t i = 0; i < rank; ++i) rec.dims.push_back(r.u32());
      if (rec.kind == RecordKind::Quantized) {
        rec.delta = r.f32();
        rec.n_flags = r.u8();
      } else if (rec.kind == RecordKind::Codebook) {
        rec.n_flags = r.u8();
        const std::uint32_t centers = r.u32();
        rec.zero_index = r.u32();
        if (centers > r.remaining() / 4) throw TruncatedStream("center count exceeds remaining bytes");
        for (std::uint32_t i = 0; i < centers; ++i) rec.centers.push_back(r.f32());
      }
      const auto payload = r.bytes(r.u32());
      rec.payload.assign(payload.begin(), payload.end());
    } catch (const TruncatedStream& e) {
      const std::string label = rec.name.empty() ? where : "tensor '" + rec.name + "'";
      throw TruncatedRecord(rec.name, label + " truncated: " + e.what());
    }
    const std::string label = "tensor '" + rec.name + "'";
    if (rec.kind == RecordKind::Quantized && (!(rec.delta > 0.0f) || !std::isfinite(rec.delta))) {
      throw FormatError(label + ": step-size must be positive and finite");
    }
    if (rec.kind != RecordKind::Raw && rec.n_flags == 0) throw FormatError(label + ": n_flags must be >= 1");
    if (rec.kind == RecordKind::Raw && rec.payload.size() != 4 * rec.element_count()) {
      throw FormatError(label + ": raw payload size does not match dims");
    }
    if (rec.kind == RecordKind::Codebook && rec.zero_index >= rec.centers.size()) {
      throw FormatError(label + ": codebook zero index out of range");
    }
    records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last record");
  return records;
}

// ---------------------------------------------------------------------------
// Record construction and decoding

inline std::vector<std::uint32_t> dims_of(std::span<const std::size_t> shape) {
  std::vector<std::uint32_t> dims;
  for (auto d : shape) {
    if (d > 0xFFFFFFFFu) throw RangeError("tensor dimension exceeds 32 bits");
    dims.push_back(static_cast<std::uint32_t>(d));
  }
  return dims;
}

inline BinarizerConfig stream_binarizer(unsigned n_flags) { return BinarizerConfig{n_flags, kStreamGolombOrder}; }

inline TensorRecord make_quantized_record(const std::string& name, std::span<const std::size_t> shape,
                                          const QuantGrid& grid, unsigned n_flags) {
  if (n_flags < 1 || n_flags > 255) throw ContractViolation("n_flags must be in 1..255");
  TensorRecord rec;
  rec.kind = RecordKind::Quantized;
  rec.name = name;
  rec.dims = dims_of(shape);
  rec.delta = grid.delta;
  rec.n_flags = static_cast<std::uint8_t>(n_flags);
  rec.payload = encode_levels(grid.levels, stream_binarizer(n_flags));
  return rec;
}

inline TensorRecord make_raw_record(const WeightTensor& t) {
  TensorRecord rec;
  rec.kind = RecordKind::Raw;
  rec.name = t.name;
  rec.dims = dims_of(t.shape);
  rec.payload.resize(4 * t.values.size());
  std::memcpy(rec.payload.data(), t.values.data(), rec.payload.size());
  return rec;
}

/// Levels index `centers` relative to `zero_index` (level 0 is the zero center).
inline TensorRecord make_codebook_record(const std::string& name, std::span<const std::size_t> shape,
                                         std::vector<float> centers, std::uint32_t zero_index,
                                         std::span<const std::int32_t> levels, unsigned n_flags) {
  if (n_flags < 1 || n_flags > 255) throw ContractViolation("n_flags must be in 1..255");
  TensorRecord rec;
  rec.kind = RecordKind::Codebook;
  rec.name = name;
  rec.dims = dims_of(shape);
  rec.n_flags = static_cast<std::uint8_t>(n_flags);
  rec.centers = std::move(centers);
  rec.zero_index = zero_index;
  rec.payload = encode_levels(levels, stream_binarizer(n_flags));
  return rec;
}

struct DecodedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  RecordKind kind = RecordKind::Quantized;
  std::vector<std::int32_t> levels;  // empty for raw records
  std::vector<float> values;
};

inline DecodedTensor decode_record(const TensorRecord& rec) {
  DecodedTensor out;
  out.name = rec.name;
  out.kind = rec.kind;
  out.shape.assign(rec.dims.begin(), rec.dims.end());
  const std::size_t n = rec.element_count();
  if (rec.kind == RecordKind::Raw) {
    out.values.resize(n);
    std::memcpy(out.values.data(), rec.payload.data(), 4 * n);
    return out;
  }
  try {
    out.levels = decode_levels(rec.payload, n, stream_binarizer(rec.n_flags));
  } catch (const TruncatedStream& e) {
    throw TruncatedRecord(rec.name, "tensor '" + rec.name + "': " + e.what());
  } catch (const CorruptStream& e) {
    throw CorruptStream("tensor '" + rec.name + "': " + e.what());
  }
  out.values.resize(n);
  if (rec.kind == RecordKind::Quantized) {
    out.values = dequantize(QuantGrid{rec.delta, out.levels});
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t idx = std::int64_t{rec.zero_index} + out.levels[i];
      if (idx < 0 || idx >= static_cast<std::int64_t>(rec.centers.size())) {
        throw CorruptStream("tensor '" + rec.name + "': codebook index out of range");
      }
      out.values[i] = rec.centers[static_cast<std::size_t>(idx)];
    }
  }
  return out;
}

}  // namespace deepcabac
