#pragma once

// MSB-first bit packing over in-memory byte buffers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepcabac/errors.hpp"

namespace deepcabac {

class BitSink {
 public:
  BitSink() = default;

  /// Appends the low `count` bits of `value`, most significant first.
  void write_bits(std::uint64_t value, unsigned count) {
    if (count == 0 || count > 64) {
      throw ContractViolation("write_bits: count must be in 1..64, got " + std::to_string(count));
    }
    if (count < 64 && (value >> count) != 0) {
      throw ContractViolation("write_bits: value does not fit in " + std::to_string(count) + " bits");
    }
    for (unsigned i = count; i-- > 0;) {
      put_bit(static_cast<unsigned>((value >> i) & 1u));
    }
  }

  void write_bit(bool bit) { put_bit(bit ? 1u : 0u); }

  // Fast path for byte-aligned writers (the arithmetic coder, the container).
  void write_byte(std::uint8_t byte) {
    if ((bit_position_ & 7u) == 0) {
      buffer_.push_back(byte);
      bit_position_ += 8;
    } else {
      write_bits(byte, 8);
    }
  }

  void write_bytes(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) write_byte(b);
  }

  void align_to_byte() {
    while ((bit_position_ & 7u) != 0) put_bit(0);
  }

  std::size_t bit_position() const noexcept { return bit_position_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return buffer_; }

  std::vector<std::uint8_t> take() && {
    bit_position_ = 0;
    return std::move(buffer_);
  }

 private:
  void put_bit(unsigned bit) {
    const unsigned offset = static_cast<unsigned>(bit_position_ & 7u);
    if (offset == 0) buffer_.push_back(0);
    if (bit) buffer_.back() |= static_cast<std::uint8_t>(0x80u >> offset);
    ++bit_position_;
  }

  std::vector<std::uint8_t> buffer_;
  std::size_t bit_position_ = 0;
};

class BitSource {
 public:
  BitSource() = default;
  explicit BitSource(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t read_bits(unsigned count) {
    if (count == 0 || count > 64) {
      throw ContractViolation("read_bits: count must be in 1..64, got " + std::to_string(count));
    }
    if (count > bits_remaining()) {
      throw TruncatedStream("read_bits: need " + std::to_string(count) + " bits, " +
                            std::to_string(bits_remaining()) + " left");
    }
    std::uint64_t value = 0;
    for (unsigned i = 0; i < count; ++i) {
      const std::uint8_t byte = bytes_[cursor_ >> 3];
      value = (value << 1) | ((byte >> (7u - (cursor_ & 7u))) & 1u);
      ++cursor_;
    }
    return value;
  }

  bool read_bit() { return read_bits(1) != 0; }

  std::uint8_t read_byte() {
    if ((cursor_ & 7u) == 0 && bits_remaining() >= 8) {
      const std::uint8_t b = bytes_[cursor_ >> 3];
      cursor_ += 8;
      return b;
    }
    return static_cast<std::uint8_t>(read_bits(8));
  }

  // Borrowed view of the next `n` whole bytes; requires byte alignment.
  std::span<const std::uint8_t> read_span(std::size_t n) {
    if ((cursor_ & 7u) != 0) throw ContractViolation("read_span: source not byte aligned");
    if (n > bits_remaining() / 8) {
      throw TruncatedStream("read_span: need " + std::to_string(n) + " bytes, " +
                            std::to_string(bits_remaining() / 8) + " left");
    }
    auto view = bytes_.subspan(cursor_ >> 3, n);
    cursor_ += n * 8;
    return view;
  }

  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t bits_remaining() const noexcept { return bytes_.size() * 8 - cursor_; }
  bool exhausted() const noexcept { return bits_remaining() == 0; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t cursor_ = 0;
};

}  // namespace deepcabac
