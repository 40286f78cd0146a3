#pragma once

// Minimal NPY reader/writer: versions 1.0 and 2.0, little-endian float32
// (and float64 for importance maps), C order only.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepcabac/errors.hpp"
#include "deepcabac/quantizers.hpp"

namespace deepcabac::npy {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

inline constexpr char kMagic[] = "\x93NUMPY";

enum class DType { Float32, Float64 };

struct Array {
  std::vector<std::size_t> shape;
  DType dtype = DType::Float32;
  std::vector<std::uint8_t> data;  // raw little-endian element bytes

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

namespace detail {

inline std::string_view dict_value(std::string_view header, std::string_view key, const std::string& origin) {
  const auto k = header.find("'" + std::string(key) + "'");
  if (k == std::string_view::npos) throw IngestionError(origin + ": NPY header lacks '" + std::string(key) + "'");
  auto colon = header.find(':', k);
  if (colon == std::string_view::npos) throw IngestionError(origin + ": malformed NPY header");
  auto v = header.substr(colon + 1);
  while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
  return v;
}

inline std::vector<std::size_t> parse_shape(std::string_view v, const std::string& origin) {
  if (v.empty() || v.front() != '(') throw IngestionError(origin + ": malformed NPY shape");
  const auto close = v.find(')');
  if (close == std::string_view::npos) throw IngestionError(origin + ": malformed NPY shape");
  std::vector<std::size_t> shape;
  std::string_view body = v.substr(1, close - 1);
  std::size_t value = 0;
  bool have = false;
  for (const char c : body) {
    if (c >= '0' && c <= '9') {
      value = value * 10 + static_cast<std::size_t>(c - '0');
      have = true;
    } else if (c == ',') {
      if (have) shape.push_back(value);
      value = 0;
      have = false;
    } else if (c != ' ' && c != 'L') {
      throw IngestionError(origin + ": unexpected character in NPY shape");
    }
  }
  if (have) shape.push_back(value);
  return shape;
}

}  // namespace detail

inline Array parse(std::span<const std::uint8_t> bytes, const std::string& origin = "npy") {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0) {
    throw IngestionError(origin + ": not an NPY file (bad magic)");
  }
  const unsigned major = bytes[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (std::size_t{bytes[9]} << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw IngestionError(origin + ": truncated NPY header");
    header_len = bytes[8] | (std::size_t{bytes[9]} << 8) | (std::size_t{bytes[10]} << 16) |
                 (std::size_t{bytes[11]} << 24);
    offset = 12;
  } else {
    throw IngestionError(origin + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw IngestionError(origin + ": truncated NPY header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);

  Array arr;
  const auto descr = detail::dict_value(header, "descr", origin);
  if (descr.starts_with("'<f4'")) {
    arr.dtype = DType::Float32;
  } else if (descr.starts_with("'<f8'")) {
    arr.dtype = DType::Float64;
  } else if (descr.starts_with("'>")) {
    throw IngestionError(origin + ": big-endian dtype is not supported");
  } else {
    throw IngestionError(origin + ": unsupported dtype " + std::string(descr.substr(0, descr.find(','))));
  }
  const auto order = detail::dict_value(header, "fortran_order", origin);
  if (order.starts_with("True")) throw IngestionError(origin + ": Fortran-order arrays are not supported");
  if (!order.starts_with("False")) throw IngestionError(origin + ": malformed fortran_order");
  arr.shape = detail::parse_shape(detail::dict_value(header, "shape", origin), origin);

  const std::size_t elem = arr.dtype == DType::Float32 ? 4 : 8;
  const std::size_t need = arr.element_count() * elem;
  const auto body = bytes.subspan(offset + header_len);
  if (body.size() < need) {
    throw IngestionError(origin + ": data section holds " + std::to_string(body.size()) + " bytes, expected " +
                         std::to_string(need));
  }
  arr.data.assign(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(need));
  return arr;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Array load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

inline std::vector<double> as_doubles(const Array& arr) {
  std::vector<double> out(arr.element_count());
  if (arr.dtype == DType::Float64) {
    std::memcpy(out.data(), arr.data.data(), out.size() * 8);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      float f;
      std::memcpy(&f, arr.data.data() + 4 * i, 4);
      out[i] = f;
    }
  }
  return out;
}

/// Loads a float32 C-order array as a tensor named after the file stem.
inline WeightTensor load_tensor(const std::filesystem::path& path) {
  const Array arr = load(path);
  if (arr.dtype != DType::Float32) throw IngestionError(path.string() + ": weights must be float32 ('<f4')");
  WeightTensor t;
  t.name = path.stem().string();
  t.shape = arr.shape;
  t.values.resize(arr.element_count());
  std::memcpy(t.values.data(), arr.data.data(), t.values.size() * 4);
  return t;
}

inline std::vector<std::uint8_t> encode(std::span<const std::size_t> shape, std::span<const float> values) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // Pad so magic + version + length + header is a multiple of 64 bytes.
  std::size_t total = 10 + dict.size() + 1;
  dict.append((64 - total % 64) % 64, ' ');
  dict.push_back('\n');

  std::vector<std::uint8_t> out(kMagic, kMagic + 6);
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(dict.size() & 0xFF));
  out.push_back(static_cast<std::uint8_t>(dict.size() >> 8));
  out.insert(out.end(), dict.begin(), dict.end());
  const auto* raw = reinterpret_cast<const std::uint8_t*>(values.data());
  out.insert(out.end(), raw, raw + values.size() * 4);
  return out;
}

inline void save(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const float> values) {
  const auto bytes = encode(shape, values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("short write to " + path.string());
}

}  // namespace deepcabac::npy
