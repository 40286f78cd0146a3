#pragma once

// Scalar Huffman coding and empirical-distribution statistics, kept as the
// memoryless baseline against which the CABAC coder is compared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "deepcabac/bitio.hpp"
#include "deepcabac/errors.hpp"

namespace deepcabac {

using Symbol = std::int32_t;

struct SymbolHistogram {
  std::map<Symbol, std::uint64_t> counts;
  std::uint64_t total = 0;

  double probability(Symbol s) const {
    const auto it = counts.find(s);
    return it == counts.end() || total == 0 ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
  }
};

inline SymbolHistogram epmd(std::span<const Symbol> levels) {
  if (levels.empty()) throw InputError("epmd: empty level sequence");
  SymbolHistogram h;
  for (const auto s : levels) ++h.counts[s];
  h.total = levels.size();
  return h;
}

/// Shannon entropy in bits per symbol (0 log 0 = 0).
inline double entropy(const SymbolHistogram& h) {
  if (h.total == 0) return 0.0;
  double bits = 0.0;
  for (const auto& [sym, c] : h.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(h.total);
    bits -= p * std::log2(p);
  }
  return bits;
}

struct Codeword {
  std::uint64_t bits = 0;  // right-aligned, MSB is sent first
  unsigned length = 0;

  std::string str() const {
    std::string s;
    for (unsigned i = length; i-- > 0;) s.push_back(((bits >> i) & 1u) ? '1' : '0');
    return s;
  }
};

struct HuffmanCode {
  std::map<Symbol, Codeword> codewords;

  double average_length(const SymbolHistogram& h) const {
    double avg = 0.0;
    for (const auto& [sym, c] : h.counts) {
      const auto it = codewords.find(sym);
      if (it != codewords.end()) avg += h.probability(sym) * it->second.length;
    }
    return avg;
  }

  double kraft_sum() const {
    double s = 0.0;
    for (const auto& [sym, cw] : codewords) s += std::ldexp(1.0, -static_cast<int>(cw.length));
    return s;
  }
};

namespace detail {

// Assigns canonical codewords from lengths: sorted by (length, symbol).
inline HuffmanCode canonical_code(std::vector<std::pair<Symbol, unsigned>> lengths) {
  std::sort(lengths.begin(), lengths.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second, a.first) < std::tie(b.second, b.first);
  });
  HuffmanCode code;
  std::uint64_t next = 0;
  unsigned prev_len = lengths.empty() ? 0 : lengths.front().second;
  for (const auto& [sym, len] : lengths) {
    if (len == 0 || len > 64) throw RangeError("huffman: codeword length out of range");
    next <<= (len - prev_len);
    code.codewords[sym] = Codeword{next, len};
    ++next;
    prev_len = len;
  }
  return code;
}

}  // namespace detail

/// Optimal prefix code for `h`, with canonical codeword assignment.
inline HuffmanCode huffman_build(const SymbolHistogram& h) {
  std::vector<std::pair<Symbol, std::uint64_t>> used;
  for (const auto& [sym, c] : h.counts) {
    if (c > 0) used.emplace_back(sym, c);
  }
  if (used.empty()) throw InputError("huffman_build: histogram has no symbol with positive count");
  if (used.size() == 1) return detail::canonical_code({{used.front().first, 1u}});

  // Node: (weight, tie-break id). Leaves first, internal nodes get larger ids.
  struct Node {
    std::uint64_t weight;
    std::size_t id;
    int left = -1, right = -1;
  };
  std::vector<Node> nodes;
  nodes.reserve(2 * used.size());
  using Entry = std::pair<std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (std::size_t i = 0; i < used.size(); ++i) {
    nodes.push_back(Node{used[i].second, i});
    heap.emplace(used[i].second, i);
  }
  while (heap.size() > 1) {
    const auto [wa, a] = heap.top();
    heap.pop();
    const auto [wb, b] = heap.top();
    heap.pop();
    const std::size_t id = nodes.size();
    nodes.push_back(Node{wa + wb, id, static_cast<int>(a), static_cast<int>(b)});
    heap.emplace(wa + wb, id);
  }

  std::vector<std::pair<Symbol, unsigned>> lengths;
  std::vector<std::pair<std::size_t, unsigned>> stack{{heap.top().second, 0u}};
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    const Node& node = nodes[id];
    if (node.left < 0) {
      lengths.emplace_back(used[id].first, depth);
    } else {
      stack.emplace_back(static_cast<std::size_t>(node.left), depth + 1);
      stack.emplace_back(static_cast<std::size_t>(node.right), depth + 1);
    }
  }
  return detail::canonical_code(std::move(lengths));
}

struct BitString {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;
};

inline BitString huffman_encode(const HuffmanCode& code, std::span<const Symbol> msg) {
  BitSink sink;
  for (const auto s : msg) {
    const auto it = code.codewords.find(s);
    if (it == code.codewords.end()) throw InputError("huffman_encode: symbol " + std::to_string(s) + " not in code");
    sink.write_bits(it->second.bits, it->second.length);
  }
  BitString out;
  out.bit_count = sink.bit_position();
  out.bytes = std::move(sink).take();
  return out;
}

inline std::vector<Symbol> huffman_decode(const HuffmanCode& code, const BitString& bits) {
  // Binary trie over the codewords; child index 0 means "absent".
  struct TrieNode {
    std::uint32_t child[2] = {0, 0};
    bool leaf = false;
    Symbol symbol = 0;
  };
  std::vector<TrieNode> trie(1);
  for (const auto& [sym, cw] : code.codewords) {
    std::uint32_t at = 0;
    for (unsigned i = cw.length; i-- > 0;) {
      const unsigned b = static_cast<unsigned>((cw.bits >> i) & 1u);
      if (trie[at].child[b] == 0) {
        trie[at].child[b] = static_cast<std::uint32_t>(trie.size());
        trie.emplace_back();
      }
      at = trie[at].child[b];
    }
    trie[at].leaf = true;
    trie[at].symbol = sym;
  }

  if (bits.bit_count > bits.bytes.size() * 8) throw ContractViolation("huffman_decode: bit_count exceeds buffer");
  BitSource src(bits.bytes);
  std::vector<Symbol> out;
  std::uint32_t at = 0;
  for (std::size_t i = 0; i < bits.bit_count; ++i) {
    const unsigned b = src.read_bit() ? 1u : 0u;
    at = trie[at].child[b];
    if (at == 0) throw CorruptStream("huffman_decode: bit pattern matches no codeword");
    if (trie[at].leaf) {
      out.push_back(trie[at].symbol);
      at = 0;
    }
  }
  if (at != 0) throw CorruptStream("huffman_decode: stream ends inside a codeword");
  return out;
}

// Code table: u32 symbol count, then (i32 symbol, u8 length) per symbol,
// little-endian. Codewords are rebuilt canonically from the lengths.
inline std::vector<std::uint8_t> serialize_table(const HuffmanCode& code) {
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put32(static_cast<std::uint32_t>(code.codewords.size()));
  for (const auto& [sym, cw] : code.codewords) {
    put32(static_cast<std::uint32_t>(sym));
    out.push_back(static_cast<std::uint8_t>(cw.length));
  }
  return out;
}

inline HuffmanCode deserialize_table(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto get32 = [&]() {
    if (pos + 4 > bytes.size()) throw TruncatedStream("huffman table truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[pos + i]} << (8 * i);
    pos += 4;
    return v;
  };
  const std::uint32_t n = get32();
  std::vector<std::pair<Symbol, unsigned>> lengths;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto sym = static_cast<Symbol>(get32());
    if (pos >= bytes.size()) throw TruncatedStream("huffman table truncated");
    lengths.emplace_back(sym, bytes[pos++]);
  }
  return detail::canonical_code(std::move(lengths));
}

inline std::size_t table_bits(const HuffmanCode& code) { return 8 * (4 + 5 * code.codewords.size()); }

}  // namespace deepcabac
