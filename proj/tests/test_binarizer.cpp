#include <gtest/gtest.h>

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "deepcabac/binarizer.hpp"
#include "deepcabac/codec.hpp"
#include "test_util.hpp"

using namespace deepcabac;

namespace {

BinarizerConfig flags(unsigned n) {
  BinarizerConfig cfg;
  cfg.n_flags = n;
  return cfg;
}

std::string bits_of(std::int64_t level, const BinarizerConfig& cfg) {
  const auto bins = binarize(level, cfg);
  return bin_string(bins);
}

// Independent string oracle of the binarization rule.
std::string reference_bits(std::int64_t level, unsigned n) {
  if (level == 0) return "0";
  std::string s = "1";
  s += level < 0 ? '1' : '0';
  const std::uint64_t mag = level < 0 ? static_cast<std::uint64_t>(-level) : static_cast<std::uint64_t>(level);
  for (unsigned j = 1; j <= n; ++j) {
    if (mag > j) {
      s += '1';
    } else {
      s += '0';
      return s;
    }
  }
  const std::uint64_t i = mag - n;
  int k = 0;
  while ((i >> (k + 1)) != 0) ++k;
  s += std::string(k, '1');
  s += '0';
  for (int b = k - 1; b >= 0; --b) s += ((i >> b) & 1) ? '1' : '0';
  return s;
}

}  // namespace

TEST(Binarizer, GoldenStrings) {
  const auto cfg = flags(1);
  EXPECT_EQ(bits_of(0, cfg), "0");
  EXPECT_EQ(bits_of(1, cfg), "100");
  EXPECT_EQ(bits_of(-4, cfg), "111101");
  EXPECT_EQ(bits_of(7, cfg), "10111010");
  // sig 1, sign 0, AbsGr(1) 1, remainder 1 -> k = 0 -> unary "0".
  EXPECT_EQ(bits_of(2, cfg), "1010");
}

TEST(Binarizer, MatchesStringOracle) {
  for (unsigned n : {1u, 2u, 5u, 10u}) {
    for (std::int64_t level = -3000; level <= 3000; ++level) {
      ASSERT_EQ(bits_of(level, flags(n)), reference_bits(level, n)) << "level " << level << " n " << n;
    }
  }
}

TEST(Binarizer, RolesFollowLayout) {
  const auto bins = binarize(-4, flags(1));
  ASSERT_EQ(bins.size(), 6u);
  EXPECT_EQ(bins[0].role, BinRole::Sig);
  EXPECT_EQ(bins[1].role, BinRole::Sign);
  EXPECT_EQ(bins[2].role, BinRole::AbsGr);
  EXPECT_EQ(bins[3].role, BinRole::GolombUnary);
  EXPECT_EQ(bins[3].index, 0u);
  EXPECT_EQ(bins[4].role, BinRole::GolombUnary);
  EXPECT_EQ(bins[4].index, 1u);
  EXPECT_EQ(bins[5].role, BinRole::Bypass);
}

TEST(Binarizer, ExhaustiveRoundTrip) {
  for (unsigned n : {1u, 3u, 10u}) {
    const auto cfg = flags(n);
    for (std::int64_t level = -10000; level <= 10000; ++level) {
      const auto bins = binarize(level, cfg);
      std::size_t used = 0;
      ASSERT_EQ(debinarize(std::span<const Bin>(bins), cfg, &used), level);
      ASSERT_EQ(used, bins.size());
    }
  }
}

TEST(Binarizer, RoundTripNearInt32Limits) {
  const auto cfg = flags(10);
  const std::int64_t lo = std::numeric_limits<std::int32_t>::min();
  const std::int64_t hi = std::numeric_limits<std::int32_t>::max();
  for (std::int64_t level : {lo, lo + 1, hi - 1, hi, std::int64_t{100000}, std::int64_t{-100000}}) {
    const auto bins = binarize(level, cfg);
    ASSERT_EQ(debinarize(std::span<const Bin>(bins), cfg), level);
  }
}

// No binarization is a proper prefix of another: decoding a concatenation
// consumes exactly the first code word.
TEST(Binarizer, PrefixFree) {
  const auto cfg = flags(2);
  std::vector<std::string> words;
  for (std::int64_t level = -200; level <= 200; ++level) words.push_back(bits_of(level, cfg));
  for (std::size_t a = 0; a < words.size(); ++a) {
    for (std::size_t b = 0; b < words.size(); ++b) {
      if (a == b) continue;
      ASSERT_FALSE(words[b].size() >= words[a].size() && words[b].compare(0, words[a].size(), words[a]) == 0)
          << words[a] << " prefixes " << words[b];
    }
  }
}

TEST(Binarizer, DebinarizeConsumesOneLevel) {
  const auto cfg = flags(1);
  std::vector<unsigned char> seq;
  for (std::int64_t level : {7, -4, 0, 2}) {
    for (auto b : binarize(level, cfg)) seq.push_back(static_cast<unsigned char>(b.value));
  }
  std::span<const unsigned char> rest(seq);
  for (std::int64_t level : {7, -4, 0, 2}) {
    std::size_t used = 0;
    ASSERT_EQ(debinarize(rest, cfg, &used), level);
    rest = rest.subspan(used);
  }
  EXPECT_TRUE(rest.empty());
}

TEST(Binarizer, TruncatedBinsAreCorrupt) {
  const std::vector<unsigned char> partial{1, 0, 1};
  EXPECT_THROW(debinarize(std::span<const unsigned char>(partial), flags(1)), CorruptStream);
}

TEST(Binarizer, OverlongGolombPrefixIsCorrupt) {
  BinarizerConfig cfg = flags(1);
  cfg.max_golomb_order = 4;
  std::vector<unsigned char> bins{1, 0, 1};
  bins.insert(bins.end(), 10, 1);
  EXPECT_THROW(debinarize(std::span<const unsigned char>(bins), cfg), CorruptStream);
}

TEST(Binarizer, MagnitudeBeyondGolombOrderIsRangeError) {
  BinarizerConfig cfg = flags(1);
  cfg.max_golomb_order = 3;
  EXPECT_NO_THROW(binarize(1 + 15, cfg));
  EXPECT_THROW(binarize(1 + 16, cfg), RangeError);
  EXPECT_THROW(binarize(-(1 + 16), cfg), RangeError);
}

TEST(Binarizer, InvalidConfigRejected) {
  EXPECT_THROW(binarize(1, flags(0)), ContractViolation);
}

TEST(ContextSet, ModelCountAndSharing) {
  const ContextSet ten(flags(10));
  EXPECT_EQ(ten.model_count(), 2u + 1u + 10u + 16u);
  BinarizerConfig small = flags(2);
  small.max_golomb_order = 3;
  ContextSet s(small);
  EXPECT_EQ(s.golomb.size(), 4u);
  EXPECT_EQ(&s.model(BinRole::GolombUnary, 3, false), &s.model(BinRole::GolombUnary, 9, false));
  EXPECT_NE(&s.model(BinRole::Sig, 0, false), &s.model(BinRole::Sig, 0, true));
  EXPECT_THROW(s.model(BinRole::Bypass, 0, false), ContractViolation);
}

TEST(EstimateBits, FreshContextCosts) {
  const auto cfg = flags(1);
  const ContextSet fresh(cfg);
  EXPECT_DOUBLE_EQ(estimate_level_bits(fresh, 0, cfg, false), 1.0);
  EXPECT_DOUBLE_EQ(estimate_level_bits(fresh, 1, cfg, false), 3.0);
  EXPECT_DOUBLE_EQ(estimate_level_bits(fresh, -4, cfg, false), 6.0);
}

// The estimate equals the sum of bin costs evaluated as the bins are
// committed one by one (contexts are not touched twice within a level).
TEST(EstimateBits, MatchesBinByBinCostAndDoesNotMutate) {
  const auto cfg = flags(3);
  std::mt19937_64 rng(17);
  ContextSet ctxs(cfg);
  for (int i = 0; i < 2000; ++i) commit_level(ctxs, std::uniform_int_distribution<int>(-20, 20)(rng), cfg, i % 2);
  const ContextSet before = ctxs;
  for (std::int64_t level = -300; level <= 300; ++level) {
    for (bool prev : {false, true}) {
      double expected = 0.0;
      for (const auto& b : binarize(level, cfg)) {
        expected += b.role == BinRole::Bypass ? 1.0 : bin_cost(ctxs.model(b.role, b.index, prev), b.value);
      }
      ASSERT_DOUBLE_EQ(estimate_level_bits(ctxs, level, cfg, prev), expected);
    }
  }
  EXPECT_EQ(ctxs, before);
}

TEST(EstimateBits, TailGrowsWithMagnitude) {
  const auto cfg = flags(2);
  const ContextSet fresh(cfg);
  double prev = 0.0;
  for (std::int64_t mag = 3; mag < 5000; mag = mag * 2 + 1) {
    const double bits = estimate_level_bits(fresh, mag, cfg, false);
    EXPECT_GT(bits, prev);
    prev = bits;
  }
}

TEST(LevelCodec, TensorRoundTrip) {
  std::mt19937_64 rng(2024);
  for (unsigned n : {1u, 4u, 10u}) {
    const auto levels = testutil::random_levels(rng, 20000, 300, 0.6);
    const auto payload = encode_levels(levels, flags(n));
    ASSERT_EQ(decode_levels(payload, levels.size(), flags(n)), levels);
  }
}

TEST(LevelCodec, EmptyAndSingleLevel) {
  const std::vector<std::int32_t> none;
  const auto payload = encode_levels(none, flags(10));
  EXPECT_TRUE(decode_levels(payload, 0, flags(10)).empty());
  const std::vector<std::int32_t> one{std::numeric_limits<std::int32_t>::min()};
  EXPECT_EQ(decode_levels(encode_levels(one, flags(10)), 1, flags(10)), one);
}

TEST(LevelCodec, DecoderContextsTrackEncoder) {
  const auto cfg = flags(4);
  std::mt19937_64 rng(6);
  const auto levels = testutil::random_levels(rng, 5000, 50, 0.5);
  ContextSet enc_ctx(cfg), dec_ctx(cfg);
  ArithmeticEncoder enc;
  bool prev = false;
  for (auto l : levels) {
    encode_level(enc, enc_ctx, l, cfg, prev);
    prev = l != 0;
  }
  const auto payload = enc.finish();
  ArithmeticDecoder dec(payload);
  ContextSet shadow(cfg);
  prev = false;
  for (auto l : levels) {
    ASSERT_EQ(decode_level(dec, dec_ctx, cfg, prev), l);
    commit_level(shadow, l, cfg, prev);
    ASSERT_EQ(dec_ctx, shadow);
    prev = l != 0;
  }
  EXPECT_EQ(enc_ctx, dec_ctx);
}

TEST(LevelCodec, SparseTensorCompressesBelowOneBitPerWeight) {
  std::mt19937_64 rng(1);
  const auto levels = testutil::random_levels(rng, 100000, 3, 0.95);
  const auto payload = encode_levels(levels, flags(10));
  EXPECT_LT(8.0 * payload.size() / levels.size(), 0.6);
}
