#include <gtest/gtest.h>

#include <cmath>

#include "lcodom/ordinal.hpp"
#include "lcodom/rng.hpp"

namespace lcodom {
namespace {

TEST(ClassOf, SpecExamples) {
  EXPECT_EQ(class_of(-5.6, ClassGrid::rotation()), 0u);
  EXPECT_EQ(class_of(0.0, ClassGrid::rotation()), 56u);
  std::atomic<std::uint64_t> clamps{0};
  EXPECT_EQ(class_of(9.99, ClassGrid::translation(), &clamps), 269u);
  EXPECT_EQ(clamps.load(), 1u);
  EXPECT_EQ(class_of(-9.0, ClassGrid::rotation(), &clamps), 0u);
  EXPECT_EQ(clamps.load(), 2u);
  EXPECT_EQ(class_of(2.6, ClassGrid::translation(), &clamps), 260u);
  EXPECT_EQ(clamps.load(), 2u);
}

TEST(ClassOf, TiesRoundAwayFromZero) {
  const ClassGrid g{0.0, 1.0, 10};
  EXPECT_EQ(class_of(2.5, g), 3u);
  EXPECT_EQ(class_of(2.4999, g), 2u);
}

TEST(ValueOf, SpecExamples) {
  EXPECT_DOUBLE_EQ(value_of(0, ClassGrid::rotation()), -5.6);
  EXPECT_NEAR(value_of(56, ClassGrid::rotation()), 0.0, 1e-12);
  EXPECT_THROW(value_of(112, ClassGrid::rotation()), std::out_of_range);
}

TEST(ValueOf, RoundingBoundAndMonotone) {
  Rng rng(1);
  for (const auto& g : {ClassGrid::rotation(), ClassGrid::translation()}) {
    const double lo = g.min_value, hi = value_of(g.k - 1, g);
    for (int i = 0; i < 5000; ++i) {
      const double v = rng.uniform(lo, hi);
      EXPECT_LE(std::abs(value_of(class_of(v, g), g) - v), g.resolution / 2 + 1e-12);
    }
    // Monotone on a sorted sweep.
    std::size_t last = 0;
    for (double v = lo - 1.0; v <= hi + 1.0; v += g.resolution / 7) {
      const auto c = class_of(v, g);
      EXPECT_GE(c, last);
      last = c;
    }
  }
}

TEST(EncodeRank, SpecExamples) {
  EXPECT_EQ(encode_rank(0, 6), (std::vector<float>{0, 0, 0, 0, 0}));
  EXPECT_EQ(encode_rank(5, 6), (std::vector<float>{1, 1, 1, 1, 1}));
  EXPECT_EQ(encode_rank(3, 6), (std::vector<float>{1, 1, 1, 0, 0}));
  EXPECT_THROW(encode_rank(6, 6), std::out_of_range);
}

TEST(DecodeRank, SpecExamples) {
  EXPECT_EQ(decode_rank(std::vector<float>(5, 0.1f), 6), 0u);
  EXPECT_EQ(decode_rank(std::vector<float>{0.9f, 0.2f, 0.8f}, 4), 2u);
  EXPECT_EQ(decode_rank(std::vector<float>{0.5f, 0.5f, 0.5f}, 4), 0u);
  EXPECT_THROW(decode_rank(std::vector<float>(5, 0.1f), 7), std::invalid_argument);
}

TEST(Ordinal, ExhaustiveRoundtripBothGrids) {
  for (const auto& g : {ClassGrid::rotation(), ClassGrid::translation()}) {
    for (std::size_t c = 0; c < g.k; ++c) ASSERT_EQ(decode_rank(encode_rank(c, g.k), g.k), c);
  }
}

TEST(Ordinal, MonotoneAndHammingEqualsClassDistance) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = rng.below(2) ? 112 : 270;
    const std::size_t a = rng.below(k), b = rng.below(k);
    const auto la = encode_rank(a, k), lb = encode_rank(b, k);
    std::size_t hamming = 0;
    for (std::size_t j = 0; j < k - 1; ++j) {
      hamming += la[j] != lb[j];
      if (a < b) {
        ASSERT_LE(la[j], lb[j]);
      }
    }
    ASSERT_EQ(hamming, a > b ? a - b : b - a);
  }
}

TEST(ClassGrid, Validation) {
  EXPECT_NO_THROW(ClassGrid::rotation().validate());
  EXPECT_THROW((ClassGrid{0, 0, 5}).validate(), std::invalid_argument);
  EXPECT_THROW((ClassGrid{0, 1, 1}).validate(), std::invalid_argument);
  EXPECT_EQ(ClassGrid::rotation().ranks(), 111u);
  EXPECT_EQ(ClassGrid::translation().ranks(), 269u);
}

}  // namespace
}  // namespace lcodom
