#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "brainalign/philox.hpp"

using brainalign::Philox4x64;
using Block = Philox4x64::Block;

// Reference blocks from an independent Philox4x64-10 implementation (numpy's
// bit generator, which increments its counter before each block, so its
// first block is our block_at(1)).
TEST(Philox, KnownAnswerZeroKey) {
  const Philox4x64 g(0, 0);
  EXPECT_EQ(g.block_at(1), (Block{0x02f4ba6408e4d89bull, 0x3dd62b0b9ca8c5b2ull,
                                  0x1c8667a55d902e79ull, 0x907d7a052fd5b4dcull}));
  EXPECT_EQ(g.block_at(2), (Block{0x809bf322883987c3ull, 0x471128b9e807f7ddull,
                                  0xf250ba0dbec065b7ull, 0xfc6ed66767a457bcull}));
}

TEST(Philox, KnownAnswerPiKey) {
  const Philox4x64 g(0x243f6a8885a308d3ull, 0x13198a2e03707344ull);
  EXPECT_EQ(g.block_at(1), (Block{0xd96148ed4eef3177ull, 0x3756c9977974e2e4ull,
                                  0xaca97084472822a9ull, 0xf84393111bc816fcull}));
  EXPECT_EQ(g.block_at(2), (Block{0xafeacafa58106bc2ull, 0x8ceec2cd5d66be03ull,
                                  0xf35d32a580766947ull, 0x71552ce89be91f93ull}));
}

TEST(Philox, KnownAnswerFoldVoxelKey) {
  const Philox4x64 g(42, (3ull << 32) | 17);
  EXPECT_EQ(g.block_at(5), (Block{0xe7879e253abd8f65ull, 0x9dccd6ad9f952e8full,
                                  0xebbbb74fd7c9451eull, 0xf99e6f94f7b6c12full}));
  EXPECT_EQ(g.block_at(6), (Block{0x98a296349ac3217eull, 0xa0a491ecdce8e1aeull,
                                  0x19f6aebb686bed05ull, 0xea045711af4c6dacull}));
}

TEST(Philox, StreamWalksBlocksInOrder) {
  Philox4x64 g(7, 9);
  const Philox4x64 ref(7, 9);
  for (std::uint64_t b = 0; b < 3; ++b)
    for (auto word : ref.block_at(b))
      EXPECT_EQ(g(), word);
}

TEST(Philox, DistinctKeysGiveDistinctStreams) {
  EXPECT_NE(Philox4x64(1, 0).block_at(0), Philox4x64(0, 1).block_at(0));
  EXPECT_NE(Philox4x64(0, 1).block_at(0), Philox4x64(0, 2).block_at(0));
}

TEST(Philox, UniformIntegerRangeAndBalance) {
  Philox4x64 g(123, 456);
  constexpr std::uint64_t n = 26;
  constexpr int draws = 260000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) {
    const auto x = g.uniform(n);
    ASSERT_LT(x, n);
    ++counts[x];
  }
  // chi-square with 25 degrees of freedom; 99.99th percentile is about 63
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / n;
  for (int c : counts)
    chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 63.0);
}

TEST(Philox, Uniform01Range) {
  Philox4x64 g(5, 5);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = g.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Philox, UniformOfOneIsZero) {
  Philox4x64 g(0, 0);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(g.uniform(1), 0u);
}
