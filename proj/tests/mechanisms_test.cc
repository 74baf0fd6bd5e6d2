//
// Copyright 2026 Google LLC
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "arasim/mechanisms.h"

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "arasim/rng.h"
#include "gtest/gtest.h"

namespace arasim {
namespace {

double SampleVariance(const std::vector<int64_t>& xs) {
  double mean = 0;
  for (int64_t x : xs) mean += x;
  mean /= xs.size();
  double ss = 0;
  for (int64_t x : xs) ss += (x - mean) * (x - mean);
  return ss / (xs.size() - 1);
}

std::vector<int64_t> Draw(double a, size_t n, uint64_t seed) {
  RngStream rng(seed);
  const DLapParam p(a);
  std::vector<int64_t> out(n);
  for (int64_t& x : out) x = SampleDiscreteLaplace(p, rng);
  return out;
}

TEST(DLapParamTest, RejectsNonPositive) {
  EXPECT_FALSE(DLapParam(0).Validate().ok());
  EXPECT_FALSE(DLapParam(-1).Validate().ok());
  EXPECT_FALSE(DLapParam(INFINITY).Validate().ok());
  EXPECT_FALSE(DLapParam(NAN).Validate().ok());
  EXPECT_TRUE(DLapParam(0.3).Validate().ok());
}

TEST(DiscreteLaplaceVarianceTest, ClosedFormAtOne) {
  const double e = std::exp(1.0);
  const double oracle = 2 * e / ((e - 1) * (e - 1));
  EXPECT_NEAR(DiscreteLaplaceVariance(DLapParam(1)), oracle, 1e-12);
  EXPECT_NEAR(DiscreteLaplaceVariance(DLapParam(1)), 1.841347, 1e-6);
}

TEST(DiscreteLaplaceVarianceTest, VanishesAndDecreasesForLargeA) {
  EXPECT_LT(DiscreteLaplaceVariance(DLapParam(50)), 1e-19);
  double prev = INFINITY;
  for (double a = 0.01; a < 60; a *= 1.3) {
    const double v = DiscreteLaplaceVariance(DLapParam(a));
    EXPECT_LT(v, prev) << a;
    prev = v;
  }
}

TEST(DiscreteLaplaceVarianceTest, SmallAMatchesTwoOverASquared) {
  const double tiny = 1e-5;
  EXPECT_NEAR(DiscreteLaplaceVariance(DLapParam(tiny)) * tiny * tiny / 2, 1,
              1e-4);
}

TEST(DiscreteLaplaceSampleTest, LargeAIsAlmostAlwaysZero) {
  EXPECT_GT(DiscreteLaplacePmf(DLapParam(20), 0), 0.999999);
  for (int64_t x : Draw(20, 10000, 3)) EXPECT_EQ(x, 0);
}

TEST(DiscreteLaplaceSampleTest, VarianceMatchesAtPointOne) {
  const double oracle = DiscreteLaplaceVariance(DLapParam(0.1));
  EXPECT_NEAR(SampleVariance(Draw(0.1, 1000000, 5)) / oracle, 1.0, 0.02);
}

TEST(DiscreteLaplaceSampleTest, MeanIsZero) {
  for (double a : {0.5, 1.0, 2.0}) {
    const std::vector<int64_t> xs = Draw(a, 1000000, 11);
    double mean = 0;
    for (int64_t x : xs) mean += x;
    mean /= xs.size();
    const double sigma = std::sqrt(DiscreteLaplaceVariance(DLapParam(a)));
    EXPECT_LT(std::abs(mean), 5 * sigma / 1000) << a;
  }
}

TEST(DiscreteLaplaceSampleTest, Symmetric) {
  const std::vector<int64_t> xs = Draw(1.0, 1000000, 13);
  int64_t pos = 0, neg = 0;
  for (int64_t x : xs) {
    pos += x > 0;
    neg += x < 0;
  }
  EXPECT_LT(std::abs(pos - neg), 4 * std::sqrt(1e6));
}

TEST(DiscreteLaplaceSampleTest, PmfTotalVariationSmall) {
  for (double a : {0.5, 1.0, 2.0}) {
    const std::vector<int64_t> xs = Draw(a, 1000000, 17);
    std::map<int64_t, double> freq;
    for (int64_t x : xs) freq[x] += 1.0 / xs.size();
    double tv = 0;
    for (int64_t k = -5; k <= 5; ++k) {
      tv += std::abs(freq[k] - DiscreteLaplacePmf(DLapParam(a), k));
    }
    EXPECT_LT(tv / 2, 0.01) << a;
  }
}

TEST(DiscreteLaplacePmfTest, SumsToOne) {
  for (double a : {0.3, 1.0, 4.0}) {
    double total = 0;
    for (int64_t k = -2000; k <= 2000; ++k) {
      total += DiscreteLaplacePmf(DLapParam(a), k);
    }
    EXPECT_NEAR(total, 1.0, 1e-12) << a;
  }
}

TEST(RandomizedRoundTest, IntegerInputIsExact) {
  RngStream rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(RandomizedRound(7.0, rng), 7);
  EXPECT_EQ(RandomizedRoundVariance(7.0), 0.0);
}

TEST(RandomizedRoundTest, GiftShopValueRoundsUpWithProbabilityPointEight) {
  RngStream rng(2);
  int up = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int64_t r = RandomizedRound(11468.8, rng);
    ASSERT_TRUE(r == 11468 || r == 11469);
    up += r == 11469;
  }
  EXPECT_NEAR(static_cast<double>(up) / n, 0.8, 0.01);
}

TEST(RandomizedRoundTest, UnbiasedAndVarianceBounded) {
  RngStream rng(3);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += RandomizedRound(2.5, rng);
  EXPECT_NEAR(sum / n, 2.5, 0.01);
  for (double w : {0.0, 0.1, 0.5, 3.9, 1e6 + 0.25}) {
    const double frac = w - std::floor(w);
    EXPECT_NEAR(RandomizedRoundVariance(w), frac * (1 - frac), 1e-9);
    EXPECT_LE(RandomizedRoundVariance(w), 0.25);
  }
}

TEST(RandomizedRoundTest, EmpiricalVarianceMatchesFormula) {
  RngStream rng(4);
  std::vector<int64_t> xs(200000);
  for (int64_t& x : xs) x = RandomizedRound(4.3, rng);
  EXPECT_NEAR(SampleVariance(xs), RandomizedRoundVariance(4.3), 0.005);
}

TEST(ClipTest, GiftShopExamples) {
  EXPECT_EQ(Clip(21, 30), 21);
  EXPECT_EQ(Rem(21, 30), 0);
  EXPECT_EQ(Clip(3, 2), 2);
  EXPECT_EQ(Rem(3, 2), 1);
  EXPECT_EQ(Clip(0, 0.7), 0);
  EXPECT_EQ(Rem(0, 0.7), 0);
}

TEST(ClipTest, ClipPlusRemIsIdentity) {
  RngStream rng(5);
  for (int i = 0; i < 100000; ++i) {
    // Cents and dyadic thresholds, as in currency-valued queries.
    const double v = static_cast<double>(rng.UniformInt(1000000)) / 100;
    const double c = static_cast<double>(1 + rng.UniformInt(4096)) / 8;
    EXPECT_EQ(Clip(v, c) + Rem(v, c), v) << v << " " << c;
  }
}

TEST(RngStreamTest, SamePathSameDraws) {
  RngStream a(42, {1, 2, 3});
  RngStream b(42, {1, 2, 3});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  RngStream root(42);
  EXPECT_EQ(root.Substream({7, 9}).key(), root.Substream(7).Substream(9).key());
}

TEST(RngStreamTest, SubstreamDoesNotAdvanceParent) {
  RngStream a(9);
  RngStream b(9);
  (void)a.Substream(5);
  EXPECT_EQ(a(), b());
}

TEST(RngStreamTest, DistinctPathsDiffer) {
  RngStream root(1);
  EXPECT_NE(root.Substream(0)(), root.Substream(1)());
  EXPECT_NE(RngStream(1)(), RngStream(2)());
}

TEST(RngStreamTest, UniformRanges) {
  RngStream rng(8);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.Uniform();
    EXPECT_TRUE(u >= 0 && u < 1);
    const double p = rng.UniformPositive();
    EXPECT_TRUE(p > 0 && p <= 1);
    EXPECT_LT(rng.UniformInt(7), 7u);
  }
}

}  // namespace
}  // namespace arasim
