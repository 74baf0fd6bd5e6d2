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

#include "arasim/pipeline.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "arasim/dataset.h"
#include "arasim/error_model.h"
#include "arasim/rng.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace arasim {
namespace {

using ::arasim::testing::GiftShopDataset;
using ::arasim::testing::ValueOrDie;

constexpr int64_t kGamma = 65536;

BudgetParams LinfParams(int64_t c, std::vector<double> clips,
                        std::vector<double> alphas) {
  BudgetParams p;
  p.count_limit = c;
  p.clip_thresholds = std::move(clips);
  p.fractions = std::move(alphas);
  return p;
}

BudgetParams L1Params(int64_t c, std::vector<double> clips) {
  BudgetParams p = LinfParams(c, std::move(clips), {});
  p.fractions.assign(p.clip_thresholds.size(),
                     1.0 / p.clip_thresholds.size());
  p.variant = EncodingVariant::kL1;
  return p;
}

TEST(BudgetParamsTest, Validation) {
  EXPECT_TRUE(LinfParams(2, {2, 30}, {0.5, 0.5}).Validate().ok());
  EXPECT_FALSE(LinfParams(0, {2}, {1}).Validate().ok());
  EXPECT_FALSE(LinfParams(1, {0}, {1}).Validate().ok());
  EXPECT_FALSE(LinfParams(1, {1, 1}, {0.5, 0.4}).Validate().ok());
  EXPECT_FALSE(LinfParams(1, {1, 1}, {1.2, -0.2}).Validate().ok());
  EXPECT_TRUE(LinfParams(1, {1, 1}, {0.5, 0.5 + 1e-10}).Validate().ok());
  BudgetParams dedicated = LinfParams(1, {1}, {0.5});
  dedicated.count_mode = CountMode::kDedicated;
  dedicated.count_fraction = 0.5;
  EXPECT_TRUE(dedicated.Validate().ok());
}

TEST(BudgetParamsTest, JsonRoundTrip) {
  BudgetParams p = LinfParams(3, {2.5, 30}, {0.25, 0.75});
  const BudgetParams q =
      ValueOrDie(BudgetParamsFromJson(nlohmann::json::parse(
          BudgetParamsToJson(p).dump())));
  EXPECT_EQ(q.count_limit, 3);
  EXPECT_EQ(q.clip_thresholds, p.clip_thresholds);
  EXPECT_EQ(q.fractions, p.fractions);
  EXPECT_FALSE(BudgetParamsFromJson(nlohmann::json::parse("{}")).ok());
}

TEST(EncodeLinfTest, GiftShopWorkedExample) {
  const HistogramEncoder enc = ValueOrDie(
      HistogramEncoder::Create(LinfParams(2, {2, 30}, {0.5, 0.5}), 2));
  const Record z{"123", 1, 0, {3, 21}};
  RngStream rng(1);
  int up = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const HistogramContribution w = enc.Encode(z, rng);
    ASSERT_EQ(w.slice, 0u);
    EXPECT_EQ(w.mass[0], 16384);
    ASSERT_TRUE(w.mass[1] == 11468 || w.mass[1] == 11469);
    EXPECT_EQ(w.mass[2], 32768 - 16384 - w.mass[1]);
    if (w.mass[1] == 11469) {
      ++up;
      EXPECT_EQ(w.mass[2], 4915);
    }
  }
  EXPECT_NEAR(static_cast<double>(up) / n, 0.8, 0.015);
}

TEST(EncodeLinfTest, ZeroValuesGoToRemainder) {
  const HistogramEncoder enc = ValueOrDie(
      HistogramEncoder::Create(LinfParams(3, {1, 1}, {0.5, 0.5}), 1));
  RngStream rng(1);
  const HistogramContribution w = enc.Encode({"x", 0, 0, {0, 0}}, rng);
  EXPECT_EQ(w.mass, (std::vector<int64_t>{0, 0, kGamma / 3}));
}

TEST(EncodeLinfTest, FullClippingIsDeterministic) {
  for (int64_t c : {1, 2, 4, 8}) {
    const HistogramEncoder enc = ValueOrDie(HistogramEncoder::Create(
        LinfParams(c, {1, 2, 3, 4}, {0.25, 0.25, 0.25, 0.25}), 1));
    RngStream rng(c);
    const HistogramContribution w = enc.Encode({"x", 0, 0, {5, 5, 5, 5}}, rng);
    const int64_t each = kGamma / (4 * c);
    EXPECT_EQ(w.mass, (std::vector<int64_t>{each, each, each, each,
                                            kGamma / c - 4 * each}));
  }
}

TEST(EncodeL1Test, UnitVector) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(L1Params(1, {7}), 1));
  RngStream rng(1);
  const HistogramContribution w = enc.Encode({"x", 0, 0, {7}}, rng);
  EXPECT_EQ(w.mass, (std::vector<int64_t>{65536, 0}));
}

TEST(EncodeL1Test, NormalizesLongVectors) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(L1Params(1, {2, 4}), 1));
  RngStream rng(1);
  const HistogramContribution w = enc.Encode({"x", 0, 0, {2, 4}}, rng);
  EXPECT_EQ(w.mass, (std::vector<int64_t>{32768, 32768, 0}));
}

TEST(EncodeL1Test, ShortVectorKeepsRemainder) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(L1Params(1, {10, 10}), 1));
  RngStream rng(1);
  const HistogramContribution w = enc.Encode({"x", 0, 0, {3, 2}}, rng);
  // u = (0.3, 0.2) * 65536 = (19660.8, 13107.2).
  EXPECT_EQ(w.mass, (std::vector<int64_t>{19660, 13107, 32769}));
}

TEST(EncoderTest, ContributionNormLaw) {
  RngStream rng(99);
  for (int i = 0; i < 10000; ++i) {
    const size_t d = 1 + rng.UniformInt(4);
    const int64_t c = 1 + rng.UniformInt(rng.Uniform() < 0.5 ? 10 : 70000);
    BudgetParams p;
    p.count_limit = std::min<int64_t>(c, kGamma);
    std::vector<double> w(d);
    double total = 0;
    for (double& x : w) total += (x = rng.UniformPositive());
    for (size_t l = 0; l < d; ++l) {
      p.clip_thresholds.push_back(0.01 + 100 * rng.Uniform());
      p.fractions.push_back(w[l] / total);
    }
    p.variant = i % 2 ? EncodingVariant::kL1 : EncodingVariant::kLinf;
    const HistogramEncoder enc = ValueOrDie(HistogramEncoder::Create(p, 4));
    Record z{"x", 0, rng.UniformInt(4), {}};
    for (size_t l = 0; l < d; ++l) z.values.push_back(200 * rng.Uniform());
    const HistogramContribution h = enc.Encode(z, rng);
    EXPECT_EQ(h.L1Norm(), kGamma / p.count_limit);
    for (int64_t x : h.mass) EXPECT_GE(x, 0);
  }
}

TEST(EncoderTest, RejectsCountLimitAboveBudget) {
  EXPECT_FALSE(
      HistogramEncoder::Create(LinfParams(kGamma + 1, {1}, {1}), 1).ok());
}

TEST(BoundContributionsTest, KeepsGreedyPrefix) {
  const std::vector<HistogramContribution> ws(3, {0, {32768, 0}});
  const BoundedContributions kept = BoundContributions(ws);
  EXPECT_EQ(kept.kept_positions, (std::vector<size_t>{0, 1}));
  EXPECT_TRUE(BoundContributions({}).kept.empty());
  const std::vector<HistogramContribution> one = {{0, {kGamma / 4, 0}}};
  EXPECT_EQ(BoundContributions(one).kept.size(), 1u);
}

TEST(BoundContributionsTest, KeepsMinOfCountAndCapacity) {
  for (int64_t c : {1, 2, 3, 5, 7, 100, 1000}) {
    for (size_t n : {0u, 1u, 5u, 200u}) {
      const int64_t norm = kGamma / c;
      const std::vector<HistogramContribution> ws(n, {0, {norm}});
      const BoundedContributions kept = BoundContributions(ws);
      EXPECT_EQ(kept.kept.size(), KeptPerImpression(n, c));
      EXPECT_EQ(kept.kept.size(),
                std::min<size_t>(n, static_cast<size_t>(kGamma / norm)));
    }
  }
}

TEST(BoundContributionsTest, PrefixMonotone) {
  RngStream rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<HistogramContribution> ws;
    for (int k = 0; k < 12; ++k) {
      ws.push_back({0, {static_cast<int64_t>(rng.UniformInt(30000))}});
    }
    const BoundedContributions full = BoundContributions(ws);
    for (size_t len = 0; len <= ws.size(); ++len) {
      const BoundedContributions prefix = BoundContributions(
          std::span<const HistogramContribution>(ws.data(), len));
      ASSERT_LE(prefix.kept_positions.size(), full.kept_positions.size());
      for (size_t k = 0; k < prefix.kept_positions.size(); ++k) {
        EXPECT_EQ(prefix.kept_positions[k], full.kept_positions[k]);
      }
    }
  }
}

TEST(AggregateTest, NoiseOffSumsReports) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(LinfParams(1, {1}, {1}), 2));
  const std::vector<HistogramContribution> reports = {{1, {5, 0}},
                                                      {1, {7, 0}}};
  const SummaryReport r = ValueOrDie(
      Aggregate(reports, enc, 1.0, NoiseMode::kOff, RngStream(1)));
  EXPECT_EQ(r.values(0, 1), 12);
  EXPECT_EQ(r.values(0, 0), 0);
}

TEST(AggregateTest, HugeEpsilonLeavesSumsExact) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(LinfParams(1, {1}, {1}), 50));
  const SummaryReport r = ValueOrDie(
      Aggregate({}, enc, 20.0 * kGamma, NoiseMode::kOn, RngStream(3)));
  for (int64_t x : r.values.data()) EXPECT_EQ(x, 0);
}

TEST(AggregateTest, NoReportsGivesPureNoise) {
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(LinfParams(1, {1}, {1}), 100));
  const SummaryReport r =
      ValueOrDie(Aggregate({}, enc, 1.0, NoiseMode::kOn, RngStream(3)));
  int nonzero = 0;
  for (int64_t x : r.values.data()) nonzero += x != 0;
  EXPECT_GT(nonzero, 190);
  EXPECT_FALSE(Aggregate({}, enc, 0.0, NoiseMode::kOn, RngStream(3)).ok());
}

SummaryReport ReportWith(const BudgetParams& p, size_t m) {
  const bool dedicated = p.count_mode == CountMode::kDedicated;
  const KeyLayout layout(p.num_queries(), m, dedicated);
  return {layout, Matrix<int64_t>(layout.num_rows(), m, 0), 1.0, kGamma, p};
}

TEST(ReconstructTest, ScalingIdentity) {
  // floor(alpha Gamma / C) = 16384 with C = 2, alpha = 0.5.
  SummaryReport r = ReportWith(LinfParams(2, {2, 30}, {0.5, 0.5}), 1);
  r.values(1, 0) = 16384;
  const Matrix<double> u = ValueOrDie(Reconstruct(r));
  EXPECT_EQ(u(2, 0), 30);
}

TEST(ReconstructTest, GiftShopCountIsOne) {
  SummaryReport r = ReportWith(LinfParams(2, {2, 30}, {0.5, 0.5}), 1);
  r.values(0, 0) = 16384;
  r.values(1, 0) = 11469;
  r.values(2, 0) = 4915;
  const Matrix<double> u = ValueOrDie(Reconstruct(r));
  EXPECT_EQ(u(0, 0), 1);
  EXPECT_EQ(u(1, 0), 2);
  EXPECT_NEAR(u(2, 0), 11469.0 * 30 / 16384, 1e-12);
}

TEST(ReconstructTest, ZeroReportGivesZeroEstimates) {
  const Matrix<double> u =
      ValueOrDie(Reconstruct(ReportWith(LinfParams(3, {1, 2}, {0.3, 0.7}), 4)));
  EXPECT_EQ(u, Matrix<double>(3, 4, 0.0));
}

TEST(ReconstructTest, TinyFractionIsAParameterError) {
  SummaryReport r = ReportWith(LinfParams(1000, {1, 1}, {1e-6, 1 - 1e-6}), 1);
  EXPECT_EQ(Reconstruct(r).status().code(), absl::StatusCode::kInvalidArgument);
}

TEST(ReconstructTest, NeverClampsNegatives) {
  SummaryReport r = ReportWith(LinfParams(1, {1}, {1}), 1);
  r.values(0, 0) = -50;
  const Matrix<double> u = ValueOrDie(Reconstruct(r));
  EXPECT_LT(u(1, 0), 0);
  EXPECT_EQ(ClampNonnegative(u)(1, 0), 0);
}

TEST(SummaryReportTest, JsonRoundTrip) {
  BudgetParams p = LinfParams(2, {2, 30}, {0.5, 0.5});
  SummaryReport r = ReportWith(p, 2);
  r.values(0, 0) = 16384;
  r.values(1, 0) = 11469;
  r.values(2, 1) = -4;
  const nlohmann::json j = nlohmann::json::parse(SummaryReportToJson(r).dump());
  EXPECT_EQ(j["values"]["1,0"], 16384);
  EXPECT_EQ(j["values"]["bot,1"], -4);
  const SummaryReport back = ValueOrDie(SummaryReportFromJson(j));
  EXPECT_EQ(back.values, r.values);
  EXPECT_EQ(back.layout.num_rows(), r.layout.num_rows());
  EXPECT_EQ(back.layout.num_slices(), 2u);
  const KeyLayout layout(2, 1, false);
  EXPECT_EQ(ContributionToJson(layout, {0, {16384, 11469, 4915}}).dump(),
            R"({"1,0":16384,"2,0":11469,"bot,0":4915})");
}

TEST(SimulateTest, ExactRecoveryWhenNothingBinds) {
  // Values are multiples of 1/4 and C_l = 8, so 16384 * q / 8 is integral.
  std::vector<Record> records;
  RngStream rng(4);
  for (int i = 0; i < 40; ++i) {
    const size_t n = 1 + rng.UniformInt(4);
    const size_t slice = rng.UniformInt(3);
    for (size_t k = 0; k < n; ++k) {
      records.push_back({"i" + std::to_string(i), k, slice,
                         {rng.UniformInt(33) / 4.0, rng.UniformInt(9) / 1.0}});
    }
  }
  const Dataset data = ValueOrDie(Dataset::Create(3, 2, std::move(records)));
  const BudgetParams p = LinfParams(4, {8, 8}, {0.5, 0.5});
  const HistogramEncoder enc =
      ValueOrDie(HistogramEncoder::Create(p, data.num_slices()));
  const SummaryReport report = ValueOrDie(
      SimulateSummaryReport(data, enc, 1.0, NoiseMode::kOff, RngStream(1)));
  EXPECT_EQ(ValueOrDie(Reconstruct(report)), TrueAggregates(data));
}

TEST(SimulateTest, DedicatedCountMode) {
  BudgetParams p = LinfParams(2, {3, 100}, {1.0 / 3, 1.0 / 3});
  p.count_mode = CountMode::kDedicated;
  p.count_fraction = 1.0 / 3;
  const Dataset data = GiftShopDataset();
  const HistogramEncoder enc = ValueOrDie(HistogramEncoder::Create(p, 2));
  EXPECT_EQ(enc.layout().num_rows(), 4u);
  const SummaryReport report = ValueOrDie(
      SimulateSummaryReport(data, enc, 1.0, NoiseMode::kOff, RngStream(2)));
  const Matrix<double> u = ValueOrDie(Reconstruct(report));
  // Impression 123 keeps z1, z2 only.
  EXPECT_EQ(u(0, 0), 3);
  EXPECT_EQ(u(0, 1), 3);
  EXPECT_NEAR(u(1, 0), ClippedKeptSums(data, p)(1, 0), 1e-2);
}

TEST(SensitivityTest, SingleFullBudgetReport) {
  const Dataset d = ValueOrDie(Dataset::Create(1, 1, {{"x", 0, 0, {4}}}));
  const Dataset empty = ValueOrDie(Dataset::Create(1, 1, {}));
  EXPECT_EQ(ValueOrDie(SensitivityCheck(d, empty, LinfParams(1, {10}, {1}),
                                        RngStream(1))),
            kGamma);
  EXPECT_EQ(ValueOrDie(SensitivityCheck(d, d, LinfParams(1, {10}, {1}),
                                        RngStream(1))),
            0);
}

Dataset WithoutImpression(const Dataset& data, const std::string& id) {
  std::vector<Record> keep;
  for (const Record& r : data.records()) {
    if (r.impression_id != id) keep.push_back(r);
  }
  return ValueOrDie(
      Dataset::Create(data.num_slices(), data.num_queries(), std::move(keep)));
}

TEST(SensitivityTest, RandomAdjacentPairsStayWithinBudget) {
  RngStream rng(21);
  for (int i = 0; i < 300; ++i) {
    const Dataset d = testing::RandomDataset(rng, {}, true);
    const std::string& victim =
        d.impressions()[rng.UniformInt(d.impressions().size())].id;
    BudgetParams p = LinfParams(1 + rng.UniformInt(8), {10, 20}, {0.4, 0.6});
    if (i % 2) p.variant = EncodingVariant::kL1;
    const int64_t dist = ValueOrDie(SensitivityCheck(
        d, WithoutImpression(d, victim), p, RngStream(i)));
    EXPECT_LE(dist, kGamma);
    EXPECT_GT(dist, 0);
  }
}

TEST(ErrorModelTest, NoiseOffMeanMatchesClippedKeptSums) {
  const Dataset data = GiftShopDataset();
  const BudgetParams p = LinfParams(2, {2, 30}, {0.5, 0.5});
  const EstimateMoments m =
      ValueOrDie(ExactMoments(data, p, 1.0, NoiseMode::kOff));
  const Matrix<double> target = ClippedKeptSums(data, p);
  for (size_t k = 0; k < target.size(); ++k) {
    EXPECT_NEAR(m.mean.data()[k], target.data()[k], 1e-9);
  }
  // Kept Thanksgiving values 21, 5, 30 scale to 11468.8, 2730.67, 16384.
  const double unit = 30.0 / 16384;
  EXPECT_NEAR(m.variance(2, 0), (0.16 + 2.0 / 9) * unit * unit, 1e-15);
}

}  // namespace
}  // namespace arasim
