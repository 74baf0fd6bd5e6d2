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

#ifndef ARASIM_PIPELINE_H_
#define ARASIM_PIPELINE_H_

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "arasim/dataset.h"
#include "arasim/matrix.h"
#include "arasim/mechanisms.h"
#include "arasim/rng.h"
#include "arasim/status_macros.h"
#include "json.hpp"

namespace arasim {

// Per-impression l1 cap on histogram contributions enforced by the API.
inline constexpr int64_t kDefaultContributionBudget = 65536;

enum class EncodingVariant { kLinf, kL1 };

// kRemainder recovers the count from the remainder key plus the value keys;
// kDedicated spends an explicit budget fraction on a count key (q_0 = 1,
// clipped at 1).
enum class CountMode { kRemainder, kDedicated };

inline const char* VariantName(EncodingVariant v) {
  return v == EncodingVariant::kLinf ? "linf" : "l1";
}
inline const char* CountModeName(CountMode m) {
  return m == CountMode::kRemainder ? "remainder" : "dedicated";
}

// The analyst-controlled contribution budgeting parameters.
struct BudgetParams {
  int64_t count_limit = 1;              // C
  std::vector<double> clip_thresholds;  // C_l, l = 1..d
  std::vector<double> fractions;        // alpha_l, l = 1..d
  double count_fraction = 0.0;          // alpha_0; dedicated mode only
  EncodingVariant variant = EncodingVariant::kLinf;
  CountMode count_mode = CountMode::kRemainder;

  size_t num_queries() const { return clip_thresholds.size(); }

  absl::Status Validate() const {
    if (count_limit < 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("count limit must be >= 1, got ", count_limit));
    }
    if (fractions.size() != clip_thresholds.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "got ", clip_thresholds.size(), " clipping thresholds but ",
          fractions.size(), " budget fractions"));
    }
    double total = count_fraction;
    for (size_t l = 0; l < clip_thresholds.size(); ++l) {
      if (!(clip_thresholds[l] > 0) || !std::isfinite(clip_thresholds[l])) {
        return absl::InvalidArgumentError(
            absl::StrCat("clipping threshold ", l + 1,
                         " must be positive, got ", clip_thresholds[l]));
      }
      if (!(fractions[l] >= 0)) {
        return absl::InvalidArgumentError(absl::StrCat(
            "budget fraction ", l + 1, " must be >= 0, got ", fractions[l]));
      }
      total += fractions[l];
    }
    const bool count_only =
        clip_thresholds.empty() && count_mode == CountMode::kRemainder;
    if (!count_only && std::abs(total - 1.0) > 1e-9) {
      return absl::InvalidArgumentError(
          absl::StrCat("budget fractions must sum to 1, got ", total));
    }
    if (count_mode == CountMode::kRemainder && count_fraction != 0.0) {
      return absl::InvalidArgumentError(
          "count fraction must be 0 in remainder count mode");
    }
    if (count_mode == CountMode::kDedicated) {
      if (!(count_fraction > 0)) {
        return absl::InvalidArgumentError(
            "dedicated count mode needs a positive count fraction");
      }
      if (variant != EncodingVariant::kLinf) {
        return absl::InvalidArgumentError(
            "dedicated count mode is only defined for the linf encoder");
      }
    }
    return absl::OkStatus();
  }
};

inline nlohmann::ordered_json BudgetParamsToJson(const BudgetParams& p) {
  return {{"count_limit", p.count_limit},
          {"clip_thresholds", p.clip_thresholds},
          {"fractions", p.fractions},
          {"count_fraction", p.count_fraction},
          {"variant", VariantName(p.variant)},
          {"count_mode", CountModeName(p.count_mode)}};
}

inline absl::StatusOr<BudgetParams> BudgetParamsFromJson(
    const nlohmann::json& j) {
  BudgetParams p;
  try {
    p.count_limit = j.at("count_limit").get<int64_t>();
    p.clip_thresholds = j.at("clip_thresholds").get<std::vector<double>>();
    p.fractions = j.at("fractions").get<std::vector<double>>();
    p.count_fraction = j.value("count_fraction", 0.0);
    const std::string variant = j.value("variant", "linf");
    const std::string mode = j.value("count_mode", "remainder");
    if (variant == "linf") {
      p.variant = EncodingVariant::kLinf;
    } else if (variant == "l1") {
      p.variant = EncodingVariant::kL1;
    } else {
      return absl::InvalidArgumentError("unknown variant " + variant);
    }
    if (mode == "remainder") {
      p.count_mode = CountMode::kRemainder;
    } else if (mode == "dedicated") {
      p.count_mode = CountMode::kDedicated;
    } else {
      return absl::InvalidArgumentError("unknown count mode " + mode);
    }
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed budget params: ", e.what()));
  }
  RETURN_IF_ERROR(p.Validate());
  return p;
}

// Rows of the dense key space over ([d] u {bot}) x [m]. With a dedicated
// count key, row 0 is the count key and the value rows shift down by one.
class KeyLayout {
 public:
  KeyLayout() = default;
  KeyLayout(size_t num_queries, size_t num_slices, bool dedicated_count)
      : num_queries_(num_queries),
        num_slices_(num_slices),
        dedicated_count_(dedicated_count) {}

  size_t num_queries() const { return num_queries_; }
  size_t num_slices() const { return num_slices_; }
  bool dedicated_count() const { return dedicated_count_; }
  size_t num_rows() const { return num_queries_ + 1 + (dedicated_count_ ? 1 : 0); }
  size_t num_keys() const { return num_rows() * num_slices_; }

  // query in 1..d.
  size_t value_row(size_t query) const {
    return (dedicated_count_ ? 1 : 0) + query - 1;
  }
  size_t count_row() const { return 0; }
  size_t bottom_row() const { return num_rows() - 1; }

  std::string RowLabel(size_t row) const {
    if (row == bottom_row()) return "bot";
    if (dedicated_count_ && row == 0) return "count";
    return std::to_string(row + (dedicated_count_ ? 0 : 1));
  }

  absl::StatusOr<size_t> RowFromLabel(const std::string& label) const {
    for (size_t r = 0; r < num_rows(); ++r) {
      if (RowLabel(r) == label) return r;
    }
    return absl::InvalidArgumentError("unknown key row " + label);
  }

  friend bool operator==(const KeyLayout&, const KeyLayout&) = default;

 private:
  size_t num_queries_ = 0;
  size_t num_slices_ = 0;
  bool dedicated_count_ = false;
};

// Sparse histogram contribution of one record: nonzero only in the column of
// its slice. mass[r] is the aggregatable value for key (row r, slice).
struct HistogramContribution {
  size_t slice = 0;
  std::vector<int64_t> mass;

  int64_t L1Norm() const {
    int64_t total = 0;
    for (int64_t v : mass) total += std::abs(v);
    return total;
  }
};

// Integer scales derived from the parameters:
//   per_record  = floor(Gamma / C)
//   value_scale = floor(alpha_l * Gamma / C)
//   count_scale = floor(alpha_0 * Gamma / C)   (dedicated mode)
struct ContributionScales {
  int64_t gamma = kDefaultContributionBudget;
  int64_t per_record = 0;
  std::vector<int64_t> value_scale;
  int64_t count_scale = 0;
};

inline int64_t FloorScale(double fraction, int64_t gamma, int64_t count_limit) {
  return static_cast<int64_t>(
      std::floor(fraction * static_cast<double>(gamma) /
                 static_cast<double>(count_limit)));
}

inline absl::StatusOr<ContributionScales> ComputeScales(const BudgetParams& p,
                                                        int64_t gamma) {
  RETURN_IF_ERROR(p.Validate());
  if (gamma < 1) {
    return absl::InvalidArgumentError("contribution budget must be >= 1");
  }
  ContributionScales s;
  s.gamma = gamma;
  s.per_record = gamma / p.count_limit;
  if (s.per_record < 1) {
    return absl::InvalidArgumentError(absl::StrCat(
        "count limit ", p.count_limit, " exceeds the contribution budget"));
  }
  int64_t used = 0;
  for (double a : p.fractions) {
    s.value_scale.push_back(FloorScale(a, gamma, p.count_limit));
    used += s.value_scale.back();
  }
  if (p.count_mode == CountMode::kDedicated) {
    s.count_scale = FloorScale(p.count_fraction, gamma, p.count_limit);
    used += s.count_scale;
  }
  if (p.variant == EncodingVariant::kLinf && used > s.per_record) {
    return absl::InvalidArgumentError(
        absl::StrCat("budget fractions overspend: ", used, " > ", s.per_record));
  }
  return s;
}

// Per-record encoder for both histogram-contribution variants. Every
// contribution has l1 norm exactly floor(Gamma / C).
class HistogramEncoder {
 public:
  static absl::StatusOr<HistogramEncoder> Create(
      const BudgetParams& params, size_t num_slices,
      int64_t gamma = kDefaultContributionBudget) {
    ASSIGN_OR_RETURN(ContributionScales scales, ComputeScales(params, gamma));
    return HistogramEncoder(params, scales,
                            KeyLayout(params.num_queries(), num_slices,
                                      params.count_mode == CountMode::kDedicated));
  }

  const BudgetParams& params() const { return params_; }
  const ContributionScales& scales() const { return scales_; }
  const KeyLayout& layout() const { return layout_; }
  int64_t contribution_norm() const { return scales_.per_record; }

  // Writes the contribution for one record's values into `mass` (one entry
  // per key row of the record's slice).
  void EncodeInto(std::span<const double> values, RngStream& rng,
                  std::span<int64_t> mass) const {
    if (params_.variant == EncodingVariant::kLinf) {
      EncodeLinfInto(values, rng, mass);
    } else {
      EncodeL1Into(values, mass);
    }
  }

  HistogramContribution Encode(const Record& record, RngStream& rng) const {
    HistogramContribution w{record.slice,
                            std::vector<int64_t>(layout_.num_rows(), 0)};
    EncodeInto(record.values, rng, w.mass);
    return w;
  }

 private:
  HistogramEncoder(BudgetParams params, ContributionScales scales,
                   KeyLayout layout)
      : params_(std::move(params)),
        scales_(std::move(scales)),
        layout_(layout) {}

  // w_l = RR(floor(alpha_l Gamma / C) * clip(v_l, C_l) / C_l) and the
  // remainder key takes the rest of floor(Gamma / C).
  void EncodeLinfInto(std::span<const double> values, RngStream& rng,
                      std::span<int64_t> mass) const {
    int64_t used = 0;
    if (layout_.dedicated_count()) {
      // RR of an integer is the integer itself.
      mass[layout_.count_row()] = scales_.count_scale;
      used += scales_.count_scale;
    }
    for (size_t l = 0; l < values.size(); ++l) {
      const double threshold = params_.clip_thresholds[l];
      const double omega = static_cast<double>(scales_.value_scale[l]) *
                           (Clip(values[l], threshold) / threshold);
      const int64_t w = RandomizedRound(omega, rng);
      mass[layout_.value_row(l + 1)] = w;
      used += w;
    }
    mass[layout_.bottom_row()] = scales_.per_record - used;
  }

  // u = v / max(1, |v|_1) * Gamma / C with v_l = q_l / C_l; w_l = floor(u_l).
  void EncodeL1Into(std::span<const double> values,
                    std::span<int64_t> mass) const {
    double norm = 0;
    for (size_t l = 0; l < values.size(); ++l) {
      norm += values[l] / params_.clip_thresholds[l];
    }
    const double shrink = norm > 1.0 ? 1.0 / norm : 1.0;
    const double budget = static_cast<double>(scales_.gamma) /
                          static_cast<double>(params_.count_limit);
    int64_t used = 0;
    for (size_t l = 0; l < values.size(); ++l) {
      const double u =
          values[l] / params_.clip_thresholds[l] * shrink * budget;
      int64_t w = static_cast<int64_t>(std::floor(u));
      if (w > scales_.per_record - used) w = scales_.per_record - used;
      mass[layout_.value_row(l + 1)] = w;
      used += w;
    }
    mass[layout_.bottom_row()] = scales_.per_record - used;
  }

  BudgetParams params_;
  ContributionScales scales_;
  KeyLayout layout_;
};

// Online contribution bounding for one impression: admits a contribution iff
// the running l1 total stays within Gamma.
class ContributionBounder {
 public:
  explicit ContributionBounder(int64_t gamma = kDefaultContributionBudget)
      : gamma_(gamma) {}

  bool Admit(int64_t norm) {
    if (used_ + norm <= gamma_) {
      used_ += norm;
      return true;
    }
    return false;
  }

  int64_t used() const { return used_; }

 private:
  int64_t gamma_;
  int64_t used_ = 0;
};

struct BoundedContributions {
  std::vector<size_t> kept_positions;
  std::vector<HistogramContribution> kept;
};

// Greedy prefix filter over the contributions of a single impression.
inline BoundedContributions BoundContributions(
    std::span<const HistogramContribution> contributions,
    int64_t gamma = kDefaultContributionBudget) {
  BoundedContributions out;
  ContributionBounder bounder(gamma);
  for (size_t i = 0; i < contributions.size(); ++i) {
    if (bounder.Admit(contributions[i].L1Norm())) {
      out.kept_positions.push_back(i);
      out.kept.push_back(contributions[i]);
    }
  }
  return out;
}

// Number of records an impression keeps when every contribution has norm
// floor(Gamma / C): min(c, floor(Gamma / floor(Gamma / C))).
inline size_t KeptPerImpression(size_t conversions, int64_t count_limit,
                                int64_t gamma = kDefaultContributionBudget) {
  const int64_t per_record = gamma / count_limit;
  const size_t cap = static_cast<size_t>(gamma / per_record);
  return conversions < cap ? conversions : cap;
}

struct SummaryReport {
  KeyLayout layout;
  Matrix<int64_t> values;  // layout.num_rows() x m
  double epsilon = 0;
  int64_t gamma = kDefaultContributionBudget;
  BudgetParams params;
};

enum class NoiseMode { kOn, kOff };

// Adds i.i.d. DLap(epsilon / Gamma) to every key. Key k draws from its own
// substream of `rng`.
inline void AddDiscreteLaplaceNoise(Matrix<int64_t>& sums, double epsilon,
                                    int64_t gamma, const RngStream& rng) {
  const DLapParam p(epsilon / static_cast<double>(gamma));
  for (size_t k = 0; k < sums.size(); ++k) {
    RngStream key_rng = rng.Substream(k);
    sums.data()[k] += SampleDiscreteLaplace(p, key_rng);
  }
}

// Sums aggregatable reports over the key space and adds noise once per key.
inline absl::StatusOr<SummaryReport> Aggregate(
    std::span<const HistogramContribution> reports, const HistogramEncoder& encoder,
    double epsilon, NoiseMode noise, const RngStream& rng) {
  if (!(epsilon > 0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be positive, got ", epsilon));
  }
  const KeyLayout& layout = encoder.layout();
  SummaryReport report{layout,
                       Matrix<int64_t>(layout.num_rows(), layout.num_slices(), 0),
                       epsilon, encoder.scales().gamma, encoder.params()};
  for (const HistogramContribution& w : reports) {
    for (size_t r = 0; r < w.mass.size(); ++r) {
      report.values(r, w.slice) += w.mass[r];
    }
  }
  if (noise == NoiseMode::kOn) {
    AddDiscreteLaplaceNoise(report.values, epsilon, report.gamma, rng);
  }
  return report;
}

// Random-stream domains under a trial stream.
inline constexpr uint64_t kRecordDomain = 1;
inline constexpr uint64_t kNoiseDomain = 2;

// Exact (noise-free) sum of aggregatable reports over a whole dataset:
// encode every record, bound per impression in arrival order, and add the
// kept contributions. Record z of impression x draws its rounding from the
// substream (x, position of z within x), so removing other impressions
// does not change z's contribution.
inline Matrix<int64_t> SumAggregatableReports(const Dataset& data,
                                              const HistogramEncoder& encoder,
                                              const RngStream& trial_rng) {
  const KeyLayout& layout = encoder.layout();
  Matrix<int64_t> sums(layout.num_rows(), layout.num_slices(), 0);
  std::vector<int64_t> mass(layout.num_rows());
  const RngStream record_rng = trial_rng.Substream(kRecordDomain);
  for (const ImpressionGroup& imp : data.impressions()) {
    ContributionBounder bounder(encoder.scales().gamma);
    for (size_t pos = 0; pos < imp.records.size(); ++pos) {
      const Record& z = data.record(imp.records[pos]);
      RngStream rng = record_rng.Substream({imp.key, pos});
      encoder.EncodeInto(z.values, rng, mass);
      int64_t norm = 0;
      for (int64_t v : mass) norm += v;
      if (!bounder.Admit(norm)) continue;
      for (size_t r = 0; r < mass.size(); ++r) sums(r, z.slice) += mass[r];
    }
  }
  return sums;
}

// The full API simulation for one trial: encode, bound, aggregate, noise.
inline absl::StatusOr<SummaryReport> SimulateSummaryReport(
    const Dataset& data, const HistogramEncoder& encoder, double epsilon,
    NoiseMode noise, const RngStream& trial_rng) {
  if (!(epsilon > 0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be positive, got ", epsilon));
  }
  if (data.num_slices() != encoder.layout().num_slices() ||
      data.num_queries() != encoder.layout().num_queries()) {
    return absl::InvalidArgumentError("dataset shape does not match encoder");
  }
  SummaryReport report{encoder.layout(),
                       SumAggregatableReports(data, encoder, trial_rng),
                       epsilon, encoder.scales().gamma, encoder.params()};
  if (noise == NoiseMode::kOn) {
    AddDiscreteLaplaceNoise(report.values, epsilon, report.gamma,
                            trial_rng.Substream(kNoiseDomain));
  }
  return report;
}

// Reconstruction of slice estimates U ((d+1) x m, row 0 = count) from a
// summary report. Never clamps, so the estimates stay unbiased.
inline absl::StatusOr<Matrix<double>> Reconstruct(const SummaryReport& report) {
  const BudgetParams& p = report.params;
  ASSIGN_OR_RETURN(ContributionScales s, ComputeScales(p, report.gamma));
  const KeyLayout& layout = report.layout;
  const size_t d = layout.num_queries();
  const size_t m = layout.num_slices();
  if (p.num_queries() != d) {
    return absl::InvalidArgumentError("params do not match the report layout");
  }
  std::vector<double> unit(d);  // C_l / denominator
  for (size_t l = 0; l < d; ++l) {
    const int64_t denom = p.variant == EncodingVariant::kLinf
                              ? s.value_scale[l]
                              : s.per_record;
    if (denom <= 0) {
      return absl::InvalidArgumentError(absl::StrCat(
          "budget fraction ", p.fractions[l], " for query ", l + 1,
          " rounds to a zero scale at count limit ", p.count_limit));
    }
    unit[l] = p.clip_thresholds[l] / static_cast<double>(denom);
  }
  if (layout.dedicated_count() && s.count_scale <= 0) {
    return absl::InvalidArgumentError("count fraction rounds to a zero scale");
  }
  Matrix<double> u(d + 1, m, 0.0);
  for (size_t j = 0; j < m; ++j) {
    int64_t total = report.values(layout.bottom_row(), j);
    for (size_t l = 1; l <= d; ++l) {
      const int64_t w = report.values(layout.value_row(l), j);
      total += w;
      u(l, j) = static_cast<double>(w) * unit[l - 1];
    }
    if (layout.dedicated_count()) {
      u(0, j) = static_cast<double>(report.values(layout.count_row(), j)) /
                static_cast<double>(s.count_scale);
    } else {
      u(0, j) = static_cast<double>(total) / static_cast<double>(s.per_record);
    }
  }
  return u;
}

// Display-only post-processing; breaks unbiasedness.
inline Matrix<double> ClampNonnegative(Matrix<double> u) {
  for (double& v : u.data()) v = v < 0 ? 0 : v;
  return u;
}

// l1 distance between the noise-free summary vectors of two datasets, using
// identical randomness for shared records.
inline absl::StatusOr<int64_t> SensitivityCheck(const Dataset& data,
                                                const Dataset& neighbor,
                                                const BudgetParams& params,
                                                const RngStream& rng,
                                                int64_t gamma =
                                                    kDefaultContributionBudget) {
  if (data.num_slices() != neighbor.num_slices()) {
    return absl::InvalidArgumentError("datasets disagree on slice count");
  }
  ASSIGN_OR_RETURN(HistogramEncoder encoder,
                   HistogramEncoder::Create(params, data.num_slices(), gamma));
  const Matrix<int64_t> a = SumAggregatableReports(data, encoder, rng);
  const Matrix<int64_t> b = SumAggregatableReports(neighbor, encoder, rng);
  int64_t distance = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    distance += std::abs(a.data()[k] - b.data()[k]);
  }
  return distance;
}

// {"1,0": 16384, "2,0": 11469, "bot,0": 4915}
inline nlohmann::ordered_json KeyedValuesToJson(const KeyLayout& layout,
                                                const Matrix<int64_t>& values) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (size_t j = 0; j < layout.num_slices(); ++j) {
    for (size_t r = 0; r < layout.num_rows(); ++r) {
      out[absl::StrCat(layout.RowLabel(r), ",", j)] = values(r, j);
    }
  }
  return out;
}

inline nlohmann::ordered_json ContributionToJson(const KeyLayout& layout,
                                                 const HistogramContribution& w) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (size_t r = 0; r < w.mass.size(); ++r) {
    out[absl::StrCat(layout.RowLabel(r), ",", w.slice)] = w.mass[r];
  }
  return out;
}

inline nlohmann::ordered_json SummaryReportToJson(const SummaryReport& report) {
  return {{"epsilon", report.epsilon},
          {"gamma", report.gamma},
          {"num_queries", report.layout.num_queries()},
          {"num_slices", report.layout.num_slices()},
          {"params", BudgetParamsToJson(report.params)},
          {"values", KeyedValuesToJson(report.layout, report.values)}};
}

// Keys absent from "values" are zero.
inline absl::StatusOr<SummaryReport> SummaryReportFromJson(
    const nlohmann::json& j) {
  SummaryReport report;
  try {
    ASSIGN_OR_RETURN(report.params, BudgetParamsFromJson(j.at("params")));
    report.epsilon = j.at("epsilon").get<double>();
    report.gamma = j.value("gamma", kDefaultContributionBudget);
    const size_t d = j.at("num_queries").get<size_t>();
    const size_t m = j.at("num_slices").get<size_t>();
    report.layout = KeyLayout(
        d, m, report.params.count_mode == CountMode::kDedicated);
    report.values = Matrix<int64_t>(report.layout.num_rows(), m, 0);
    for (const auto& [key, value] : j.at("values").items()) {
      const size_t comma = key.rfind(',');
      if (comma == std::string::npos) {
        return absl::InvalidArgumentError("malformed key " + key);
      }
      ASSIGN_OR_RETURN(size_t row,
                       report.layout.RowFromLabel(key.substr(0, comma)));
      const size_t slice = std::stoul(key.substr(comma + 1));
      if (slice >= m) {
        return absl::InvalidArgumentError("slice out of range in key " + key);
      }
      report.values(row, slice) = value.get<int64_t>();
    }
  } catch (const std::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed summary report: ", e.what()));
  }
  return report;
}

}  // namespace arasim

#endif  // ARASIM_PIPELINE_H_
