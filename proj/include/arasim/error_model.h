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

#ifndef ARASIM_ERROR_MODEL_H_
#define ARASIM_ERROR_MODEL_H_

#include <cmath>
#include <cstdint>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "arasim/dataset.h"
#include "arasim/matrix.h"
#include "arasim/mechanisms.h"
#include "arasim/pipeline.h"
#include "arasim/status_macros.h"

namespace arasim {

// Exact first and second moments of the reconstructed estimates U, both
// (d+1) x m with row 0 = count. Unlike the optimizer's relaxed variance,
// these keep the integer floors and include the randomized-rounding term.
struct EstimateMoments {
  Matrix<double> mean;
  Matrix<double> variance;
};

inline absl::StatusOr<EstimateMoments> ExactMoments(
    const Dataset& data, const BudgetParams& params, double epsilon,
    NoiseMode noise, int64_t gamma = kDefaultContributionBudget) {
  ASSIGN_OR_RETURN(HistogramEncoder encoder,
                   HistogramEncoder::Create(params, data.num_slices(), gamma));
  if (!(epsilon > 0)) {
    return absl::InvalidArgumentError("epsilon must be positive");
  }
  const ContributionScales& s = encoder.scales();
  const size_t d = data.num_queries();
  const size_t m = data.num_slices();
  const bool linf = params.variant == EncodingVariant::kLinf;
  const double per_record = static_cast<double>(s.per_record);

  std::vector<double> denom(d);
  for (size_t l = 0; l < d; ++l) {
    denom[l] = static_cast<double>(linf ? s.value_scale[l] : s.per_record);
    if (denom[l] <= 0) {
      return absl::InvalidArgumentError("a budget fraction rounds to zero");
    }
  }
  if (params.count_mode == CountMode::kDedicated && s.count_scale <= 0) {
    return absl::InvalidArgumentError("count fraction rounds to zero");
  }

  // Raw key moments first: expected W and the rounding variance per key.
  Matrix<double> w_mean(d + 1, m, 0.0);
  Matrix<double> w_rr_var(d + 1, m, 0.0);
  std::vector<int64_t> floor_mass(encoder.layout().num_rows());
  const int64_t cap = gamma / s.per_record;
  for (const ImpressionGroup& imp : data.impressions()) {
    const size_t kept =
        std::min<size_t>(imp.records.size(), static_cast<size_t>(cap));
    for (size_t pos = 0; pos < kept; ++pos) {
      const Record& z = data.record(imp.records[pos]);
      w_mean(0, z.slice) += 1.0;
      if (linf) {
        for (size_t l = 0; l < d; ++l) {
          const double t = params.clip_thresholds[l];
          const double omega =
              static_cast<double>(s.value_scale[l]) * (Clip(z.values[l], t) / t);
          w_mean(l + 1, z.slice) += omega;
          w_rr_var(l + 1, z.slice) += RandomizedRoundVariance(omega);
        }
      } else {
        RngStream unused(0);
        encoder.EncodeInto(z.values, unused, floor_mass);
        for (size_t l = 0; l < d; ++l) {
          w_mean(l + 1, z.slice) += static_cast<double>(
              floor_mass[encoder.layout().value_row(l + 1)]);
        }
      }
    }
  }

  const double noise_var =
      noise == NoiseMode::kOn
          ? DiscreteLaplaceVariance(
                DLapParam(epsilon / static_cast<double>(gamma)))
          : 0.0;
  EstimateMoments out{Matrix<double>(d + 1, m, 0.0),
                      Matrix<double>(d + 1, m, 0.0)};
  for (size_t j = 0; j < m; ++j) {
    out.mean(0, j) = w_mean(0, j);
    if (params.count_mode == CountMode::kDedicated) {
      const double c = static_cast<double>(s.count_scale);
      out.variance(0, j) = noise_var / (c * c);
    } else {
      // W_bot + sum_l W_l = kept * floor(Gamma / C) + noise on d + 1 keys.
      out.variance(0, j) =
          static_cast<double>(d + 1) * noise_var / (per_record * per_record);
    }
    for (size_t l = 1; l <= d; ++l) {
      const double unit = params.clip_thresholds[l - 1] / denom[l - 1];
      out.mean(l, j) = w_mean(l, j) * unit;
      out.variance(l, j) = (w_rr_var(l, j) + noise_var) * unit * unit;
    }
  }
  return out;
}

// Worst-case variance bound for the linf value estimates:
// (sum_x |kept_x,j| / 4 + Var(DLap(eps / Gamma))) * C_l^2 / floor(a_l Gamma / C)^2.
// Row 0 is left at zero.
inline absl::StatusOr<Matrix<double>> LinfVarianceBound(
    const Dataset& data, const BudgetParams& params, double epsilon,
    NoiseMode noise, int64_t gamma = kDefaultContributionBudget) {
  ASSIGN_OR_RETURN(ContributionScales s, ComputeScales(params, gamma));
  const size_t d = data.num_queries();
  const size_t m = data.num_slices();
  std::vector<double> kept(m, 0.0);
  const int64_t cap = gamma / s.per_record;
  for (const ImpressionGroup& imp : data.impressions()) {
    const size_t n =
        std::min<size_t>(imp.records.size(), static_cast<size_t>(cap));
    for (size_t pos = 0; pos < n; ++pos) {
      kept[data.record(imp.records[pos]).slice] += 1.0;
    }
  }
  const double noise_var =
      noise == NoiseMode::kOn
          ? DiscreteLaplaceVariance(
                DLapParam(epsilon / static_cast<double>(gamma)))
          : 0.0;
  Matrix<double> bound(d + 1, m, 0.0);
  for (size_t l = 1; l <= d; ++l) {
    const double scale = static_cast<double>(s.value_scale[l - 1]);
    const double unit = params.clip_thresholds[l - 1] / scale;
    for (size_t j = 0; j < m; ++j) {
      bound(l, j) = (kept[j] / 4.0 + noise_var) * unit * unit;
    }
  }
  return bound;
}

// Targets the linf estimator is unbiased for: sum of clipped values over
// kept records (rows 1..d) and the kept count (row 0).
inline Matrix<double> ClippedKeptSums(const Dataset& data,
                                      const BudgetParams& params,
                                      int64_t gamma = kDefaultContributionBudget) {
  const size_t d = data.num_queries();
  Matrix<double> out(d + 1, data.num_slices(), 0.0);
  const int64_t per_record = gamma / params.count_limit;
  const size_t cap = static_cast<size_t>(gamma / per_record);
  for (const ImpressionGroup& imp : data.impressions()) {
    const size_t n = std::min(imp.records.size(), cap);
    for (size_t pos = 0; pos < n; ++pos) {
      const Record& z = data.record(imp.records[pos]);
      out(0, z.slice) += 1.0;
      for (size_t l = 0; l < d; ++l) {
        out(l + 1, z.slice) += Clip(z.values[l], params.clip_thresholds[l]);
      }
    }
  }
  return out;
}

}  // namespace arasim

#endif  // ARASIM_ERROR_MODEL_H_
