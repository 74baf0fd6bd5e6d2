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

#ifndef ARASIM_METRICS_H_
#define ARASIM_METRICS_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "arasim/format.h"
#include "arasim/matrix.h"

namespace arasim {

struct MetricConfig {
  std::vector<double> tau;  // per query, row 0 = count
  std::vector<double> are_alphas = {0.1, 0.2};
  std::vector<double> ame_taus = {1.0, 5.0};
  double apme_alpha = 0.2;
  std::vector<double> apme_taus = {1.0, 5.0};

  absl::Status Validate(size_t num_rows) const {
    if (tau.size() != num_rows) {
      return absl::InvalidArgumentError(absl::StrCat(
          "tau has ", tau.size(), " entries, expected ", num_rows));
    }
    for (double t : tau) {
      if (!(t > 0)) {
        return absl::InvalidArgumentError(
            absl::StrCat("tau must be positive, got ", t));
      }
    }
    return absl::OkStatus();
  }
};

// Independent estimate matrices for one (method, epsilon) point together
// with the true aggregates they estimate.
struct TrialSet {
  std::vector<Matrix<double>> estimates;
  Matrix<double> truth;

  absl::Status Validate() const {
    if (estimates.empty()) {
      return absl::InvalidArgumentError("need at least one trial");
    }
    for (const Matrix<double>& u : estimates) {
      if (!u.SameShape(truth)) {
        return absl::InvalidArgumentError(
            "estimate shape does not match the true aggregates");
      }
    }
    return absl::OkStatus();
  }
};

struct RmsreResult {
  double combined = 0;
  std::vector<double> per_query;
};

inline RmsreResult CombineRmsre(std::vector<double> per_query) {
  RmsreResult out;
  double total = 0;
  for (double r : per_query) total += r * r;
  out.combined =
      per_query.empty() ? 0.0 : std::sqrt(total / per_query.size());
  out.per_query = std::move(per_query);
  return out;
}

// Empirical RMSRE_tau: the expectation is replaced by the mean over trials.
inline absl::StatusOr<RmsreResult> RmsreTau(const TrialSet& trials,
                                            const std::vector<double>& tau) {
  if (absl::Status s = trials.Validate(); !s.ok()) return s;
  const Matrix<double>& v = trials.truth;
  if (tau.size() != v.rows()) {
    return absl::InvalidArgumentError("tau does not match query count");
  }
  std::vector<double> per_query(v.rows(), 0.0);
  const double n = static_cast<double>(trials.estimates.size());
  for (size_t l = 0; l < v.rows(); ++l) {
    if (v.cols() == 0) continue;
    double sum = 0;
    for (size_t j = 0; j < v.cols(); ++j) {
      const double denom = std::max(tau[l], v(l, j));
      double sq = 0;
      for (const Matrix<double>& u : trials.estimates) {
        const double e = (u(l, j) - v(l, j)) / denom;
        sq += e * e;
      }
      sum += sq / n;
    }
    per_query[l] = std::sqrt(sum / v.cols());
  }
  return CombineRmsre(std::move(per_query));
}

// RMSRE_tau from the bias-variance identity E(U - V)^2 = bias^2 + Var(U).
inline absl::StatusOr<RmsreResult> RmsreTauAnalytic(
    const Matrix<double>& bias, const Matrix<double>& variance,
    const Matrix<double>& truth, const std::vector<double>& tau) {
  if (!bias.SameShape(truth) || !variance.SameShape(truth)) {
    return absl::InvalidArgumentError("bias/variance shape mismatch");
  }
  if (tau.size() != truth.rows()) {
    return absl::InvalidArgumentError("tau does not match query count");
  }
  std::vector<double> per_query(truth.rows(), 0.0);
  for (size_t l = 0; l < truth.rows(); ++l) {
    if (truth.cols() == 0) continue;
    double sum = 0;
    for (size_t j = 0; j < truth.cols(); ++j) {
      const double denom = std::max(tau[l], truth(l, j));
      sum += (bias(l, j) * bias(l, j) + variance(l, j)) / (denom * denom);
    }
    per_query[l] = std::sqrt(sum / truth.cols());
  }
  return CombineRmsre(std::move(per_query));
}

struct MetricRow {
  std::string metric;
  size_t query = 0;
  double value = 0;
  std::string params;
  size_t skipped = 0;  // slices (or slice-trials for EAREO) left out
};

namespace metrics_internal {

// Accumulates one metric over slices. `Mean` averages per-slice values;
// `RootMean` takes the root of the mean of per-slice mean squares.
struct SliceAverage {
  double sum = 0;
  size_t used = 0;
  size_t skipped = 0;

  void Add(double v) {
    sum += v;
    ++used;
  }
  double Mean() const { return used == 0 ? 0.0 : sum / used; }
  double RootMean() const { return std::sqrt(Mean()); }
};

}  // namespace metrics_internal

// The error-metric family, per query, aggregated over slices. Probability
// metrics are empirical frequencies averaged over slices; root-mean-square
// metrics are root-means over slices. Relative metrics skip slices whose true
// value is zero, and EAREO skips trials whose estimate is zero; both report
// how many were skipped.
inline absl::StatusOr<std::vector<MetricRow>> MetricSuite(
    const TrialSet& trials, const MetricConfig& cfg) {
  if (absl::Status s = trials.Validate(); !s.ok()) return s;
  const Matrix<double>& v = trials.truth;
  if (absl::Status s = cfg.Validate(v.rows()); !s.ok()) return s;
  using metrics_internal::SliceAverage;
  const double n = static_cast<double>(trials.estimates.size());
  std::vector<MetricRow> rows;
  for (size_t l = 0; l < v.rows(); ++l) {
    std::vector<SliceAverage> are(cfg.are_alphas.size());
    std::vector<SliceAverage> ame(cfg.ame_taus.size());
    std::vector<SliceAverage> apme(cfg.apme_taus.size());
    SliceAverage eare, rmse, rmsre, eare_tau, eareo, rmsre_tau;
    const double tau = cfg.tau[l];
    for (size_t j = 0; j < v.cols(); ++j) {
      const double truth = v(l, j);
      std::vector<double> are_hits(are.size(), 0), ame_hits(ame.size(), 0),
          apme_hits(apme.size(), 0);
      double abs_rel = 0, sq = 0, abs_tau = 0, obs_sum = 0;
      size_t obs_used = 0;
      for (const Matrix<double>& u : trials.estimates) {
        const double err = std::abs(u(l, j) - truth);
        const double rel =
            truth > 0 ? err / truth
                      : (err > 0 ? std::numeric_limits<double>::infinity() : 0);
        for (size_t k = 0; k < are.size(); ++k) {
          are_hits[k] += rel > cfg.are_alphas[k] ? 1 : 0;
        }
        for (size_t k = 0; k < ame.size(); ++k) {
          ame_hits[k] += err > cfg.ame_taus[k] ? 1 : 0;
        }
        for (size_t k = 0; k < apme.size(); ++k) {
          apme_hits[k] +=
              (rel > cfg.apme_alpha && err > cfg.apme_taus[k]) ? 1 : 0;
        }
        if (truth > 0) abs_rel += err / truth;
        sq += err * err;
        abs_tau += err / std::max(tau, truth);
        if (u(l, j) != 0) {
          obs_sum += err / std::abs(u(l, j));
          ++obs_used;
        } else {
          ++eareo.skipped;
        }
      }
      rmse.Add(sq / n);
      eare_tau.Add(abs_tau / n);
      rmsre_tau.Add(sq / n / (std::max(tau, truth) * std::max(tau, truth)));
      for (size_t k = 0; k < apme.size(); ++k) apme[k].Add(apme_hits[k] / n);
      for (size_t k = 0; k < ame.size(); ++k) ame[k].Add(ame_hits[k] / n);
      if (truth > 0) {
        for (size_t k = 0; k < are.size(); ++k) are[k].Add(are_hits[k] / n);
        eare.Add(abs_rel / n);
        rmsre.Add(sq / n / (truth * truth));
      } else {
        for (SliceAverage& a : are) ++a.skipped;
        ++eare.skipped;
        ++rmsre.skipped;
      }
      if (obs_used > 0) eareo.Add(obs_sum / obs_used);
    }
    for (size_t k = 0; k < are.size(); ++k) {
      rows.push_back({"ARE", l, are[k].Mean(),
                      "alpha=" + FormatDouble(cfg.are_alphas[k]),
                      are[k].skipped});
    }
    for (size_t k = 0; k < ame.size(); ++k) {
      rows.push_back({"AME", l, ame[k].Mean(),
                      "tau=" + FormatDouble(cfg.ame_taus[k]), 0});
    }
    for (size_t k = 0; k < apme.size(); ++k) {
      rows.push_back({"APME", l, apme[k].Mean(),
                      absl::StrCat("alpha=", FormatDouble(cfg.apme_alpha),
                                   ";tau=", FormatDouble(cfg.apme_taus[k])),
                      0});
    }
    rows.push_back({"EARE", l, eare.Mean(), "", eare.skipped});
    rows.push_back({"RMSE", l, rmse.RootMean(), "", 0});
    rows.push_back({"RMSRE", l, rmsre.RootMean(), "", rmsre.skipped});
    rows.push_back(
        {"EARE_tau", l, eare_tau.Mean(), "tau=" + FormatDouble(tau), 0});
    rows.push_back({"EAREO", l, eareo.Mean(), "", eareo.skipped});
    rows.push_back(
        {"RMSRE_tau", l, rmsre_tau.RootMean(), "tau=" + FormatDouble(tau), 0});
  }
  return rows;
}

inline std::string MetricCsvHeader() {
  return "metric,query,value,params,skipped";
}

inline std::string MetricCsvLine(const MetricRow& row) {
  return absl::StrCat(row.metric, ",", row.query, ",", FormatDouble(row.value),
                      ",", row.params, ",", row.skipped);
}

}  // namespace arasim

#endif  // ARASIM_METRICS_H_
