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

#ifndef ARASIM_DATASET_H_
#define ARASIM_DATASET_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "arasim/matrix.h"
#include "arasim/rng.h"
#include "arasim/status_macros.h"

namespace arasim {

// One attributed conversion. values[l - 1] holds q_l(z); the count query
// q_0(z) = 1 is implicit.
struct Record {
  std::string impression_id;
  uint64_t arrival_index = 0;
  size_t slice = 0;
  std::vector<double> values;
};

// An impression and the positions (into Dataset::records()) of its
// conversions, in arrival order.
struct ImpressionGroup {
  std::string id;
  uint64_t key = 0;  // Fingerprint64(id)
  std::vector<size_t> records;
};

// Immutable collection of attributed conversions over m slices and d value
// queries.
class Dataset {
 public:
  Dataset() = default;

  static absl::StatusOr<Dataset> Create(size_t num_slices, size_t num_queries,
                                        std::vector<Record> records) {
    for (size_t i = 0; i < records.size(); ++i) {
      const Record& r = records[i];
      if (r.slice >= num_slices) {
        return absl::InvalidArgumentError(absl::StrCat(
            "record ", i, " has slice ", r.slice, " >= m = ", num_slices));
      }
      if (r.values.size() != num_queries) {
        return absl::InvalidArgumentError(
            absl::StrCat("record ", i, " has ", r.values.size(),
                         " values, expected ", num_queries));
      }
      for (double v : r.values) {
        if (!std::isfinite(v) || v < 0) {
          return absl::InvalidArgumentError(absl::StrCat(
              "record ", i, " has a negative or non-finite value ", v));
        }
      }
    }
    Dataset data;
    data.num_slices_ = num_slices;
    data.num_queries_ = num_queries;
    data.records_ = std::move(records);
    RETURN_IF_ERROR(data.BuildIndex());
    return data;
  }

  size_t num_slices() const { return num_slices_; }
  size_t num_queries() const { return num_queries_; }
  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<Record>& records() const { return records_; }
  const Record& record(size_t i) const { return records_[i]; }

  // Impressions in order of first appearance.
  const std::vector<ImpressionGroup>& impressions() const {
    return impressions_;
  }

 private:
  absl::Status BuildIndex() {
    std::unordered_map<std::string, size_t> position;
    for (size_t i = 0; i < records_.size(); ++i) {
      auto [it, inserted] =
          position.emplace(records_[i].impression_id, impressions_.size());
      if (inserted) {
        impressions_.push_back({records_[i].impression_id,
                                Fingerprint64(records_[i].impression_id), {}});
      }
      impressions_[it->second].records.push_back(i);
    }
    for (ImpressionGroup& g : impressions_) {
      std::stable_sort(g.records.begin(), g.records.end(),
                       [this](size_t a, size_t b) {
                         return records_[a].arrival_index <
                                records_[b].arrival_index;
                       });
      for (size_t k = 1; k < g.records.size(); ++k) {
        if (records_[g.records[k]].arrival_index ==
            records_[g.records[k - 1]].arrival_index) {
          return absl::InvalidArgumentError(absl::StrCat(
              "duplicate arrival index ", records_[g.records[k]].arrival_index,
              " for impression ", g.id));
        }
      }
    }
    return absl::OkStatus();
  }

  size_t num_slices_ = 0;
  size_t num_queries_ = 0;
  std::vector<Record> records_;
  std::vector<ImpressionGroup> impressions_;
};

// V[0][j] = |D_j| and V[l][j] = sum of q_l over D_j.
inline Matrix<double> TrueAggregates(const Dataset& data) {
  Matrix<double> v(data.num_queries() + 1, data.num_slices(), 0.0);
  for (const Record& r : data.records()) {
    v(0, r.slice) += 1.0;
    for (size_t l = 0; l < r.values.size(); ++l) {
      v(l + 1, r.slice) += r.values[l];
    }
  }
  return v;
}

struct ConversionCounts {
  std::map<std::string, size_t> per_impression;
  size_t max = 0;
};

inline ConversionCounts PerImpressionConversionCounts(const Dataset& data) {
  ConversionCounts counts;
  for (const ImpressionGroup& g : data.impressions()) {
    counts.per_impression[g.id] = g.records.size();
    counts.max = std::max(counts.max, g.records.size());
  }
  return counts;
}

// Median; an even-length input yields the mean of the two middle elements.
inline double Median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t n = values.size();
  auto mid = values.begin() + n / 2;
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

// Nearest-rank quantile: the ceil(q * n)-th smallest value (1-based), for
// q in (0, 1].
inline double NearestRankQuantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const size_t n = values.size();
  size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  rank = std::clamp<size_t>(rank, 1, n);
  auto it = values.begin() + (rank - 1);
  std::nth_element(values.begin(), it, values.end());
  return *it;
}

inline std::vector<double> QueryValues(const Dataset& data, size_t query) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const Record& r : data.records()) out.push_back(r.values[query]);
  return out;
}

// tau_l = 5 * median of q_l over all records; tau_0 = 5 since q_0 = 1.
// A query whose median is zero falls back to 5 * mean, and to 1 if every
// value is zero, so that tau stays positive.
inline absl::StatusOr<std::vector<double>> MedianTau(const Dataset& data) {
  if (data.empty()) {
    return absl::FailedPreconditionError("median tau needs a nonempty dataset");
  }
  constexpr double kMultiplier = 5.0;
  std::vector<double> tau(data.num_queries() + 1);
  tau[0] = kMultiplier;
  for (size_t l = 0; l < data.num_queries(); ++l) {
    std::vector<double> values = QueryValues(data, l);
    double t = kMultiplier * Median(values);
    if (!(t > 0)) {
      double sum = 0;
      for (double v : values) sum += v;
      t = kMultiplier * sum / static_cast<double>(values.size());
    }
    if (!(t > 0)) t = 1.0;
    tau[l + 1] = t;
  }
  return tau;
}

}  // namespace arasim

#endif  // ARASIM_DATASET_H_
