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

#ifndef ARASIM_MECHANISMS_H_
#define ARASIM_MECHANISMS_H_

#include <cmath>
#include <cstdint>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "arasim/rng.h"

namespace arasim {

// Parameter `a` of the discrete Laplace distribution DLap(a), whose pmf at
// integer k is (e^a - 1)/(e^a + 1) * e^{-a|k|}.
class DLapParam {
 public:
  explicit DLapParam(double a) : a_(a) {}

  double a() const { return a_; }

  absl::Status Validate() const {
    if (!(a_ > 0) || !std::isfinite(a_)) {
      return absl::InvalidArgumentError(
          absl::StrCat("discrete Laplace parameter must be positive and "
                       "finite, got ",
                       a_));
    }
    return absl::OkStatus();
  }

 private:
  double a_;
};

// Number of failures before the first success with success probability
// 1 - e^{-a}; P(G >= k) = e^{-ak}.
inline int64_t SampleGeometric(double a, RngStream& rng) {
  return static_cast<int64_t>(std::floor(-std::log(rng.UniformPositive()) / a));
}

// Exact discrete Laplace draw, as the difference of two i.i.d. geometric
// variates. No tail truncation.
inline int64_t SampleDiscreteLaplace(const DLapParam& p, RngStream& rng) {
  const int64_t g1 = SampleGeometric(p.a(), rng);
  const int64_t g2 = SampleGeometric(p.a(), rng);
  return g1 - g2;
}

// Var(DLap(a)) = 2 e^a / (e^a - 1)^2, written in terms of e^{-a} so that it
// stays finite for large a.
inline double DiscreteLaplaceVariance(const DLapParam& p) {
  const double q = std::exp(-p.a());
  const double denom = -std::expm1(-p.a());  // 1 - e^{-a}
  return 2.0 * q / (denom * denom);
}

inline double DiscreteLaplacePmf(const DLapParam& p, int64_t k) {
  const double a = p.a();
  return std::tanh(a / 2.0) * std::exp(-a * std::abs(static_cast<double>(k)));
}

// RR(w): ceil(w) with probability w - floor(w), floor(w) otherwise.
inline int64_t RandomizedRound(double omega, RngStream& rng) {
  const double lo = std::floor(omega);
  const double frac = omega - lo;
  int64_t result = static_cast<int64_t>(lo);
  if (frac > 0 && rng.Uniform() < frac) ++result;
  return result;
}

// Var(RR(w)) = (w - floor(w)) (ceil(w) - w).
inline double RandomizedRoundVariance(double omega) {
  const double frac = omega - std::floor(omega);
  return frac * (1.0 - frac);
}

inline double Clip(double v, double threshold) {
  return v < threshold ? v : threshold;
}

// Amount removed by clipping: max(0, v - threshold).
inline double Rem(double v, double threshold) {
  return v > threshold ? v - threshold : 0.0;
}

}  // namespace arasim

#endif  // ARASIM_MECHANISMS_H_
