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

#ifndef ARASIM_SYNTHGEN_H_
#define ARASIM_SYNTHGEN_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "arasim/dataset.h"
#include "arasim/format.h"
#include "arasim/rng.h"
#include "arasim/status_macros.h"
#include "json.hpp"

namespace arasim {

struct SynthConfig {
  std::string name = "custom";
  std::vector<size_t> cardinalities = {16, 8, 2};  // impression-side features
  size_t conversion_types = 5;
  bool slice_by_conversion_type = false;
  double b = 2.88;  // impressions per slice ~ PowerLaw(b, k_min, k_max)
  int64_t k_min = 1;
  int64_t k_max = 100000;
  double lambda = 10;  // conversions per impression ~ Poisson(lambda)
  double mu = 4.19;    // conversion value ~ LogNormal(mu, sigma)
  double sigma = 1.16;
  int value_decimals = 2;  // < 0 disables rounding
  uint64_t seed = 1;

  size_t impression_slices() const {
    size_t t = 1;
    for (size_t c : cardinalities) t *= c;
    return t;
  }
  size_t num_slices() const {
    return impression_slices() *
           (slice_by_conversion_type ? conversion_types : 1);
  }

  absl::Status Validate() const {
    if (cardinalities.empty()) {
      return absl::InvalidArgumentError("need at least one impression feature");
    }
    for (size_t c : cardinalities) {
      if (c == 0) return absl::InvalidArgumentError("zero feature cardinality");
    }
    if (conversion_types == 0) {
      return absl::InvalidArgumentError("need at least one conversion type");
    }
    if (!std::isfinite(b)) return absl::InvalidArgumentError("b must be finite");
    if (k_min < 1 || k_max < k_min) {
      return absl::InvalidArgumentError(
          absl::StrCat("need 1 <= k_min <= k_max, got ", k_min, ", ", k_max));
    }
    if (!(lambda > 0)) return absl::InvalidArgumentError("lambda must be > 0");
    if (!(sigma > 0)) return absl::InvalidArgumentError("sigma must be > 0");
    if (!std::isfinite(mu)) return absl::InvalidArgumentError("mu must be finite");
    return absl::OkStatus();
  }
};

// (b, lambda, mu, sigma) presets that mimic the three real datasets.
inline absl::StatusOr<SynthConfig> SynthPreset(const std::string& name) {
  SynthConfig cfg;
  cfg.name = name;
  if (name == "synth-criteo") {
    cfg.b = 2.88, cfg.lambda = 10, cfg.mu = 4.19, cfg.sigma = 1.16;
  } else if (name == "synth-real-estate") {
    cfg.b = 0.06, cfg.lambda = 10, cfg.mu = 0.87, cfg.sigma = 0.43;
  } else if (name == "synth-travel") {
    cfg.b = 1.14, cfg.lambda = 10, cfg.mu = 1.95, cfg.sigma = 1.14;
  } else {
    return absl::InvalidArgumentError("unknown preset " + name);
  }
  return cfg;
}

inline const std::vector<std::string>& SynthPresetNames() {
  static const auto* names = new std::vector<std::string>{
      "synth-criteo", "synth-real-estate", "synth-travel"};
  return *names;
}

inline nlohmann::ordered_json SynthConfigToJson(const SynthConfig& c) {
  return {{"name", c.name},
          {"cardinalities", c.cardinalities},
          {"conversion_types", c.conversion_types},
          {"slice_by_conversion_type", c.slice_by_conversion_type},
          {"b", c.b},
          {"k_min", c.k_min},
          {"k_max", c.k_max},
          {"lambda", c.lambda},
          {"mu", c.mu},
          {"sigma", c.sigma},
          {"value_decimals", c.value_decimals},
          {"seed", c.seed}};
}

// Missing fields keep the preset (if "preset" is given) or struct defaults.
inline absl::StatusOr<SynthConfig> SynthConfigFromJson(const nlohmann::json& j) {
  SynthConfig c;
  if (j.contains("preset")) {
    ASSIGN_OR_RETURN(c, SynthPreset(j.at("preset").get<std::string>()));
  }
  try {
    c.name = j.value("name", c.name);
    c.cardinalities = j.value("cardinalities", c.cardinalities);
    c.conversion_types = j.value("conversion_types", c.conversion_types);
    c.slice_by_conversion_type =
        j.value("slice_by_conversion_type", c.slice_by_conversion_type);
    c.b = j.value("b", c.b);
    c.k_min = j.value("k_min", c.k_min);
    c.k_max = j.value("k_max", c.k_max);
    c.lambda = j.value("lambda", c.lambda);
    c.mu = j.value("mu", c.mu);
    c.sigma = j.value("sigma", c.sigma);
    c.value_decimals = j.value("value_decimals", c.value_decimals);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed synth config: ", e.what()));
  }
  RETURN_IF_ERROR(c.Validate());
  return c;
}

// Discrete power law on [k_min, k_max] with pmf proportional to k^{-b}.
//
// Small supports use exact inversion of the tabulated CDF. Large supports
// draw from the continuous density x^{-b} on [k_min - 1/2, k_max + 1/2],
// round to the nearest integer, and accept k with probability
// k^{-b} / (M * integral of x^{-b} over [k - 1/2, k + 1/2]), which makes the
// output exactly distributed as the discrete pmf.
class PowerLawSampler {
 public:
  static constexpr int64_t kExactSupportLimit = 1000000;

  static absl::StatusOr<PowerLawSampler> Create(double b, int64_t k_min,
                                                int64_t k_max,
                                                bool force_rejection = false) {
    if (k_min < 1 || k_max < k_min) {
      return absl::InvalidArgumentError(
          absl::StrCat("invalid power-law support [", k_min, ", ", k_max, "]"));
    }
    if (!std::isfinite(b)) {
      return absl::InvalidArgumentError("power-law exponent must be finite");
    }
    PowerLawSampler s(b, k_min, k_max);
    if (!force_rejection && k_max - k_min < kExactSupportLimit) {
      s.cdf_ = std::make_shared<std::vector<double>>();
      s.cdf_->reserve(k_max - k_min + 1);
      double total = 0;
      for (int64_t k = k_min; k <= k_max; ++k) {
        total += std::pow(static_cast<double>(k), -b);
        s.cdf_->push_back(total);
      }
      for (double& c : *s.cdf_) c /= total;
      s.cdf_->back() = 1.0;
    } else {
      s.lo_ = s.G(k_min - 0.5);
      s.hi_ = s.G(k_max + 0.5);
      s.bound_ = std::max({1.0, s.Ratio(k_min), s.Ratio(k_max)});
    }
    return s;
  }

  bool exact() const { return cdf_ != nullptr; }
  int64_t k_min() const { return k_min_; }
  int64_t k_max() const { return k_max_; }

  double Pmf(int64_t k) const {
    if (k < k_min_ || k > k_max_) return 0.0;
    if (cdf_) {
      const size_t i = static_cast<size_t>(k - k_min_);
      return (*cdf_)[i] - (i == 0 ? 0.0 : (*cdf_)[i - 1]);
    }
    double total = 0;
    for (int64_t x = k_min_; x <= k_max_; ++x) {
      total += std::pow(static_cast<double>(x), -b_);
    }
    return std::pow(static_cast<double>(k), -b_) / total;
  }

  int64_t operator()(RngStream& rng) const {
    if (cdf_) {
      const double u = rng.Uniform();
      const auto it = std::upper_bound(cdf_->begin(), cdf_->end(), u);
      return k_min_ + std::min<int64_t>(it - cdf_->begin(), k_max_ - k_min_);
    }
    while (true) {
      const double x = GInverse(lo_ + rng.Uniform() * (hi_ - lo_));
      const int64_t k = std::clamp<int64_t>(std::llround(x), k_min_, k_max_);
      if (rng.Uniform() * bound_ <= Ratio(k)) return k;
    }
  }

 private:
  PowerLawSampler(double b, int64_t k_min, int64_t k_max)
      : b_(b), k_min_(k_min), k_max_(k_max) {}

  // Antiderivative of x^{-b} and its inverse.
  double G(double x) const {
    if (std::abs(b_ - 1.0) < 1e-12) return std::log(x);
    return std::pow(x, 1.0 - b_) / (1.0 - b_);
  }
  double GInverse(double y) const {
    if (std::abs(b_ - 1.0) < 1e-12) return std::exp(y);
    return std::pow(y * (1.0 - b_), 1.0 / (1.0 - b_));
  }
  // Discrete mass over continuous mass of the unit cell around k; <= 1
  // whenever x^{-b} is convex.
  double Ratio(int64_t k) const {
    const double kd = static_cast<double>(k);
    return std::pow(kd, -b_) / (G(kd + 0.5) - G(kd - 0.5));
  }

  double b_;
  int64_t k_min_;
  int64_t k_max_;
  std::shared_ptr<std::vector<double>> cdf_;
  double lo_ = 0, hi_ = 0, bound_ = 1;
};

inline int64_t SamplePoisson(double lambda, RngStream& rng) {
  std::poisson_distribution<int64_t> dist(lambda);
  return dist(rng);
}

inline double SampleLogNormal(double mu, double sigma, RngStream& rng) {
  std::lognormal_distribution<double> dist(mu, sigma);
  return dist(rng);
}

struct SynthDataset {
  Dataset data;
  std::vector<size_t> conversion_type;  // per record
  std::vector<size_t> impressions_per_slice;  // impression-side slices
};

inline constexpr uint64_t kSynthDomain = 0x5eed;

// One independent draw from the generative model. Each impression-side slice
// has its own random substream (seed, draw, slice), so slices are i.i.d. and
// the output does not depend on generation order. Record slice = impression
// slice, or impression slice * types + type when slicing by conversion type.
inline absl::StatusOr<SynthDataset> GenerateSynthetic(const SynthConfig& cfg,
                                                      uint64_t draw) {
  RETURN_IF_ERROR(cfg.Validate());
  ASSIGN_OR_RETURN(PowerLawSampler impressions,
                   PowerLawSampler::Create(cfg.b, cfg.k_min, cfg.k_max));
  const double scale =
      cfg.value_decimals >= 0 ? std::pow(10.0, cfg.value_decimals) : 0.0;
  const size_t slices = cfg.impression_slices();
  SynthDataset out;
  out.impressions_per_slice.resize(slices);
  std::vector<Record> records;
  for (size_t t = 0; t < slices; ++t) {
    RngStream rng(cfg.seed, {kSynthDomain, draw, t});
    const int64_t n = impressions(rng);
    out.impressions_per_slice[t] = static_cast<size_t>(n);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t conversions = SamplePoisson(cfg.lambda, rng);
      const std::string id = absl::StrCat("d", draw, "-s", t, "-i", i);
      for (int64_t k = 0; k < conversions; ++k) {
        const size_t type = rng.UniformInt(cfg.conversion_types);
        double value = SampleLogNormal(cfg.mu, cfg.sigma, rng);
        if (scale > 0) value = std::round(value * scale) / scale;
        Record r;
        r.impression_id = id;
        r.arrival_index = static_cast<uint64_t>(k);
        r.slice = cfg.slice_by_conversion_type
                      ? t * cfg.conversion_types + type
                      : t;
        r.values = {value};
        records.push_back(std::move(r));
        out.conversion_type.push_back(type);
      }
    }
  }
  ASSIGN_OR_RETURN(out.data,
                   Dataset::Create(cfg.num_slices(), 1, std::move(records)));
  return out;
}

}  // namespace arasim

#endif  // ARASIM_SYNTHGEN_H_
