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

#ifndef ARASIM_OPTIMIZER_H_
#define ARASIM_OPTIMIZER_H_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "arasim/dataset.h"
#include "arasim/matrix.h"
#include "arasim/parallel.h"
#include "arasim/pipeline.h"
#include "arasim/status_macros.h"
#include "json.hpp"

namespace arasim {

// Everything the relaxed objective needs from a training set, flattened so
// the dataset itself need not outlive the context.
class ObjectiveContext {
 public:
  static absl::StatusOr<ObjectiveContext> Create(
      const Dataset& data, const std::vector<double>& tau, double epsilon,
      int64_t gamma = kDefaultContributionBudget) {
    const size_t d = data.num_queries();
    if (tau.size() != d + 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("tau has ", tau.size(), " entries, expected ", d + 1));
    }
    for (double t : tau) {
      if (!(t > 0)) return absl::InvalidArgumentError("tau must be positive");
    }
    if (!(epsilon > 0) || !std::isfinite(epsilon)) {
      return absl::InvalidArgumentError("epsilon must be positive and finite");
    }
    if (gamma < 1) return absl::InvalidArgumentError("gamma must be >= 1");
    ObjectiveContext ctx;
    ctx.d_ = d;
    ctx.m_ = data.num_slices();
    ctx.epsilon_ = epsilon;
    ctx.gamma_ = gamma;
    ctx.truth_ = TrueAggregates(data);
    ctx.weights_ = Matrix<double>(d + 1, ctx.m_);
    for (size_t l = 0; l <= d; ++l) {
      for (size_t j = 0; j < ctx.m_; ++j) {
        const double denom = std::max(tau[l], ctx.truth_(l, j));
        ctx.weights_(l, j) = 1.0 / (denom * denom);
      }
    }
    ctx.impression_offsets_.push_back(0);
    for (const ImpressionGroup& imp : data.impressions()) {
      for (size_t pos : imp.records) {
        const Record& z = data.record(pos);
        ctx.slices_.push_back(z.slice);
        ctx.values_.insert(ctx.values_.end(), z.values.begin(), z.values.end());
      }
      ctx.impression_offsets_.push_back(ctx.slices_.size());
      ctx.max_conversions_ =
          std::max<int64_t>(ctx.max_conversions_, imp.records.size());
    }
    return ctx;
  }

  size_t num_queries() const { return d_; }
  size_t num_slices() const { return m_; }
  double epsilon() const { return epsilon_; }
  int64_t gamma() const { return gamma_; }
  int64_t max_conversions() const { return max_conversions_; }
  const Matrix<double>& truth() const { return truth_; }
  // pi_{l,j} = 1 / max(tau_l, V_l,j)^2.
  const Matrix<double>& weights() const { return weights_; }
  double WeightSum(size_t query) const {
    double total = 0;
    for (double w : weights_.row(query)) total += w;
    return total;
  }

  size_t num_impressions() const { return impression_offsets_.size() - 1; }
  size_t impression_begin(size_t i) const { return impression_offsets_[i]; }
  size_t impression_end(size_t i) const { return impression_offsets_[i + 1]; }
  size_t record_slice(size_t r) const { return slices_[r]; }
  double record_value(size_t r, size_t query) const {
    return values_[r * d_ + query - 1];
  }

 private:
  size_t d_ = 0;
  size_t m_ = 0;
  double epsilon_ = 1;
  int64_t gamma_ = kDefaultContributionBudget;
  int64_t max_conversions_ = 0;
  Matrix<double> truth_;
  Matrix<double> weights_;
  std::vector<size_t> impression_offsets_;
  std::vector<size_t> slices_;     // per record, impression-major order
  std::vector<double> values_;     // per record, d values
};

// Bias bookkeeping for one count limit C. For every (l, j) the kept values
// are stored sorted with suffix sums, so A_{l,j}(C_l) = sum of rem over kept
// values is a binary search away.
class BiasTables {
 public:
  static BiasTables Build(const ObjectiveContext& ctx, int64_t count_limit) {
    BiasTables t;
    const size_t d = ctx.num_queries();
    const size_t m = ctx.num_slices();
    t.count_limit_ = count_limit;
    const int64_t per_record = ctx.gamma() / count_limit;
    t.kept_cap_ = static_cast<size_t>(ctx.gamma() / per_record);
    t.dropped_ = Matrix<double>(d + 1, m, 0.0);

    std::vector<size_t> kept_in_slice(m, 0);
    std::vector<size_t> kept_records;
    for (size_t i = 0; i < ctx.num_impressions(); ++i) {
      const size_t begin = ctx.impression_begin(i);
      const size_t end = ctx.impression_end(i);
      for (size_t r = begin; r < end; ++r) {
        const size_t j = ctx.record_slice(r);
        if (r - begin < t.kept_cap_) {
          ++kept_in_slice[j];
          kept_records.push_back(r);
        } else {
          t.dropped_(0, j) += 1.0;
          for (size_t l = 1; l <= d; ++l) {
            t.dropped_(l, j) += ctx.record_value(r, l);
          }
        }
      }
    }
    // Bucket kept records by slice (offsets shared by all queries).
    t.offsets_.assign(m + 1, 0);
    for (size_t j = 0; j < m; ++j) {
      t.offsets_[j + 1] = t.offsets_[j] + kept_in_slice[j];
    }
    const size_t n = kept_records.size();
    std::vector<size_t> cursor(t.offsets_.begin(), t.offsets_.end() - 1);
    std::vector<size_t> order(n);
    for (size_t r : kept_records) order[cursor[ctx.record_slice(r)]++] = r;

    t.sorted_.assign(d, std::vector<double>(n));
    t.suffix_.assign(d, std::vector<double>(n + m));
    t.breakpoints_.assign(d, {});
    for (size_t l = 1; l <= d; ++l) {
      std::vector<double>& sorted = t.sorted_[l - 1];
      for (size_t k = 0; k < n; ++k) sorted[k] = ctx.record_value(order[k], l);
      for (size_t j = 0; j < m; ++j) {
        std::sort(sorted.begin() + t.offsets_[j],
                  sorted.begin() + t.offsets_[j + 1]);
        // suffix_[l][offsets_[j] + j + k] = sum of sorted[offsets_[j] + k ..]
        const size_t base = t.offsets_[j] + j;
        const size_t count = kept_in_slice[j];
        t.suffix_[l - 1][base + count] = 0.0;
        for (size_t k = count; k-- > 0;) {
          t.suffix_[l - 1][base + k] =
              t.suffix_[l - 1][base + k + 1] + sorted[t.offsets_[j] + k];
        }
      }
      std::vector<double>& bp = t.breakpoints_[l - 1];
      bp = sorted;
      std::sort(bp.begin(), bp.end());
      bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    }
    return t;
  }

  int64_t count_limit() const { return count_limit_; }
  size_t kept_cap() const { return kept_cap_; }

  // B_{l,j}(C): value of dropped records (row 0 counts them).
  double DroppedBias(size_t query, size_t slice) const {
    return dropped_(query, slice);
  }

  // A_{l,j}(C_l, C) = sum over kept records of max(0, q_l - C_l), l >= 1.
  double ClipBias(size_t query, size_t slice, double threshold) const {
    const std::vector<double>& sorted = sorted_[query - 1];
    const auto begin = sorted.begin() + offsets_[slice];
    const auto end = sorted.begin() + offsets_[slice + 1];
    const auto it = std::upper_bound(begin, end, threshold);
    const size_t above = static_cast<size_t>(end - it);
    const double sum =
        suffix_[query - 1][offsets_[slice] + slice + (it - begin)];
    return sum - threshold * static_cast<double>(above);
  }

  size_t KeptInSlice(size_t slice) const {
    return offsets_[slice + 1] - offsets_[slice];
  }

  // Distinct kept values of query l in increasing order.
  const std::vector<double>& Breakpoints(size_t query) const {
    return breakpoints_[query - 1];
  }

  // Kept values of query l across all slices, for initialization.
  std::vector<double> KeptValues(size_t query) const {
    return sorted_[query - 1];
  }

 private:
  int64_t count_limit_ = 1;
  size_t kept_cap_ = 0;
  Matrix<double> dropped_;
  std::vector<size_t> offsets_;
  std::vector<std::vector<double>> sorted_;
  std::vector<std::vector<double>> suffix_;
  std::vector<std::vector<double>> breakpoints_;
};

// Relaxed variance of the count estimate.
inline double RelaxedCountVariance(const ObjectiveContext& ctx,
                                   const BudgetParams& p) {
  const double c = static_cast<double>(p.count_limit);
  const double e2 = ctx.epsilon() * ctx.epsilon();
  if (p.count_mode == CountMode::kDedicated) {
    return 2.0 * c * c / (p.count_fraction * p.count_fraction * e2);
  }
  return 2.0 * static_cast<double>(ctx.num_queries() + 1) * c * c / e2;
}

// Relaxed variance 2 C^2 C_l^2 / (alpha_l^2 eps^2) of a value estimate.
inline double RelaxedValueVariance(const ObjectiveContext& ctx,
                                   int64_t count_limit, double threshold,
                                   double fraction) {
  const double c = static_cast<double>(count_limit);
  return 2.0 * c * c * threshold * threshold /
         (fraction * fraction * ctx.epsilon() * ctx.epsilon());
}

// sum_j pi_{l,j} E(U_{l,j} - V_{l,j})^2 for one value query, l >= 1.
inline double ValueQueryTerm(const ObjectiveContext& ctx,
                             const BiasTables& tables, size_t query,
                             double threshold, double fraction) {
  const double var =
      RelaxedValueVariance(ctx, tables.count_limit(), threshold, fraction);
  double total = 0;
  for (size_t j = 0; j < ctx.num_slices(); ++j) {
    const double bias = tables.DroppedBias(query, j) +
                        tables.ClipBias(query, j, threshold);
    total += ctx.weights()(query, j) * (bias * bias + var);
  }
  return total;
}

inline double CountQueryTerm(const ObjectiveContext& ctx,
                             const BiasTables& tables, double variance) {
  double total = 0;
  for (size_t j = 0; j < ctx.num_slices(); ++j) {
    const double bias = tables.DroppedBias(0, j);
    total += ctx.weights()(0, j) * (bias * bias + variance);
  }
  return total;
}

// R^2 for linf parameters, using tables already built for p.count_limit.
inline double Objective(const ObjectiveContext& ctx, const BiasTables& tables,
                        const BudgetParams& p) {
  double total = CountQueryTerm(ctx, tables, RelaxedCountVariance(ctx, p));
  for (size_t l = 1; l <= ctx.num_queries(); ++l) {
    total += ValueQueryTerm(ctx, tables, l, p.clip_thresholds[l - 1],
                            p.fractions[l - 1]);
  }
  return total / static_cast<double>((ctx.num_queries() + 1) *
                                     std::max<size_t>(ctx.num_slices(), 1));
}

// R^2 from scratch.
inline absl::StatusOr<double> Objective(const ObjectiveContext& ctx,
                                        const BudgetParams& p) {
  RETURN_IF_ERROR(p.Validate());
  if (p.variant != EncodingVariant::kLinf) {
    return absl::InvalidArgumentError(
        "the relaxed objective is defined for linf parameters only");
  }
  if (p.num_queries() != ctx.num_queries()) {
    return absl::InvalidArgumentError("params do not match the query count");
  }
  if (p.count_limit > ctx.gamma()) {
    return absl::InvalidArgumentError("count limit exceeds gamma");
  }
  return Objective(ctx, BiasTables::Build(ctx, p.count_limit), p);
}

// Minimizes sum_l k_l / alpha_l^2 over the simplex with alpha_l >= floor:
// alpha_l proportional to k_l^{1/3}, with clamped entries pinned at the
// floor and the rest renormalized.
inline std::vector<double> MinimizeOnSimplex(const std::vector<double>& k,
                                             double floor) {
  const size_t d = k.size();
  std::vector<double> alpha(d, d == 0 ? 0.0 : 1.0 / d);
  if (d == 0) return alpha;
  double total_k = 0;
  for (double v : k) total_k += v;
  if (!(total_k > 0) || floor * d >= 1.0) return alpha;
  std::vector<bool> pinned(d, false);
  for (size_t round = 0; round <= d; ++round) {
    double free_mass = 1.0;
    double root_sum = 0;
    for (size_t l = 0; l < d; ++l) {
      if (pinned[l]) {
        free_mass -= floor;
      } else {
        root_sum += std::cbrt(k[l]);
      }
    }
    bool changed = false;
    for (size_t l = 0; l < d; ++l) {
      if (pinned[l]) {
        alpha[l] = floor;
      } else {
        alpha[l] = root_sum > 0 ? free_mass * std::cbrt(k[l]) / root_sum : 0;
      }
    }
    for (size_t l = 0; l < d; ++l) {
      if (!pinned[l] && alpha[l] < floor) {
        pinned[l] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return alpha;
}

// Smallest budget fraction the optimizer will assign: keeps
// floor(alpha Gamma / C) >= 2.
inline double FractionFloor(int64_t count_limit, int64_t gamma) {
  return std::max(1e-4, 2.0 * static_cast<double>(count_limit) /
                            static_cast<double>(gamma));
}

inline std::vector<double> OptimalAlpha(const ObjectiveContext& ctx,
                                        int64_t count_limit,
                                        const std::vector<double>& thresholds) {
  std::vector<double> k(thresholds.size());
  for (size_t l = 0; l < thresholds.size(); ++l) {
    k[l] = ctx.WeightSum(l + 1) *
           RelaxedValueVariance(ctx, count_limit, thresholds[l], 1.0);
  }
  return MinimizeOnSimplex(k, FractionFloor(count_limit, ctx.gamma()));
}

// Golden-section search for the minimizer of a unimodal f on [lo, hi],
// stopping when the bracket shrinks below rel_tol * (hi - lo).
inline double GoldenSectionMinimize(const std::function<double(double)>& f,
                                    double lo, double hi,
                                    double rel_tol = 1e-6) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double stop = rel_tol * (hi - lo);
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > stop) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

// Best C_l for fixed alpha and C: golden-section search over
// (0, max kept value], then a check of the neighbouring data breakpoints and
// the upper end. Returns 1 when the query has no positive kept value.
inline double OptimalClip(const ObjectiveContext& ctx, const BiasTables& tables,
                          size_t query, double fraction) {
  const std::vector<double>& bp = tables.Breakpoints(query);
  if (bp.empty() || !(bp.back() > 0)) return 1.0;
  const double hi = bp.back();
  auto f = [&](double c) {
    return ValueQueryTerm(ctx, tables, query, c, fraction);
  };
  const double x = GoldenSectionMinimize(f, 0.0, hi);
  std::vector<double> candidates = {x, hi};
  auto it = std::lower_bound(bp.begin(), bp.end(), x);
  if (it != bp.end()) candidates.push_back(*it);
  if (it != bp.begin()) candidates.push_back(*(it - 1));
  double best = 1.0, best_value = std::numeric_limits<double>::infinity();
  for (double c : candidates) {
    if (!(c > 0)) continue;
    const double v = f(c);
    if (v < best_value) {
      best_value = v;
      best = c;
    }
  }
  return best;
}

// First positive nearest-rank quantile of the values, falling back to the
// smallest positive value and then to 1.
inline double PositiveQuantile(std::vector<double> values, double q) {
  if (values.empty()) return 1.0;
  const double v = NearestRankQuantile(values, q);
  if (v > 0) return v;
  double smallest = std::numeric_limits<double>::infinity();
  for (double x : values) {
    if (x > 0) smallest = std::min(smallest, x);
  }
  return std::isfinite(smallest) ? smallest : 1.0;
}

struct OptimizerOptions {
  int64_t max_candidates = 1024;  // cap on C
  double geometric_stride = 0;    // > 1 thins the C grid above 16
  double init_quantile = 0.95;
  int max_rounds = 50;
  double rel_tolerance = 1e-8;
  size_t threads = 1;
};

struct CandidateTrace {
  int64_t count_limit = 0;
  std::vector<double> objective;  // R^2 after init and after each round
  int rounds = 0;
  BudgetParams params;
};

struct OptimizerReport {
  BudgetParams params;
  double r_squared = 0;
  double r = 0;
  std::vector<CandidateTrace> trace;
  int total_rounds = 0;
  double wall_seconds = 0;
};

inline std::vector<int64_t> CandidateCountLimits(int64_t max_conversions,
                                                 const OptimizerOptions& opt,
                                                 int64_t gamma) {
  const int64_t top = std::max<int64_t>(
      1, std::min({max_conversions, opt.max_candidates, gamma}));
  std::vector<int64_t> out;
  for (int64_t c = 1; c <= top;) {
    out.push_back(c);
    int64_t next = c + 1;
    if (opt.geometric_stride > 1 && c >= 16) {
      next = std::max(next, static_cast<int64_t>(std::ceil(
                                c * opt.geometric_stride)));
    }
    c = next;
  }
  if (out.back() != top) out.push_back(top);
  return out;
}

// Alternating minimization for one count limit. Each block step is taken
// only if it does not increase the objective, so the trace is nonincreasing.
inline CandidateTrace OptimizeForCountLimit(const ObjectiveContext& ctx,
                                            int64_t count_limit,
                                            const OptimizerOptions& opt) {
  const size_t d = ctx.num_queries();
  const BiasTables tables = BiasTables::Build(ctx, count_limit);
  CandidateTrace tr;
  tr.count_limit = count_limit;
  BudgetParams& p = tr.params;
  p.count_limit = count_limit;
  p.fractions.assign(d, d == 0 ? 0.0 : 1.0 / d);
  if (d == 0) p.count_fraction = 0;
  for (size_t l = 1; l <= d; ++l) {
    p.clip_thresholds.push_back(
        PositiveQuantile(tables.KeptValues(l), opt.init_quantile));
  }
  double current = Objective(ctx, tables, p);
  tr.objective.push_back(current);
  for (int round = 0; round < opt.max_rounds; ++round) {
    const double before = current;
    for (size_t l = 1; l <= d; ++l) {
      BudgetParams trial = p;
      trial.clip_thresholds[l - 1] =
          OptimalClip(ctx, tables, l, p.fractions[l - 1]);
      const double v = Objective(ctx, tables, trial);
      if (v <= current) {
        p = std::move(trial);
        current = v;
      }
    }
    if (d > 1) {
      BudgetParams trial = p;
      trial.fractions = OptimalAlpha(ctx, count_limit, p.clip_thresholds);
      const double v = Objective(ctx, tables, trial);
      if (v <= current) {
        p = std::move(trial);
        current = v;
      }
    }
    tr.objective.push_back(current);
    tr.rounds = round + 1;
    if (before - current <= opt.rel_tolerance * std::abs(before)) break;
  }
  return tr;
}

// Enumerates count limits 1..min(C_max, cap), optimizes (C_l, alpha_l) for
// each, and keeps the best. Ties go to the smaller C.
inline absl::StatusOr<OptimizerReport> Optimize(
    const ObjectiveContext& ctx, const OptimizerOptions& opt = {}) {
  if (ctx.num_impressions() == 0) {
    return absl::FailedPreconditionError("cannot optimize on empty data");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int64_t> candidates =
      CandidateCountLimits(ctx.max_conversions(), opt, ctx.gamma());
  OptimizerReport report;
  report.trace.resize(candidates.size());
  ParallelFor(candidates.size(), opt.threads, [&](size_t i) {
    report.trace[i] = OptimizeForCountLimit(ctx, candidates[i], opt);
  });
  size_t best = 0;
  for (size_t i = 0; i < report.trace.size(); ++i) {
    report.total_rounds += report.trace[i].rounds;
    if (report.trace[i].objective.back() <
        report.trace[best].objective.back()) {
      best = i;
    }
  }
  report.params = report.trace[best].params;
  ASSIGN_OR_RETURN(report.r_squared, Objective(ctx, report.params));
  report.r = std::sqrt(report.r_squared);
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

// The l1-encoder parameters derived from a linf optimum: the budget share of
// query l moves into its threshold (C_l / alpha_l), since the l1 encoder
// spends the whole per-record budget on the normalized value vector.
inline BudgetParams L1ParamsFromLinf(const BudgetParams& linf) {
  BudgetParams p = linf;
  p.variant = EncodingVariant::kL1;
  p.count_mode = CountMode::kRemainder;
  p.count_fraction = 0;
  for (size_t l = 0; l < p.clip_thresholds.size(); ++l) {
    p.clip_thresholds[l] = linf.clip_thresholds[l] / linf.fractions[l];
  }
  return p;
}

enum class BaselineMode { kSynthetic, kRealData };

// Equal budget over the count and the d value queries, thresholds at a
// training quantile, and C at the same quantile of per-impression counts
// (synthetic data) or 1 (conversion-level real data).
inline absl::StatusOr<BudgetParams> BaselineParams(const Dataset& data,
                                                   double quantile,
                                                   BaselineMode mode) {
  if (data.empty()) {
    return absl::FailedPreconditionError("baseline needs training data");
  }
  if (!(quantile > 0 && quantile <= 1)) {
    return absl::InvalidArgumentError("quantile must be in (0, 1]");
  }
  const size_t d = data.num_queries();
  BudgetParams p;
  p.variant = EncodingVariant::kLinf;
  p.count_mode = CountMode::kDedicated;
  p.count_fraction = 1.0 / static_cast<double>(d + 1);
  p.fractions.assign(d, 1.0 / static_cast<double>(d + 1));
  for (size_t l = 1; l <= d; ++l) {
    p.clip_thresholds.push_back(PositiveQuantile(QueryValues(data, l - 1), quantile));
  }
  if (mode == BaselineMode::kSynthetic) {
    std::vector<double> counts;
    for (const ImpressionGroup& imp : data.impressions()) {
      counts.push_back(static_cast<double>(imp.records.size()));
    }
    p.count_limit = std::max<int64_t>(
        1, static_cast<int64_t>(NearestRankQuantile(counts, quantile)));
  } else {
    p.count_limit = 1;
  }
  RETURN_IF_ERROR(p.Validate());
  return p;
}

inline nlohmann::ordered_json OptimizerReportToJson(const OptimizerReport& r) {
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const CandidateTrace& t : r.trace) {
    trace.push_back({{"count_limit", t.count_limit},
                     {"rounds", t.rounds},
                     {"objective", t.objective},
                     {"params", BudgetParamsToJson(t.params)}});
  }
  return {{"params", BudgetParamsToJson(r.params)},
          {"r_squared", r.r_squared},
          {"r", r.r},
          {"total_rounds", r.total_rounds},
          {"wall_seconds", r.wall_seconds},
          {"trace", trace}};
}

}  // namespace arasim

#endif  // ARASIM_OPTIMIZER_H_
