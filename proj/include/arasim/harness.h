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

#ifndef ARASIM_HARNESS_H_
#define ARASIM_HARNESS_H_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "arasim/csv.h"
#include "arasim/dataset.h"
#include "arasim/error_model.h"
#include "arasim/format.h"
#include "arasim/metrics.h"
#include "arasim/optimizer.h"
#include "arasim/parallel.h"
#include "arasim/pipeline.h"
#include "arasim/status_macros.h"
#include "arasim/synthgen.h"
#include "json.hpp"

namespace arasim {

inline constexpr char kLibraryVersion[] = "0.1.0";
inline constexpr char kOutputDirEnv[] = "ARASIM_OUTPUT_DIR";

enum class SourceKind { kSynthetic, kCsv };

struct ExperimentConfig {
  SourceKind source = SourceKind::kSynthetic;
  SynthConfig synth;
  IngestSpec csv;
  std::vector<double> epsilons = {1, 2, 4, 8, 16, 32, 64};
  int trials = 100;
  std::vector<std::string> methods = {"baseline", "opt-linf", "opt-l1"};
  double baseline_quantile = 0.95;
  uint64_t seed = 1;
  std::string output_dir = "out";
  size_t threads = 0;
  int64_t gamma = kDefaultContributionBudget;
  bool noise = true;
  OptimizerOptions optimizer;

  absl::Status Validate() const {
    if (epsilons.empty()) {
      return absl::InvalidArgumentError("need at least one epsilon");
    }
    for (double e : epsilons) {
      if (!(e > 0) || !std::isfinite(e)) {
        return absl::InvalidArgumentError(
            absl::StrCat("epsilon must be positive, got ", e));
      }
    }
    if (trials < 1) return absl::InvalidArgumentError("trials must be >= 1");
    if (methods.empty()) {
      return absl::InvalidArgumentError("need at least one method");
    }
    for (const std::string& m : methods) {
      if (m != "baseline" && m != "opt-linf" && m != "opt-l1") {
        return absl::InvalidArgumentError("unknown method " + m);
      }
    }
    if (!(baseline_quantile > 0 && baseline_quantile <= 1)) {
      return absl::InvalidArgumentError("baseline quantile must be in (0, 1]");
    }
    if (gamma < 1) return absl::InvalidArgumentError("gamma must be >= 1");
    if (source == SourceKind::kSynthetic) return synth.Validate();
    if (csv.path.empty()) {
      return absl::InvalidArgumentError("csv source needs a path");
    }
    return absl::OkStatus();
  }
};

inline nlohmann::ordered_json ExperimentConfigToJson(
    const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["source"] = c.source == SourceKind::kSynthetic ? "synth" : "csv";
  j["synth"] = SynthConfigToJson(c.synth);
  j["csv"] = {{"path", c.csv.path},
              {"delimiter", std::string(1, c.csv.delimiter)},
              {"impression_column", c.csv.impression_column},
              {"slice_columns", c.csv.slice_columns},
              {"value_columns", c.csv.value_columns},
              {"timestamp_column", c.csv.timestamp_column},
              {"train_fraction", c.csv.train_fraction}};
  j["epsilons"] = c.epsilons;
  j["trials"] = c.trials;
  j["methods"] = c.methods;
  j["baseline_quantile"] = c.baseline_quantile;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["gamma"] = c.gamma;
  j["noise"] = c.noise;
  j["optimizer"] = {{"max_candidates", c.optimizer.max_candidates},
                    {"geometric_stride", c.optimizer.geometric_stride},
                    {"init_quantile", c.optimizer.init_quantile},
                    {"max_rounds", c.optimizer.max_rounds},
                    {"rel_tolerance", c.optimizer.rel_tolerance}};
  return j;
}

// Fields absent from the document keep their defaults.
inline absl::StatusOr<ExperimentConfig> ExperimentConfigFromJson(
    const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    const std::string source = j.value("source", "synth");
    if (source == "synth") {
      c.source = SourceKind::kSynthetic;
    } else if (source == "csv") {
      c.source = SourceKind::kCsv;
    } else {
      return absl::InvalidArgumentError("unknown source " + source);
    }
    if (j.contains("synth")) {
      ASSIGN_OR_RETURN(c.synth, SynthConfigFromJson(j.at("synth")));
    }
    if (j.contains("csv")) {
      const nlohmann::json& s = j.at("csv");
      c.csv.path = s.value("path", "");
      const std::string delim = s.value("delimiter", ",");
      if (delim.size() != 1) {
        return absl::InvalidArgumentError("delimiter must be one character");
      }
      c.csv.delimiter = delim[0];
      c.csv.impression_column = s.value("impression_column", "");
      c.csv.slice_columns =
          s.value("slice_columns", std::vector<std::string>{});
      c.csv.value_columns =
          s.value("value_columns", std::vector<std::string>{});
      c.csv.timestamp_column = s.value("timestamp_column", "");
      c.csv.train_fraction = s.value("train_fraction", 0.5);
    }
    c.epsilons = j.value("epsilons", c.epsilons);
    c.trials = j.value("trials", c.trials);
    c.methods = j.value("methods", c.methods);
    c.baseline_quantile = j.value("baseline_quantile", c.baseline_quantile);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.threads = j.value("threads", c.threads);
    c.gamma = j.value("gamma", c.gamma);
    c.noise = j.value("noise", c.noise);
    if (j.contains("optimizer")) {
      const nlohmann::json& o = j.at("optimizer");
      c.optimizer.max_candidates =
          o.value("max_candidates", c.optimizer.max_candidates);
      c.optimizer.geometric_stride =
          o.value("geometric_stride", c.optimizer.geometric_stride);
      c.optimizer.init_quantile =
          o.value("init_quantile", c.optimizer.init_quantile);
      c.optimizer.max_rounds = o.value("max_rounds", c.optimizer.max_rounds);
      c.optimizer.rel_tolerance =
          o.value("rel_tolerance", c.optimizer.rel_tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed experiment config: ", e.what()));
  }
  RETURN_IF_ERROR(c.Validate());
  return c;
}

inline absl::StatusOr<ExperimentConfig> LoadExperimentConfig(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    return absl::InvalidArgumentError("config " + path + " is not valid JSON");
  }
  return ExperimentConfigFromJson(j);
}

// Output directory after the environment override.
inline std::string ResolveOutputDir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

struct TrainTest {
  Dataset train;
  Dataset test;
  std::optional<SliceDictionary> dictionary;  // csv sources only
  BaselineMode baseline_mode = BaselineMode::kSynthetic;
};

// Synthetic train and test are independent draws (0 and 1) of the model.
inline absl::StatusOr<TrainTest> LoadTrainTest(const ExperimentConfig& cfg) {
  TrainTest out;
  if (cfg.source == SourceKind::kSynthetic) {
    ASSIGN_OR_RETURN(SynthDataset train, GenerateSynthetic(cfg.synth, 0));
    ASSIGN_OR_RETURN(SynthDataset test, GenerateSynthetic(cfg.synth, 1));
    out.train = std::move(train.data);
    out.test = std::move(test.data);
    out.baseline_mode = BaselineMode::kSynthetic;
  } else {
    ASSIGN_OR_RETURN(IngestResult r, IngestCsv(cfg.csv));
    out.train = std::move(r.train);
    out.test = std::move(r.test);
    out.dictionary = std::move(r.dictionary);
    out.baseline_mode = BaselineMode::kRealData;
  }
  if (out.train.empty()) {
    return absl::FailedPreconditionError("training split is empty");
  }
  if (out.test.empty()) {
    return absl::FailedPreconditionError("test split is empty");
  }
  return out;
}

struct ResultRow {
  std::string method;
  double epsilon = 0;
  double rmsre_tau = 0;           // empirical, over trials
  double rmsre_tau_analytic = 0;  // exact bias and variance
  std::vector<double> per_query;
  std::vector<double> per_query_analytic;
  double train_objective = 0;  // relaxed R on train; NaN for l1 params
  BudgetParams params;
  int trials = 0;
  double runtime_seconds = 0;
  std::vector<MetricRow> metrics;
};

struct ExperimentResult {
  std::vector<double> tau;
  std::vector<ResultRow> rows;  // epsilon-major, then configured method order
  std::vector<OptimizerReport> optimizer_reports;  // one per epsilon
  std::optional<SliceDictionary> dictionary;
  size_t train_records = 0;
  size_t test_records = 0;
  size_t num_slices = 0;
};

inline constexpr uint64_t kEvalDomain = 0xe7a1;

// Runs `trials` pipeline simulations on the test data and scores them. Trial
// t uses the stream (seed, t) for every method and epsilon, so all rows share
// common random numbers and differ only through their parameters.
inline absl::Status EvaluateOnTest(const ExperimentConfig& cfg,
                                   const Dataset& test,
                                   const std::vector<double>& tau,
                                   ResultRow& row) {
  const auto start = std::chrono::steady_clock::now();
  ASSIGN_OR_RETURN(HistogramEncoder encoder,
                   HistogramEncoder::Create(row.params, test.num_slices(),
                                            cfg.gamma));
  const NoiseMode noise = cfg.noise ? NoiseMode::kOn : NoiseMode::kOff;
  TrialSet trials;
  trials.truth = TrueAggregates(test);
  trials.estimates.resize(cfg.trials);
  std::vector<absl::Status> status(cfg.trials);
  ParallelFor(cfg.trials, cfg.threads, [&](size_t t) {
    const RngStream trial_rng(cfg.seed, {kEvalDomain, t});
    absl::StatusOr<SummaryReport> report =
        SimulateSummaryReport(test, encoder, row.epsilon, noise, trial_rng);
    if (!report.ok()) {
      status[t] = report.status();
      return;
    }
    absl::StatusOr<Matrix<double>> u = Reconstruct(*report);
    if (!u.ok()) {
      status[t] = u.status();
      return;
    }
    trials.estimates[t] = *std::move(u);
  });
  for (const absl::Status& s : status) RETURN_IF_ERROR(s);

  ASSIGN_OR_RETURN(RmsreResult empirical, RmsreTau(trials, tau));
  ASSIGN_OR_RETURN(EstimateMoments moments,
                   ExactMoments(test, row.params, row.epsilon, noise,
                                cfg.gamma));
  Matrix<double> bias = moments.mean;
  for (size_t k = 0; k < bias.size(); ++k) {
    bias.data()[k] -= trials.truth.data()[k];
  }
  ASSIGN_OR_RETURN(RmsreResult analytic,
                   RmsreTauAnalytic(bias, moments.variance, trials.truth, tau));
  MetricConfig mc;
  mc.tau = tau;
  ASSIGN_OR_RETURN(row.metrics, MetricSuite(trials, mc));
  row.rmsre_tau = empirical.combined;
  row.per_query = empirical.per_query;
  row.rmsre_tau_analytic = analytic.combined;
  row.per_query_analytic = analytic.per_query;
  row.trials = cfg.trials;
  row.runtime_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  if (!std::isfinite(row.rmsre_tau) || !std::isfinite(row.rmsre_tau_analytic)) {
    return absl::InternalError(absl::StrCat(
        "non-finite RMSRE for ", row.method, " at epsilon ", row.epsilon));
  }
  return absl::OkStatus();
}

// Fits parameters on train for every (epsilon, method) and evaluates them on
// test with tau taken from train.
inline absl::StatusOr<ExperimentResult> RunExperiment(
    const ExperimentConfig& cfg) {
  RETURN_IF_ERROR(cfg.Validate());
  ASSIGN_OR_RETURN(TrainTest data, LoadTrainTest(cfg));
  if (data.train.num_slices() != data.test.num_slices()) {
    return absl::InternalError("train and test disagree on slice count");
  }
  ExperimentResult result;
  ASSIGN_OR_RETURN(result.tau, MedianTau(data.train));
  result.dictionary = data.dictionary;
  result.train_records = data.train.size();
  result.test_records = data.test.size();
  result.num_slices = data.test.num_slices();

  ASSIGN_OR_RETURN(BudgetParams baseline,
                   BaselineParams(data.train, cfg.baseline_quantile,
                                  data.baseline_mode));
  OptimizerOptions opt = cfg.optimizer;
  opt.threads = cfg.threads;
  for (double eps : cfg.epsilons) {
    ASSIGN_OR_RETURN(ObjectiveContext ctx,
                     ObjectiveContext::Create(data.train, result.tau, eps,
                                              cfg.gamma));
    std::optional<OptimizerReport> report;
    for (const std::string& method : cfg.methods) {
      ResultRow row;
      row.method = method;
      row.epsilon = eps;
      if (method == "baseline") {
        row.params = baseline;
      } else {
        if (!report) {
          ASSIGN_OR_RETURN(report, Optimize(ctx, opt));
          result.optimizer_reports.push_back(*report);
        }
        row.params = method == "opt-linf" ? report->params
                                          : L1ParamsFromLinf(report->params);
      }
      if (row.params.variant == EncodingVariant::kLinf) {
        ASSIGN_OR_RETURN(double r2, Objective(ctx, row.params));
        row.train_objective = std::sqrt(r2);
      } else {
        row.train_objective = std::numeric_limits<double>::quiet_NaN();
      }
      RETURN_IF_ERROR(EvaluateOnTest(cfg, data.test, result.tau, row));
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

inline std::string ResultCsvHeader(size_t num_queries) {
  std::string h = "method,epsilon,rmsre_tau,rmsre_tau_analytic";
  for (size_t l = 0; l <= num_queries; ++l) {
    absl::StrAppend(&h, ",rmsre_tau_q", l);
  }
  for (size_t l = 0; l <= num_queries; ++l) {
    absl::StrAppend(&h, ",rmsre_tau_analytic_q", l);
  }
  absl::StrAppend(&h,
                  ",train_objective,count_limit,clip_thresholds,fractions,"
                  "count_fraction,variant,count_mode,trials");
  return h;
}

// Wall time is deliberately left out so the file is byte-reproducible.
inline std::string ResultCsvLine(const ResultRow& r) {
  std::string line = absl::StrCat(r.method, ",", FormatDouble(r.epsilon), ",",
                                  FormatDouble(r.rmsre_tau), ",",
                                  FormatDouble(r.rmsre_tau_analytic));
  for (double v : r.per_query) absl::StrAppend(&line, ",", FormatDouble(v));
  for (double v : r.per_query_analytic) {
    absl::StrAppend(&line, ",", FormatDouble(v));
  }
  absl::StrAppend(&line, ",", FormatDouble(r.train_objective), ",",
                  r.params.count_limit, ",",
                  JoinDoubles(r.params.clip_thresholds), ",",
                  JoinDoubles(r.params.fractions), ",",
                  FormatDouble(r.params.count_fraction), ",",
                  VariantName(r.params.variant), ",",
                  CountModeName(r.params.count_mode), ",", r.trials);
  return line;
}

inline std::string ResultsCsv(const std::vector<ResultRow>& rows,
                              size_t num_queries) {
  std::string out = ResultCsvHeader(num_queries) + "\n";
  for (const ResultRow& r : rows) out += ResultCsvLine(r) + "\n";
  return out;
}

inline absl::Status WriteTextFile(const std::filesystem::path& path,
                                  const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    return absl::PermissionDeniedError("cannot write " + path.string());
  }
  out << text;
  out.close();
  if (!out) return absl::DataLossError("short write to " + path.string());
  return absl::OkStatus();
}

// Writes results.csv, metrics.csv, params.json and run-manifest.json (plus
// slices.json for csv sources) into `dir`.
inline absl::Status EmitOutputs(const ExperimentConfig& cfg,
                                const ExperimentResult& result,
                                const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }
  const std::filesystem::path root(dir);
  const size_t d = result.tau.empty() ? 0 : result.tau.size() - 1;
  RETURN_IF_ERROR(
      WriteTextFile(root / "results.csv", ResultsCsv(result.rows, d)));

  std::string metrics = "method,epsilon," + MetricCsvHeader() + "\n";
  for (const ResultRow& r : result.rows) {
    for (const MetricRow& m : r.metrics) {
      absl::StrAppend(&metrics, r.method, ",", FormatDouble(r.epsilon), ",",
                      MetricCsvLine(m), "\n");
    }
  }
  RETURN_IF_ERROR(WriteTextFile(root / "metrics.csv", metrics));

  nlohmann::ordered_json params;
  params["tau"] = result.tau;
  params["runs"] = nlohmann::ordered_json::array();
  for (const ResultRow& r : result.rows) {
    params["runs"].push_back({{"method", r.method},
                              {"epsilon", r.epsilon},
                              {"params", BudgetParamsToJson(r.params)}});
  }
  RETURN_IF_ERROR(WriteTextFile(root / "params.json", params.dump(2) + "\n"));

  nlohmann::ordered_json manifest;
  manifest["version"] = kLibraryVersion;
  manifest["compiler"] = __VERSION__;
  manifest["seed"] = cfg.seed;
  manifest["epsilons"] = cfg.epsilons;
  manifest["config"] = ExperimentConfigToJson(cfg);
  manifest["train_records"] = result.train_records;
  manifest["test_records"] = result.test_records;
  manifest["num_slices"] = result.num_slices;
  nlohmann::ordered_json timing = nlohmann::ordered_json::array();
  for (const ResultRow& r : result.rows) {
    timing.push_back({{"method", r.method},
                      {"epsilon", r.epsilon},
                      {"seconds", r.runtime_seconds}});
  }
  manifest["evaluation_seconds"] = timing;
  nlohmann::ordered_json opt = nlohmann::ordered_json::array();
  for (const OptimizerReport& rep : result.optimizer_reports) {
    opt.push_back({{"r", rep.r},
                   {"total_rounds", rep.total_rounds},
                   {"candidates", rep.trace.size()},
                   {"seconds", rep.wall_seconds}});
  }
  manifest["optimizer"] = opt;
  RETURN_IF_ERROR(
      WriteTextFile(root / "run-manifest.json", manifest.dump(2) + "\n"));
  if (result.dictionary) {
    RETURN_IF_ERROR(WriteTextFile(root / "slices.json",
                                  result.dictionary->ToJson().dump(2) + "\n"));
  }
  return absl::OkStatus();
}

struct GeneralizationReport {
  double epsilon = 0;
  double r_test_chosen = 0;  // relaxed R on test at the train optimum
  double r_test_grid_min = 0;
  double gap = 0;  // (r_test_chosen - r_test_grid_min) / r_test_grid_min
  BudgetParams chosen;
  BudgetParams grid_best;
  size_t num_slices = 0;
};

// Optimizes on draw 0 and scores the chosen parameters on the test data
// against a 10 x 10 grid (C evenly spaced over 1..C_max, each threshold
// log-spaced from the 5th percentile to the maximum test value). Budget
// fractions on the grid come from the closed form. With same_draw the test
// data is the training data.
inline absl::StatusOr<GeneralizationReport> GeneralizationCheck(
    const ExperimentConfig& cfg, double epsilon, bool same_draw = false) {
  if (cfg.source != SourceKind::kSynthetic) {
    return absl::InvalidArgumentError(
        "the generalization check needs a synthetic source");
  }
  ASSIGN_OR_RETURN(SynthDataset train, GenerateSynthetic(cfg.synth, 0));
  SynthDataset test_draw;
  if (!same_draw) {
    ASSIGN_OR_RETURN(test_draw, GenerateSynthetic(cfg.synth, 1));
  }
  const Dataset& test = same_draw ? train.data : test_draw.data;
  ASSIGN_OR_RETURN(std::vector<double> tau, MedianTau(train.data));
  ASSIGN_OR_RETURN(ObjectiveContext train_ctx,
                   ObjectiveContext::Create(train.data, tau, epsilon, cfg.gamma));
  ASSIGN_OR_RETURN(ObjectiveContext test_ctx,
                   ObjectiveContext::Create(test, tau, epsilon, cfg.gamma));
  OptimizerOptions opt = cfg.optimizer;
  opt.threads = cfg.threads;
  ASSIGN_OR_RETURN(OptimizerReport fit, Optimize(train_ctx, opt));

  GeneralizationReport rep;
  rep.epsilon = epsilon;
  rep.chosen = fit.params;
  rep.num_slices = test.num_slices();
  ASSIGN_OR_RETURN(double chosen_r2, Objective(test_ctx, fit.params));
  rep.r_test_chosen = std::sqrt(chosen_r2);

  constexpr int kGridSide = 10;
  const size_t d = test.num_queries();
  const int64_t c_max = std::max<int64_t>(
      1, std::min<int64_t>(test_ctx.max_conversions(), cfg.gamma));
  std::vector<int64_t> count_grid;
  for (int i = 0; i < kGridSide; ++i) {
    const int64_t c =
        1 + std::llround(static_cast<double>(c_max - 1) * i / (kGridSide - 1));
    if (count_grid.empty() || count_grid.back() != c) count_grid.push_back(c);
  }
  std::vector<std::vector<double>> clip_grid(d);
  for (size_t l = 0; l < d; ++l) {
    std::vector<double> values = QueryValues(test, l);
    const double lo = PositiveQuantile(values, 0.05);
    const double hi = std::max(lo, *std::max_element(values.begin(), values.end()));
    for (int i = 0; i < kGridSide; ++i) {
      clip_grid[l].push_back(lo * std::pow(hi / lo, static_cast<double>(i) /
                                                        (kGridSide - 1)));
    }
  }
  rep.r_test_grid_min = std::numeric_limits<double>::infinity();
  for (int64_t c : count_grid) {
    const BiasTables tables = BiasTables::Build(test_ctx, c);
    // Thresholds vary jointly by grid index across queries.
    for (int i = 0; i < kGridSide; ++i) {
      BudgetParams p;
      p.count_limit = c;
      for (size_t l = 0; l < d; ++l) p.clip_thresholds.push_back(clip_grid[l][i]);
      p.fractions = d == 1 ? std::vector<double>{1.0}
                           : OptimalAlpha(test_ctx, c, p.clip_thresholds);
      const double r = std::sqrt(Objective(test_ctx, tables, p));
      if (r < rep.r_test_grid_min) {
        rep.r_test_grid_min = r;
        rep.grid_best = p;
      }
    }
  }
  rep.gap = (rep.r_test_chosen - rep.r_test_grid_min) / rep.r_test_grid_min;
  return rep;
}

inline nlohmann::ordered_json GeneralizationReportToJson(
    const GeneralizationReport& r) {
  return {{"epsilon", r.epsilon},
          {"num_slices", r.num_slices},
          {"r_test_chosen", r.r_test_chosen},
          {"r_test_grid_min", r.r_test_grid_min},
          {"gap", r.gap},
          {"chosen", BudgetParamsToJson(r.chosen)},
          {"grid_best", BudgetParamsToJson(r.grid_best)}};
}

}  // namespace arasim

#endif  // ARASIM_HARNESS_H_
