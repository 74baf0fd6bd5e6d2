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

// Command-line driver: ingest, synth, optimize, run, generalize.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "arasim/arasim.h"
#include "json.hpp"

namespace arasim {
namespace {

// 0 ok, 1 configuration error, 2 data error, 3 numerical failure.
int ExitCode(const absl::Status& status) {
  switch (status.code()) {
    case absl::StatusCode::kOk:
      return 0;
    case absl::StatusCode::kInvalidArgument:
      return 1;
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kDataLoss:
    case absl::StatusCode::kFailedPrecondition:
    case absl::StatusCode::kPermissionDenied:
      return 2;
    default:
      return 3;
  }
}

int Fail(const absl::Status& status) {
  std::cerr << "arasim: " << status << "\n";
  return ExitCode(status);
}

absl::StatusOr<ExperimentConfig> ConfigOrDefault(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return LoadExperimentConfig(path);
}

struct Overrides {
  std::optional<std::string> preset;
  std::optional<uint64_t> seed;
  std::optional<int64_t> k_max;
  std::optional<int> trials;
  std::optional<size_t> threads;
  std::optional<std::string> output_dir;
  std::vector<double> epsilons;
  std::vector<std::string> methods;
  bool no_noise = false;

  void Register(CLI::App* cmd) {
    cmd->add_option("--preset", preset,
                    "synth-criteo | synth-real-estate | synth-travel");
    cmd->add_option("--seed", seed, "root random seed");
    cmd->add_option("--k-max", k_max, "largest impression count per slice");
    cmd->add_option("--trials", trials, "Monte Carlo trials per point");
    cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
    cmd->add_option("--output-dir", output_dir, "directory for outputs");
    cmd->add_option("--epsilons", epsilons, "privacy budgets")->delimiter(',');
    cmd->add_option("--methods", methods, "baseline,opt-linf,opt-l1")
        ->delimiter(',');
    cmd->add_flag("--no-noise", no_noise, "disable discrete Laplace noise");
  }

  absl::Status Apply(ExperimentConfig& cfg) const {
    if (preset) {
      absl::StatusOr<SynthConfig> p = SynthPreset(*preset);
      if (!p.ok()) return p.status();
      p->k_min = cfg.synth.k_min;
      p->k_max = cfg.synth.k_max;
      p->seed = cfg.synth.seed;
      cfg.synth = *p;
      cfg.source = SourceKind::kSynthetic;
    }
    if (seed) cfg.seed = cfg.synth.seed = *seed;
    if (k_max) cfg.synth.k_max = *k_max;
    if (trials) cfg.trials = *trials;
    if (threads) cfg.threads = *threads;
    if (output_dir) cfg.output_dir = *output_dir;
    if (!epsilons.empty()) cfg.epsilons = epsilons;
    if (!methods.empty()) cfg.methods = methods;
    if (no_noise) cfg.noise = false;
    return cfg.Validate();
  }
};

int RunIngest(const IngestSpec& spec, const std::string& out_dir) {
  absl::StatusOr<IngestResult> r = IngestCsv(spec);
  if (!r.ok()) return Fail(r.status());
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const std::filesystem::path root(out_dir);
  for (absl::Status s :
       {WriteDatasetCsv(r->train, (root / "train.csv").string()),
        WriteDatasetCsv(r->test, (root / "test.csv").string()),
        WriteTextFile(root / "slices.json", r->dictionary.ToJson().dump(2) + "\n")}) {
    if (!s.ok()) return Fail(s);
  }
  nlohmann::ordered_json summary = {{"accepted_rows", r->accepted_rows},
                                    {"rejected_rows", r->rejected_rows},
                                    {"train_records", r->train.size()},
                                    {"test_records", r->test.size()},
                                    {"num_slices", r->train.num_slices()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int RunSynth(ExperimentConfig cfg, uint64_t draw, const std::string& out) {
  absl::StatusOr<SynthDataset> s = GenerateSynthetic(cfg.synth, draw);
  if (!s.ok()) return Fail(s.status());
  if (absl::Status st = WriteDatasetCsv(s->data, out); !st.ok()) {
    return Fail(st);
  }
  std::cout << "wrote " << s->data.size() << " conversions over "
            << s->data.num_slices() << " slices to " << out << "\n";
  return 0;
}

int RunOptimize(const ExperimentConfig& cfg, double epsilon,
                const std::string& out) {
  absl::StatusOr<TrainTest> data = LoadTrainTest(cfg);
  if (!data.ok()) return Fail(data.status());
  absl::StatusOr<std::vector<double>> tau = MedianTau(data->train);
  if (!tau.ok()) return Fail(tau.status());
  absl::StatusOr<ObjectiveContext> ctx =
      ObjectiveContext::Create(data->train, *tau, epsilon, cfg.gamma);
  if (!ctx.ok()) return Fail(ctx.status());
  OptimizerOptions opt = cfg.optimizer;
  opt.threads = cfg.threads;
  absl::StatusOr<OptimizerReport> report = Optimize(*ctx, opt);
  if (!report.ok()) return Fail(report.status());
  const std::string text = OptimizerReportToJson(*report).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else if (absl::Status s = WriteTextFile(out, text); !s.ok()) {
    return Fail(s);
  }
  return 0;
}

int RunSweep(const ExperimentConfig& cfg) {
  absl::StatusOr<ExperimentResult> result = RunExperiment(cfg);
  if (!result.ok()) return Fail(result.status());
  const std::string dir = ResolveOutputDir(cfg);
  if (absl::Status s = EmitOutputs(cfg, *result, dir); !s.ok()) return Fail(s);
  std::cout << ResultsCsv(result->rows, result->tau.size() - 1);
  std::cerr << "outputs written to " << dir << "\n";
  return 0;
}

int RunGeneralize(const ExperimentConfig& cfg, double epsilon, bool same) {
  absl::StatusOr<GeneralizationReport> r =
      GeneralizationCheck(cfg, epsilon, same);
  if (!r.ok()) return Fail(r.status());
  std::cout << GeneralizationReportToJson(*r).dump(2) << "\n";
  return 0;
}

int Main(int argc, char** argv) {
  CLI::App app{"Attribution summary-report simulator and budget optimizer"};
  app.require_subcommand(0, 1);
  bool show_config = false;
  app.add_flag("--show-config", show_config,
               "print the default experiment config and exit");

  std::string config_path;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)");
  };

  IngestSpec spec;
  std::string ingest_out = "ingested";
  std::string delimiter = ",";
  CLI::App* ingest = app.add_subcommand("ingest", "split a conversion CSV");
  ingest->add_option("--input", spec.path, "CSV file")->required();
  ingest->add_option("--impression-column", spec.impression_column)->required();
  ingest->add_option("--timestamp-column", spec.timestamp_column)->required();
  ingest->add_option("--slice-columns", spec.slice_columns)->delimiter(',');
  ingest->add_option("--value-columns", spec.value_columns)
      ->delimiter(',')
      ->required();
  ingest->add_option("--delimiter", delimiter);
  ingest->add_option("--train-fraction", spec.train_fraction);
  ingest->add_option("--output-dir", ingest_out);

  Overrides synth_over, opt_over, run_over, gen_over;
  uint64_t draw = 0;
  std::string synth_out = "synth.csv";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_config(synth);
  synth_over.Register(synth);
  synth->add_option("--draw", draw, "independent draw index (0 = train)");
  synth->add_option("--output", synth_out, "CSV path");

  double epsilon = 1.0;
  std::string opt_out;
  CLI::App* optimize =
      app.add_subcommand("optimize", "fit budget parameters on train data");
  add_config(optimize);
  opt_over.Register(optimize);
  optimize->add_option("--epsilon", epsilon, "privacy budget");
  optimize->add_option("--output", opt_out, "report path (default stdout)");

  CLI::App* run = app.add_subcommand("run", "epsilon sweep: fit and evaluate");
  add_config(run);
  run_over.Register(run);

  bool same_draw = false;
  CLI::App* generalize =
      app.add_subcommand("generalize", "train/test generalization gap");
  add_config(generalize);
  gen_over.Register(generalize);
  generalize->add_option("--epsilon", epsilon, "privacy budget");
  generalize->add_flag("--same-draw", same_draw, "evaluate on the train draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (show_config) {
    std::cout << ExperimentConfigToJson(ExperimentConfig{}).dump(2) << "\n";
    return 0;
  }
  auto load = [&](const Overrides& over) -> absl::StatusOr<ExperimentConfig> {
    absl::StatusOr<ExperimentConfig> cfg = ConfigOrDefault(config_path);
    if (!cfg.ok()) return cfg.status();
    if (absl::Status s = over.Apply(*cfg); !s.ok()) return s;
    return cfg;
  };
  if (ingest->parsed()) {
    if (delimiter.size() != 1) {
      return Fail(absl::InvalidArgumentError("delimiter must be one character"));
    }
    spec.delimiter = delimiter[0];
    return RunIngest(spec, ingest_out);
  }
  if (synth->parsed()) {
    auto cfg = load(synth_over);
    return cfg.ok() ? RunSynth(*cfg, draw, synth_out) : Fail(cfg.status());
  }
  if (optimize->parsed()) {
    auto cfg = load(opt_over);
    return cfg.ok() ? RunOptimize(*cfg, epsilon, opt_out) : Fail(cfg.status());
  }
  if (run->parsed()) {
    auto cfg = load(run_over);
    return cfg.ok() ? RunSweep(*cfg) : Fail(cfg.status());
  }
  if (generalize->parsed()) {
    auto cfg = load(gen_over);
    return cfg.ok() ? RunGeneralize(*cfg, epsilon, same_draw)
                    : Fail(cfg.status());
  }
  std::cout << app.help();
  return 1;
}

}  // namespace
}  // namespace arasim

int main(int argc, char** argv) { return arasim::Main(argc, argv); }
