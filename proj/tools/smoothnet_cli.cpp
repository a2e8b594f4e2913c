// Copyright 2026 The SmoothNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Subcommands:
//   train       train one run from a config file
//   sweep       grid of runs (clip x epochs x repeats) from one config
//   accountant  privacy cost of a given mechanism and step count
//   calibrate   noise multiplier needed to meet an epsilon target
//   pareto      non-dominated privacy/utility rows of a results CSV
//   params      build the configured model and describe it
//
// Exit codes: 0 success, 2 configuration or input errors, 3 training
// diverged, 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smoothnet/harness.hpp"
#include "smoothnet/pareto.hpp"

namespace {

using namespace smoothnet;

constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kDivergedExit = 3;
constexpr int kNumericExit = 4;

std::string data_dir_env() {
  const char* v = std::getenv("SMOOTHNET_DATA_DIR");
  return v ? v : "";
}

int exit_code_for(RunStatus s) {
  switch (s) {
    case RunStatus::kCompleted:
    case RunStatus::kEarlyStopped:
      return kOk;
    case RunStatus::kDiverged:
      return kDivergedExit;
    case RunStatus::kError:
      return kNumericExit;
  }
  return kNumericExit;
}

void print_record(const RunRecord& rec, const RunConfig& rc) {
  std::fputs(run_record_csv(rec, rc).c_str(), stdout);
  std::printf(
      "status=%s total_steps=%lld best_epoch=%d best_val_loss=%.10g "
      "best_val_acc=%.10g final_epsilon=%.10g train_acc=%.10g "
      "test_acc=%.10g\n",
      to_string(rec.status).c_str(), rec.total_steps, rec.best_epoch,
      rec.best_val_loss, rec.best_val_acc, rec.final_epsilon,
      rec.final_train_acc, rec.test_acc);
  if (!rec.message.empty()) {
    std::printf("message=%s\n", rec.message.c_str());
  }
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume) {
  const KvConfig cfg = KvConfig::parse_file(config_path);
  RunConfig rc = run_config_from(cfg);
  if (!out_dir.empty()) rc.out_dir = out_dir;
  if (!resume.empty()) rc.resume_from = resume;
  const DataBundle data = prepare_data(rc, data_dir_env());
  const RunRecord rec = run_training(rc, data);
  print_record(rec, rc);
  return exit_code_for(rec.status);
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  const KvConfig cfg = KvConfig::parse_file(config_path);
  RunConfig base = run_config_from(cfg);
  if (!out_dir.empty()) base.out_dir = out_dir;
  const SweepConfig sc = sweep_config_from(cfg);
  const DataBundle data = prepare_data(base, data_dir_env());
  const SweepOutcome out = run_sweep(base, sc, data);
  std::fputs(out.summary_csv.c_str(), stdout);
  int failed = 0;
  for (const RunRecord& rec : out.records) {
    if (rec.status == RunStatus::kDiverged ||
        rec.status == RunStatus::kError) {
      ++failed;
    }
  }
  std::fprintf(stderr, "sweep: %zu runs, %d failed\n", out.records.size(),
               failed);
  return kOk;
}

int cmd_accountant(double q, double sigma, long long steps, double delta) {
  PrivacyParams p;
  p.sampling_rate = q;
  p.sigma = sigma;
  p.steps = steps;
  p.delta = delta;
  const EpsilonResult r = compute_epsilon(p);
  std::printf("epsilon=%.17g alpha=%d\n", r.epsilon, r.alpha);
  return kOk;
}

int cmd_calibrate(double target_epsilon, double q, long long steps,
                  double delta) {
  const double sigma = calibrate_sigma(target_epsilon, q, steps, delta);
  PrivacyParams p;
  p.sampling_rate = q;
  p.sigma = sigma;
  p.steps = steps;
  p.delta = delta;
  const EpsilonResult r = compute_epsilon(p);
  std::printf("sigma=%.17g epsilon=%.17g alpha=%d\n", sigma, r.epsilon,
              r.alpha);
  return kOk;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int cmd_pareto(const std::string& in_path, const std::string& out_path) {
  std::ifstream f(in_path, std::ios::binary);
  if (!f) throw IoError("cannot open " + in_path);
  std::string line;
  if (!std::getline(f, line)) throw IoError(in_path + ": empty CSV");
  const std::vector<std::string> header = split_csv_line(line);
  int eps_col = -1;
  int acc_col = -1;
  const std::vector<std::string> acc_names = {"accuracy", "best_val_acc",
                                              "val_acc", "test_acc"};
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "epsilon" || header[i] == "final_epsilon") {
      eps_col = static_cast<int>(i);
    }
    for (const std::string& n : acc_names) {
      if (header[i] == n && acc_col < 0) acc_col = static_cast<int>(i);
    }
  }
  if (eps_col < 0 || acc_col < 0) {
    throw ConfigError(in_path +
                      ": need an epsilon column and an accuracy column");
  }
  std::vector<ParetoPoint> points;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() <= static_cast<std::size_t>(std::max(eps_col, acc_col))) {
      throw ConfigError(in_path + ":" + std::to_string(lineno) +
                        ": short row");
    }
    ParetoPoint p;
    char* end = nullptr;
    p.epsilon = std::strtod(cells[static_cast<std::size_t>(eps_col)].c_str(),
                            &end);
    p.accuracy = std::strtod(cells[static_cast<std::size_t>(acc_col)].c_str(),
                             &end);
    points.push_back(p);
  }
  const std::vector<ParetoPoint> front = pareto_front(points);
  std::string csv = "epsilon,accuracy\n";
  for (const ParetoPoint& p : front) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", p.epsilon, p.accuracy);
    csv += buf;
  }
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + out_path);
    out << csv;
  }
  return kOk;
}

int cmd_params(const std::string& config_path) {
  const KvConfig cfg = KvConfig::parse_file(config_path);
  const RunConfig rc = run_config_from(cfg);
  const int classes = rc.model_kind == "study" ? rc.study.num_classes
                                               : rc.smoothnet.num_classes;
  BuiltModel<float> built = build_from(rc, classes);
  std::printf("model=%s\n", rc.model_kind.c_str());
  std::printf("blocks=%d\n", built.total_blocks);
  std::printf("peak_channels=%d\n", built.peak_channels);
  std::printf("head_features=%d\n", built.head_features);
  std::printf("classifier_linears=%d\n", built.classifier_linears);
  std::printf("trainable_params=%zu\n", count_params(built.model));
  std::printf("fingerprint=%016llx\n",
              static_cast<unsigned long long>(built.fingerprint));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SmoothNet: differentially private image-classifier training"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string resume;
  CLI::App* train = app.add_subcommand("train", "Train one run");
  train->add_option("--config", config_path, "Run config file")->required();
  train->add_option("--out", out_dir, "Artifact directory (overrides config)");
  train->add_option("--resume", resume, "Checkpoint to resume from");

  CLI::App* sweep =
      app.add_subcommand("sweep", "Train a clip x epochs x repeats grid");
  sweep->add_option("--config", config_path, "Run + sweep config file")
      ->required();
  sweep->add_option("--out", out_dir, "Artifact directory (overrides config)");

  double q = 0.0;
  double sigma = 1.0;
  long long steps = 1;
  double delta = 1e-5;
  double target_epsilon = 1.0;
  CLI::App* acct = app.add_subcommand(
      "accountant", "Privacy cost of a subsampled Gaussian mechanism");
  acct->add_option("--q", q, "Sampling rate (lot size / dataset size)")
      ->required();
  acct->add_option("--sigma", sigma, "Noise multiplier")->required();
  acct->add_option("--steps", steps, "Number of optimizer steps")->required();
  acct->add_option("--delta", delta, "Target delta");

  CLI::App* cal = app.add_subcommand(
      "calibrate", "Noise multiplier that meets an epsilon target");
  cal->add_option("--epsilon", target_epsilon, "Epsilon budget")->required();
  cal->add_option("--q", q, "Sampling rate")->required();
  cal->add_option("--steps", steps, "Number of optimizer steps")->required();
  cal->add_option("--delta", delta, "Target delta");

  std::string in_path;
  std::string out_path;
  CLI::App* par = app.add_subcommand(
      "pareto", "Non-dominated privacy/utility rows of a results CSV");
  par->add_option("--in", in_path, "Input CSV (epsilon + accuracy columns)")
      ->required();
  par->add_option("--out", out_path, "Output CSV (stdout when omitted)");

  CLI::App* params = app.add_subcommand(
      "params", "Build the configured model and describe it");
  params->add_option("--config", config_path, "Run config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, resume);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir);
    if (acct->parsed()) return cmd_accountant(q, sigma, steps, delta);
    if (cal->parsed()) return cmd_calibrate(target_epsilon, q, steps, delta);
    if (par->parsed()) return cmd_pareto(in_path, out_path);
    if (params->parsed()) return cmd_params(config_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kConfigExit;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumericExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumericExit;
  }
  return kConfigExit;
}
