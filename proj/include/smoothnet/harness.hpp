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

// Experiment harness: run configs, the training loop (DP or plain), early
// stopping, divergence abort, metrics CSV, checkpoints, resume, and sweeps.
// Training runs in single precision; the verification story for the
// numerics lives in the templated modules and their tests.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothnet/accountant.hpp"
#include "smoothnet/architectures.hpp"
#include "smoothnet/config.hpp"
#include "smoothnet/data.hpp"
#include "smoothnet/dp.hpp"

namespace smoothnet {

struct DpConfig {
  bool enabled = false;
  double clip_norm = 1.0;
  double sigma = 1.0;
  double delta = 1e-5;
};

struct EarlyStopConfig {
  bool enabled = true;
  int patience = 15;
  // Required absolute decrease in validation loss to count as progress.
  double min_improvement = 1e-4;
};

struct SynthConfig {
  int classes = 3;
  int per_class = 500;
  int channels = 3;
  int height = 16;
  int width = 16;
  int test_per_class = 150;
  std::uint64_t seed = 7;
};

struct RunConfig {
  std::string run_id = "run";
  std::string out_dir;       // empty: write no artifacts
  std::string resume_from;   // empty: fresh start

  std::string model_kind = "smoothnet";  // smoothnet | study
  SmoothNetConfig smoothnet;
  StudyCNNConfig study;

  std::string data_source = "synthetic";  // synthetic | cifar10
  std::string data_dir;                   // cifar10 directory
  SynthConfig synth;
  double val_fraction = 0.1;
  bool normalize = true;

  int epochs = 15;
  int lot_size = 128;
  SamplingMode sampling = SamplingMode::kShuffleFixed;
  double divergence_threshold = 1000.0;
  int eval_chunk = 128;
  std::uint64_t seed = 1;

  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 0.0002;

  DpConfig dp;
  EarlyStopConfig early_stop;
};

// Parses the documented key/value schema; unknown keys are an error so
// typos cannot silently fall back to defaults.
RunConfig run_config_from(const KvConfig& cfg);

enum class RunStatus { kCompleted, kEarlyStopped, kDiverged, kError };
std::string to_string(RunStatus s);

struct EpochRow {
  int epoch = 0;
  // Cumulative optimizer steps after this epoch.
  long long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  // Privacy spent through this epoch; +inf when DP is off.
  double epsilon = 0.0;
};

struct RunRecord {
  std::string run_id;
  RunStatus status = RunStatus::kCompleted;
  std::string message;  // detail for diverged/error
  std::vector<EpochRow> rows;
  long long total_steps = 0;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
  int best_epoch = -1;
  double final_epsilon = 0.0;
  // Populated after training from the final weights.
  double final_train_acc = 0.0;
  double test_acc = 0.0;
  // Fully-resolved settings plus derived meta (sampling rate, steps per
  // epoch, sizes, normalization stats, caveats).
  KvConfig resolved;
};

// Validation-loss patience counter. observe() returns true when training
// should stop: the loss has not improved by more than min_improvement for
// `patience` consecutive epochs.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_improvement);
  bool observe(double val_loss);
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }
  // Reinstates counter state saved in a checkpoint.
  void restore(double best, int bad);

 private:
  int patience_;
  double min_improvement_;
  double best_;
  int bad_ = 0;
};

struct DataBundle {
  Dataset train;
  Dataset val;
  Dataset test;  // may be empty
  ChannelStats stats;
};

// Loads/generates, splits, and (optionally) normalizes the data named by
// the config. `data_dir_env` supplies the directory when the config omits
// data.dir (the CLI passes the environment variable's value).
DataBundle prepare_data(const RunConfig& rc, const std::string& data_dir_env);

// Builds the configured model in single precision.
BuiltModel<float> build_from(const RunConfig& rc, int num_classes);

// Trains per the config on the given data. Divergence and non-finite
// losses become statuses, not exceptions; config problems still throw.
// When rc.out_dir is set, writes metrics.csv, resolved.cfg, last.ckpt and
// best.ckpt there.
RunRecord run_training(const RunConfig& rc, const DataBundle& data);

// The metrics CSV for a record: fixed header
// run_id,epoch,step,train_loss,val_loss,val_acc,lr,epsilon,clip_norm,sigma
// with one row per epoch, numbers formatted %.10g.
std::string run_record_csv(const RunRecord& rec, const RunConfig& rc);

// Mean cross-entropy and accuracy of the current weights over a dataset,
// evaluated in chunks of rc.eval_chunk without gradient tracking.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(Model<float>& model, const Dataset& ds, int chunk);

struct SweepConfig {
  std::vector<double> clip_values;
  std::vector<int> epoch_values;
  int repeats = 1;
  int top_k = 10;
};

SweepConfig sweep_config_from(const KvConfig& cfg);

struct SweepOutcome {
  std::vector<RunRecord> records;  // grid-enumeration order
  // Ranking CSV over all finished runs, best val accuracy descending
  // (run_id breaks ties), truncated to top_k:
  // run_id,clip_norm,epochs,repeat,status,best_val_acc,final_epsilon
  std::string summary_csv;
};

// Runs clip x epochs x repeats. Each point trains with seed
// mix_seed(base seed, point index, repeat); failures are recorded with
// error status and do not abort the sweep.
SweepOutcome run_sweep(const RunConfig& base, const SweepConfig& sc,
                       const DataBundle& data);

}  // namespace smoothnet
