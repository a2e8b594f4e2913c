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

#include "smoothnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "smoothnet/checkpoint.hpp"

namespace smoothnet {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954ull;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953ull;
constexpr std::uint64_t kSplitStream = 0x53504c54ull;
constexpr std::uint64_t kTestStream = 0x54455354ull;

const double kInf = std::numeric_limits<double>::infinity();

// Display formatting (CSV): 10 significant digits.
std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Round-trip formatting (resolved configs): shortest-exact is not worth
// hand-rolling; 17 digits always reconstructs the double.
std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double_token(const std::string& tok, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end == tok.c_str() || *end != '\0') {
    throw ConfigError(what + ": '" + tok + "' is not a number");
  }
  return v;
}

long long parse_int_token(const std::string& tok, const std::string& what) {
  char* end = nullptr;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (tok.empty() || end == tok.c_str() || *end != '\0') {
    throw ConfigError(what + ": '" + tok + "' is not an integer");
  }
  return v;
}

// "5x32,5x32" -> two stages of 5 blocks growing 32 channels each.
std::vector<SmoothNetStage> parse_stages(const std::string& s) {
  std::vector<SmoothNetStage> out;
  for (const std::string& tok : split_list(s, ',')) {
    const std::size_t x = tok.find('x');
    if (x == std::string::npos) {
      throw ConfigError("smoothnet.stages: '" + tok +
                        "' is not <blocks>x<growth>");
    }
    SmoothNetStage st;
    st.num_blocks = static_cast<int>(
        parse_int_token(tok.substr(0, x), "smoothnet.stages blocks"));
    st.growth = static_cast<int>(
        parse_int_token(tok.substr(x + 1), "smoothnet.stages growth"));
    out.push_back(st);
  }
  return out;
}

std::string stages_to_string(const std::vector<SmoothNetStage>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(stages[i].num_blocks) + "x" +
           std::to_string(stages[i].growth);
  }
  return out;
}

// "CxHxW"
void parse_input_geometry(const std::string& s, int* c, int* h, int* w) {
  const std::vector<std::string> parts = split_list(s, 'x');
  if (parts.size() != 3) {
    throw ConfigError("model.input: '" + s + "' is not CxHxW");
  }
  *c = static_cast<int>(parse_int_token(parts[0], "model.input channels"));
  *h = static_cast<int>(parse_int_token(parts[1], "model.input height"));
  *w = static_cast<int>(parse_int_token(parts[2], "model.input width"));
}

// ---- run.state packing: u32/double bit patterns carried in f32 slots ----

void push_bits(std::vector<float>& v, std::uint32_t x) {
  float f;
  std::memcpy(&f, &x, sizeof(f));
  v.push_back(f);
}

std::uint32_t bits_at(const std::vector<float>& v, std::size_t i) {
  std::uint32_t x;
  std::memcpy(&x, &v.at(i), sizeof(x));
  return x;
}

void push_double_bits(std::vector<float>& v, double d) {
  std::uint64_t b;
  std::memcpy(&b, &d, sizeof(b));
  push_bits(v, static_cast<std::uint32_t>(b & 0xffffffffull));
  push_bits(v, static_cast<std::uint32_t>(b >> 32));
}

double double_bits_at(const std::vector<float>& v, std::size_t i) {
  const std::uint64_t b = static_cast<std::uint64_t>(bits_at(v, i)) |
                          (static_cast<std::uint64_t>(bits_at(v, i + 1)) << 32);
  double d;
  std::memcpy(&d, &b, sizeof(d));
  return d;
}

constexpr std::uint32_t kRunStateVersion = 1;
constexpr int kRunStateSlots = 12;

struct TrainState {
  int next_epoch = 0;
  long long total_steps = 0;
  double es_best = std::numeric_limits<double>::infinity();
  int es_bad = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_acc = 0.0;
  int best_epoch = -1;
};

std::vector<float> pack_state(const TrainState& ts) {
  std::vector<float> v;
  v.reserve(kRunStateSlots);
  push_bits(v, kRunStateVersion);
  push_bits(v, static_cast<std::uint32_t>(ts.next_epoch));
  push_bits(v, static_cast<std::uint32_t>(ts.total_steps & 0xffffffffll));
  push_bits(v, static_cast<std::uint32_t>(
                   static_cast<std::uint64_t>(ts.total_steps) >> 32));
  push_double_bits(v, ts.es_best);
  push_bits(v, static_cast<std::uint32_t>(ts.es_bad));
  push_double_bits(v, ts.best_val_loss);
  push_bits(v, static_cast<std::uint32_t>(ts.best_epoch));
  push_double_bits(v, ts.best_val_acc);
  return v;
}

TrainState unpack_state(const std::vector<float>& v) {
  if (v.size() != kRunStateSlots || bits_at(v, 0) != kRunStateVersion) {
    throw IoError("checkpoint run.state record is malformed");
  }
  TrainState ts;
  ts.next_epoch = static_cast<int>(bits_at(v, 1));
  ts.total_steps = static_cast<long long>(
      static_cast<std::uint64_t>(bits_at(v, 2)) |
      (static_cast<std::uint64_t>(bits_at(v, 3)) << 32));
  ts.es_best = double_bits_at(v, 4);
  ts.es_bad = static_cast<int>(bits_at(v, 6));
  ts.best_val_loss = double_bits_at(v, 7);
  ts.best_epoch = static_cast<int>(bits_at(v, 9));
  ts.best_val_acc = double_bits_at(v, 10);
  return ts;
}

void save_train_checkpoint(const std::string& path,
                           const BuiltModel<float>& built,
                           const std::vector<Parameter<float>*>& params,
                           const OptimizerState<float>& opt,
                           const TrainState& ts) {
  Checkpoint ck;
  ck.fingerprint = built.fingerprint;
  append_param_records(ck, params);
  if (!opt.velocity.empty()) {
    std::size_t off = 0;
    for (const Parameter<float>* p : params) {
      CheckpointRecord r;
      r.name = "velocity/" + p->name;
      r.shape = p->tensor.shape();
      r.values.assign(opt.velocity.begin() + static_cast<std::ptrdiff_t>(off),
                      opt.velocity.begin() +
                          static_cast<std::ptrdiff_t>(off + p->tensor.numel()));
      ck.records.push_back(std::move(r));
      off += p->tensor.numel();
    }
  }
  CheckpointRecord st;
  st.name = "run.state";
  st.shape = {kRunStateSlots};
  st.values = pack_state(ts);
  ck.records.push_back(std::move(st));
  save_checkpoint(path, ck);
}

TrainState resume_from_checkpoint(const std::string& path,
                                  const BuiltModel<float>& built,
                                  const std::vector<Parameter<float>*>& params,
                                  OptimizerState<float>& opt) {
  const Checkpoint ck = load_checkpoint(path);
  restore_params(ck, built.fingerprint, params);
  const std::size_t dim = flat_param_dim(params);
  opt.velocity.clear();
  if (ck.find("velocity/" + params.front()->name)) {
    opt.velocity.reserve(dim);
    for (const Parameter<float>* p : params) {
      const CheckpointRecord* r = ck.find("velocity/" + p->name);
      if (!r || r->shape != p->tensor.shape()) {
        throw IoError("checkpoint velocity record for '" + p->name +
                      "' is missing or malformed");
      }
      opt.velocity.insert(opt.velocity.end(), r->values.begin(),
                          r->values.end());
    }
  }
  const CheckpointRecord* st = ck.find("run.state");
  if (!st) throw IoError("checkpoint has no run.state record");
  return unpack_state(st->values);
}

// ---- data plumbing ----

void gather_batch(const Dataset& ds, const std::vector<int>& idx,
                  Tensor<float>& x, std::vector<int>& labels) {
  const std::size_t pixels = ds.example_numel();
  x = Tensor<float>({static_cast<int>(idx.size()), ds.channels, ds.height,
                     ds.width});
  labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int e = idx[i];
    std::memcpy(x.data() + i * pixels,
                ds.images.data() + static_cast<std::size_t>(e) * pixels,
                pixels * sizeof(float));
    labels[i] = ds.labels[static_cast<std::size_t>(e)];
  }
}

// ---- config schema ----

const std::set<std::string>& allowed_keys() {
  static const std::set<std::string> keys = {
      "run.id", "run.out_dir", "run.resume", "run.seed", "run.epochs",
      "run.lot_size", "run.sampling", "run.val_fraction", "run.normalize",
      "run.eval_chunk", "run.divergence_threshold",
      "model.kind", "model.classes", "model.input",
      "smoothnet.stem", "smoothnet.stages", "smoothnet.norm_groups",
      "smoothnet.block_max_pool", "smoothnet.head_features",
      "smoothnet.classifier",
      "study.depth", "study.width_multiplier", "study.skip", "study.norm",
      "study.act", "study.pool",
      "data.source", "data.dir", "data.synth.classes", "data.synth.per_class",
      "data.synth.channels", "data.synth.height", "data.synth.width",
      "data.synth.test_per_class", "data.synth.seed",
      "opt.schedule", "opt.lr", "opt.gamma", "opt.step_every", "opt.momentum",
      "opt.weight_decay",
      "dp.enabled", "dp.clip_norm", "dp.sigma", "dp.delta",
      "early_stop.enabled", "early_stop.patience",
      "early_stop.min_improvement",
      "sweep.clip_values", "sweep.epoch_values", "sweep.repeats",
      "sweep.top_k",
  };
  return keys;
}

}  // namespace

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kCompleted: return "completed";
    case RunStatus::kEarlyStopped: return "early-stopped";
    case RunStatus::kDiverged: return "diverged";
    case RunStatus::kError: return "error";
  }
  return "?";
}

EarlyStopping::EarlyStopping(int patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement),
      best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("early stop patience must be >= 1");
  if (!(min_improvement >= 0.0)) {
    throw ConfigError("early stop min improvement must be >= 0");
  }
}

bool EarlyStopping::observe(double val_loss) {
  if (val_loss < best_ - min_improvement_) {
    best_ = val_loss;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return bad_ >= patience_;
}

void EarlyStopping::restore(double best, int bad) {
  best_ = best;
  bad_ = bad;
}

RunConfig run_config_from(const KvConfig& cfg) {
  for (const auto& [key, value] : cfg.entries()) {
    (void)value;
    // meta.* keys appear in resolved configs this harness writes; accept
    // them so a resolved config is itself trainable.
    if (key.rfind("meta.", 0) == 0) continue;
    if (!allowed_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  RunConfig rc;
  rc.run_id = cfg.get_string("run.id", rc.run_id);
  rc.out_dir = cfg.get_string("run.out_dir", "");
  rc.resume_from = cfg.get_string("run.resume", "");
  rc.seed = static_cast<std::uint64_t>(
      cfg.get_int("run.seed", static_cast<long long>(rc.seed)));
  rc.epochs = static_cast<int>(cfg.get_int("run.epochs", rc.epochs));
  rc.lot_size = static_cast<int>(cfg.get_int("run.lot_size", rc.lot_size));
  rc.sampling = sampling_mode_from_string(
      cfg.get_string("run.sampling", to_string(rc.sampling)));
  rc.val_fraction = cfg.get_double("run.val_fraction", rc.val_fraction);
  rc.normalize = cfg.get_bool("run.normalize", rc.normalize);
  rc.eval_chunk = static_cast<int>(cfg.get_int("run.eval_chunk",
                                               rc.eval_chunk));
  rc.divergence_threshold = cfg.get_double("run.divergence_threshold",
                                           rc.divergence_threshold);

  rc.model_kind = cfg.get_string("model.kind", rc.model_kind);
  if (rc.model_kind != "smoothnet" && rc.model_kind != "study") {
    throw ConfigError("model.kind must be smoothnet|study, got '" +
                      rc.model_kind + "'");
  }
  const int classes =
      static_cast<int>(cfg.get_int("model.classes", rc.smoothnet.num_classes));
  int in_c = rc.smoothnet.in_channels, in_h = rc.smoothnet.input_h,
      in_w = rc.smoothnet.input_w;
  if (cfg.has("model.input")) {
    parse_input_geometry(cfg.get_string("model.input"), &in_c, &in_h, &in_w);
  }
  rc.smoothnet.num_classes = rc.study.num_classes = classes;
  rc.smoothnet.in_channels = rc.study.in_channels = in_c;
  rc.smoothnet.input_h = rc.study.input_h = in_h;
  rc.smoothnet.input_w = rc.study.input_w = in_w;

  rc.smoothnet.stem_channels = static_cast<int>(
      cfg.get_int("smoothnet.stem", rc.smoothnet.stem_channels));
  if (cfg.has("smoothnet.stages")) {
    rc.smoothnet.stages = parse_stages(cfg.get_string("smoothnet.stages"));
  }
  rc.smoothnet.norm_groups = static_cast<int>(
      cfg.get_int("smoothnet.norm_groups", rc.smoothnet.norm_groups));
  rc.smoothnet.block_max_pool =
      cfg.get_bool("smoothnet.block_max_pool", rc.smoothnet.block_max_pool);
  rc.smoothnet.head_features = static_cast<int>(
      cfg.get_int("smoothnet.head_features", rc.smoothnet.head_features));
  if (cfg.has("smoothnet.classifier")) {
    rc.smoothnet.classifier_widths.clear();
    for (const std::string& tok :
         split_list(cfg.get_string("smoothnet.classifier"), ',')) {
      rc.smoothnet.classifier_widths.push_back(
          static_cast<int>(parse_int_token(tok, "smoothnet.classifier")));
    }
  }

  rc.study.depth = static_cast<int>(cfg.get_int("study.depth",
                                                rc.study.depth));
  rc.study.width_multiplier =
      cfg.get_double("study.width_multiplier", rc.study.width_multiplier);
  rc.study.skip =
      skip_from_string(cfg.get_string("study.skip", to_string(rc.study.skip)));
  rc.study.norm =
      norm_from_string(cfg.get_string("study.norm", to_string(rc.study.norm)));
  rc.study.act =
      act_from_string(cfg.get_string("study.act", to_string(rc.study.act)));
  rc.study.pool =
      pool_from_string(cfg.get_string("study.pool", to_string(rc.study.pool)));

  rc.data_source = cfg.get_string("data.source", rc.data_source);
  if (rc.data_source != "synthetic" && rc.data_source != "cifar10") {
    throw ConfigError("data.source must be synthetic|cifar10, got '" +
                      rc.data_source + "'");
  }
  rc.data_dir = cfg.get_string("data.dir", "");
  rc.synth.classes = static_cast<int>(
      cfg.get_int("data.synth.classes", rc.synth.classes));
  rc.synth.per_class = static_cast<int>(
      cfg.get_int("data.synth.per_class", rc.synth.per_class));
  rc.synth.channels = static_cast<int>(
      cfg.get_int("data.synth.channels", rc.synth.channels));
  rc.synth.height = static_cast<int>(
      cfg.get_int("data.synth.height", rc.synth.height));
  rc.synth.width = static_cast<int>(
      cfg.get_int("data.synth.width", rc.synth.width));
  rc.synth.test_per_class = static_cast<int>(
      cfg.get_int("data.synth.test_per_class", rc.synth.test_per_class));
  rc.synth.seed = static_cast<std::uint64_t>(
      cfg.get_int("data.synth.seed", static_cast<long long>(rc.synth.seed)));

  const std::string sched = cfg.get_string("opt.schedule", "exponential");
  if (sched == "exponential") {
    rc.lr.kind = LrScheduleKind::kPerEpochExponential;
  } else if (sched == "step") {
    rc.lr.kind = LrScheduleKind::kStepEveryK;
  } else {
    throw ConfigError("opt.schedule must be exponential|step, got '" + sched +
                      "'");
  }
  rc.lr.initial = cfg.get_double("opt.lr", rc.lr.initial);
  rc.lr.gamma = cfg.get_double("opt.gamma", rc.lr.gamma);
  rc.lr.step_every = static_cast<int>(
      cfg.get_int("opt.step_every", rc.lr.step_every));
  rc.momentum = cfg.get_double("opt.momentum", rc.momentum);
  rc.weight_decay = cfg.get_double("opt.weight_decay", rc.weight_decay);

  rc.dp.enabled = cfg.get_bool("dp.enabled", rc.dp.enabled);
  rc.dp.clip_norm = cfg.get_double("dp.clip_norm", rc.dp.clip_norm);
  rc.dp.sigma = cfg.get_double("dp.sigma", rc.dp.sigma);
  rc.dp.delta = cfg.get_double("dp.delta", rc.dp.delta);

  rc.early_stop.enabled =
      cfg.get_bool("early_stop.enabled", rc.early_stop.enabled);
  rc.early_stop.patience = static_cast<int>(
      cfg.get_int("early_stop.patience", rc.early_stop.patience));
  rc.early_stop.min_improvement = cfg.get_double(
      "early_stop.min_improvement", rc.early_stop.min_improvement);
  return rc;
}

SweepConfig sweep_config_from(const KvConfig& cfg) {
  SweepConfig sc;
  for (const std::string& tok :
       split_list(cfg.get_string("sweep.clip_values"), ',')) {
    sc.clip_values.push_back(parse_double_token(tok, "sweep.clip_values"));
  }
  for (const std::string& tok :
       split_list(cfg.get_string("sweep.epoch_values"), ',')) {
    sc.epoch_values.push_back(
        static_cast<int>(parse_int_token(tok, "sweep.epoch_values")));
  }
  sc.repeats = static_cast<int>(cfg.get_int("sweep.repeats", sc.repeats));
  sc.top_k = static_cast<int>(cfg.get_int("sweep.top_k", sc.top_k));
  for (const double c : sc.clip_values) {
    if (!(c > 0.0)) throw ConfigError("sweep.clip_values must be positive");
  }
  for (const int e : sc.epoch_values) {
    if (e < 1) throw ConfigError("sweep.epoch_values must be >= 1");
  }
  if (sc.repeats < 1) throw ConfigError("sweep.repeats must be >= 1");
  if (sc.top_k < 1) throw ConfigError("sweep.top_k must be >= 1");
  return sc;
}

DataBundle prepare_data(const RunConfig& rc, const std::string& data_dir_env) {
  DataBundle out;
  if (rc.data_source == "synthetic") {
    const Dataset full =
        make_synthetic(rc.synth.classes, rc.synth.per_class, rc.synth.channels,
                       rc.synth.height, rc.synth.width, rc.synth.seed);
    auto [train, val] = split_train_val(full, rc.val_fraction,
                                        mix_seed(rc.seed, kSplitStream, 0));
    out.train = std::move(train);
    out.val = std::move(val);
    if (rc.synth.test_per_class > 0) {
      out.test = make_synthetic(rc.synth.classes, rc.synth.test_per_class,
                                rc.synth.channels, rc.synth.height,
                                rc.synth.width,
                                mix_seed(rc.synth.seed, kTestStream, 0));
    }
  } else {
    std::string dir = rc.data_dir.empty() ? data_dir_env : rc.data_dir;
    if (dir.empty()) {
      throw ConfigError("cifar10 source needs data.dir or the data directory "
                        "environment variable");
    }
    TrainTest tt = load_cifar10(dir);
    auto [train, val] = split_train_val(tt.train, rc.val_fraction,
                                        mix_seed(rc.seed, kSplitStream, 0));
    out.train = std::move(train);
    out.val = std::move(val);
    out.test = std::move(tt.test);
  }
  if (rc.normalize) {
    out.stats = channel_stats(out.train);
    normalize_inplace(out.train, out.stats);
    normalize_inplace(out.val, out.stats);
    if (out.test.size() > 0) normalize_inplace(out.test, out.stats);
  }
  return out;
}

BuiltModel<float> build_from(const RunConfig& rc, int num_classes) {
  if (rc.model_kind == "smoothnet") {
    SmoothNetConfig c = rc.smoothnet;
    c.num_classes = num_classes;
    return build_smoothnet<float>(c);
  }
  StudyCNNConfig c = rc.study;
  c.num_classes = num_classes;
  return build_study_cnn<float>(c);
}

EvalResult evaluate(Model<float>& model, const Dataset& ds, int chunk) {
  if (ds.size() == 0) throw ConfigError("evaluate: empty dataset");
  if (chunk < 1) throw ConfigError("evaluate: chunk must be >= 1");
  const int n = ds.size();
  double loss_sum = 0.0;
  long long correct = 0;
  std::vector<int> idx;
  Tensor<float> x;
  std::vector<int> labels;
  for (int begin = 0; begin < n; begin += chunk) {
    const int end = std::min(begin + chunk, n);
    idx.resize(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
      idx[static_cast<std::size_t>(i - begin)] = i;
    }
    gather_batch(ds, idx, x, labels);
    const Tensor<float> logits = model.forward(nullptr, x);
    loss_sum += static_cast<double>(
                    cross_entropy<float>(nullptr, logits, labels).value()) *
                (end - begin);
    const std::vector<int> pred = argmax_rows(logits);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (pred[i] == labels[i]) ++correct;
    }
  }
  EvalResult r;
  r.loss = loss_sum / n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

RunRecord run_training(const RunConfig& rc, const DataBundle& data) {
  if (rc.epochs < 0) throw ConfigError("run.epochs must be >= 0");
  if (rc.eval_chunk < 1) throw ConfigError("run.eval_chunk must be >= 1");
  if (!(rc.divergence_threshold > 0.0)) {
    throw ConfigError("run.divergence_threshold must be positive");
  }
  if (data.train.size() == 0) throw ConfigError("training split is empty");
  if (data.val.size() == 0) throw ConfigError("validation split is empty");
  const Dataset& train = data.train;

  // The model's declared geometry must match the data; silent reshapes
  // would invalidate the fingerprint and the privacy metadata.
  const int want_c = rc.model_kind == "study" ? rc.study.in_channels
                                              : rc.smoothnet.in_channels;
  const int want_h =
      rc.model_kind == "study" ? rc.study.input_h : rc.smoothnet.input_h;
  const int want_w =
      rc.model_kind == "study" ? rc.study.input_w : rc.smoothnet.input_w;
  const int want_k = rc.model_kind == "study" ? rc.study.num_classes
                                              : rc.smoothnet.num_classes;
  if (want_c != train.channels || want_h != train.height ||
      want_w != train.width) {
    throw ConfigError("model.input declares " + std::to_string(want_c) + "x" +
                      std::to_string(want_h) + "x" + std::to_string(want_w) +
                      " but the dataset provides " +
                      std::to_string(train.channels) + "x" +
                      std::to_string(train.height) + "x" +
                      std::to_string(train.width));
  }
  if (want_k != train.num_classes) {
    throw ConfigError("model.classes = " + std::to_string(want_k) +
                      " but the dataset has " +
                      std::to_string(train.num_classes) + " classes");
  }
  if (rc.dp.enabled) {
    if (!(rc.dp.sigma > 0.0)) {
      throw ConfigError("dp.sigma must be positive when dp.enabled");
    }
    if (!(rc.dp.clip_norm > 0.0)) {
      throw ConfigError("dp.clip_norm must be positive when dp.enabled");
    }
    if (rc.sampling != SamplingMode::kPoisson) {
      throw ConfigError("differentially private training requires "
                        "run.sampling = poisson; the accountant's "
                        "amplification analysis assumes Poisson lots");
    }
  }

  BuiltModel<float> built = build_from(rc, train.num_classes);
  const std::vector<Parameter<float>*> params = built.model.parameters();
  built.model.init(mix_seed(rc.seed, kInitStream, 0));

  OptimizerState<float> opt;
  opt.momentum = static_cast<float>(rc.momentum);
  opt.weight_decay = static_cast<float>(rc.weight_decay);

  TrainState ts;
  if (!rc.resume_from.empty()) {
    ts = resume_from_checkpoint(rc.resume_from, built, params, opt);
  }
  EarlyStopping stopper(rc.early_stop.patience, rc.early_stop.min_improvement);
  stopper.restore(ts.es_best, ts.es_bad);

  LotSampler sampler(rc.sampling, train.size(), rc.lot_size, rc.seed);
  PrivacyParams priv;
  priv.sampling_rate = sampler.sampling_rate();
  priv.sigma = rc.dp.sigma;
  priv.delta = rc.dp.delta;

  RunRecord rec;
  rec.run_id = rc.run_id;
  rec.best_val_loss = ts.best_val_loss;
  rec.best_val_acc = ts.best_val_acc;
  rec.best_epoch = ts.best_epoch;

  // Resolved-config snapshot, written before training so even failed runs
  // leave an audit trail.
  {
    KvConfig& r = rec.resolved;
    r.set("run.id", rc.run_id);
    if (!rc.out_dir.empty()) r.set("run.out_dir", rc.out_dir);
    if (!rc.resume_from.empty()) r.set("run.resume", rc.resume_from);
    r.set("run.seed", std::to_string(rc.seed));
    r.set("run.epochs", std::to_string(rc.epochs));
    r.set("run.lot_size", std::to_string(rc.lot_size));
    r.set("run.sampling", to_string(rc.sampling));
    r.set("run.val_fraction", fmt_exact(rc.val_fraction));
    r.set("run.normalize", rc.normalize ? "true" : "false");
    r.set("run.eval_chunk", std::to_string(rc.eval_chunk));
    r.set("run.divergence_threshold", fmt_exact(rc.divergence_threshold));
    r.set("model.kind", rc.model_kind);
    r.set("model.classes", std::to_string(want_k));
    r.set("model.input", std::to_string(want_c) + "x" +
                             std::to_string(want_h) + "x" +
                             std::to_string(want_w));
    if (rc.model_kind == "smoothnet") {
      r.set("smoothnet.stem", std::to_string(rc.smoothnet.stem_channels));
      r.set("smoothnet.stages", stages_to_string(rc.smoothnet.stages));
      r.set("smoothnet.norm_groups",
            std::to_string(rc.smoothnet.norm_groups));
      r.set("smoothnet.block_max_pool",
            rc.smoothnet.block_max_pool ? "true" : "false");
      r.set("smoothnet.head_features",
            std::to_string(rc.smoothnet.head_features));
      std::string widths;
      for (std::size_t i = 0; i < rc.smoothnet.classifier_widths.size(); ++i) {
        if (i) widths += ",";
        widths += std::to_string(rc.smoothnet.classifier_widths[i]);
      }
      r.set("smoothnet.classifier", widths);
    } else {
      r.set("study.depth", std::to_string(rc.study.depth));
      r.set("study.width_multiplier", fmt_exact(rc.study.width_multiplier));
      r.set("study.skip", to_string(rc.study.skip));
      r.set("study.norm", to_string(rc.study.norm));
      r.set("study.act", to_string(rc.study.act));
      r.set("study.pool", to_string(rc.study.pool));
    }
    r.set("data.source", rc.data_source);
    if (!rc.data_dir.empty()) r.set("data.dir", rc.data_dir);
    if (rc.data_source == "synthetic") {
      r.set("data.synth.classes", std::to_string(rc.synth.classes));
      r.set("data.synth.per_class", std::to_string(rc.synth.per_class));
      r.set("data.synth.channels", std::to_string(rc.synth.channels));
      r.set("data.synth.height", std::to_string(rc.synth.height));
      r.set("data.synth.width", std::to_string(rc.synth.width));
      r.set("data.synth.test_per_class",
            std::to_string(rc.synth.test_per_class));
      r.set("data.synth.seed", std::to_string(rc.synth.seed));
    }
    r.set("opt.schedule", rc.lr.kind == LrScheduleKind::kPerEpochExponential
                              ? "exponential"
                              : "step");
    r.set("opt.lr", fmt_exact(rc.lr.initial));
    r.set("opt.gamma", fmt_exact(rc.lr.gamma));
    r.set("opt.step_every", std::to_string(rc.lr.step_every));
    r.set("opt.momentum", fmt_exact(rc.momentum));
    r.set("opt.weight_decay", fmt_exact(rc.weight_decay));
    r.set("dp.enabled", rc.dp.enabled ? "true" : "false");
    r.set("dp.clip_norm", fmt_exact(rc.dp.clip_norm));
    r.set("dp.sigma", fmt_exact(rc.dp.sigma));
    r.set("dp.delta", fmt_exact(rc.dp.delta));
    r.set("early_stop.enabled", rc.early_stop.enabled ? "true" : "false");
    r.set("early_stop.patience", std::to_string(rc.early_stop.patience));
    r.set("early_stop.min_improvement",
          fmt_exact(rc.early_stop.min_improvement));
    r.set("meta.train_size", std::to_string(train.size()));
    r.set("meta.val_size", std::to_string(data.val.size()));
    r.set("meta.test_size", std::to_string(data.test.size()));
    r.set("meta.sampling_rate", fmt_exact(sampler.sampling_rate()));
    r.set("meta.steps_per_epoch", std::to_string(sampler.steps_per_epoch()));
    r.set("meta.param_count", std::to_string(count_params(built.model)));
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(built.fingerprint));
    r.set("meta.fingerprint", fp);
    r.set("meta.caveat.search_privacy",
          "hyperparameter search is not charged to the privacy budget");
    r.set("meta.caveat.accounting_scope",
          "epsilon covers the training steps of this run only");
    if (rc.normalize) {
      for (std::size_t c = 0; c < data.stats.mean.size(); ++c) {
        r.set("meta.norm.mean." + std::to_string(c),
              fmt_exact(data.stats.mean[c]));
        r.set("meta.norm.std." + std::to_string(c),
              fmt_exact(data.stats.stddev[c]));
      }
    }
  }

  if (!rc.out_dir.empty()) {
    std::filesystem::create_directories(rc.out_dir);
  }

  const std::size_t dim = flat_param_dim(params);
  rec.status = RunStatus::kCompleted;
  std::vector<int> lot;
  Tensor<float> x;
  std::vector<int> labels;

  for (int epoch = ts.next_epoch; epoch < rc.epochs; ++epoch) {
    const double lr = lr_at(rc.lr, epoch);
    sampler.start_epoch(epoch);
    std::mt19937_64 noise_rng(mix_seed(rc.seed, kNoiseStream,
                                       static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    long long samples_seen = 0;
    bool aborted = false;

    while (sampler.next_lot(lot)) {
      double step_loss = std::numeric_limits<double>::quiet_NaN();
      bool have_loss = false;
      try {
        std::vector<float> grad;
        if (rc.dp.enabled) {
          PerSampleGrads<float> psg;
          if (!lot.empty()) {
            gather_batch(train, lot, x, labels);
            psg = per_sample_gradients(built.model, x, labels);
            clip_per_sample(psg, static_cast<float>(rc.dp.clip_norm));
            double lot_loss = 0.0;
            for (float l : psg.losses) lot_loss += l;
            step_loss = lot_loss / static_cast<double>(psg.losses.size());
            have_loss = true;
            loss_sum += lot_loss;
            samples_seen += static_cast<long long>(psg.losses.size());
          }
          // An empty Poisson lot is still a mechanism invocation: the
          // noise is released and the step counts toward the budget.
          grad = noisy_aggregate(psg, dim, static_cast<float>(rc.dp.clip_norm),
                                 static_cast<float>(rc.dp.sigma),
                                 static_cast<float>(rc.lot_size), noise_rng);
        } else {
          gather_batch(train, lot, x, labels);
          auto [g, loss] = batch_gradient(built.model, x, labels);
          grad = std::move(g);
          step_loss = loss;
          have_loss = true;
          loss_sum += static_cast<double>(loss) *
                      static_cast<double>(labels.size());
          samples_seen += static_cast<long long>(labels.size());
        }
        dp_sgd_step(params, grad, opt, static_cast<float>(lr));
      } catch (const NumericError& e) {
        rec.status = RunStatus::kError;
        rec.message = e.what();
        aborted = true;
        break;
      }
      ++ts.total_steps;
      if (have_loss) {
        if (std::isnan(step_loss)) {
          rec.status = RunStatus::kError;
          rec.message = "non-finite training loss";
          aborted = true;
          break;
        }
        if (step_loss > rc.divergence_threshold) {
          rec.status = RunStatus::kDiverged;
          rec.message = "train step loss " + fmt_g(step_loss) +
                        " exceeded the divergence threshold " +
                        fmt_g(rc.divergence_threshold) + " at epoch " +
                        std::to_string(epoch) + ", step " +
                        std::to_string(ts.total_steps);
          aborted = true;
          break;
        }
      }
    }
    if (aborted) break;

    EvalResult ev;
    try {
      ev = evaluate(built.model, data.val, rc.eval_chunk);
    } catch (const NumericError& e) {
      rec.status = RunStatus::kError;
      rec.message = e.what();
      break;
    }

    EpochRow row;
    row.epoch = epoch;
    row.step = ts.total_steps;
    row.train_loss =
        samples_seen > 0 ? loss_sum / static_cast<double>(samples_seen) : 0.0;
    row.val_loss = ev.loss;
    row.val_acc = ev.accuracy;
    row.lr = lr;
    if (rc.dp.enabled) {
      priv.steps = ts.total_steps;
      row.epsilon = compute_epsilon(priv).epsilon;
    } else {
      row.epsilon = kInf;
    }
    rec.rows.push_back(row);

    ts.next_epoch = epoch + 1;
    if (ev.accuracy > ts.best_val_acc) ts.best_val_acc = ev.accuracy;
    const bool is_best = ev.loss < ts.best_val_loss;
    if (is_best) {
      ts.best_val_loss = ev.loss;
      ts.best_epoch = epoch;
    }
    const bool stop =
        rc.early_stop.enabled && stopper.observe(ev.loss);
    ts.es_best = stopper.best();
    ts.es_bad = stopper.bad_epochs();

    if (!rc.out_dir.empty()) {
      save_train_checkpoint(rc.out_dir + "/last.ckpt", built, params, opt, ts);
      if (is_best) {
        save_train_checkpoint(rc.out_dir + "/best.ckpt", built, params, opt,
                              ts);
      }
    }
    if (stop) {
      rec.status = RunStatus::kEarlyStopped;
      break;
    }
  }

  rec.total_steps = ts.total_steps;
  rec.best_val_loss = ts.best_val_loss;
  rec.best_val_acc = ts.best_val_acc;
  rec.best_epoch = ts.best_epoch;
  if (rc.dp.enabled) {
    priv.steps = ts.total_steps;
    rec.final_epsilon = compute_epsilon(priv).epsilon;
  } else {
    rec.final_epsilon = kInf;
  }

  if (rec.status == RunStatus::kCompleted ||
      rec.status == RunStatus::kEarlyStopped) {
    try {
      rec.final_train_acc =
          evaluate(built.model, train, rc.eval_chunk).accuracy;
      if (data.test.size() > 0) {
        rec.test_acc = evaluate(built.model, data.test, rc.eval_chunk).accuracy;
      }
    } catch (const NumericError& e) {
      rec.status = RunStatus::kError;
      rec.message = e.what();
    }
  }

  if (!rc.out_dir.empty()) {
    // Epochs may be zero or training may have aborted before the first
    // save; last.ckpt must still exist for audits and resumes.
    save_train_checkpoint(rc.out_dir + "/last.ckpt", built, params, opt, ts);
    std::ofstream metrics(rc.out_dir + "/metrics.csv",
                          std::ios::binary | std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + rc.out_dir + "/metrics.csv");
    metrics << run_record_csv(rec, rc);
    std::ofstream resolved(rc.out_dir + "/resolved.cfg",
                           std::ios::binary | std::ios::trunc);
    if (!resolved) {
      throw IoError("cannot write " + rc.out_dir + "/resolved.cfg");
    }
    resolved << rec.resolved.serialize();
  }
  return rec;
}

std::string run_record_csv(const RunRecord& rec, const RunConfig& rc) {
  std::string out =
      "run_id,epoch,step,train_loss,val_loss,val_acc,lr,epsilon,clip_norm,"
      "sigma\n";
  const double clip = rc.dp.enabled ? rc.dp.clip_norm : 0.0;
  const double sigma = rc.dp.enabled ? rc.dp.sigma : 0.0;
  for (const EpochRow& row : rec.rows) {
    out += rec.run_id;
    out += "," + std::to_string(row.epoch);
    out += "," + std::to_string(row.step);
    out += "," + fmt_g(row.train_loss);
    out += "," + fmt_g(row.val_loss);
    out += "," + fmt_g(row.val_acc);
    out += "," + fmt_g(row.lr);
    out += "," + fmt_g(row.epsilon);
    out += "," + fmt_g(clip);
    out += "," + fmt_g(sigma);
    out += "\n";
  }
  return out;
}

SweepOutcome run_sweep(const RunConfig& base, const SweepConfig& sc,
                       const DataBundle& data) {
  if (sc.clip_values.empty() || sc.epoch_values.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }
  for (double c : sc.clip_values) {
    if (!(c > 0.0)) throw ConfigError("sweep clip values must be positive");
  }
  for (int e : sc.epoch_values) {
    if (e < 1) throw ConfigError("sweep epoch values must be >= 1");
  }
  if (sc.repeats < 1) throw ConfigError("sweep.repeats must be >= 1");
  if (sc.top_k < 1) throw ConfigError("sweep.top_k must be >= 1");

  SweepOutcome out;
  struct SummaryRow {
    std::string run_id;
    double clip;
    int epochs;
    int repeat;
    RunStatus status;
    double best_val_acc;
    double final_epsilon;
  };
  std::vector<SummaryRow> summary;

  std::uint64_t point = 0;
  for (double clip : sc.clip_values) {
    for (int epochs : sc.epoch_values) {
      for (int repeat = 0; repeat < sc.repeats; ++repeat) {
        RunConfig rc = base;
        rc.dp.clip_norm = clip;
        rc.epochs = epochs;
        rc.seed = mix_seed(base.seed, point,
                           static_cast<std::uint64_t>(repeat));
        rc.run_id = base.run_id + "-c" + fmt_g(clip) + "-e" +
                    std::to_string(epochs) + "-r" + std::to_string(repeat);
        rc.out_dir =
            base.out_dir.empty() ? "" : base.out_dir + "/" + rc.run_id;
        RunRecord rec;
        try {
          rec = run_training(rc, data);
        } catch (const std::exception& e) {
          rec.run_id = rc.run_id;
          rec.status = RunStatus::kError;
          rec.message = e.what();
        }
        if (rec.status == RunStatus::kCompleted ||
            rec.status == RunStatus::kEarlyStopped) {
          summary.push_back({rec.run_id, clip, epochs, repeat, rec.status,
                             rec.best_val_acc, rec.final_epsilon});
        }
        out.records.push_back(std::move(rec));
      }
      ++point;
    }
  }

  std::sort(summary.begin(), summary.end(),
            [](const SummaryRow& a, const SummaryRow& b) {
              if (a.best_val_acc != b.best_val_acc) {
                return a.best_val_acc > b.best_val_acc;
              }
              return a.run_id < b.run_id;
            });
  std::string csv =
      "run_id,clip_norm,epochs,repeat,status,best_val_acc,final_epsilon\n";
  const std::size_t keep =
      std::min(summary.size(), static_cast<std::size_t>(sc.top_k));
  for (std::size_t i = 0; i < keep; ++i) {
    const SummaryRow& s = summary[i];
    csv += s.run_id + "," + fmt_g(s.clip) + "," + std::to_string(s.epochs) +
           "," + std::to_string(s.repeat) + "," + to_string(s.status) + "," +
           fmt_g(s.best_val_acc) + "," + fmt_g(s.final_epsilon) + "\n";
  }
  out.summary_csv = std::move(csv);
  if (!base.out_dir.empty()) {
    std::filesystem::create_directories(base.out_dir);
    std::ofstream f(base.out_dir + "/sweep_summary.csv",
                    std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write sweep summary CSV");
    f << out.summary_csv;
  }
  return out;
}

}  // namespace smoothnet
