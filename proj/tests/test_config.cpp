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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "smoothnet/harness.hpp"

using namespace smoothnet;

TEST_CASE("parsing handles comments, blanks, and whitespace") {
  const KvConfig cfg = KvConfig::parse_string(
      "# leading comment\n"
      "\n"
      "  run.id = alpha  # trailing comment\n"
      "opt.lr=0.05\n"
      "   dp.enabled   =   true\n");
  CHECK(cfg.get_string("run.id") == "alpha");
  CHECK(cfg.get_double("opt.lr") == 0.05);
  CHECK(cfg.get_bool("dp.enabled"));
  CHECK(cfg.entries().size() == 3);
}

TEST_CASE("parse errors carry origin and line number") {
  CHECK_THROWS_WITH_AS(KvConfig::parse_string("a.b = 1\na.b = 2\n", "f.cfg"),
                       doctest::Contains("f.cfg:2"), ConfigError);
  CHECK_THROWS_WITH_AS(KvConfig::parse_string("just words\n", "f.cfg"),
                       doctest::Contains("f.cfg:1"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("bad key! = 1\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("empty.value =\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("empty.value = # comment\n"),
                  ConfigError);
}

TEST_CASE("typed getters validate their values") {
  const KvConfig cfg = KvConfig::parse_string(
      "i = 42\nd = 2.5\nb = false\ns = text\nnot_int = 4x\nnot_num = ..\n");
  CHECK(cfg.get_int("i") == 42);
  CHECK(cfg.get_double("d") == 2.5);
  CHECK(cfg.get_double("i") == 42.0);
  CHECK_FALSE(cfg.get_bool("b"));
  CHECK(cfg.get_string("s") == "text");
  CHECK_THROWS_AS(cfg.get_int("not_int"), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("not_num"), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("s"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("absent"), ConfigError);
  CHECK(cfg.get_int("absent", 9) == 9);
  CHECK(cfg.get_double("absent", 1.5) == 1.5);
  CHECK(cfg.get_bool("absent", true));
  CHECK(cfg.get_string("absent", "dflt") == "dflt");
  CHECK(cfg.has("i"));
  CHECK_FALSE(cfg.has("absent"));
}

TEST_CASE("serialization round trips through the parser") {
  KvConfig cfg;
  cfg.set("z.last", "3");
  cfg.set("a.first", "hello world");
  cfg.set("m.mid", "0.125");
  const std::string text = cfg.serialize();
  // Sorted by key, one per line.
  CHECK(text ==
        "a.first = hello world\n"
        "m.mid = 0.125\n"
        "z.last = 3\n");
  const KvConfig back = KvConfig::parse_string(text);
  CHECK(back.entries() == cfg.entries());
}

TEST_CASE("set rejects values the parser could not read back") {
  KvConfig cfg;
  CHECK_THROWS_AS(cfg.set("k", ""), ConfigError);
  CHECK_THROWS_AS(cfg.set("k", "a\nb"), ConfigError);
  CHECK_THROWS_AS(cfg.set("k", "has # hash"), ConfigError);
  CHECK_THROWS_AS(cfg.set("bad key", "v"), ConfigError);
}

TEST_CASE("file parsing reports the path") {
  const std::string path = "/tmp/smoothnet_cfg_test.cfg";
  {
    std::ofstream f(path);
    f << "run.id = from_file\nbroken line\n";
  }
  CHECK_THROWS_WITH_AS(KvConfig::parse_file(path),
                       doctest::Contains(path.c_str()), ConfigError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(KvConfig::parse_file("/tmp/smoothnet_no_such.cfg"), IoError);
}

TEST_CASE("run configs map every documented key") {
  const KvConfig cfg = KvConfig::parse_string(
      "run.id = mapped\n"
      "run.out_dir = /tmp/x\n"
      "run.seed = 123\n"
      "run.epochs = 7\n"
      "run.lot_size = 96\n"
      "run.sampling = poisson\n"
      "run.val_fraction = 0.2\n"
      "run.normalize = false\n"
      "run.eval_chunk = 64\n"
      "run.divergence_threshold = 500\n"
      "model.kind = smoothnet\n"
      "model.classes = 4\n"
      "model.input = 3x16x16\n"
      "smoothnet.stem = 16\n"
      "smoothnet.stages = 2x16,3x32\n"
      "smoothnet.norm_groups = 8\n"
      "smoothnet.block_max_pool = true\n"
      "smoothnet.head_features = 320\n"
      "smoothnet.classifier = 128,64\n"
      "data.source = synthetic\n"
      "data.synth.classes = 4\n"
      "data.synth.per_class = 100\n"
      "data.synth.channels = 3\n"
      "data.synth.height = 16\n"
      "data.synth.width = 16\n"
      "data.synth.test_per_class = 25\n"
      "data.synth.seed = 9\n"
      "opt.schedule = step\n"
      "opt.lr = 0.03\n"
      "opt.gamma = 0.9\n"
      "opt.step_every = 5\n"
      "opt.momentum = 0.85\n"
      "opt.weight_decay = 0.0001\n"
      "dp.enabled = true\n"
      "dp.clip_norm = 1.5\n"
      "dp.sigma = 0.9\n"
      "dp.delta = 1e-6\n"
      "early_stop.enabled = true\n"
      "early_stop.patience = 8\n"
      "early_stop.min_improvement = 0.001\n");
  const RunConfig rc = run_config_from(cfg);
  CHECK(rc.run_id == "mapped");
  CHECK(rc.out_dir == "/tmp/x");
  CHECK(rc.seed == 123);
  CHECK(rc.epochs == 7);
  CHECK(rc.lot_size == 96);
  CHECK(rc.sampling == SamplingMode::kPoisson);
  CHECK(rc.val_fraction == 0.2);
  CHECK_FALSE(rc.normalize);
  CHECK(rc.eval_chunk == 64);
  CHECK(rc.divergence_threshold == 500.0);
  CHECK(rc.model_kind == "smoothnet");
  CHECK(rc.smoothnet.num_classes == 4);
  CHECK(rc.smoothnet.in_channels == 3);
  CHECK(rc.smoothnet.input_h == 16);
  CHECK(rc.smoothnet.input_w == 16);
  CHECK(rc.smoothnet.stem_channels == 16);
  REQUIRE(rc.smoothnet.stages.size() == 2);
  CHECK(rc.smoothnet.stages[0].num_blocks == 2);
  CHECK(rc.smoothnet.stages[0].growth == 16);
  CHECK(rc.smoothnet.stages[1].num_blocks == 3);
  CHECK(rc.smoothnet.stages[1].growth == 32);
  CHECK(rc.smoothnet.norm_groups == 8);
  CHECK(rc.smoothnet.block_max_pool);
  CHECK(rc.smoothnet.head_features == 320);
  REQUIRE(rc.smoothnet.classifier_widths.size() == 2);
  CHECK(rc.smoothnet.classifier_widths[0] == 128);
  CHECK(rc.smoothnet.classifier_widths[1] == 64);
  CHECK(rc.data_source == "synthetic");
  CHECK(rc.synth.classes == 4);
  CHECK(rc.synth.per_class == 100);
  CHECK(rc.synth.channels == 3);
  CHECK(rc.synth.height == 16);
  CHECK(rc.synth.width == 16);
  CHECK(rc.synth.test_per_class == 25);
  CHECK(rc.synth.seed == 9);
  CHECK(rc.lr.kind == LrScheduleKind::kStepEveryK);
  CHECK(rc.lr.initial == 0.03);
  CHECK(rc.lr.gamma == 0.9);
  CHECK(rc.lr.step_every == 5);
  CHECK(rc.momentum == 0.85);
  CHECK(rc.weight_decay == 0.0001);
  CHECK(rc.dp.enabled);
  CHECK(rc.dp.clip_norm == 1.5);
  CHECK(rc.dp.sigma == 0.9);
  CHECK(rc.dp.delta == 1e-6);
  CHECK(rc.early_stop.enabled);
  CHECK(rc.early_stop.patience == 8);
  CHECK(rc.early_stop.min_improvement == 0.001);
}

TEST_CASE("defaults survive an empty config") {
  const RunConfig rc = run_config_from(KvConfig::parse_string(""));
  CHECK(rc.run_id == "run");
  CHECK(rc.model_kind == "smoothnet");
  CHECK(rc.epochs == 15);
  CHECK(rc.sampling == SamplingMode::kShuffleFixed);
  CHECK(rc.lr.kind == LrScheduleKind::kPerEpochExponential);
  CHECK_FALSE(rc.dp.enabled);
  CHECK(rc.early_stop.enabled);
  CHECK(rc.divergence_threshold == 1000.0);
}

TEST_CASE("unknown keys are rejected, resolved metadata is not") {
  CHECK_THROWS_WITH_AS(
      run_config_from(KvConfig::parse_string("run.lr = 0.1\n")),
      doctest::Contains("unknown config key"), ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("opt.lr_schedule = step\n")),
      ConfigError);
  // meta.* keys appear in resolved configs this tool writes; feeding one
  // back must not error.
  CHECK_NOTHROW(run_config_from(
      KvConfig::parse_string("meta.param_count = 5\nrun.epochs = 1\n")));
}

TEST_CASE("model geometry strings are validated") {
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("model.input = 3x16\n")),
      ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("model.input = axbxc\n")),
      ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("smoothnet.stages = 5y32\n")),
      ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("smoothnet.classifier = 12,\n")),
      ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("run.sampling = sometimes\n")),
      ConfigError);
  CHECK_THROWS_AS(
      run_config_from(KvConfig::parse_string("opt.schedule = cosine\n")),
      ConfigError);
}

TEST_CASE("study model keys configure the ablation grid") {
  const KvConfig cfg = KvConfig::parse_string(
      "model.kind = study\n"
      "model.classes = 4\n"
      "model.input = 3x16x16\n"
      "study.depth = 3\n"
      "study.width_multiplier = 2\n"
      "study.skip = residual\n"
      "study.norm = group8\n"
      "study.act = relu\n"
      "study.pool = max\n");
  const RunConfig rc = run_config_from(cfg);
  CHECK(rc.model_kind == "study");
  CHECK(rc.study.num_classes == 4);
  CHECK(rc.study.in_channels == 3);
  CHECK(rc.study.depth == 3);
  CHECK(rc.study.width_multiplier == 2.0);
  CHECK(rc.study.skip == SkipKind::kResidual);
  CHECK(rc.study.norm == NormKind::kGroup8);
  CHECK(rc.study.act == ActKind::kRelu);
  CHECK(rc.study.pool == PoolKind::kMax);
}

TEST_CASE("sweep configs parse lists and counts") {
  const KvConfig cfg = KvConfig::parse_string(
      "sweep.clip_values = 0.5, 1, 2\n"
      "sweep.epoch_values = 5,10\n"
      "sweep.repeats = 3\n"
      "sweep.top_k = 4\n");
  const SweepConfig sc = sweep_config_from(cfg);
  REQUIRE(sc.clip_values.size() == 3);
  CHECK(sc.clip_values[0] == 0.5);
  CHECK(sc.clip_values[1] == 1.0);
  CHECK(sc.clip_values[2] == 2.0);
  REQUIRE(sc.epoch_values.size() == 2);
  CHECK(sc.epoch_values[0] == 5);
  CHECK(sc.epoch_values[1] == 10);
  CHECK(sc.repeats == 3);
  CHECK(sc.top_k == 4);
}

TEST_CASE("sweep configs demand complete positive grids") {
  CHECK_THROWS_AS(sweep_config_from(KvConfig::parse_string("")), ConfigError);
  CHECK_THROWS_AS(sweep_config_from(KvConfig::parse_string(
                      "sweep.clip_values = 1\nsweep.epoch_values = 0\n")),
                  ConfigError);
  CHECK_THROWS_AS(sweep_config_from(KvConfig::parse_string(
                      "sweep.clip_values = -1\nsweep.epoch_values = 5\n")),
                  ConfigError);
  CHECK_THROWS_AS(
      sweep_config_from(KvConfig::parse_string(
          "sweep.clip_values = 1\nsweep.epoch_values = 5\nsweep.repeats = "
          "0\n")),
      ConfigError);
}
