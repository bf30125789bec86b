// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdet/cli/commands.hpp"
#include "sdet/common/error.hpp"
#include "sdet/data/synth.hpp"

using namespace sdet;
using namespace sdet::cli;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sdet_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Two train and two test scenes of the default preset.
fs::path tiny_dataset(const std::string& name) {
  const auto root = temp_dir(name);
  SynthOptions s;
  s.out = (root / "data").string();
  s.seed = 3;
  s.train = 2;
  s.test = 2;
  std::ostringstream log;
  cmd_synth(s, log);
  return root;
}

TrainOptions tiny_train(const fs::path& root, int steps) {
  TrainOptions t;
  t.data = (root / "data").string();
  t.checkpoint = (root / "model.ckpt").string();
  t.log_path = (root / "log.jsonl").string();
  t.overrides = {"train.steps=" + std::to_string(steps), "train.batch_size=2", "train.seed=11"};
  t.deterministic = true;
  t.progress_every = 0;
  return t;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("train writes one log record per step and a loadable checkpoint") {
    const auto root = tiny_dataset("train");
    std::ostringstream log;
    const auto recs = cmd_train(tiny_train(root, 5), log);
    REQUIRE(recs.size() == 5);
    const auto lines = read_lines(root / "log.jsonl");
    REQUIRE(lines.size() == 5);
    for (int i = 0; i < 5; ++i) {
      const auto j = nlohmann::json::parse(lines[i]);
      CHECK(j.at("step").get<int>() == i + 1);
      CHECK(std::isfinite(j.at("loss").get<double>()));
    }
    nn::AdamW<float> opt(nn::AdamWConfig{});
    const auto model = load_model((root / "model.ckpt").string(), &opt);
    CHECK(opt.step_count() == 5);
    CHECK(model->config().num_classes == 3);
    CHECK(log.str().find("# effective config") != std::string::npos);
  }

  TEST_CASE("resumed run continues the step counter and matches an uninterrupted run") {
    const auto root = tiny_dataset("resume");
    std::ostringstream log;
    // Milestones are fractions of train.steps, so keep the rate flat to make
    // a 3-step run a true prefix of a 5-step run.
    auto flat = [&](int steps) {
      auto t = tiny_train(root, steps);
      t.overrides.push_back("train.lr_factor=1");
      return t;
    };
    const auto full = cmd_train(flat(5), log);

    auto first = flat(3);
    first.checkpoint = (root / "part.ckpt").string();
    first.log_path = (root / "part.jsonl").string();
    cmd_train(first, log);
    auto second = flat(5);
    second.checkpoint = (root / "resumed.ckpt").string();
    second.log_path = first.log_path;
    second.resume = first.checkpoint;
    const auto rest = cmd_train(second, log);
    REQUIRE(rest.size() == 2);
    CHECK(rest[0].step == 4);
    CHECK(rest[1].step == 5);
    CHECK(read_lines(root / "part.jsonl").size() == 5);
    for (int i = 0; i < 2; ++i) {
      CHECK(rest[i].batch_seed == full[i + 3].batch_seed);
      CHECK(rest[i].loss.total == full[i + 3].loss.total);
    }
  }

  TEST_CASE("deterministic training repeats bit for bit") {
    const auto root = tiny_dataset("det");
    std::ostringstream log;
    cmd_train(tiny_train(root, 4), log);
    const auto a = read_lines(root / "log.jsonl");
    cmd_train(tiny_train(root, 4), log);
    const auto b = read_lines(root / "log.jsonl");
    CHECK(a == b);
  }

  TEST_CASE("deterministic mode without a seed is a usage error") {
    const auto root = tiny_dataset("noseed");
    auto t = tiny_train(root, 1);
    t.overrides = {"train.steps=1"};
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_train(t, log), UsageError);
  }

  TEST_CASE("eval of inferred dumps equals in-process eval") {
    const auto root = tiny_dataset("infer");
    std::ostringstream log;
    cmd_train(tiny_train(root, 6), log);
    InferOptions io;
    io.data = (root / "data").string();
    io.checkpoint = (root / "model.ckpt").string();
    io.out = (root / "dets").string();
    cmd_infer(io, log);
    EvalOptions from_dumps;
    from_dumps.data = io.data;
    from_dumps.detections = io.out;
    const auto a = cmd_eval(from_dumps, log);
    EvalOptions from_ckpt;
    from_ckpt.data = io.data;
    from_ckpt.checkpoints = {io.checkpoint};
    const auto b = cmd_eval(from_ckpt, log);
    REQUIRE(a.trials.size() == 1);
    REQUIRE(b.trials.size() == 1);
    // Dumps are written with %.17g so scores and boxes survive exactly.
    CHECK(a.trials[0].result.map == b.trials[0].result.map);
    for (std::size_t t = 0; t < a.trials[0].result.ap.size(); ++t)
      for (std::size_t c = 0; c < a.trials[0].result.ap[t].size(); ++c) {
        const double x = a.trials[0].result.ap[t][c], y = b.trials[0].result.ap[t][c];
        CHECK(((std::isnan(x) && std::isnan(y)) || x == y));
      }
  }

  TEST_CASE("untrained model scores zero mAP") {
    const auto root = tiny_dataset("untrained");
    detector::ModelConfig mc;
    detector::Detector model(mc);
    const auto scenes = data::load_split((root / "data").string(), "test");
    const auto r = evaluate(model, scenes);
    CHECK(r.map[0] == 0.0);
  }

  TEST_CASE("bench reports parameter count and repeatable structure") {
    detector::ModelConfig mc;
    detector::Detector model(mc);
    const auto scenes = data::synth_scenes(5, 2, data::synth_preset("geometric3"));
    const auto a = run_bench(model, scenes, 1);
    const auto b = run_bench(model, scenes, 1);
    CHECK(a.params == model.count_params());
    CHECK(a.params_millions == doctest::Approx(static_cast<double>(model.count_params()) / 1e6).epsilon(1e-15));
    CHECK(a.params == b.params);
    CHECK(a.peak_memory_megabytes > 0.0);
    CHECK(a.peak_memory_megabytes == b.peak_memory_megabytes);
    CHECK(a.scenes_per_second > 0.0);
    for (const char* k : {"voxelize", "network", "decode"}) CHECK(a.stage_ms.count(k) == 1);

    auto no_l1 = mc;
    auto with_l1 = mc;
    with_l1.use_head_level1 = true;
    no_l1.use_head_level1 = false;
    CHECK(detector::Detector(no_l1).count_params() < detector::Detector(with_l1).count_params());
  }

  TEST_CASE("config precedence and unknown keys") {
    const auto root = temp_dir("config");
    const auto file = (root / "cfg.txt").string();
    {
      std::ofstream out(file);
      out << "train.lr = 0.01\ntrain.steps = 50\n";
    }
    const auto kv = merge_config(file, {"train.steps=7"});
    const auto tc = TrainConfig::from_kv(kv);
    CHECK(tc.lr == 0.01);
    CHECK(tc.steps == 7);
    CHECK(tc.batch_size == TrainConfig{}.batch_size);
    CHECK_THROWS_AS(merge_config(file, {"train.stpes=7"}), ConfigError);
    CHECK_THROWS_AS(merge_config(file, {"novalue"}), UsageError);
    CHECK_THROWS_AS(merge_config((root / "missing.txt").string(), {}), UsageError);
  }

  TEST_CASE("missing inputs are reported") {
    const auto root = tiny_dataset("missing");
    std::ostringstream log;
    EvalOptions e;
    e.data = (root / "data").string();
    e.checkpoints = {(root / "nope.ckpt").string()};
    CHECK_THROWS_AS(cmd_eval(e, log), UsageError);
    auto t = tiny_train(root, 2);
    t.resume = (root / "nope.ckpt").string();
    CHECK_THROWS_AS(cmd_train(t, log), UsageError);
    t = tiny_train(root, 2);
    t.data = (root / "nodata").string();
    CHECK_THROWS_AS(cmd_train(t, log), UsageError);
  }
}
