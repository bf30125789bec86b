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


#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdet/cli/pipeline.hpp"

namespace sdet::cli {

// Config precedence: defaults, then the config file, then "key=value"
// overrides in order. Unknown keys are rejected.
KeyValueConfig merge_config(const std::string& config_file, const std::vector<std::string>& overrides);
// Prints every effective model and training setting.
void print_effective_config(std::ostream& out, const detector::ModelConfig& model, const TrainConfig& train);

struct SynthOptions {
  std::string out;
  std::string preset = "geometric3";
  std::uint64_t seed = 0;
  int train = 40;
  int test = 10;
};
void cmd_synth(const SynthOptions& opt, std::ostream& log);

struct TrainOptions {
  std::string data;
  std::string split = "train";
  std::string config_file;
  std::vector<std::string> overrides;
  std::string checkpoint;  // output
  std::string log_path;    // JSON lines; appended when resuming
  std::string resume;      // checkpoint to continue from
  bool deterministic = false;
  bool seed_given = false;
  int progress_every = 50;
};
std::vector<LogRecord> cmd_train(const TrainOptions& opt, std::ostream& log);

struct EvalOptions {
  std::string data;
  std::string split = "test";
  std::vector<std::string> checkpoints;  // one per independently trained model
  std::string detections;  // evaluate saved dumps from this directory instead
  int trials = 1;          // evaluation trials per checkpoint
  double keep = -1.0;      // point keep fraction per trial; < 0: 1.0 for one trial, 0.9 otherwise
  std::uint64_t seed = 0;
  std::string json_out;
};
data::EvalReport cmd_eval(const EvalOptions& opt, std::ostream& log);

struct InferOptions {
  std::string data;
  std::string split = "test";
  std::string checkpoint;
  std::string out;  // one <id>.det.txt per scene
  double keep = 1.0;
  std::uint64_t seed = 0;
};
void cmd_infer(const InferOptions& opt, std::ostream& log);

struct BenchReport {
  double scenes_per_second = 0.0;
  double params_millions = 0.0;
  std::size_t params = 0;
  double peak_memory_megabytes = 0.0;  // engine allocations, 1 MB = 1e6 bytes
  std::map<std::string, double> stage_ms;  // mean per scene
  int scenes = 0;
  int warmup = 0;

  nlohmann::json to_json() const;
};

struct BenchOptions {
  std::string checkpoint;  // empty: fresh model from the config
  std::string config_file;
  std::vector<std::string> overrides;
  std::string data;  // empty: synthetic scenes
  std::string split = "test";
  std::string preset = "geometric3";
  std::uint64_t seed = 0;
  int scenes = 20;
  int warmup = 3;
  std::string json_out;
};
BenchReport run_bench(detector::Detector& model, const std::vector<data::Scene>& scenes, int warmup);
BenchReport cmd_bench(const BenchOptions& opt, std::ostream& log);

}  // namespace sdet::cli
