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


// Command-line entry point: synth, train, eval, infer, bench.

#include <omp.h>

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sdet/cli/commands.hpp"
#include "sdet/sparse/kernels.hpp"

namespace {

void add_threads(CLI::App* cmd, int& threads) {
  cmd->add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sdet::cli;
  CLI::App app{"sdet: sparse 3D object detection"};
  app.require_subcommand(1);
  int threads = 0;
  bool serial = false;
  app.add_flag("--serial", serial, "use the single-threaded reference kernels");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
  c_synth->add_option("--out", synth.out, "output dataset directory")->required();
  c_synth->add_option("--preset", synth.preset, "geometric3 or color2");
  c_synth->add_option("--seed", synth.seed, "generator seed");
  c_synth->add_option("--train", synth.train, "number of training scenes");
  c_synth->add_option("--test", synth.test, "number of test scenes");

  TrainOptions train;
  std::uint64_t train_seed = 0;
  int steps = -1, batch = -1;
  double lr = -1.0;
  auto* c_train = app.add_subcommand("train", "train a detector");
  c_train->add_option("--data", train.data, "dataset directory")->required();
  c_train->add_option("--split", train.split, "split to train on");
  c_train->add_option("--config", train.config_file, "key = value config file");
  c_train->add_option("--set", train.overrides, "config override key=value (repeatable)");
  c_train->add_option("--out", train.checkpoint, "checkpoint to write")->required();
  c_train->add_option("--log", train.log_path, "JSON-lines training log");
  c_train->add_option("--resume", train.resume, "continue from this checkpoint");
  auto* seed_opt = c_train->add_option("--seed", train_seed, "training seed");
  c_train->add_option("--steps", steps, "optimizer steps");
  c_train->add_option("--batch-size", batch, "scenes per step");
  c_train->add_option("--lr", lr, "base learning rate");
  c_train->add_flag("--deterministic", train.deterministic, "require a seed; runs are bit-reproducible");
  c_train->add_option("--progress", train.progress_every, "print every N steps (0 = quiet)");
  add_threads(c_train, threads);

  EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "evaluate checkpoints or saved detections");
  c_eval->add_option("--data", eval.data, "dataset directory")->required();
  c_eval->add_option("--split", eval.split, "split to evaluate");
  c_eval->add_option("--checkpoint", eval.checkpoints, "checkpoint (repeat for several trained models)");
  c_eval->add_option("--detections", eval.detections, "evaluate dumps from this directory");
  c_eval->add_option("--trials", eval.trials, "evaluation trials per checkpoint");
  c_eval->add_option("--keep", eval.keep, "point keep fraction per trial");
  c_eval->add_option("--seed", eval.seed, "base evaluation seed");
  c_eval->add_option("--json", eval.json_out, "write the report as JSON");
  add_threads(c_eval, threads);

  InferOptions infer;
  auto* c_infer = app.add_subcommand("infer", "write detections for every scene");
  c_infer->add_option("--data", infer.data, "dataset directory")->required();
  c_infer->add_option("--split", infer.split, "split to run on");
  c_infer->add_option("--checkpoint", infer.checkpoint, "checkpoint")->required();
  c_infer->add_option("--out", infer.out, "output directory")->required();
  add_threads(c_infer, threads);

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "measure scenes per second, parameters and peak memory");
  c_bench->add_option("--checkpoint", bench.checkpoint, "checkpoint (default: fresh model)");
  c_bench->add_option("--config", bench.config_file, "config file for a fresh model");
  c_bench->add_option("--set", bench.overrides, "config override key=value (repeatable)");
  c_bench->add_option("--data", bench.data, "dataset directory (default: synthetic scenes)");
  c_bench->add_option("--split", bench.split, "split to run on");
  c_bench->add_option("--preset", bench.preset, "synthetic preset when no data is given");
  c_bench->add_option("--scenes", bench.scenes, "scenes in the timed window");
  c_bench->add_option("--warmup", bench.warmup, "untimed warm-up scenes");
  c_bench->add_option("--seed", bench.seed, "synthetic scene seed");
  c_bench->add_option("--json", bench.json_out, "write the report as JSON");
  add_threads(c_bench, threads);

  CLI11_PARSE(app, argc, argv);
  apply_threads(threads);
  sdet::sparse::set_backend(serial ? sdet::sparse::Backend::Serial : sdet::sparse::Backend::Parallel);

  try {
    if (*c_synth) cmd_synth(synth, std::cout);
    if (*c_train) {
      if (*seed_opt) {
        train.seed_given = true;
        train.overrides.push_back("train.seed=" + std::to_string(train_seed));
      }
      if (steps >= 0) train.overrides.push_back("train.steps=" + std::to_string(steps));
      if (batch > 0) train.overrides.push_back("train.batch_size=" + std::to_string(batch));
      if (lr > 0) train.overrides.push_back("train.lr=" + (std::ostringstream() << std::setprecision(17) << lr).str());
      cmd_train(train, std::cout);
    }
    if (*c_eval) cmd_eval(eval, std::cout);
    if (*c_infer) cmd_infer(infer, std::cout);
    if (*c_bench) cmd_bench(bench, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
