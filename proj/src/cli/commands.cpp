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


#include "sdet/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "sdet/common/error.hpp"
#include "sdet/common/memory.hpp"
#include "sdet/data/synth.hpp"

namespace sdet::cli {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " not given");
  if (!fs::is_directory(path)) throw UsageError(what + " is not a directory: " + path);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " not given");
  if (!fs::is_regular_file(path)) throw UsageError("missing " + what + ": " + path);
}

void require_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::set<std::string> known_keys() {
  std::set<std::string> keys = {"preset"};
  const auto model = detector::ModelConfig{}.to_kv();
  const auto train = TrainConfig{}.to_kv();
  for (const auto& [k, v] : model.values()) keys.insert(k);
  for (const auto& [k, v] : train.values()) keys.insert(k);
  return keys;
}

}  // namespace

KeyValueConfig merge_config(const std::string& config_file, const std::vector<std::string>& overrides) {
  KeyValueConfig kv;
  if (!config_file.empty()) {
    require_file(config_file, "config file");
    kv = KeyValueConfig::load(config_file);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override must look like key=value: '" + o + "'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  const auto keys = known_keys();
  for (const auto& [k, v] : kv.values()) {
    if (!keys.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  return kv;
}

void print_effective_config(std::ostream& out, const detector::ModelConfig& model, const TrainConfig& train) {
  out << "# effective config\n" << model.to_kv().to_string() << train.to_kv().to_string();
}

void cmd_synth(const SynthOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw UsageError("output directory not given");
  if (opt.train < 0 || opt.test < 0) throw UsageError("scene counts must be >= 0");
  const auto spec = data::synth_preset(opt.preset);
  const auto labels = data::labels_of(spec);
  // Disjoint streams: the test split never shares a seed with training.
  data::save_split(opt.out, "train", data::synth_scenes(opt.seed * 2, opt.train, spec), labels);
  data::save_split(opt.out, "test", data::synth_scenes(opt.seed * 2 + 1, opt.test, spec), labels);
  log << "wrote " << opt.train << " train and " << opt.test << " test scenes (" << opt.preset << ") to " << opt.out
      << "\n";
}

std::vector<LogRecord> cmd_train(const TrainOptions& opt, std::ostream& log) {
  require_dir(opt.data, "data directory");
  if (opt.checkpoint.empty()) throw UsageError("output checkpoint not given");
  if (!opt.resume.empty()) require_file(opt.resume, "checkpoint to resume");
  auto kv = merge_config(opt.config_file, opt.overrides);
  if (opt.deterministic && !opt.seed_given && !kv.has("train.seed")) {
    throw UsageError("deterministic mode needs an explicit seed (--seed or train.seed)");
  }
  data::LabelMap labels;
  const auto scenes = data::load_split(opt.data, opt.split, &labels);
  if (scenes.empty()) throw UsageError("no scenes in " + opt.data + "/" + opt.split);

  std::unique_ptr<detector::Detector> model;
  TrainConfig tc = TrainConfig::from_kv(kv);
  tc.checkpoint_path = opt.checkpoint;
  nn::AdamWConfig oc;
  oc.lr = tc.lr;
  oc.weight_decay = tc.weight_decay;
  oc.clip_norm = tc.clip_norm;
  nn::AdamW<float> adam(oc);
  if (!opt.resume.empty()) {
    model = load_model(opt.resume, &adam);
  } else {
    auto mc = detector::ModelConfig::from_kv(kv);
    if (!kv.has("num_classes")) mc.num_classes = static_cast<int>(labels.size());
    if (mc.num_classes != static_cast<int>(labels.size())) {
      throw ConfigError("num_classes " + std::to_string(mc.num_classes) + " does not match " +
                        std::to_string(labels.size()) + " labels");
    }
    resolve_class_levels(mc, scenes);
    mc.validate();
    model = std::make_unique<detector::Detector>(mc);
  }
  print_effective_config(log, model->config(), tc);
  log << "# params " << model->count_params() << ", scenes " << scenes.size() << ", starting at step "
      << adam.step_count() + 1 << "\n";

  std::ofstream jl;
  if (!opt.log_path.empty()) {
    require_parent(opt.log_path);
    jl.open(opt.log_path, opt.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!jl) throw UsageError("cannot write log " + opt.log_path);
  }
  require_parent(opt.checkpoint);
  const auto t0 = Clock::now();
  return train(*model, adam, scenes, tc, [&](const LogRecord& r) {
    if (jl) jl << r.to_json().dump() << "\n" << std::flush;
    if (opt.progress_every > 0 && r.step % opt.progress_every == 0) {
      log << "step " << r.step << " loss " << std::setprecision(5) << r.loss.total << " (cls " << r.loss.cls
          << ", reg " << r.loss.reg << ") lr " << r.lr << " " << std::setprecision(3) << ms_since(t0) / 1000.0
          << "s\n";
    }
  });
}

data::EvalReport cmd_eval(const EvalOptions& opt, std::ostream& log) {
  require_dir(opt.data, "data directory");
  data::LabelMap labels;
  const auto scenes = data::load_split(opt.data, opt.split, &labels);
  std::vector<std::vector<geometry::GtBox>> gts;
  for (const auto& s : scenes) gts.push_back(s.gt);
  data::EvalReport report;
  if (!opt.detections.empty()) {
    require_dir(opt.detections, "detection directory");
    std::vector<std::vector<geometry::Detection>> dets;
    for (const auto& s : scenes) {
      const auto path = (fs::path(opt.detections) / (s.id + ".det.txt")).string();
      require_file(path, "detection dump");
      dets.push_back(data::load_detections(path, labels));
    }
    report.class_names = labels.names;
    report.thresholds = {0.25, 0.5};
    report.trials.push_back({0, 0, data::eval_map(dets, gts, static_cast<int>(labels.size()))});
  } else {
    if (opt.checkpoints.empty()) throw UsageError("no checkpoint given");
    for (const auto& c : opt.checkpoints) require_file(c, "checkpoint");
    if (opt.trials < 1) throw UsageError("trials must be >= 1");
    const double keep = opt.keep >= 0.0 ? opt.keep : (opt.trials > 1 ? 0.9 : 1.0);
    std::size_t next = 0;
    report = data::multi_trial(
        [&](std::uint64_t) { return load_model(opt.checkpoints[next++]); },
        [&](std::unique_ptr<detector::Detector>& m, std::uint64_t seed) {
          if (m->config().num_classes != static_cast<int>(labels.size())) {
            throw ConfigError("checkpoint has " + std::to_string(m->config().num_classes) + " classes, data has " +
                              std::to_string(labels.size()));
          }
          return evaluate(*m, scenes, keep, seed);
        },
        static_cast<int>(opt.checkpoints.size()), opt.trials, opt.seed, labels.names);
  }
  log << report.table();
  if (!opt.json_out.empty()) {
    require_parent(opt.json_out);
    std::ofstream out(opt.json_out);
    out << report.to_json().dump(2) << "\n";
  }
  return report;
}

void cmd_infer(const InferOptions& opt, std::ostream& log) {
  require_dir(opt.data, "data directory");
  require_file(opt.checkpoint, "checkpoint");
  if (opt.out.empty()) throw UsageError("output directory not given");
  data::LabelMap labels;
  const auto scenes = data::load_split(opt.data, opt.split, &labels);
  auto model = load_model(opt.checkpoint);
  const auto dets = predict(*model, scenes, 4, opt.keep, opt.seed);
  fs::create_directories(opt.out);
  std::size_t total = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    data::save_detections((fs::path(opt.out) / (scenes[i].id + ".det.txt")).string(), dets[i], labels);
    total += dets[i].size();
  }
  log << "wrote " << total << " detections for " << scenes.size() << " scenes to " << opt.out << "\n";
}

nlohmann::json BenchReport::to_json() const {
  return {{"scenes_per_second", scenes_per_second},
          {"params_millions", params_millions},
          {"params", params},
          {"peak_memory_megabytes", peak_memory_megabytes},
          {"stage_ms", stage_ms},
          {"scenes", scenes},
          {"warmup", warmup}};
}

BenchReport run_bench(detector::Detector& model, const std::vector<data::Scene>& scenes, int warmup) {
  if (scenes.empty()) throw UsageError("bench needs at least one scene");
  nn::NoGradGuard no_grad;
  const auto& cfg = model.config();
  BenchReport r;
  r.params = model.count_params();
  r.params_millions = static_cast<double>(r.params) / 1e6;
  r.scenes = static_cast<int>(scenes.size());
  r.warmup = warmup;
  auto one = [&](const data::Scene& s, std::map<std::string, double>* stages) {
    auto t = Clock::now();
    const Batch b = make_batch({&s}, cfg);
    if (stages) (*stages)["voxelize"] += ms_since(t);
    t = Clock::now();
    const auto out = model.forward(b.input, cfg.use_fusion ? &b.fused : nullptr, false);
    if (stages) (*stages)["network"] += ms_since(t);
    t = Clock::now();
    const auto dets = detector::decode(out, cfg, 1);
    if (stages) (*stages)["decode"] += ms_since(t);
    return dets.size();
  };
  for (int w = 0; w < warmup; ++w) one(scenes[static_cast<std::size_t>(w) % scenes.size()], nullptr);
  MemoryTracker::reset_peak();
  const std::size_t base = MemoryTracker::current_bytes();
  const auto t0 = Clock::now();
  for (const auto& s : scenes) one(s, &r.stage_ms);
  const double total_ms = ms_since(t0);
  r.scenes_per_second = total_ms > 0.0 ? 1000.0 * static_cast<double>(scenes.size()) / total_ms : 0.0;
  r.peak_memory_megabytes = static_cast<double>(MemoryTracker::peak_bytes() - base) / 1e6;
  for (auto& [k, v] : r.stage_ms) v /= static_cast<double>(scenes.size());
  return r;
}

BenchReport cmd_bench(const BenchOptions& opt, std::ostream& log) {
  std::unique_ptr<detector::Detector> model;
  std::vector<data::Scene> scenes;
  if (!opt.data.empty()) {
    require_dir(opt.data, "data directory");
    scenes = data::load_split(opt.data, opt.split);
    if (opt.scenes > 0 && scenes.size() > static_cast<std::size_t>(opt.scenes)) scenes.resize(opt.scenes);
  } else {
    scenes = data::synth_scenes(opt.seed, opt.scenes, data::synth_preset(opt.preset));
  }
  if (!opt.checkpoint.empty()) {
    require_file(opt.checkpoint, "checkpoint");
    model = load_model(opt.checkpoint);
  } else {
    auto kv = merge_config(opt.config_file, opt.overrides);
    auto mc = detector::ModelConfig::from_kv(kv);
    mc.validate();
    model = std::make_unique<detector::Detector>(mc);
  }
  print_effective_config(log, model->config(), TrainConfig{});
  const auto r = run_bench(*model, scenes, opt.warmup);
  log << std::fixed << std::setprecision(3) << "scenes/s " << r.scenes_per_second << "\nparams (M) "
      << std::setprecision(6) << r.params_millions << "\npeak memory (MB) " << std::setprecision(3)
      << r.peak_memory_megabytes << "\n";
  for (const auto& [k, v] : r.stage_ms) log << "  " << k << " ms/scene " << v << "\n";
  log.unsetf(std::ios::fixed);
  if (!opt.json_out.empty()) {
    require_parent(opt.json_out);
    std::ofstream out(opt.json_out);
    out << r.to_json().dump(2) << "\n";
  }
  return r;
}

}  // namespace sdet::cli
