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
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdet/common/kv_config.hpp"
#include "sdet/data/augment.hpp"
#include "sdet/data/eval.hpp"
#include "sdet/data/scene.hpp"
#include "sdet/detector/loss.hpp"
#include "sdet/nn/optim.hpp"

namespace sdet::cli {

struct TrainConfig {
  int steps = 1200;
  int batch_size = 4;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  double clip_norm = 10.0;
  std::vector<double> lr_milestones = {8.0 / 12.0, 11.0 / 12.0};  // fractions of `steps`
  double lr_factor = 0.1;
  bool augment = true;
  data::AugmentConfig augmentation;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::string checkpoint_path;  // empty: no checkpoints

  // Keys are "train.<field>"; absent keys keep the values of `defaults`.
  static TrainConfig from_kv(const KeyValueConfig& kv, const TrainConfig& defaults);
  static TrainConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, TrainConfig{}); }
  KeyValueConfig to_kv() const;
};

// Stacked network input for several scenes.
struct Batch {
  sparse::SparseTensor<float> input;
  Matrix<float> fused;  // one row per input voxel when fusion is on, else empty
  detector::BatchGt gt;
  std::size_t num_scenes = 0;
};

Batch make_batch(const std::vector<const data::Scene*>& scenes, const detector::ModelConfig& cfg);

// One JSON-lines record per optimizer step.
struct LogRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  detector::LossBreakdown loss;
  double grad_norm = 0.0;
  std::uint64_t batch_seed = 0;

  nlohmann::json to_json() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fills class_levels from the training boxes when the config leaves it empty.
void resolve_class_levels(detector::ModelConfig& cfg, const std::vector<data::Scene>& scenes);

// Runs optimizer steps opt.step_count() + 1 .. cfg.steps. Batches are drawn
// from a per-epoch shuffle seeded by (cfg.seed, epoch) and augmented with a
// per-step seed, so a resumed run sees the same batches as an uninterrupted
// one. Throws NonFiniteLoss naming the step and batch seed.
std::vector<LogRecord> train(detector::Detector& model, nn::AdamW<float>& opt, const std::vector<data::Scene>& scenes,
                             const TrainConfig& cfg, const std::function<void(const LogRecord&)>& on_step = {});

// Inference with optional seeded point subsampling (keep < 1) for
// independent evaluation trials.
std::vector<std::vector<geometry::Detection>> predict(detector::Detector& model, const std::vector<data::Scene>& scenes,
                                                      int batch_size = 4, double keep = 1.0,
                                                      std::uint64_t seed = 0);

data::MapResult evaluate(detector::Detector& model, const std::vector<data::Scene>& scenes, double keep = 1.0,
                         std::uint64_t seed = 0);

// Checkpoint with the model config in its metadata; load rebuilds the model.
void save_model(const std::string& path, const detector::Detector& model, const nn::AdamW<float>* opt);
std::unique_ptr<detector::Detector> load_model(const std::string& path, nn::AdamW<float>* opt = nullptr);

}  // namespace sdet::cli
