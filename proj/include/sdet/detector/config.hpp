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

#include <set>
#include <string>
#include <vector>

#include "sdet/common/kv_config.hpp"
#include "sdet/geometry/box.hpp"

namespace sdet::detector {

enum class AssignerKind { Tr3d, InsideBox };
enum class RegressionLoss { Diou, Iou };
enum class HeadInit { Normal, Zero };

// Network and training-target configuration. Level l runs at stride 2^l in
// base voxels; level 0 is the stride-1 stem.
struct ModelConfig {
  int in_channels = 4;
  int num_classes = 3;
  int num_levels = 4;
  double base_voxel_size = 0.1;

  int stem_channels = 16;
  std::vector<int> level_channels = {16, 32, 64, 64};  // one per level, before the cap
  std::vector<int> level_blocks = {1, 1, 1, 1};        // residual blocks per level
  int head_channels = 64;
  bool use_channel_cap = true;
  int max_channels = 128;

  // Ablation toggles.
  bool use_head_level1 = false;
  bool use_head_level4 = false;
  bool use_pruning = false;
  bool use_centerness = false;
  AssignerKind assigner = AssignerKind::Tr3d;
  RegressionLoss regression_loss = RegressionLoss::Diou;
  geometry::DiouFrame diou_frame = geometry::DiouFrame::AxisAligned;

  bool oriented = false;  // predict yaw as a (sin, cos) pair
  int assigner_k = 6;
  std::vector<int> class_levels;  // per class; empty -> all level 2

  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double cls_prior = 0.005;
  HeadInit head_init = HeadInit::Normal;
  bool bn_affine_only = false;

  // Early fusion of a projected image feature map (adapter in -> stem channels).
  bool use_fusion = false;
  int fusion_channels = 8;

  double score_threshold = 0.01;
  double nms_threshold = 0.5;
  int nms_pre = 1000;  // per scene, highest-scoring candidates entering NMS

  std::uint64_t init_seed = 0;

  // Levels that carry a detection head: {2, 3} plus the optional 1 and 4.
  std::set<int> head_levels() const;
  // Channel width of level l (0 = stem) after the cap.
  int channels(int level) const;
  int stride(int level) const { return 1 << level; }
  int class_level(int label) const;

  // Throws ConfigError on inconsistent settings.
  void validate() const;

  static ModelConfig preset(const std::string& name);  // "desk" or "full"
  // Starts from `preset` (or the "preset" key) and applies every known key.
  static ModelConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
};

// Median size >= 1.2 m along any axis -> level 3, else level 2.
std::vector<int> default_class_levels(const std::vector<std::vector<std::array<double, 3>>>& sizes_per_class,
                                      double threshold = 1.2);

}  // namespace sdet::detector
