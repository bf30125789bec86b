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

#include <array>
#include <vector>

#include "sdet/detector/assign.hpp"

namespace sdet::detector {

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double ctr = 0.0;
  std::size_t num_foreground = 0;
};

struct LossResult {
  nn::Var<float> total;  // 1 x 1, differentiable
  LossBreakdown parts;
};

// Focal classification over every location, normalized by max(1, #fg);
// regression (DIoU or 1 - IoU) and centerness BCE averaged over foreground.
LossResult compute_loss(const HeadOutput& out, const Assignment& assignment, const BatchGt& gt,
                        const ModelConfig& cfg);

// Face-distance encoding. raw[0..5] are log distances (x-, x+, y-, y+, z-,
// z+) in units of `scale` (level stride * base voxel), measured along the box
// axes; raw[6..7] hold (sin yaw, cos yaw) in oriented mode.
geometry::Box3D decode_box(const std::array<double, 3>& location, const float* raw, double scale, bool oriented);
// Inverse of decode_box for a location strictly inside `box`.
std::vector<double> encode_box(const std::array<double, 3>& location, const geometry::Box3D& box, double scale,
                               bool oriented);

// Per scene: scores above the threshold, at most cfg.nms_pre candidates,
// then class-wise NMS. Detections come out by descending score.
std::vector<std::vector<geometry::Detection>> decode(const HeadOutput& out, const ModelConfig& cfg,
                                                     std::size_t num_scenes);

double sigmoid(double x);

}  // namespace sdet::detector
