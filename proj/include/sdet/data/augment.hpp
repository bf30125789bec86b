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

#include <random>

#include "sdet/data/scene.hpp"

namespace sdet::data {

struct AugmentConfig {
  bool flip = true;     // independent mirror across x = 0 and y = 0
  bool rotate90 = true; // k * 90 degrees about +z through the origin
  double scale_min = 0.9;
  double scale_max = 1.1;
};

// Applies x' = s * Q x to points and boxes, where Q composes the mirrors and
// the rotation. The camera is updated to R' = R Q^T, t' = s t so every point
// still projects to the same pixel; the feature map is shared unchanged.
Scene transform_scene(const Scene& scene, int quarter_turns, bool flip_x, bool flip_y, double scale);
Scene augment(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng);

// Keeps each point with probability `keep` (at least one point stays).
Scene subsample(const Scene& scene, double keep, std::mt19937_64& rng);

}  // namespace sdet::data
