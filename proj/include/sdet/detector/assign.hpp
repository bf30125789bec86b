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

#include "sdet/detector/config.hpp"
#include "sdet/detector/model.hpp"
#include "sdet/geometry/detection.hpp"

namespace sdet::detector {

// Output locations of one head level: voxel centers in meters plus the batch
// index of each row.
struct LevelLocations {
  int level = 0;
  std::vector<std::array<double, 3>> pos;
  std::vector<int> batch;
};

std::vector<LevelLocations> locations_of(const HeadOutput& out);

// Ground truth of a batch, flattened; gt_batch[g] is the scene of gt g.
struct BatchGt {
  std::vector<geometry::GtBox> boxes;
  std::vector<int> batch;

  static BatchGt from_scenes(const std::vector<std::vector<geometry::GtBox>>& per_scene);
};

struct LevelAssignment {
  int level = 0;
  std::vector<int> target_class;  // -1 = background
  std::vector<int> matched_gt;    // index into BatchGt::boxes, -1 = background
};

struct Assignment {
  std::vector<LevelAssignment> levels;  // parallel to the locations
  int unassigned_gt = 0;                // gts that received no location

  std::size_t num_foreground() const;
};

// Nearest-location assigner: every gt takes the k locations of its class's
// level closest to its center; a location wanted by several gts goes to the
// nearest center. Ties break by (distance, gt index, location row).
Assignment tr3d_assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg);

// Baseline assigner: locations strictly inside a gt box on the gt's scale
// level; overlapping boxes resolve to the smallest volume.
Assignment inside_box_assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg);

Assignment assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg);

// Level picked by the baseline scale rule: the largest active head level
// whose receptive scale (2 * stride * base voxel) does not exceed the longest
// box side; the smallest active level when none does.
int inside_box_level(const geometry::Box3D& box, const ModelConfig& cfg);

// Cube root of the product of min/max face-distance ratios per axis; 0
// outside the box.
double centerness(const std::array<double, 3>& p, const geometry::Box3D& box);

}  // namespace sdet::detector
