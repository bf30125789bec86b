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
#include <optional>
#include <string>
#include <vector>

#include "sdet/fusion/fusion.hpp"
#include "sdet/geometry/detection.hpp"
#include "sdet/sparse/sparse_tensor.hpp"

namespace sdet::data {

struct Scene {
  std::string id;
  std::vector<std::array<double, 3>> points;
  std::vector<std::array<float, 3>> colors;  // empty, or one RGB in [0, 1] per point
  std::vector<geometry::GtBox> gt;
  std::optional<fusion::FeatureMap2D> feature_map;
  std::optional<fusion::CameraModel> camera;
};

// Class names, index = position.
struct LabelMap {
  std::vector<std::string> names;

  int index_of(const std::string& name) const;  // -1 when unknown
  std::size_t size() const { return names.size(); }
};

// One class name per line; blank lines and '#' comments skipped.
LabelMap load_labels(const std::string& path);
void save_labels(const std::string& path, const LabelMap& labels);

// PLY point files: ascii or binary_little_endian, vertex element with x, y, z
// and optional red, green, blue (uchar scaled by 1/255, or float). Other
// elements are skipped. Writing uses binary_little_endian with double xyz and
// float colors, so a save/load round-trip is exact.
void load_ply(const std::string& path, std::vector<std::array<double, 3>>& points,
              std::vector<std::array<float, 3>>& colors);
void save_ply(const std::string& path, const std::vector<std::array<double, 3>>& points,
              const std::vector<std::array<float, 3>>& colors);

// Annotation text, one box per line:
//   cx cy cz w l h yaw class_name
// in meters and radians; '#' comments and blank lines ignored.
std::vector<geometry::GtBox> load_boxes(const std::string& path, const LabelMap& labels);
void save_boxes(const std::string& path, const std::vector<geometry::GtBox>& boxes, const LabelMap& labels);

// Detection dump, one record per line:
//   cx cy cz w l h yaw class_name score
// with every number printed at full double precision (%.17g).
void save_detections(const std::string& path, const std::vector<geometry::Detection>& dets, const LabelMap& labels);
std::vector<geometry::Detection> load_detections(const std::string& path, const LabelMap& labels);

// Scene directory layout:
//   <root>/labels.txt
//   <root>/<split>/<id>.ply          points
//   <root>/<split>/<id>.boxes.txt    annotations
//   <root>/<split>/<id>.fmap.bin     optional image feature map
//   <root>/<split>/<id>.cam.txt      optional camera (required with a map)
// Scenes load in id order.
Scene load_scene(const std::string& dir, const std::string& id, const LabelMap& labels);
void save_scene(const std::string& dir, const Scene& scene, const LabelMap& labels);
std::vector<Scene> load_split(const std::string& root, const std::string& split, LabelMap* labels_out = nullptr);
void save_split(const std::string& root, const std::string& split, const std::vector<Scene>& scenes,
                const LabelMap& labels);

// Network input for one scene: stride-1 voxels with features
// [1, mean offset of the points inside the voxel from its center (x, y, z) in
// voxel units].
sparse::SparseTensor<float> voxelize_scene(const Scene& scene, double voxel_size, std::int32_t batch = 0);

}  // namespace sdet::data
