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

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "sdet/nn/layers.hpp"

namespace sdet::fusion {

// Pinhole camera. Extrinsics map world to camera coordinates: x_cam = R x + t,
// with +z looking forward, +x right, +y down in the image.
struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0, height = 0;

  // Throws ConfigError unless fx, fy > 0, R is orthonormal to 1e-6 and the
  // image size is positive.
  void validate() const;
};

struct Projection {
  double u = 0.0, v = 0.0, depth = 0.0;
  bool valid = false;
};

constexpr double kMinDepth = 1e-6;

std::vector<Projection> project(std::span<const std::array<double, 3>> points, const CameraModel& cam);

// H x W x C row-major feature grid; one cell covers `stride` image pixels.
struct FeatureMap2D {
  int height = 0, width = 0, channels = 0, stride = 1;
  std::vector<float> data;

  FeatureMap2D() = default;
  FeatureMap2D(int h, int w, int c, int s) : height(h), width(w), channels(c), stride(s), data(std::size_t(h) * w * c) {}
  float* cell(int y, int x) { return data.data() + (std::size_t(y) * width + x) * channels; }
  const float* cell(int y, int x) const { return data.data() + (std::size_t(y) * width + x) * channels; }
};

// Bilinear read at grid position (u / stride - 0.5, v / stride - 0.5), clamped
// to the border cells. Writes `channels` values to `out`. Pixels outside the
// image (u, v < 0 or beyond the grid extent) give zeros.
void sample_bilinear(const FeatureMap2D& map, double u, double v, float* out);
std::vector<float> sample_bilinear(const FeatureMap2D& map, double u, double v);

// One row per voxel: the sampled feature of its projected center, or zeros
// when the projection is invalid. Voxels of batch b use views[b]; a view with
// a null map contributes zeros.
struct View {
  const FeatureMap2D* map = nullptr;
  const CameraModel* camera = nullptr;
};
Matrix<float> sample_voxel_features(const sparse::SparseTensor<float>& voxels, std::span<const View> views);

// Early fusion at stride 1: each valid voxel gets adapter(sampled feature)
// added; invalid voxels pass through. The map is a constant under
// differentiation. Without an adapter the channel counts must match.
nn::SparseVar<float> fuse(const nn::SparseVar<float>& voxels, const FeatureMap2D& map, const CameraModel& camera,
                          const nn::Linear<float>* adapter);

// H x W x 3 image, row-major, values roughly in [0, 1].
struct Image {
  int height = 0, width = 0;
  std::vector<float> rgb;
};

// Fixed, seeded stand-in for a pretrained image backbone: two 3x3 stride-2
// convolutions with edge-clamped padding and ReLU, 8 channels at stride 4.
FeatureMap2D toy_2d_extractor(const Image& image);

// Binary feature map file, little-endian:
//   "SDETFMAP" | u32 version (1) | u32 H | u32 W | u32 C | u32 stride | u32 dtype (0 = f32)
//   payload H * W * C floats, row-major (y, x, channel)
void save_feature_map(const std::string& path, const FeatureMap2D& map);
FeatureMap2D load_feature_map(const std::string& path);

// Camera text file: three rows of intrinsics (fx 0 cx / 0 fy cy / 0 0 1),
// three rows of world-to-camera extrinsics [R | t], then "width height".
// '#' comments and blank lines are ignored.
void save_camera(const std::string& path, const CameraModel& cam);
CameraModel load_camera(const std::string& path);

}  // namespace sdet::fusion
