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


#include "sdet/data/augment.hpp"

#include <cmath>

#include "sdet/common/error.hpp"

namespace sdet::data {

Scene transform_scene(const Scene& scene, int quarter_turns, bool flip_x, bool flip_y, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("augmentation scale must be positive");
  const int k = ((quarter_turns % 4) + 4) % 4;
  // Q = rotation(k * 90) * mirror.
  Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
  if (flip_x) M(0, 0) = -1.0;
  if (flip_y) M(1, 1) = -1.0;
  static const int kc[4] = {1, 0, -1, 0}, ks[4] = {0, 1, 0, -1};
  Eigen::Matrix3d Rz;
  Rz << kc[k], -ks[k], 0, ks[k], kc[k], 0, 0, 0, 1;
  const Eigen::Matrix3d Q = Rz * M;

  Scene out = scene;
  for (auto& p : out.points) {
    const Eigen::Vector3d v = scale * (Q * Eigen::Vector3d(p[0], p[1], p[2]));
    p = {v.x(), v.y(), v.z()};
  }
  for (auto& g : out.gt) {
    auto& b = g.box;
    const Eigen::Vector3d c = scale * (Q * Eigen::Vector3d(b.center[0], b.center[1], b.center[2]));
    b.center = {c.x(), c.y(), c.z()};
    for (auto& s : b.size) s *= scale;
    // A mirror negates the heading; a quarter turn is the same box with w and
    // l exchanged.
    double yaw = b.yaw;
    if (flip_x != flip_y) yaw = -yaw;
    if (k % 2 == 1) std::swap(b.size[0], b.size[1]);
    if (k >= 2) yaw += M_PI;
    b.yaw = geometry::normalize_yaw(yaw);
  }
  if (out.camera) {
    out.camera->R = out.camera->R * Q.transpose();
    out.camera->t = scale * out.camera->t;
  }
  return out;
}

Scene augment(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> turns(0, 3);
  std::uniform_real_distribution<double> sc(cfg.scale_min, cfg.scale_max);
  const bool fx = cfg.flip && coin(rng);
  const bool fy = cfg.flip && coin(rng);
  const int k = cfg.rotate90 ? turns(rng) : 0;
  const double s = cfg.scale_max > cfg.scale_min ? sc(rng) : cfg.scale_min;
  return transform_scene(scene, k, fx, fy, s);
}

Scene subsample(const Scene& scene, double keep, std::mt19937_64& rng) {
  Scene out = scene;
  out.points.clear();
  out.colors.clear();
  std::bernoulli_distribution take(keep);
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    if (!take(rng)) continue;
    out.points.push_back(scene.points[i]);
    if (!scene.colors.empty()) out.colors.push_back(scene.colors[i]);
  }
  if (out.points.empty() && !scene.points.empty()) {
    out.points.push_back(scene.points[0]);
    if (!scene.colors.empty()) out.colors.push_back(scene.colors[0]);
  }
  return out;
}

}  // namespace sdet::data
