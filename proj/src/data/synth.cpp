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


#include "sdet/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sdet/common/error.hpp"

namespace sdet::data {
namespace {

struct Placed {
  geometry::Box3D box;
  int label;
};

bool overlaps(const geometry::Box3D& a, const geometry::Box3D& b, double gap) {
  for (int ax = 0; ax < 2; ++ax) {
    if (std::abs(a.center[ax] - b.center[ax]) >= 0.5 * (a.size[ax] + b.size[ax]) + gap) return false;
  }
  return true;
}

// Uniform samples over the four sides and the top of an axis-aligned box,
// pulled `inset` inside every face.
void sample_box_surface(const geometry::Box3D& b, const SynthSpec& spec, std::mt19937_64& rng,
                        std::vector<std::array<double, 3>>& pts) {
  const double w = b.size[0], l = b.size[1], h = b.size[2];
  const double areas[5] = {w * l, w * h, w * h, l * h, l * h};
  const double total = areas[0] + areas[1] + areas[2] + areas[3] + areas[4];
  const int n = std::max(spec.min_object_points, static_cast<int>(std::lround(total * spec.point_density)));
  std::discrete_distribution<int> face(std::begin(areas), std::end(areas));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double in = spec.inset;
  auto inner = [&](double half, double t) { return t * (2.0 * half - 2.0 * in); };
  const double hx = 0.5 * w, hy = 0.5 * l, hz = 0.5 * h;
  for (int i = 0; i < n; ++i) {
    const double s = u(rng), t = u(rng);
    std::array<double, 3> p{};
    switch (face(rng)) {
      case 0: p = {inner(hx, s), inner(hy, t), hz - in}; break;
      case 1: p = {inner(hx, s), -hy + in, inner(hz, t)}; break;
      case 2: p = {inner(hx, s), hy - in, inner(hz, t)}; break;
      case 3: p = {-hx + in, inner(hy, s), inner(hz, t)}; break;
      default: p = {hx - in, inner(hy, s), inner(hz, t)}; break;
    }
    pts.push_back({b.center[0] + p[0], b.center[1] + p[1], b.center[2] + p[2]});
  }
}

std::array<float, 3> noisy(const std::array<float, 3>& c, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  std::array<float, 3> out;
  for (int k = 0; k < 3; ++k) out[k] = static_cast<float>(std::clamp(c[k] + n(rng), 0.0, 1.0));
  return out;
}

}  // namespace

SynthSpec synth_preset(const std::string& name) {
  SynthSpec s;
  if (name == "geometric3") {
    s.classes = {{"board", {1.0, 0.1, 0.9}, 0.1, {0.9f, 0.9f, 0.85f}, true},
                 {"chair", {0.5, 0.5, 0.8}, 0.1, {0.6f, 0.35f, 0.2f}, true},
                 {"table", {1.8, 1.0, 0.6}, 0.1, {0.5f, 0.3f, 0.15f}, true}};
    return s;
  }
  if (name == "color2") {
    s.classes = {{"red_cube", {0.7, 0.7, 0.7}, 0.1, {0.9f, 0.1f, 0.1f}, false},
                 {"blue_cube", {0.7, 0.7, 0.7}, 0.1, {0.1f, 0.1f, 0.9f}, false}};
    s.with_camera = true;
    return s;
  }
  throw ConfigError("unknown synthetic preset '" + name + "' (expected geometric3 or color2)");
}

LabelMap labels_of(const SynthSpec& spec) {
  LabelMap m;
  for (const auto& c : spec.classes) m.names.push_back(c.name);
  return m;
}

fusion::CameraModel overhead_camera(const SynthSpec& spec) {
  fusion::CameraModel cam;
  cam.width = cam.height = spec.image_size;
  cam.cx = cam.cy = 0.5 * spec.image_size;
  // The whole floor fits with a small margin.
  cam.fx = cam.fy = 0.5 * spec.image_size * spec.camera_height / (0.55 * spec.room);
  cam.R << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Eigen::Vector3d c(0.5 * spec.room, 0.5 * spec.room, spec.camera_height);
  cam.t = -cam.R * c;
  return cam;
}

fusion::Image render_points(const Scene& scene, const fusion::CameraModel& cam) {
  fusion::Image img;
  img.height = cam.height;
  img.width = cam.width;
  img.rgb.assign(std::size_t(img.height) * img.width * 3, 0.0f);
  std::vector<double> depth(std::size_t(img.height) * img.width, std::numeric_limits<double>::infinity());
  const auto proj = fusion::project(scene.points, cam);
  for (std::size_t i = 0; i < proj.size(); ++i) {
    if (!proj[i].valid) continue;
    const int u = static_cast<int>(proj[i].u), v = static_cast<int>(proj[i].v);
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) {
        const int x = u + du, y = v + dv;
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
        const std::size_t px = std::size_t(y) * img.width + x;
        if (proj[i].depth >= depth[px]) continue;
        depth[px] = proj[i].depth;
        const auto& c = scene.colors.empty() ? std::array<float, 3>{0.5f, 0.5f, 0.5f} : scene.colors[i];
        std::copy(c.begin(), c.end(), img.rgb.begin() + static_cast<long>(px * 3));
      }
  }
  return img;
}

std::vector<Scene> synth_scenes(std::uint64_t seed, int n_scenes, const SynthSpec& spec) {
  if (spec.classes.empty()) throw ConfigError("synthetic spec needs at least one class");
  if (n_scenes < 0) throw ConfigError("negative scene count");
  std::vector<Scene> scenes;
  for (int s = 0; s < n_scenes; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", s);
    scene.id = id;

    std::uniform_int_distribution<int> count(spec.min_objects, spec.max_objects);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.classes.size()) - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Placed> placed;
    const int want = count(rng);
    for (int o = 0; o < want; ++o) {
      const int label = pick(rng);
      const auto& cs = spec.classes[label];
      std::array<double, 3> size;
      for (int a = 0; a < 3; ++a) size[a] = cs.size[a] * (1.0 + cs.jitter * (2.0 * unit(rng) - 1.0));
      if (cs.random_swap && unit(rng) < 0.5) std::swap(size[0], size[1]);
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        const double mx = 0.5 * size[0] + 0.1, my = 0.5 * size[1] + 0.1;
        if (2 * mx >= spec.room || 2 * my >= spec.room) break;
        const double cx = mx + unit(rng) * (spec.room - 2 * mx), cy = my + unit(rng) * (spec.room - 2 * my);
        const auto box = geometry::make_box(cx, cy, 0.5 * size[2], size[0], size[1], size[2], 0.0);
        ok = std::none_of(placed.begin(), placed.end(),
                          [&](const Placed& p) { return overlaps(p.box, box, spec.gap); });
        if (ok) placed.push_back({box, label});
      }
      if (!ok) break;  // room is full; keep what fits
    }

    // Floor on a jittered grid, skipping the footprint of each object.
    const double step = 1.0 / std::sqrt(spec.point_density);
    std::uniform_real_distribution<double> jit(-0.3 * step, 0.3 * step);
    for (double x = 0.5 * step; x < spec.room; x += step)
      for (double y = 0.5 * step; y < spec.room; y += step) {
        const std::array<double, 3> p = {x + jit(rng), y + jit(rng), 0.0};
        const bool under = std::any_of(placed.begin(), placed.end(), [&](const Placed& o) {
          return std::abs(p[0] - o.box.center[0]) < 0.5 * o.box.size[0] &&
                 std::abs(p[1] - o.box.center[1]) < 0.5 * o.box.size[1];
        });
        if (under) continue;
        scene.points.push_back(p);
        scene.colors.push_back(noisy(spec.floor_color, spec.color_noise, rng));
      }
    for (const auto& o : placed) {
      const std::size_t before = scene.points.size();
      sample_box_surface(o.box, spec, rng, scene.points);
      for (std::size_t i = before; i < scene.points.size(); ++i)
        scene.colors.push_back(noisy(spec.classes[o.label].color, spec.color_noise, rng));
      scene.gt.push_back({o.box, o.label});
    }

    if (spec.with_camera) {
      scene.camera = overhead_camera(spec);
      scene.feature_map = fusion::toy_2d_extractor(render_points(scene, *scene.camera));
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace sdet::data
