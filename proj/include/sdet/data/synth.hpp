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
#include <cstdint>
#include <string>
#include <vector>

#include "sdet/data/scene.hpp"

namespace sdet::data {

struct ClassSpec {
  std::string name;
  std::array<double, 3> size{};  // median w, l, h in meters
  double jitter = 0.1;           // each side scaled by U(1 - jitter, 1 + jitter)
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};
  bool random_swap = true;       // swap w and l half of the time
};

struct SynthSpec {
  std::vector<ClassSpec> classes;
  double room = 4.0;             // square floor side, meters
  int min_objects = 2;
  int max_objects = 4;
  double point_density = 400.0;  // surface points per square meter
  int min_object_points = 200;
  double inset = 0.005;          // object points sit this far inside their box
  double gap = 0.15;             // minimum top-view clearance between objects
  std::array<float, 3> floor_color{0.45f, 0.45f, 0.45f};
  double color_noise = 0.03;
  // Top-down camera and rendered image feature map.
  bool with_camera = false;
  int image_size = 128;
  double camera_height = 5.0;
};

// "geometric3": board, chair, table with distinct shapes.
// "color2": two cube classes of one size that differ only in color, with a
// camera and feature map per scene.
SynthSpec synth_preset(const std::string& name);
LabelMap labels_of(const SynthSpec& spec);

// Deterministic in (seed, index). Objects rest on the floor, never overlap in
// top view and get at least min_object_points samples. When a placement does
// not fit after bounded retries, the scene keeps the objects placed so far.
std::vector<Scene> synth_scenes(std::uint64_t seed, int n_scenes, const SynthSpec& spec);

// Camera above the room center looking straight down.
fusion::CameraModel overhead_camera(const SynthSpec& spec);
// Z-buffered point splat, 3x3 pixels per point, black background.
fusion::Image render_points(const Scene& scene, const fusion::CameraModel& cam);

}  // namespace sdet::data
