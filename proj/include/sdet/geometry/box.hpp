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
#include <span>
#include <vector>

#include "sdet/geometry/dual.hpp"

namespace sdet::geometry {

// Center (x, y, z), size (w, l, h) and yaw about +z. At yaw 0, w runs along x
// and l along y.
template <class S>
struct BoxT {
  std::array<S, 3> center{};
  std::array<S, 3> size{};
  S yaw{};
};

using Box3D = BoxT<double>;

// Wraps into [-pi, pi).
double normalize_yaw(double yaw);

// Validated constructor: sizes must be positive and finite (InputError).
Box3D make_box(double cx, double cy, double cz, double w, double l, double h, double yaw = 0.0);

double volume(const Box3D& b);

// Top-view rectangle corners, counter-clockwise.
template <class S>
std::array<std::array<S, 2>, 4> bev_corners(const BoxT<S>& b);

// Exact intersection-over-union. Axis-aligned pairs use interval products;
// otherwise the top-view rectangles are clipped against each other and the
// area multiplied by the vertical overlap.
template <class S>
S iou(const BoxT<S>& a, const BoxT<S>& b);

// True when the point lies strictly inside the box.
bool contains(const Box3D& b, const std::array<double, 3>& p);

enum class DiouFrame {
  AxisAligned,  // enclosing box aligned with the world axes
  GtYaw,        // enclosing box aligned with the ground-truth heading
};

// 1 - (IoU - d^2 / c^2): d is the center distance, c the diagonal of the box
// enclosing both corner sets in the chosen frame.
template <class S>
S diou_loss(const BoxT<S>& pred, const BoxT<S>& gt, DiouFrame frame = DiouFrame::AxisAligned);

// Greedy suppression run separately per label. Highest score first, equal
// scores by lower index; a box is dropped when its IoU with an already kept
// box of the same label exceeds the threshold. Returns kept indices in
// processing order.
std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             std::span<const int> labels, double iou_threshold = 0.5);

}  // namespace sdet::geometry
