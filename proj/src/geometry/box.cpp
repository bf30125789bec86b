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


#include "sdet/geometry/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <type_traits>

#include "sdet/common/error.hpp"

namespace sdet::geometry {
namespace {

using std::abs;
using std::cos;
using std::sin;

template <class S>
using Pt = std::array<S, 2>;

inline bool is_zero(double x) { return x == 0.0; }
template <int N>
bool is_zero(const Dual<N>& x) {
  if (x.v != 0.0) return false;
  for (double g : x.d)
    if (g != 0.0) return false;
  return true;
}

template <class S>
S cross(const Pt<S>& o, const Pt<S>& a, const Pt<S>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Sutherland-Hodgman: clip `subject` by every edge of the convex CCW `clip`.
template <class S>
std::vector<Pt<S>> clip_convex(std::vector<Pt<S>> subject, const std::array<Pt<S>, 4>& clip) {
  for (int e = 0; e < 4 && !subject.empty(); ++e) {
    const Pt<S>& p1 = clip[e];
    const Pt<S>& p2 = clip[(e + 1) % 4];
    std::vector<Pt<S>> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Pt<S>& s = subject[i];
      const Pt<S>& t = subject[(i + 1) % subject.size()];
      const S ds = cross(p1, p2, s);
      const S dt = cross(p1, p2, t);
      const bool s_in = ds >= S(0);
      const bool t_in = dt >= S(0);
      if (s_in) out.push_back(s);
      if (s_in != t_in) {
        const S u = ds / (ds - dt);
        out.push_back({s[0] + u * (t[0] - s[0]), s[1] + u * (t[1] - s[1])});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

template <class S>
S polygon_area(const std::vector<Pt<S>>& p) {
  if (p.size() < 3) return S(0);
  S a(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u[0] * v[1] - v[0] * u[1];
  }
  return abs(a * S(0.5));
}

template <class S>
S overlap_1d(const S& ca, const S& sa, const S& cb, const S& sb) {
  // Relative to a's center so that identical intervals overlap exactly.
  const S d = cb - ca;
  const S lo = smax(-sa * S(0.5), d - sb * S(0.5));
  const S hi = smin(sa * S(0.5), d + sb * S(0.5));
  return smax(hi - lo, S(0));
}

}  // namespace

double normalize_yaw(double yaw) {
  constexpr double pi = std::numbers::pi;
  double y = std::fmod(yaw + pi, 2.0 * pi);
  if (y < 0.0) y += 2.0 * pi;
  y -= pi;
  return y >= pi ? -pi : y;
}

Box3D make_box(double cx, double cy, double cz, double w, double l, double h, double yaw) {
  for (double v : {cx, cy, cz, w, l, h, yaw}) {
    if (!std::isfinite(v)) throw InputError("box has a non-finite field");
  }
  if (!(w > 0.0 && l > 0.0 && h > 0.0)) {
    throw InputError("box sizes must be positive, got " + std::to_string(w) + " " + std::to_string(l) + " " +
                     std::to_string(h));
  }
  return {{cx, cy, cz}, {w, l, h}, normalize_yaw(yaw)};
}

double volume(const Box3D& b) { return b.size[0] * b.size[1] * b.size[2]; }

template <class S>
std::array<std::array<S, 2>, 4> bev_corners(const BoxT<S>& b) {
  const S c = cos(b.yaw), s = sin(b.yaw);
  const S hw = b.size[0] * S(0.5), hl = b.size[1] * S(0.5);
  const std::array<std::array<S, 2>, 4> local = {{{-hw, -hl}, {hw, -hl}, {hw, hl}, {-hw, hl}}};
  std::array<std::array<S, 2>, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.center[0] + c * local[i][0] - s * local[i][1], b.center[1] + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

template <class S>
S iou(const BoxT<S>& a, const BoxT<S>& b) {
  const S dz = overlap_1d(a.center[2], a.size[2], b.center[2], b.size[2]);
  S bev(0);
  if (is_zero(a.yaw) && is_zero(b.yaw)) {
    bev = overlap_1d(a.center[0], a.size[0], b.center[0], b.size[0]) *
          overlap_1d(a.center[1], a.size[1], b.center[1], b.size[1]);
  } else if (std::is_same_v<S, double> && value_of(a.yaw) == value_of(b.yaw)) {
    // Shared heading: intervals in the common frame, no clipping round-off.
    const S c = cos(a.yaw), s = sin(a.yaw);
    const S dx = b.center[0] - a.center[0], dy = b.center[1] - a.center[1];
    bev = overlap_1d(S(0), a.size[0], c * dx + s * dy, b.size[0]) *
          overlap_1d(S(0), a.size[1], -s * dx + c * dy, b.size[1]);
  } else if (value_of(dz) > 0.0) {
    const auto ca = bev_corners(a);
    const auto cb = bev_corners(b);
    bev = polygon_area(clip_convex(std::vector<Pt<S>>(ca.begin(), ca.end()), cb));
  }
  const S inter = bev * dz;
  const S va = a.size[0] * a.size[1] * a.size[2];
  const S vb = b.size[0] * b.size[1] * b.size[2];
  // Slivers left by round-off in the clipper count as no overlap.
  if (value_of(inter) <= 1e-12 * std::max(value_of(va), value_of(vb))) return S(0);
  S r = inter / (va + vb - inter);
  return smin(r, S(1));
}

bool contains(const Box3D& b, const std::array<double, 3>& p) {
  const double dx = p[0] - b.center[0], dy = p[1] - b.center[1];
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  const double lz = p[2] - b.center[2];
  return std::abs(lx) < 0.5 * b.size[0] && std::abs(ly) < 0.5 * b.size[1] && std::abs(lz) < 0.5 * b.size[2];
}

template <class S>
S diou_loss(const BoxT<S>& pred, const BoxT<S>& gt, DiouFrame frame) {
  const S i = iou(pred, gt);
  S lo[3], hi[3];
  bool first = true;
  // Rotating by -gt.yaw expresses the corners in the ground-truth frame.
  const S c = frame == DiouFrame::GtYaw ? cos(gt.yaw) : S(1);
  const S s = frame == DiouFrame::GtYaw ? sin(gt.yaw) : S(0);
  for (const BoxT<S>* b : {&pred, &gt}) {
    for (const auto& p : bev_corners(*b)) {
      const S x = c * p[0] + s * p[1];
      const S y = -s * p[0] + c * p[1];
      if (first) {
        lo[0] = hi[0] = x;
        lo[1] = hi[1] = y;
        first = false;
      }
      lo[0] = smin(lo[0], x), hi[0] = smax(hi[0], x);
      lo[1] = smin(lo[1], y), hi[1] = smax(hi[1], y);
    }
  }
  lo[2] = smin(pred.center[2] - pred.size[2] * S(0.5), gt.center[2] - gt.size[2] * S(0.5));
  hi[2] = smax(pred.center[2] + pred.size[2] * S(0.5), gt.center[2] + gt.size[2] * S(0.5));
  S c2(0), d2(0);
  for (int k = 0; k < 3; ++k) {
    c2 += (hi[k] - lo[k]) * (hi[k] - lo[k]);
    const S d = pred.center[k] - gt.center[k];
    d2 += d * d;
  }
  return S(1) - (i - d2 / c2);
}

std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             std::span<const int> labels, double iou_threshold) {
  if (boxes.size() != scores.size() || boxes.size() != labels.size()) {
    throw InputError("nms: boxes, scores and labels differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (labels[k] == labels[idx] && iou(boxes[k], boxes[idx]) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(idx);
  }
  return kept;
}

template std::array<std::array<double, 2>, 4> bev_corners(const BoxT<double>&);
template std::array<std::array<Dual<7>, 2>, 4> bev_corners(const BoxT<Dual<7>>&);
template double iou(const BoxT<double>&, const BoxT<double>&);
template Dual<7> iou(const BoxT<Dual<7>>&, const BoxT<Dual<7>>&);
template double diou_loss(const BoxT<double>&, const BoxT<double>&, DiouFrame);
template Dual<7> diou_loss(const BoxT<Dual<7>>&, const BoxT<Dual<7>>&, DiouFrame);

}  // namespace sdet::geometry
