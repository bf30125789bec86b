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


#include "sdet/detector/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "sdet/common/error.hpp"

namespace sdet::detector {
namespace {

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Assignment empty_assignment(const std::vector<LevelLocations>& locs) {
  Assignment a;
  for (const auto& l : locs) {
    LevelAssignment la;
    la.level = l.level;
    la.target_class.assign(l.pos.size(), -1);
    la.matched_gt.assign(l.pos.size(), -1);
    a.levels.push_back(std::move(la));
  }
  return a;
}

int level_index(const std::vector<LevelLocations>& locs, int level) {
  for (std::size_t i = 0; i < locs.size(); ++i)
    if (locs[i].level == level) return static_cast<int>(i);
  return -1;
}

void check_labels(const BatchGt& gt, const ModelConfig& cfg) {
  for (const auto& g : gt.boxes) {
    if (g.label < 0 || g.label >= cfg.num_classes) {
      throw InputError("gt label " + std::to_string(g.label) + " outside the class range");
    }
  }
}

}  // namespace

std::vector<LevelLocations> locations_of(const HeadOutput& out) {
  std::vector<LevelLocations> locs;
  for (const auto& lo : out.levels) {
    LevelLocations l;
    l.level = lo.level;
    for (std::size_t r = 0; r < lo.size(); ++r) {
      l.pos.push_back(lo.geom->center(r));
      l.batch.push_back(lo.geom->coords()[r].batch);
    }
    locs.push_back(std::move(l));
  }
  return locs;
}

BatchGt BatchGt::from_scenes(const std::vector<std::vector<geometry::GtBox>>& per_scene) {
  BatchGt g;
  for (std::size_t b = 0; b < per_scene.size(); ++b) {
    for (const auto& box : per_scene[b]) {
      g.boxes.push_back(box);
      g.batch.push_back(static_cast<int>(b));
    }
  }
  return g;
}

std::size_t Assignment::num_foreground() const {
  std::size_t n = 0;
  for (const auto& l : levels)
    for (int c : l.target_class) n += c >= 0;
  return n;
}

Assignment tr3d_assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg) {
  check_labels(gt, cfg);
  Assignment out = empty_assignment(locs);
  // Best claim per location so far: (distance, gt index).
  std::vector<std::vector<std::pair<double, int>>> claim(locs.size());
  for (std::size_t i = 0; i < locs.size(); ++i)
    claim[i].assign(locs[i].pos.size(), {std::numeric_limits<double>::infinity(), -1});

  const std::size_t k = static_cast<std::size_t>(cfg.assigner_k);
  for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
    const int li = level_index(locs, cfg.class_level(gt.boxes[g].label));
    if (li < 0) {
      ++out.unassigned_gt;
      continue;
    }
    const auto& L = locs[li];
    const auto& c = gt.boxes[g].box.center;
    // Bounded max-heap keeps the k smallest (distance, row).
    std::priority_queue<std::pair<double, std::int32_t>> heap;
    for (std::size_t r = 0; r < L.pos.size(); ++r) {
      if (L.batch[r] != gt.batch[g]) continue;
      const std::pair<double, std::int32_t> item{dist(L.pos[r], c), static_cast<std::int32_t>(r)};
      if (heap.size() < k) {
        heap.push(item);
      } else if (item < heap.top()) {
        heap.pop();
        heap.push(item);
      }
    }
    if (heap.empty()) {
      ++out.unassigned_gt;
      continue;
    }
    while (!heap.empty()) {
      const auto [d, r] = heap.top();
      heap.pop();
      auto& cl = claim[li][r];
      if (std::make_pair(d, static_cast<int>(g)) < cl) cl = {d, static_cast<int>(g)};
    }
  }
  for (std::size_t i = 0; i < locs.size(); ++i) {
    for (std::size_t r = 0; r < claim[i].size(); ++r) {
      const int g = claim[i][r].second;
      if (g < 0) continue;
      out.levels[i].matched_gt[r] = g;
      out.levels[i].target_class[r] = gt.boxes[g].label;
    }
  }
  return out;
}

int inside_box_level(const geometry::Box3D& box, const ModelConfig& cfg) {
  const double extent = std::max({box.size[0], box.size[1], box.size[2]});
  const auto heads = cfg.head_levels();
  int best = *heads.begin();
  for (int l : heads) {
    if (2.0 * cfg.stride(l) * cfg.base_voxel_size <= extent) best = std::max(best, l);
  }
  return best;
}

Assignment inside_box_assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg) {
  check_labels(gt, cfg);
  Assignment out = empty_assignment(locs);
  std::vector<std::vector<double>> best_vol(locs.size());
  for (std::size_t i = 0; i < locs.size(); ++i)
    best_vol[i].assign(locs[i].pos.size(), std::numeric_limits<double>::infinity());
  std::vector<char> got(gt.boxes.size(), 0);
  for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
    const auto& box = gt.boxes[g].box;
    const int li = level_index(locs, inside_box_level(box, cfg));
    if (li < 0) continue;
    const double vol = geometry::volume(box);
    for (std::size_t r = 0; r < locs[li].pos.size(); ++r) {
      if (locs[li].batch[r] != gt.batch[g] || !geometry::contains(box, locs[li].pos[r])) continue;
      if (vol < best_vol[li][r]) {
        best_vol[li][r] = vol;
        out.levels[li].matched_gt[r] = static_cast<int>(g);
        out.levels[li].target_class[r] = gt.boxes[g].label;
      }
    }
  }
  for (const auto& l : out.levels)
    for (int g : l.matched_gt)
      if (g >= 0) got[g] = 1;
  for (char c : got) out.unassigned_gt += c == 0;
  return out;
}

Assignment assign(const std::vector<LevelLocations>& locs, const BatchGt& gt, const ModelConfig& cfg) {
  return cfg.assigner == AssignerKind::Tr3d ? tr3d_assign(locs, gt, cfg) : inside_box_assign(locs, gt, cfg);
}

double centerness(const std::array<double, 3>& p, const geometry::Box3D& box) {
  const double dx = p[0] - box.center[0], dy = p[1] - box.center[1];
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const std::array<double, 3> local = {c * dx + s * dy, -s * dx + c * dy, p[2] - box.center[2]};
  double prod = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double front = 0.5 * box.size[a] - local[a];
    const double back = 0.5 * box.size[a] + local[a];
    if (front <= 0.0 || back <= 0.0) return 0.0;
    prod *= std::min(front, back) / std::max(front, back);
  }
  return std::cbrt(prod);
}

}  // namespace sdet::detector
