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

// Independent reference implementations shared by the unit and acceptance
// tests. They favour brute force over speed and use only public types.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "sdet/detector/assign.hpp"
#include "sdet/geometry/box.hpp"
#include "sdet/geometry/detection.hpp"
#include "sdet/nn/autograd.hpp"
#include "sdet/nn/ops.hpp"
#include "sdet/sparse/sparse_tensor.hpp"

namespace sdet::oracle {

// ---- sparse convolution ----

// Offsets in weight-slab order, enumerated independently of the library.
inline std::vector<std::array<int, 3>> offsets(int k) {
  const int lo = k % 2 == 1 ? -(k - 1) / 2 : 0;
  std::vector<std::array<int, 3>> out;
  for (int a = lo; a < lo + k; ++a)
    for (int b = lo; b < lo + k; ++b)
      for (int c = lo; c < lo + k; ++c) out.push_back({a, b, c});
  return out;
}

// Zero-padded dense grid covering [lo, lo + n) on every axis, batch 0 only.
struct DenseGrid {
  int lo, n;
  std::size_t ch;
  std::vector<double> v;
  DenseGrid(int lo_, int n_, std::size_t ch_) : lo(lo_), n(n_), ch(ch_), v(std::size_t(n_) * n_ * n_ * ch_, 0.0) {}
  const double* at(int i, int j, int k) const {
    i -= lo, j -= lo, k -= lo;
    if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n) return nullptr;
    return v.data() + ((std::size_t(i) * n + j) * n + k) * ch;
  }
  double* at(int i, int j, int k) { return const_cast<double*>(std::as_const(*this).at(i, j, k)); }
};

inline DenseGrid densify(const sparse::SparseTensor<double>& x, int lo, int n) {
  DenseGrid g(lo, n, x.channels());
  for (std::size_t r = 0; r < x.size(); ++r) {
    const auto& c = x.coords()[r];
    std::copy_n(x.feats.row(r), x.channels(), g.at(c.i, c.j, c.k));
  }
  return g;
}

// Dense convolution evaluated at one output site q (grid units).
inline std::vector<double> dense_conv_at(const DenseGrid& g, const Matrix<double>& w, int k, int in_stride,
                                         const sparse::Coord4& q) {
  const auto offs = offsets(k);
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t o = 0; o < offs.size(); ++o) {
    const double* x = g.at(q.i + offs[o][0] * in_stride, q.j + offs[o][1] * in_stride, q.k + offs[o][2] * in_stride);
    if (!x) continue;
    for (std::size_t ci = 0; ci < g.ch; ++ci)
      for (std::size_t co = 0; co < w.cols(); ++co) y[co] += x[ci] * w(o * g.ch + ci, co);
  }
  return y;
}

// ---- gradients ----

// Worst elementwise relative error between backward() and central
// differences; infinity if a leaf received no gradient.
inline double gradcheck(std::vector<nn::Var<double>> leaves, const std::function<nn::Var<double>()>& f,
                        double h = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  nn::backward(f());
  double worst = 0.0;
  for (auto& l : leaves) {
    if (!l.has_grad()) return std::numeric_limits<double>::infinity();
    const Matrix<double> analytic = l.grad();
    auto& v = l.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      double fp, fm;
      {
        nn::NoGradGuard ng;
        v[i] = keep + h;
        fp = f().value()(0, 0);
        v[i] = keep - h;
        fm = f().value()(0, 0);
      }
      v[i] = keep;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

// Weighted sum so every output element gets a distinct upstream gradient.
inline nn::Var<double> probe(const nn::Var<double>& y, const Matrix<double>& r) {
  return nn::sum(nn::mul(y, nn::Var<double>::constant(r)));
}

// Moves entries away from the ReLU kink so finite differences stay on one side.
inline Matrix<double> away_from_zero(Matrix<double> m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (std::abs(m[i]) < 0.05) m[i] = m[i] < 0 ? -0.05 : 0.05;
  return m;
}

// ---- geometry ----

// Uniform samples over the world-aligned hull of both boxes. Containment is
// tested in each box frame directly.
inline double monte_carlo_iou(const geometry::Box3D& a, const geometry::Box3D& b, long samples,
                              std::mt19937_64& rng) {
  struct Frame {
    const geometry::Box3D& x;
    double c, s;
    bool inside(const std::array<double, 3>& p) const {
      const double dx = p[0] - x.center[0], dy = p[1] - x.center[1];
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      return std::abs(u) <= x.size[0] / 2 && std::abs(v) <= x.size[1] / 2 &&
             std::abs(p[2] - x.center[2]) <= x.size[2] / 2;
    }
  };
  const Frame fa{a, std::cos(a.yaw), std::sin(a.yaw)}, fb{b, std::cos(b.yaw), std::sin(b.yaw)};
  std::array<double, 3> lo, hi;
  for (int k = 0; k < 3; ++k) {
    const double ra = k < 2 ? 0.5 * std::hypot(a.size[0], a.size[1]) : 0.5 * a.size[2];
    const double rb = k < 2 ? 0.5 * std::hypot(b.size[0], b.size[1]) : 0.5 * b.size[2];
    lo[k] = std::min(a.center[k] - ra, b.center[k] - rb);
    hi[k] = std::max(a.center[k] + ra, b.center[k] + rb);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long in_a = 0, in_b = 0, both = 0;
  for (long n = 0; n < samples; ++n) {
    std::array<double, 3> p;
    for (int k = 0; k < 3; ++k) p[k] = lo[k] + (hi[k] - lo[k]) * u(rng);
    const bool ia = fa.inside(p), ib = fb.inside(p);
    in_a += ia, in_b += ib, both += ia && ib;
  }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : double(both) / double(uni);
}

// Axis-aligned IoU by interval arithmetic.
inline double interval_iou(const geometry::Box3D& a, const geometry::Box3D& b) {
  double inter = 1.0, va = 1.0, vb = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a.center[k] - a.size[k] / 2, b.center[k] - b.size[k] / 2);
    const double hi = std::min(a.center[k] + a.size[k] / 2, b.center[k] + b.size[k] / 2);
    inter *= std::max(0.0, hi - lo);
    va *= a.size[k];
    vb *= b.size[k];
  }
  return inter / (va + vb - inter);
}

// ---- assignment ----

// Locations on the level-l grid of an n_xy x n_xy x n_z block, per batch.
inline detector::LevelLocations grid_locations(int level, double voxel, int n_xy, int n_z, int batches) {
  detector::LevelLocations L;
  L.level = level;
  const double step = voxel * (1 << level);
  for (int b = 0; b < batches; ++b)
    for (int i = 0; i < n_xy; ++i)
      for (int j = 0; j < n_xy; ++j)
        for (int k = 0; k < n_z; ++k) {
          L.pos.push_back({(i + 0.5) * step, (j + 0.5) * step, (k + 0.5) * step});
          L.batch.push_back(b);
        }
  return L;
}

// Full-sort reference for the nearest-location assigner: each gt claims its
// k nearest same-batch locations on its class level; a location claimed by
// several gts goes to the nearest, ties to the lower gt index.
inline detector::Assignment brute_tr3d(const std::vector<detector::LevelLocations>& locs,
                                       const detector::BatchGt& gt, const detector::ModelConfig& cfg) {
  detector::Assignment a;
  for (const auto& L : locs) {
    detector::LevelAssignment la;
    la.level = L.level;
    la.target_class.assign(L.pos.size(), -1);
    la.matched_gt.assign(L.pos.size(), -1);
    a.levels.push_back(la);
  }
  std::map<std::pair<int, int>, std::pair<double, int>> best;
  for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
    const int level = cfg.class_level(gt.boxes[g].label);
    int li = -1;
    for (std::size_t i = 0; i < locs.size(); ++i)
      if (locs[i].level == level) li = int(i);
    if (li < 0) continue;
    std::vector<std::pair<double, int>> all;
    for (std::size_t r = 0; r < locs[li].pos.size(); ++r) {
      if (locs[li].batch[r] != gt.batch[g]) continue;
      const auto& p = locs[li].pos[r];
      const auto& c = gt.boxes[g].box.center;
      all.push_back({std::sqrt((p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]) +
                               (p[2] - c[2]) * (p[2] - c[2])),
                     int(r)});
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size() && i < std::size_t(cfg.assigner_k); ++i) {
      const auto key = std::make_pair(li, all[i].second);
      const auto cand = std::make_pair(all[i].first, int(g));
      auto it = best.find(key);
      if (it == best.end() || cand < it->second) best[key] = cand;
    }
  }
  for (const auto& [key, v] : best) {
    a.levels[key.first].matched_gt[key.second] = v.second;
    a.levels[key.first].target_class[key.second] = gt.boxes[v.second].label;
  }
  return a;
}

// ---- evaluation ----

// Quadratic-time evaluator: explicit total order, then
// AP = (1 / G) * sum over TP ranks k of max_{j >= k} precision(j).
inline double reference_ap(const std::vector<std::vector<geometry::Detection>>& dets,
                           const std::vector<std::vector<geometry::GtBox>>& gts, int cls, double thr) {
  int num_gt = 0;
  for (const auto& s : gts)
    for (const auto& g : s) num_gt += g.label == cls;
  if (num_gt == 0) return std::nan("");
  std::vector<std::tuple<double, std::size_t, std::size_t>> order;
  for (std::size_t s = 0; s < dets.size(); ++s)
    for (std::size_t i = 0; i < dets[s].size(); ++i)
      if (dets[s][i].label == cls) order.emplace_back(dets[s][i].score, s, i);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<std::vector<bool>> taken(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) taken[s].assign(gts[s].size(), false);
  std::vector<bool> tp;
  for (const auto& [score, s, i] : order) {
    int arg = -1;
    double best = -1;
    for (std::size_t g = 0; g < gts[s].size(); ++g) {
      if (gts[s][g].label != cls || taken[s][g]) continue;
      const double v = geometry::iou(dets[s][i].box, gts[s][g].box);
      if (v > best) best = v, arg = int(g);
    }
    tp.push_back(arg >= 0 && best >= thr);
    if (tp.back()) taken[s][arg] = true;
  }
  double ap = 0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    if (!tp[k]) continue;
    double best = 0;
    for (std::size_t j = k; j < tp.size(); ++j) {
      const double hits = double(std::count(tp.begin(), tp.begin() + long(j) + 1, true));
      best = std::max(best, hits / double(j + 1));
    }
    ap += best;
  }
  return ap / num_gt;
}

// Random evaluation instance: detections near ground truth, spurious ones,
// label swaps, and coarse scores that tie.
struct EvalInstance {
  std::vector<std::vector<geometry::Detection>> dets;
  std::vector<std::vector<geometry::GtBox>> gts;
};

inline EvalInstance random_eval_instance(std::mt19937_64& rng, int scenes, int num_classes) {
  std::uniform_int_distribution<int> ng(0, 6), nd(0, 10), cls(0, num_classes - 1), q(0, 10);
  std::bernoulli_distribution near(0.6);
  auto rand_box = [&] {
    std::uniform_real_distribution<double> p(0, 3), s(0.2, 1.2), y(-3, 3);
    return geometry::make_box(p(rng), p(rng), p(rng), s(rng), s(rng), s(rng), y(rng));
  };
  auto jiggle = [&](const geometry::Box3D& b, double amount) {
    std::normal_distribution<double> n(0.0, amount);
    geometry::Box3D o = b;
    for (int a = 0; a < 3; ++a) {
      o.center[a] += n(rng);
      o.size[a] = std::max(0.05, o.size[a] * (1.0 + n(rng)));
    }
    o.yaw = geometry::normalize_yaw(o.yaw + n(rng));
    return o;
  };
  EvalInstance e;
  e.gts.resize(scenes);
  e.dets.resize(scenes);
  for (int s = 0; s < scenes; ++s) {
    const int n = ng(rng);
    for (int i = 0; i < n; ++i) e.gts[s].push_back({rand_box(), cls(rng)});
    const int m = nd(rng);
    for (int i = 0; i < m; ++i) {
      geometry::Detection d;
      if (!e.gts[s].empty() && near(rng)) {
        const auto& g = e.gts[s][std::uniform_int_distribution<std::size_t>(0, e.gts[s].size() - 1)(rng)];
        d.box = jiggle(g.box, 0.1);
        d.label = near(rng) ? g.label : cls(rng);
      } else {
        d.box = rand_box();
        d.label = cls(rng);
      }
      d.score = q(rng) / 10.0;
      e.dets[s].push_back(d);
    }
  }
  return e;
}

}  // namespace sdet::oracle
