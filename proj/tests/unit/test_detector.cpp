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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "sdet/common/error.hpp"
#include "sdet/detector/assign.hpp"
#include "sdet/detector/loss.hpp"
#include "sdet/detector/model.hpp"
#include "sdet/nn/optim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sdet;
using namespace sdet::detector;
using geometry::Box3D;
using geometry::GtBox;
using oracle::brute_tr3d;
using oracle::grid_locations;

namespace {

Box3D mk(const std::array<double, 3>& c, const std::array<double, 3>& s, double yaw) {
  return geometry::make_box(c[0], c[1], c[2], s[0], s[1], s[2], yaw);
}

Box3D random_box(std::mt19937_64& rng, double lo, double hi, bool yaw) {
  std::uniform_real_distribution<double> pos(0.3, 2.9), sz(lo, hi), ang(-3.1, 3.1);
  return mk({pos(rng), pos(rng), pos(rng) * 0.5}, {sz(rng), sz(rng), sz(rng)}, yaw ? ang(rng) : 0.0);
}

// Head output with explicit locations and raw values (single level).
HeadOutput manual_output(int level, double voxel, const std::vector<sparse::Coord4>& coords, Matrix<float> cls,
                         Matrix<float> reg, Matrix<float> ctr = {}) {
  HeadOutput out;
  LevelOutput lo;
  lo.level = level;
  lo.geom = std::make_shared<const sparse::CoordSet>(coords, 1 << level, voxel);
  lo.cls = nn::Var<float>::leaf(std::move(cls));
  lo.reg = nn::Var<float>::leaf(std::move(reg));
  if (!ctr.empty()) lo.ctr = nn::Var<float>::leaf(std::move(ctr));
  out.levels.push_back(lo);
  return out;
}

// Surface points of a box plus a floor patch, voxelized at `voxel`.
sparse::SparseTensor<float> box_scene(const std::vector<Box3D>& boxes, double voxel, std::int32_t batch) {
  std::vector<std::array<double, 3>> pts;
  const double step = voxel * 0.5;
  for (double x = 0.0; x < 3.2; x += step)
    for (double y = 0.0; y < 3.2; y += step) pts.push_back({x, y, 0.01});
  for (const auto& b : boxes) {
    const double hx = b.size[0] / 2, hy = b.size[1] / 2, hz = b.size[2] / 2;
    for (double u = -hx; u <= hx; u += step)
      for (double v = -hy; v <= hy; v += step) {
        pts.push_back({b.center[0] + u, b.center[1] + v, b.center[2] + hz});
      }
    for (double z = -hz; z <= hz; z += step) {
      for (double u = -hx; u <= hx; u += step) {
        pts.push_back({b.center[0] + u, b.center[1] - hy, b.center[2] + z});
        pts.push_back({b.center[0] + u, b.center[1] + hy, b.center[2] + z});
      }
      for (double v = -hy; v <= hy; v += step) {
        pts.push_back({b.center[0] - hx, b.center[1] + v, b.center[2] + z});
        pts.push_back({b.center[0] + hx, b.center[1] + v, b.center[2] + z});
      }
    }
  }
  Matrix<double> f(pts.size(), 4);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    f(i, 0) = 1.0;
    f(i, 3) = pts[i][2];
  }
  return sparse::voxelize<float>(pts, f, voxel, batch);
}

}  // namespace

TEST_SUITE("detector") {
  TEST_CASE("nearest-location assigner matches a full-sort oracle") {
    std::mt19937_64 rng(11);
    ModelConfig cfg;
    cfg.class_levels = {2, 3, 2};
    for (int trial = 0; trial < 30; ++trial) {
      cfg.assigner_k = 1 + trial % 8;
      std::vector<LevelLocations> locs = {grid_locations(2, 0.1, 8, 3, 2), grid_locations(3, 0.1, 4, 2, 2)};
      std::vector<std::vector<GtBox>> scenes(2);
      std::uniform_int_distribution<int> ng(0, 6), lab(0, 2);
      for (auto& s : scenes) {
        const int n = ng(rng);
        for (int i = 0; i < n; ++i) s.push_back({random_box(rng, 0.1, 1.5, trial % 2), lab(rng)});
      }
      // Duplicate a center to exercise equal-distance contests.
      if (scenes[0].size() >= 2) scenes[0][1].box.center = scenes[0][0].box.center;
      const auto gt = BatchGt::from_scenes(scenes);
      const auto got = tr3d_assign(locs, gt, cfg);
      const auto want = brute_tr3d(locs, gt, cfg);
      for (std::size_t i = 0; i < locs.size(); ++i) {
        CHECK(got.levels[i].matched_gt == want.levels[i].matched_gt);
        CHECK(got.levels[i].target_class == want.levels[i].target_class);
      }
    }
  }

  TEST_CASE("nearest-location assigner properties") {
    std::mt19937_64 rng(5);
    ModelConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<LevelLocations> locs = {grid_locations(2, 0.1, 8, 3, 1), grid_locations(3, 0.1, 4, 2, 1)};
      std::vector<GtBox> boxes;
      for (int i = 0; i < 1 + trial % 4; ++i) boxes.push_back({random_box(rng, 0.1, 1.0, false), i % 3});
      const auto gt = BatchGt::from_scenes({boxes});
      const auto a = tr3d_assign(locs, gt, cfg);
      // Every gt holds at most k locations, one gt per location, and a lone
      // gt gets exactly k.
      std::vector<int> per_gt(boxes.size(), 0);
      for (const auto& l : a.levels)
        for (int g : l.matched_gt)
          if (g >= 0) ++per_gt[g];
      for (int c : per_gt) CHECK(c <= cfg.assigner_k);
      if (boxes.size() == 1) CHECK(per_gt[0] == cfg.assigner_k);
      CHECK(a.unassigned_gt == 0);

      // Dropping a location nobody selected leaves the rest unchanged.
      const auto want = brute_tr3d(locs, gt, cfg);
      std::vector<char> in_topk(locs[0].pos.size(), 0);
      {
        ModelConfig big = cfg;
        big.assigner_k = cfg.assigner_k;
        for (std::size_t g = 0; g < boxes.size(); ++g) {
          const auto solo = BatchGt::from_scenes({{boxes[g]}});
          const auto s = brute_tr3d(locs, solo, big);
          for (std::size_t r = 0; r < in_topk.size(); ++r) in_topk[r] |= s.levels[0].matched_gt[r] >= 0;
        }
      }
      std::size_t drop = 0;
      while (drop < in_topk.size() && in_topk[drop]) ++drop;
      REQUIRE(drop < in_topk.size());
      auto fewer = locs;
      fewer[0].pos.erase(fewer[0].pos.begin() + long(drop));
      fewer[0].batch.erase(fewer[0].batch.begin() + long(drop));
      const auto b = tr3d_assign(fewer, gt, cfg);
      for (std::size_t r = 0, s = 0; r < locs[0].pos.size(); ++r) {
        if (r == drop) continue;
        CHECK(b.levels[0].matched_gt[s++] == a.levels[0].matched_gt[r]);
      }
    }
  }

  TEST_CASE("thin wall: nearest assigner gives k locations, inside-box gives none") {
    ModelConfig cfg;
    // Level-2 centers sit at 0.2 + 0.4 n; the wall plane y = 0.4 falls between.
    const auto wall = mk({1.0, 0.4, 0.45}, {1.0, 0.05, 0.9}, 0.0);
    const auto gt = BatchGt::from_scenes({std::vector<GtBox>{{wall, 0}}});
    std::vector<LevelLocations> locs = {grid_locations(2, 0.1, 8, 3, 1), grid_locations(3, 0.1, 4, 2, 1)};
    CHECK(inside_box_level(wall, cfg) == 2);
    const auto a = tr3d_assign(locs, gt, cfg);
    CHECK(a.num_foreground() == std::size_t(cfg.assigner_k));
    CHECK(a.unassigned_gt == 0);
    const auto b = inside_box_assign(locs, gt, cfg);
    CHECK(b.num_foreground() == 0);
    CHECK(b.unassigned_gt == 1);
  }

  TEST_CASE("inside-box assigner prefers the smaller of nested boxes") {
    ModelConfig cfg;
    const auto big = mk({1.6, 1.6, 0.6}, {1.5, 1.5, 1.2}, 0.0);
    const auto small = mk({1.6, 1.6, 0.6}, {0.9, 0.9, 0.9}, 0.0);
    REQUIRE(inside_box_level(big, cfg) == 2);
    REQUIRE(inside_box_level(small, cfg) == 2);
    std::vector<LevelLocations> locs = {grid_locations(2, 0.1, 8, 3, 1)};
    for (bool order : {false, true}) {
      std::vector<GtBox> boxes = order ? std::vector<GtBox>{GtBox{small, 1}, GtBox{big, 0}}
                                               : std::vector<GtBox>{GtBox{big, 0}, GtBox{small, 1}};
      const auto a = inside_box_assign(locs, BatchGt::from_scenes({boxes}), cfg);
      int n_small = 0, n_big = 0;
      for (std::size_t r = 0; r < locs[0].pos.size(); ++r) {
        const auto& p = locs[0].pos[r];
        const int cls = a.levels[0].target_class[r];
        if (geometry::contains(small, p)) {
          CHECK(cls == 1);
          ++n_small;
        } else if (geometry::contains(big, p)) {
          CHECK(cls == 0);
          ++n_big;
        } else {
          CHECK(cls == -1);
        }
      }
      CHECK(n_small > 0);
      CHECK(n_big > 0);
    }
  }

  TEST_CASE("inside-box scale rule") {
    ModelConfig cfg;
    CHECK(inside_box_level(mk({0, 0, 0}, {0.3, 0.3, 0.3}, 0), cfg) == 2);
    CHECK(inside_box_level(mk({0, 0, 0}, {0.3, 2.0, 0.3}, 0), cfg) == 3);
    cfg.use_head_level1 = true;
    CHECK(inside_box_level(mk({0, 0, 0}, {0.5, 0.5, 0.5}, 0), cfg) == 1);
    CHECK(inside_box_level(mk({0, 0, 0}, {0.2, 0.2, 0.2}, 0), cfg) == 1);
  }

  TEST_CASE("centerness values") {
    const auto box = mk({0, 0, 0}, {2, 2, 2}, 0.0);
    CHECK(centerness({0, 0, 0}, box) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(centerness({1.0, 0, 0}, box) == 0.0);
    CHECK(centerness({3.0, 0, 0}, box) == 0.0);
    CHECK(centerness({0.5, 0, 0}, box) == doctest::Approx(std::cbrt(1.0 / 3.0)).epsilon(1e-12));
    const auto rot = mk({1, 1, 0}, {2, 2, 2}, M_PI / 2);
    CHECK(centerness({1, 1.5, 0}, rot) == doctest::Approx(std::cbrt(1.0 / 3.0)).epsilon(1e-12));
  }

  TEST_CASE("encode and decode are inverse") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.45, 0.45);
    for (bool oriented : {false, true}) {
      for (int t = 0; t < 200; ++t) {
        const Box3D box = random_box(rng, 0.05, 2.0, oriented);
        const double c = std::cos(box.yaw), s = std::sin(box.yaw);
        const double lx = u(rng) * box.size[0], ly = u(rng) * box.size[1], lz = u(rng) * box.size[2];
        const std::array<double, 3> p = {box.center[0] + c * lx - s * ly, box.center[1] + s * lx + c * ly,
                                         box.center[2] + lz};
        const double scale = 0.4;
        const auto raw = encode_box(p, box, scale, oriented);
        std::vector<float> rf(raw.begin(), raw.end());
        const Box3D back = decode_box(p, rf.data(), scale, oriented);
        for (int a = 0; a < 3; ++a) {
          CHECK(back.center[a] == doctest::Approx(box.center[a]).epsilon(1e-6).scale(1.0));
          CHECK(back.size[a] == doctest::Approx(box.size[a]).epsilon(1e-6).scale(1.0));
        }
        if (oriented) CHECK(std::abs(geometry::normalize_yaw(back.yaw - box.yaw)) < 1e-6);
      }
    }
    CHECK_THROWS_AS(encode_box({5, 5, 5}, mk({0, 0, 0}, {1, 1, 1}, 0), 0.4, false), InputError);
  }

  TEST_CASE("saturated logits on exact boxes give near-zero loss") {
    ModelConfig cfg;
    cfg.use_centerness = true;
    const double voxel = cfg.base_voxel_size, scale = voxel * 4;
    // Locations at the box center with every face 1 scale away: raw = 0 exactly.
    std::vector<sparse::Coord4> coords = {{0, 4, 4, 0}, {0, 12, 4, 0}, {0, 4, 12, 0}};
    std::vector<GtBox> boxes;
    for (const auto& c : coords) {
      const std::array<double, 3> p = {(c.i + 2) * voxel, (c.j + 2) * voxel, (c.k + 2) * voxel};
      boxes.push_back({mk(p, {2 * scale, 2 * scale, 2 * scale}, 0.0), 1});
    }
    Matrix<float> cls(3, 3, -20.0f), reg(3, 6), ctr(3, 1, 20.0f);
    for (int r = 0; r < 3; ++r) cls(r, 1) = 20.0f;
    auto out = manual_output(2, voxel, coords, cls, reg, ctr);
    Assignment a;
    a.levels.push_back({2, {1, 1, 1}, {0, 1, 2}});
    const auto gt = BatchGt::from_scenes({boxes});
    const auto res = compute_loss(out, a, gt, cfg);
    CHECK(res.parts.total <= 1e-6);
    CHECK(res.parts.num_foreground == 3);

    // No foreground: regression vanishes, classification does not.
    Assignment none;
    none.levels.push_back({2, {-1, -1, -1}, {-1, -1, -1}});
    const auto bg = compute_loss(out, none, gt, cfg);
    CHECK(bg.parts.reg == 0.0);
    CHECK(bg.parts.ctr == 0.0);
    CHECK(bg.parts.cls > 0.0);
    CHECK(std::isfinite(bg.parts.total));
  }

  TEST_CASE("loss matches a reference loop and its gradient") {
    std::mt19937_64 rng(17);
    for (bool oriented : {false, true}) {
      for (RegressionLoss kind : {RegressionLoss::Diou, RegressionLoss::Iou}) {
        ModelConfig cfg;
        cfg.use_centerness = true;
        cfg.oriented = oriented;
        cfg.regression_loss = kind;
        const double voxel = cfg.base_voxel_size, scale = voxel * 4;
        std::vector<sparse::Coord4> coords;
        for (int i = 0; i < 10; ++i) coords.push_back({0, 4 * (i % 5), 4 * (i / 5), 0});
        const int nreg = oriented ? 8 : 6;
        auto cls = testing::random_matrix<float>(rng, 10, 3, -3.0, 3.0);
        auto reg = testing::random_matrix<float>(rng, 10, nreg, -0.5, 0.8);
        auto ctr = testing::random_matrix<float>(rng, 10, 1, -2.0, 2.0);
        std::vector<GtBox> boxes = {{mk({0.6, 0.4, 0.3}, {1.2, 0.8, 0.7}, oriented ? 0.3 : 0.0), 0},
                                    {mk({1.4, 0.5, 0.2}, {0.6, 0.9, 0.5}, 0.0), 2}};
        Assignment a;
        a.levels.push_back({2, std::vector<int>(10, -1), std::vector<int>(10, -1)});
        for (int r : {0, 1, 5, 6}) a.levels[0].matched_gt[r] = 0;
        for (int r : {3, 8}) a.levels[0].matched_gt[r] = 1;
        for (int r = 0; r < 10; ++r) {
          const int g = a.levels[0].matched_gt[r];
          a.levels[0].target_class[r] = g < 0 ? -1 : boxes[g].label;
        }
        const auto gt = BatchGt::from_scenes({boxes});

        auto reference = [&](const Matrix<float>& C, const Matrix<float>& R, const Matrix<float>& T) {
          double lc = 0, lr = 0, lt = 0;
          int nfg = 0;
          for (int r = 0; r < 10; ++r) {
            for (int c = 0; c < 3; ++c) {
              const double p = 1.0 / (1.0 + std::exp(-double(C(r, c))));
              if (a.levels[0].target_class[r] == c) lc += -0.25 * (1 - p) * (1 - p) * std::log(p);
              else lc += -0.75 * p * p * std::log(1 - p);
            }
            const int g = a.levels[0].matched_gt[r];
            if (g < 0) continue;
            ++nfg;
            const std::array<double, 3> pos = {(coords[r].i + 2) * voxel, (coords[r].j + 2) * voxel,
                                               (coords[r].k + 2) * voxel};
            const Box3D pred = decode_box(pos, R.row(r), scale, oriented);
            lr += kind == RegressionLoss::Diou ? geometry::diou_loss(pred, boxes[g].box, cfg.diou_frame)
                                               : 1.0 - geometry::iou(pred, boxes[g].box);
            const double t = centerness(pos, boxes[g].box);
            const double s = 1.0 / (1.0 + std::exp(-double(T(r, 0))));
            lt += -(t * std::log(s) + (1 - t) * std::log(1 - s));
          }
          return lc / nfg + lr / nfg + lt / nfg;
        };

        auto out = manual_output(2, voxel, coords, cls, reg, ctr);
        const auto res = compute_loss(out, a, gt, cfg);
        CHECK(res.parts.total == doctest::Approx(reference(cls, reg, ctr)).epsilon(1e-9));
        CHECK(double(res.total.value()(0, 0)) == doctest::Approx(res.parts.total).epsilon(1e-6));

        nn::backward(res.total);
        const auto& lo = out.levels[0];
        auto fd = [&](Matrix<float>& m, std::size_t r, std::size_t c) {
          const float keep = m(r, c);
          const float h = 1e-3f;
          m(r, c) = keep + h;
          const double up = reference(cls, reg, ctr);
          m(r, c) = keep - h;
          const double dn = reference(cls, reg, ctr);
          m(r, c) = keep;
          return (up - dn) / (2.0 * h);
        };
        auto close = [](double g, double n) { return std::abs(g - n) <= 2e-3 * std::max({std::abs(g), std::abs(n), 1e-2}); };
        for (int r = 0; r < 10; ++r) {
          for (int c = 0; c < 3; ++c) CHECK(close(lo.cls.grad()(r, c), fd(cls, r, c)));
          for (int c = 0; c < nreg; ++c) {
            INFO("oriented " << oriented << " diou " << (kind == RegressionLoss::Diou) << " r " << r << " c " << c
                             << " grad " << lo.reg.grad()(r, c) << " fd " << fd(reg, r, c));
            CHECK(close(lo.reg.grad()(r, c), fd(reg, r, c)));
          }
          CHECK(close(lo.ctr.grad()(r, 0), fd(ctr, r, 0)));
        }
      }
    }
  }

  TEST_CASE("decode suppresses overlapping candidates of one class") {
    ModelConfig cfg;
    const double voxel = cfg.base_voxel_size;
    std::vector<sparse::Coord4> coords = {{0, 0, 0, 0}, {0, 4, 0, 0}, {1, 0, 0, 0}};
    Matrix<float> cls(3, 3, -10.0f), reg(3, 6, 0.5f);
    cls(0, 0) = 2.0f;   // 0.881
    cls(1, 0) = 1.0f;   // 0.731, overlaps row 0
    cls(1, 2) = 0.5f;   // other class survives
    cls(2, 0) = 1.5f;   // other scene
    auto out = manual_output(2, voxel, coords, cls, reg);
    const auto dets = decode(out, cfg, 2);
    REQUIRE(dets.size() == 2);
    REQUIRE(dets[0].size() == 2);
    CHECK(dets[0][0].label == 0);
    CHECK(dets[0][0].score == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    CHECK(dets[0][1].label == 2);
    REQUIRE(dets[1].size() == 1);
    CHECK(dets[1][0].score == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))));
    CHECK(dets[0][0].box.size[0] == doctest::Approx(2 * std::exp(0.5) * 0.4).epsilon(1e-6));

    cfg.nms_pre = 1;
    CHECK(decode(out, cfg, 2)[0].size() == 1);
    CHECK_THROWS_AS(decode(out, cfg, 1), InputError);
  }

  TEST_CASE("parameter counts") {
    nn::ParamStore<float> store;
    std::mt19937_64 rng(0);
    nn::Linear<float> lin(store, "l", 4, 8, true, rng);
    CHECK(store.count_trainable() == 40);

    ModelConfig cfg;
    cfg.level_channels = {16, 32, 64, 256};
    cfg.max_channels = 64;
    cfg.use_channel_cap = false;
    const std::size_t uncapped = Detector(cfg).count_params();
    cfg.use_channel_cap = true;
    const std::size_t capped = Detector(cfg).count_params();
    CHECK(capped < uncapped);
    CHECK(cfg.channels(4) == 64);

    // Desk preset stays small enough for single-core training.
    CHECK(Detector(ModelConfig{}).count_params() < 1'000'000);
  }

  TEST_CASE("ablation toggles change the layer graph") {
    ModelConfig cfg;
    {
      Detector d(cfg);
      CHECK_FALSE(d.has_layer("neck.up1.conv"));
      CHECK(d.count_layers("generative_transposed_conv") == 0);
      CHECK(d.count_layers("prune") == 0);
      CHECK(d.has_layer("neck.out2.conv"));
      CHECK(d.has_layer("neck.out3.conv"));
      CHECK_FALSE(d.has_layer("neck.out4.conv"));
    }
    cfg.use_head_level1 = true;
    cfg.use_pruning = true;
    {
      Detector d(cfg);
      CHECK(d.has_layer("neck.up1.conv"));
      CHECK(d.count_layers("generative_transposed_conv") == 1);
      CHECK(d.count_layers("prune") >= 1);
      CHECK(d.has_layer("neck.out1.conv"));
    }
    cfg.use_head_level4 = true;
    CHECK(Detector(cfg).has_layer("neck.out4.conv"));
    cfg.use_fusion = true;
    CHECK(Detector(cfg).has_layer("fusion.adapter"));
  }

  TEST_CASE("empty scene and repeatable inference") {
    ModelConfig cfg;
    Detector d(cfg);
    sparse::SparseTensor<float> empty(sparse::CoordSet::canonical({}, 1, cfg.base_voxel_size), Matrix<float>(0, 4));
    const auto out = d.forward(empty, nullptr, false);
    CHECK(out.levels.size() == cfg.head_levels().size());
    for (const auto& l : out.levels) CHECK(l.size() == 0);
    const auto dets = decode(out, cfg, 1);
    CHECK(dets[0].empty());

    const auto scene = box_scene({mk({1.5, 1.5, 0.4}, {0.6, 0.6, 0.8}, 0)}, cfg.base_voxel_size, 0);
    nn::NoGradGuard ng;
    const auto a = d.forward(scene, nullptr, false);
    const auto b = d.forward(scene, nullptr, false);
    REQUIRE(a.levels.size() == b.levels.size());
    for (std::size_t i = 0; i < a.levels.size(); ++i) {
      CHECK(a.levels[i].size() > 0);
      CHECK(testing::max_abs_diff(a.levels[i].cls.value(), b.levels[i].cls.value()) == 0.0);
      CHECK(testing::max_abs_diff(a.levels[i].reg.value(), b.levels[i].reg.value()) == 0.0);
    }
    // The class prior keeps an untrained model under the score floor.
    CHECK(decode(a, cfg, 1)[0].empty());
  }

  TEST_CASE("fusion input is validated") {
    ModelConfig cfg;
    cfg.use_fusion = true;
    Detector d(cfg);
    const auto scene = box_scene({}, cfg.base_voxel_size, 0);
    CHECK_THROWS_AS(d.forward(scene, nullptr, false), ConfigError);
    Matrix<float> wrong(scene.size(), 3);
    CHECK_THROWS_AS(d.forward(scene, &wrong, false), ConfigError);
    // All-zero image features (every voxel outside the image) add nothing.
    Matrix<float> ok(scene.size(), cfg.fusion_channels);
    nn::NoGradGuard ng;
    const auto with = d.forward(scene, &ok, false);
    REQUIRE(with.levels.size() == 2);
    ModelConfig plain_cfg = cfg;
    plain_cfg.use_fusion = false;
    Detector plain(plain_cfg);
    const auto without = plain.forward(scene, nullptr, false);
    for (std::size_t l = 0; l < 2; ++l) CHECK(with.levels[l].cls.value() == without.levels[l].cls.value());
  }

  TEST_CASE("gradients reach every trainable layer and a small set can be overfit") {
    ModelConfig cfg;
    cfg.use_centerness = true;
    Detector d(cfg);
    std::vector<std::vector<GtBox>> scenes = {
        {{mk({1.0, 1.0, 0.45}, {0.5, 0.5, 0.9}, 0), 0}},
        {{mk({2.0, 1.5, 0.3}, {1.6, 0.9, 0.6}, 0), 1}},
        {{mk({1.5, 2.2, 0.45}, {1.0, 0.1, 0.9}, 0), 2}},
        {{mk({0.8, 2.0, 0.4}, {0.5, 0.5, 0.8}, 0), 0},
         {mk({2.2, 1.0, 0.3}, {1.4, 0.8, 0.6}, 0), 1}},
    };
    std::vector<sparse::SparseTensor<float>> parts;
    for (std::size_t b = 0; b < scenes.size(); ++b) {
      std::vector<Box3D> bx;
      for (const auto& g : scenes[b]) bx.push_back(g.box);
      parts.push_back(box_scene(bx, cfg.base_voxel_size, 0));
    }
    const auto batch = sparse::stack_batch<float>(parts);
    const auto gt = BatchGt::from_scenes(scenes);

    auto step_loss = [&]() {
      const auto out = d.forward(batch, nullptr, true);
      const auto a = assign(locations_of(out), gt, cfg);
      return compute_loss(out, a, gt, cfg);
    };

    d.params().zero_grad();
    const auto first = step_loss();
    nn::backward(first.total);
    for (const auto& p : d.params().all()) {
      if (!p.trainable) continue;
      double norm = 0;
      if (p.var.has_grad())
        for (std::size_t i = 0; i < p.var.grad().size(); ++i) norm += std::abs(p.var.grad()[i]);
      INFO(p.name);
      CHECK(norm > 0.0);
    }

    nn::AdamWConfig oc;
    oc.lr = 3e-3;
    nn::AdamW<float> opt(oc);
    // Centerness BCE against soft targets bottoms out at their entropy, so
    // progress is measured on classification plus regression.
    double start = first.parts.cls + first.parts.reg, last = start;
    for (int it = 0; it < 300; ++it) {
      d.params().zero_grad();
      const auto r = step_loss();
      REQUIRE(std::isfinite(r.parts.total));
      nn::backward(r.total);
      opt.step(d.params());
      last = r.parts.cls + r.parts.reg;
    }
    MESSAGE("overfit loss " << start << " -> " << last);
    CHECK(last * 10.0 <= start);
  }
}
