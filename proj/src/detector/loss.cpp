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


#include "sdet/detector/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdet/common/error.hpp"
#include "sdet/geometry/dual.hpp"

namespace sdet::detector {
namespace {

using geometry::Box3D;
using D = geometry::Dual<7>;

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Builds the predicted box with derivatives w.r.t. raw[0..5] and yaw.
geometry::BoxT<D> dual_box(const std::array<double, 3>& p, const float* raw, double scale, bool oriented) {
  std::array<D, 6> d;
  for (int i = 0; i < 6; ++i) d[i] = exp(D::variable(raw[i], i)) * D(scale);
  D yaw = oriented ? D::variable(std::atan2(double(raw[6]), double(raw[7])), 6) : D(0.0);
  const D ox = (d[1] - d[0]) * D(0.5), oy = (d[3] - d[2]) * D(0.5), oz = (d[5] - d[4]) * D(0.5);
  geometry::BoxT<D> b;
  if (oriented) {
    const D c = cos(yaw), s = sin(yaw);
    b.center = {D(p[0]) + c * ox - s * oy, D(p[1]) + s * ox + c * oy, D(p[2]) + oz};
  } else {
    b.center = {D(p[0]) + ox, D(p[1]) + oy, D(p[2]) + oz};
  }
  b.size = {d[0] + d[1], d[2] + d[3], d[4] + d[5]};
  b.yaw = yaw;
  return b;
}

geometry::BoxT<D> constant_box(const Box3D& b) {
  return {{b.center[0], b.center[1], b.center[2]}, {b.size[0], b.size[1], b.size[2]}, b.yaw};
}

// Scalar node whose gradient w.r.t. each parent was computed in the forward
// pass; backward only scales by the upstream value.
nn::Var<float> precomputed_scalar(double value, const std::vector<nn::Var<float>>& parents,
                                  std::vector<Matrix<float>> grads, const char* op) {
  return nn::Var<float>::make(Matrix<float>(1, 1, static_cast<float>(value)), parents,
                              [grads = std::move(grads)](nn::Node<float>& n) {
                                const float up = n.grad(0, 0);
                                for (std::size_t i = 0; i < n.parents.size(); ++i) {
                                  auto& p = *n.parents[i];
                                  if (!p.requires_grad) continue;
                                  auto& g = p.ensure_grad();
                                  for (std::size_t j = 0; j < g.size(); ++j) g[j] += up * grads[i][j];
                                }
                              },
                              op);
}

}  // namespace

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

LossResult compute_loss(const HeadOutput& out, const Assignment& assignment, const BatchGt& gt,
                        const ModelConfig& cfg) {
  if (assignment.levels.size() != out.levels.size()) throw InputError("assignment does not match head output");
  LossResult res;
  const std::size_t n_fg = assignment.num_foreground();
  const double norm = static_cast<double>(std::max<std::size_t>(1, n_fg));
  const double gamma = cfg.focal_gamma, alpha = cfg.focal_alpha;

  std::vector<nn::Var<float>> cls_vars, reg_vars, ctr_vars;
  std::vector<Matrix<float>> cls_grads, reg_grads, ctr_grads;
  double cls_sum = 0.0, reg_sum = 0.0, ctr_sum = 0.0;

  for (std::size_t li = 0; li < out.levels.size(); ++li) {
    const auto& lo = out.levels[li];
    const auto& la = assignment.levels[li];
    if (la.target_class.size() != lo.size()) throw InputError("assignment does not match head output");
    const Matrix<float>& logits = lo.cls.value();
    Matrix<float> gc(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      for (std::size_t c = 0; c < logits.cols(); ++c) {
        const double x = logits(r, c);
        const double p = sigmoid(x), q = 1.0 - p;
        const double logp = -softplus(-x), logq = -softplus(x);
        if (la.target_class[r] == static_cast<int>(c)) {
          cls_sum += -alpha * std::pow(q, gamma) * logp;
          gc(r, c) = static_cast<float>(alpha * std::pow(q, gamma) * (gamma * p * logp - q) / norm);
        } else {
          cls_sum += -(1.0 - alpha) * std::pow(p, gamma) * logq;
          gc(r, c) = static_cast<float>((1.0 - alpha) * std::pow(p, gamma) * (p - gamma * q * logq) / norm);
        }
      }
    }
    cls_vars.push_back(lo.cls);
    cls_grads.push_back(std::move(gc));

    const double scale = cfg.base_voxel_size * cfg.stride(lo.level);
    const Matrix<float>& reg = lo.reg.value();
    Matrix<float> gr(reg.rows(), reg.cols());
    Matrix<float> gctr;
    if (cfg.use_centerness) gctr = Matrix<float>(lo.size(), 1);
    for (std::size_t r = 0; r < lo.size(); ++r) {
      const int g = la.matched_gt[r];
      if (g < 0) continue;
      const Box3D& target = gt.boxes[g].box;
      const auto pos = lo.geom->center(r);
      const auto pred = dual_box(pos, reg.row(r), scale, cfg.oriented);
      const auto tb = constant_box(target);
      const D l = cfg.regression_loss == RegressionLoss::Diou ? geometry::diou_loss(pred, tb, cfg.diou_frame)
                                                               : D(1.0) - geometry::iou(pred, tb);
      reg_sum += l.v;
      for (int i = 0; i < 6; ++i) gr(r, i) = static_cast<float>(l.d[i] / static_cast<double>(n_fg));
      if (cfg.oriented) {
        const double s = reg(r, 6), c = reg(r, 7);
        const double n2 = std::max(s * s + c * c, 1e-12);
        gr(r, 6) = static_cast<float>(l.d[6] * c / n2 / static_cast<double>(n_fg));
        gr(r, 7) = static_cast<float>(-l.d[6] * s / n2 / static_cast<double>(n_fg));
      }
      if (cfg.use_centerness) {
        const double t = centerness(pos, target);
        const double x = lo.ctr.value()(r, 0);
        ctr_sum += softplus(x) - t * x;
        gctr(r, 0) = static_cast<float>((sigmoid(x) - t) / static_cast<double>(n_fg));
      }
    }
    reg_vars.push_back(lo.reg);
    reg_grads.push_back(std::move(gr));
    if (cfg.use_centerness) {
      ctr_vars.push_back(lo.ctr);
      ctr_grads.push_back(std::move(gctr));
    }
  }

  res.parts.num_foreground = n_fg;
  res.parts.cls = cls_sum / norm;
  res.parts.reg = n_fg ? reg_sum / static_cast<double>(n_fg) : 0.0;
  res.parts.ctr = n_fg && cfg.use_centerness ? ctr_sum / static_cast<double>(n_fg) : 0.0;
  res.parts.total = res.parts.cls + res.parts.reg + res.parts.ctr;

  if (cls_vars.empty()) {
    res.total = nn::Var<float>::constant(Matrix<float>(1, 1));
    return res;
  }
  res.total = precomputed_scalar(res.parts.cls, cls_vars, std::move(cls_grads), "focal_loss");
  if (n_fg) {
    res.total = nn::add(res.total, precomputed_scalar(res.parts.reg, reg_vars, std::move(reg_grads), "box_loss"));
    if (cfg.use_centerness) {
      res.total = nn::add(res.total, precomputed_scalar(res.parts.ctr, ctr_vars, std::move(ctr_grads), "ctr_loss"));
    }
  }
  return res;
}

Box3D decode_box(const std::array<double, 3>& p, const float* raw, double scale, bool oriented) {
  std::array<double, 6> d;
  for (int i = 0; i < 6; ++i) d[i] = std::exp(static_cast<double>(raw[i])) * scale;
  const double yaw = oriented ? std::atan2(double(raw[6]), double(raw[7])) : 0.0;
  const double ox = 0.5 * (d[1] - d[0]), oy = 0.5 * (d[3] - d[2]), oz = 0.5 * (d[5] - d[4]);
  const double c = std::cos(yaw), s = std::sin(yaw);
  Box3D b;
  b.center = {p[0] + c * ox - s * oy, p[1] + s * ox + c * oy, p[2] + oz};
  b.size = {d[0] + d[1], d[2] + d[3], d[4] + d[5]};
  b.yaw = geometry::normalize_yaw(yaw);
  return b;
}

std::vector<double> encode_box(const std::array<double, 3>& p, const Box3D& box, double scale, bool oriented) {
  const double dx = p[0] - box.center[0], dy = p[1] - box.center[1];
  const double yaw = oriented ? box.yaw : 0.0;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const std::array<double, 3> local = {c * dx + s * dy, -s * dx + c * dy, p[2] - box.center[2]};
  std::vector<double> raw;
  for (int a = 0; a < 3; ++a) {
    const double minus = 0.5 * box.size[a] + local[a];
    const double plus = 0.5 * box.size[a] - local[a];
    if (minus <= 0.0 || plus <= 0.0) throw InputError("encode_box: location outside the box");
    raw.push_back(std::log(minus / scale));
    raw.push_back(std::log(plus / scale));
  }
  if (oriented) {
    raw.push_back(std::sin(box.yaw));
    raw.push_back(std::cos(box.yaw));
  }
  return raw;
}

std::vector<std::vector<geometry::Detection>> decode(const HeadOutput& out, const ModelConfig& cfg,
                                                     std::size_t num_scenes) {
  struct Candidate {
    double score;
    int level_idx;
    std::int32_t row;
    int label;
  };
  std::vector<std::vector<Candidate>> cands(num_scenes);
  for (std::size_t li = 0; li < out.levels.size(); ++li) {
    const auto& lo = out.levels[li];
    const auto& logits = lo.cls.value();
    for (std::size_t r = 0; r < lo.size(); ++r) {
      const int b = lo.geom->coords()[r].batch;
      if (b < 0 || static_cast<std::size_t>(b) >= num_scenes) throw InputError("decode: batch index out of range");
      const double ctr = cfg.use_centerness ? sigmoid(lo.ctr.value()(r, 0)) : 1.0;
      for (std::size_t c = 0; c < logits.cols(); ++c) {
        const double s = sigmoid(logits(r, c)) * ctr;
        if (s > cfg.score_threshold) cands[b].push_back({s, static_cast<int>(li), static_cast<std::int32_t>(r), int(c)});
      }
    }
  }
  std::vector<std::vector<geometry::Detection>> dets(num_scenes);
  for (std::size_t b = 0; b < num_scenes; ++b) {
    auto& cs = cands[b];
    std::stable_sort(cs.begin(), cs.end(), [](const Candidate& x, const Candidate& y) { return x.score > y.score; });
    if (cfg.nms_pre > 0 && cs.size() > static_cast<std::size_t>(cfg.nms_pre)) cs.resize(cfg.nms_pre);
    std::vector<geometry::Box3D> boxes;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& c : cs) {
      const auto& lo = out.levels[c.level_idx];
      const double scale = cfg.base_voxel_size * cfg.stride(lo.level);
      boxes.push_back(decode_box(lo.geom->center(c.row), lo.reg.value().row(c.row), scale, cfg.oriented));
      scores.push_back(c.score);
      labels.push_back(c.label);
    }
    for (std::size_t k : geometry::nms(boxes, scores, labels, cfg.nms_threshold)) {
      dets[b].push_back({boxes[k], labels[k], scores[k]});
    }
  }
  return dets;
}

}  // namespace sdet::detector
