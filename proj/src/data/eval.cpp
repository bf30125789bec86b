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


#include "sdet/data/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "sdet/common/error.hpp"

namespace sdet::data {

double average_precision(const std::vector<char>& is_tp, int num_gt) {
  if (num_gt <= 0) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = is_tp.size();
  std::vector<double> recall(n + 2), precision(n + 2);
  recall[0] = 0.0;
  precision[0] = 0.0;
  double tp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i] ? 1.0 : 0.0;
    recall[i + 1] = tp / num_gt;
    precision[i + 1] = tp / static_cast<double>(i + 1);
  }
  recall[n + 1] = 1.0;
  precision[n + 1] = 0.0;
  for (std::size_t i = n + 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < n + 2; ++i) ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  return ap;
}

MapResult eval_map(const std::vector<std::vector<geometry::Detection>>& detections,
                   const std::vector<std::vector<geometry::GtBox>>& ground_truth, int num_classes,
                   const std::vector<double>& thresholds) {
  if (detections.size() != ground_truth.size()) throw InputError("detections and ground truth differ in scene count");
  MapResult res;
  res.thresholds = thresholds;
  res.num_gt.assign(num_classes, 0);
  for (const auto& scene : ground_truth)
    for (const auto& g : scene) {
      if (g.label < 0 || g.label >= num_classes) throw InputError("gt label outside the class universe");
      ++res.num_gt[g.label];
    }
  for (const auto& scene : detections)
    for (const auto& d : scene)
      if (d.label < 0 || d.label >= num_classes) throw InputError("detection label outside the class universe");
  for (int c = 0; c < num_classes; ++c)
    if (res.num_gt[c] == 0) res.excluded_classes.push_back(c);

  res.ap.assign(thresholds.size(), std::vector<double>(num_classes, std::numeric_limits<double>::quiet_NaN()));
  res.map.assign(thresholds.size(), 0.0);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < num_classes; ++c) {
      if (res.num_gt[c] == 0) continue;
      struct Ranked {
        double score;
        std::size_t scene, index;
      };
      std::vector<Ranked> ranked;
      for (std::size_t s = 0; s < detections.size(); ++s)
        for (std::size_t i = 0; i < detections[s].size(); ++i)
          if (detections[s][i].label == c) ranked.push_back({detections[s][i].score, s, i});
      std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
      std::vector<std::vector<char>> used(ground_truth.size());
      for (std::size_t s = 0; s < ground_truth.size(); ++s) used[s].assign(ground_truth[s].size(), 0);
      std::vector<char> is_tp;
      is_tp.reserve(ranked.size());
      for (const auto& r : ranked) {
        const auto& det = detections[r.scene][r.index];
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < ground_truth[r.scene].size(); ++g) {
          const auto& gt = ground_truth[r.scene][g];
          if (gt.label != c || used[r.scene][g]) continue;
          const double v = geometry::iou(det.box, gt.box);
          if (v > best) {
            best = v;
            best_g = g;
          }
        }
        const bool tp = best >= thresholds[t];
        if (tp) used[r.scene][best_g] = 1;
        is_tp.push_back(tp ? 1 : 0);
      }
      res.ap[t][c] = average_precision(is_tp, res.num_gt[c]);
    }
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < num_classes; ++c) {
      if (res.num_gt[c] == 0) continue;
      sum += res.ap[t][c];
      ++n;
    }
    res.map[t] = n ? sum / n : 0.0;
  }
  return res;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.best = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  // Rounding can put the mean a hair above the best of equal values.
  s.mean = std::min(s.mean, s.best);
  return s;
}

Summary EvalReport::map_summary(std::size_t ti) const {
  std::vector<double> v;
  for (const auto& t : trials) v.push_back(t.result.map.at(ti));
  return summarize(v);
}

Summary EvalReport::ap_summary(std::size_t ti, int cls) const {
  std::vector<double> v;
  for (const auto& t : trials) {
    const double a = t.result.ap.at(ti).at(cls);
    if (!std::isnan(a)) v.push_back(a);
  }
  return summarize(v);
}

nlohmann::json EvalReport::to_json() const {
  using nlohmann::json;
  auto nan_to_null = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json j;
  j["class_names"] = class_names;
  j["thresholds"] = thresholds;
  json summary = json::object();
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    char key[32];
    std::snprintf(key, sizeof(key), "mAP@%.2f", thresholds[t]);
    const auto s = map_summary(t);
    summary[key] = {{"best", s.best}, {"mean", s.mean}};
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      const auto a = ap_summary(t, static_cast<int>(c));
      char ck[96];
      std::snprintf(ck, sizeof(ck), "AP@%.2f/%s", thresholds[t], class_names[c].c_str());
      summary[ck] = {{"best", a.best}, {"mean", a.mean}};
    }
  }
  j["summary"] = summary;
  json tr = json::array();
  for (const auto& t : trials) {
    json ap = json::array();
    for (const auto& row : t.result.ap) {
      json r = json::array();
      for (double v : row) r.push_back(nan_to_null(v));
      ap.push_back(r);
    }
    tr.push_back({{"train_seed", t.train_seed},
                  {"eval_seed", t.eval_seed},
                  {"map", t.result.map},
                  {"ap", ap},
                  {"excluded_classes", t.result.excluded_classes}});
  }
  j["trials"] = tr;
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char buf[160];
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const auto s = map_summary(t);
    std::snprintf(buf, sizeof(buf), "mAP@%.2f  %.1f (%.1f)\n", thresholds[t], 100.0 * s.best, 100.0 * s.mean);
    out << buf;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      const auto a = ap_summary(t, static_cast<int>(c));
      std::snprintf(buf, sizeof(buf), "  AP@%.2f %-14s %.1f (%.1f)\n", thresholds[t], class_names[c].c_str(),
                    100.0 * a.best, 100.0 * a.mean);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace sdet::data
