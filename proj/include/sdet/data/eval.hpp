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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdet/geometry/detection.hpp"

namespace sdet::data {

// Per threshold and class average precision. Classes without ground truth
// get NaN and are left out of the mean.
struct MapResult {
  std::vector<double> thresholds;
  std::vector<std::vector<double>> ap;  // [threshold][class]
  std::vector<double> map;              // [threshold]
  std::vector<int> num_gt;              // [class]
  std::vector<int> excluded_classes;    // classes with no gt
};

// All-point AP from a ranked TP/FP sequence: area under the precision-recall
// curve after taking the monotone (right-to-left maximum) precision envelope.
double average_precision(const std::vector<char>& is_tp, int num_gt);

// Detections of each class are pooled over scenes and ranked by descending
// score; equal scores keep (scene, detection index) order. Each detection
// matches the highest-IoU still-unmatched gt of its class in its scene; a
// match with IoU >= threshold is a TP, anything else a FP.
MapResult eval_map(const std::vector<std::vector<geometry::Detection>>& detections,
                   const std::vector<std::vector<geometry::GtBox>>& ground_truth, int num_classes,
                   const std::vector<double>& thresholds = {0.25, 0.5});

struct Summary {
  double best = 0.0;
  double mean = 0.0;
};

Summary summarize(const std::vector<double>& values);

// Results of n_train x n_eval trials with the best / mean summary of every
// metric.
struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> thresholds;
  struct Trial {
    std::uint64_t train_seed = 0;
    std::uint64_t eval_seed = 0;
    MapResult result;
  };
  std::vector<Trial> trials;

  Summary map_summary(std::size_t threshold_index) const;
  Summary ap_summary(std::size_t threshold_index, int cls) const;
  nlohmann::json to_json() const;
  // Table rows in the "best (mean)" form, one per metric.
  std::string table() const;
};

class TrialError : public std::runtime_error {
 public:
  TrialError(const std::string& what, std::uint64_t seed) : std::runtime_error(what), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

// Train seeds are base_seed + 1000 * i; evaluation seeds add j + 1. A failing
// trial throws TrialError carrying its seed.
template <class TrainFn, class EvalFn>
EvalReport multi_trial(TrainFn&& train_fn, EvalFn&& eval_fn, int n_train, int n_eval, std::uint64_t base_seed,
                       std::vector<std::string> class_names, std::vector<double> thresholds = {0.25, 0.5}) {
  if (n_train < 1 || n_eval < 1) throw std::invalid_argument("multi_trial needs n_train, n_eval >= 1");
  EvalReport report;
  report.class_names = std::move(class_names);
  report.thresholds = std::move(thresholds);
  for (int i = 0; i < n_train; ++i) {
    const std::uint64_t ts = base_seed + 1000ull * static_cast<std::uint64_t>(i);
    auto model = [&] {
      try {
        return train_fn(ts);
      } catch (const std::exception& e) {
        throw TrialError(std::string("training trial failed (seed ") + std::to_string(ts) + "): " + e.what(), ts);
      }
    }();
    for (int j = 0; j < n_eval; ++j) {
      const std::uint64_t es = ts + static_cast<std::uint64_t>(j) + 1;
      try {
        report.trials.push_back({ts, es, eval_fn(model, es)});
      } catch (const std::exception& e) {
        throw TrialError(std::string("evaluation trial failed (seed ") + std::to_string(es) + "): " + e.what(), es);
      }
    }
  }
  return report;
}

}  // namespace sdet::data
