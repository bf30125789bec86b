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
#include <map>
#include <string>
#include <vector>

#include "sdet/nn/layers.hpp"

namespace sdet::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 10.0;  // global L2 norm; <= 0 disables clipping
};

// Adam with decoupled weight decay. Gradients are read, never modified:
// clipping is applied as a scale factor inside the update.
template <class T>
class AdamW {
 public:
  struct Moments {
    Matrix<T> m;
    Matrix<T> v;
  };

  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore<T>& params);

  const AdamWConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  std::int64_t step_count() const noexcept { return steps_; }
  void set_step_count(std::int64_t s) noexcept { steps_ = s; }
  double last_grad_norm() const noexcept { return last_norm_; }

  std::map<std::string, Moments>& state() noexcept { return state_; }
  const std::map<std::string, Moments>& state() const noexcept { return state_; }

 private:
  AdamWConfig cfg_;
  std::int64_t steps_ = 0;
  double last_norm_ = 0.0;
  std::map<std::string, Moments> state_;
};

// Stepped decay: lr * factor^(number of milestones passed). Milestones are
// fractions of the total step budget.
double stepped_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                  const std::vector<double>& milestones = {8.0 / 12.0, 11.0 / 12.0}, double factor = 0.1);

}  // namespace sdet::nn
