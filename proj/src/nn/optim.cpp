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

#include "sdet/nn/optim.hpp"

#include <cmath>

namespace sdet::nn {

template <class T>
void AdamW<T>::step(ParamStore<T>& params) {
  double sq = 0.0;
  for (const auto& p : params.all()) {
    if (!p.trainable || !p.var.has_grad()) continue;
    for (T g : p.var.grad().flat()) sq += static_cast<double>(g) * g;
  }
  last_norm_ = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0.0 && last_norm_ > cfg_.clip_norm) ? cfg_.clip_norm / last_norm_ : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    Matrix<T>& w = p.var.mutable_value();
    auto& st = state_[p.name];
    if (!st.m.same_shape(w)) {
      st.m = Matrix<T>(w.rows(), w.cols());
      st.v = Matrix<T>(w.rows(), w.cols());
    }
    const bool has_grad = p.var.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? static_cast<double>(p.var.grad()[i]) * clip : 0.0;
      const double m = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
      const double v = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
      st.m[i] = static_cast<T>(m);
      st.v[i] = static_cast<T>(v);
      double wi = static_cast<double>(w[i]);
      wi -= cfg_.lr * cfg_.weight_decay * wi;
      wi -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

double stepped_lr(double base_lr, std::int64_t step, std::int64_t total_steps, const std::vector<double>& milestones,
                  double factor) {
  double lr = base_lr;
  for (double m : milestones) {
    if (static_cast<double>(step) >= m * static_cast<double>(total_steps)) lr *= factor;
  }
  return lr;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace sdet::nn
