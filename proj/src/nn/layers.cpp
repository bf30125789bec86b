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

#include "sdet/nn/layers.hpp"

#include <cmath>

#include "sdet/common/error.hpp"

namespace sdet::nn {

template <class T>
Var<T> ParamStore<T>::add(const std::string& name, Matrix<T> init, bool trainable) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  Var<T> v(std::move(init), trainable);
  params_.push_back({name, v, trainable});
  return v;
}

template <class T>
const Parameter<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
std::size_t ParamStore<T>::count_trainable() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.var.value().size();
  }
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <class T>
Matrix<T> normal_matrix(std::size_t rows, std::size_t cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(dist(rng));
  return m;
}

template <class T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out, bool with_bias,
                  std::mt19937_64& rng, double init_std) {
  const double std = init_std >= 0.0 ? init_std : std::sqrt(1.0 / static_cast<double>(c_in));
  weight = store.add(name + ".weight", normal_matrix<T>(c_in, c_out, std, rng));
  if (with_bias) bias = store.add(name + ".bias", Matrix<T>(1, c_out));
}

template <class T>
Var<T> Linear<T>::operator()(const Var<T>& x) const {
  return linear(x, weight, bias.defined() ? &bias : nullptr);
}

template <class T>
SparseConvLayer<T>::SparseConvLayer(ParamStore<T>& store, const std::string& name, std::size_t c_in,
                                    std::size_t c_out, int k, sparse::ConvMode m, bool with_bias,
                                    std::mt19937_64& rng)
    : kernel_size(k), mode(m) {
  const std::size_t vol = static_cast<std::size_t>(k) * k * k;
  // He initialization over the fan-in of one output voxel.
  const double std = std::sqrt(2.0 / static_cast<double>(vol * c_in));
  weight = store.add(name + ".weight", normal_matrix<T>(vol * c_in, c_out, std, rng));
  if (with_bias) bias = store.add(name + ".bias", Matrix<T>(1, c_out));
}

template <class T>
SparseVar<T> SparseConvLayer<T>::operator()(const SparseVar<T>& x) const {
  return conv(x, weight, bias.defined() ? &bias : nullptr, kernel_size, mode);
}

template <class T>
TransposedConvLayer<T>::TransposedConvLayer(ParamStore<T>& store, const std::string& name, std::size_t c_in,
                                            std::size_t c_out, int k, int s, bool with_bias,
                                            std::mt19937_64& rng)
    : kernel_size(k), upsample(s) {
  const std::size_t vol = static_cast<std::size_t>(k) * k * k;
  const double std = std::sqrt(2.0 / static_cast<double>(c_in));
  weight = store.add(name + ".weight", normal_matrix<T>(vol * c_in, c_out, std, rng));
  if (with_bias) bias = store.add(name + ".bias", Matrix<T>(1, c_out));
}

template <class T>
SparseVar<T> TransposedConvLayer<T>::operator()(const SparseVar<T>& x) const {
  return transposed_conv(x, weight, bias.defined() ? &bias : nullptr, kernel_size, upsample);
}

template <class T>
SparseVar<T> TransposedConvLayer<T>::onto(const SparseVar<T>& x, const sparse::CoordSetPtr& target) const {
  return transposed_conv_onto(x, target, weight, bias.defined() ? &bias : nullptr, kernel_size);
}

template <class T>
BatchNormLayer<T>::BatchNormLayer(ParamStore<T>& store, const std::string& name, std::size_t channels) {
  gamma = store.add(name + ".gamma", Matrix<T>(1, channels, T(1)));
  beta = store.add(name + ".beta", Matrix<T>(1, channels));
  running_mean = store.add(name + ".running_mean", Matrix<T>(1, channels), false);
  running_var = store.add(name + ".running_var", Matrix<T>(1, channels, T(1)), false);
}

template <class T>
SparseVar<T> BatchNormLayer<T>::operator()(const SparseVar<T>& x, bool training, bool affine_only) const {
  Var<T> rm = running_mean;
  Var<T> rv = running_var;
  BatchNormOptions opt;
  opt.training = training;
  opt.affine_only = affine_only;
  return batch_norm(x, gamma, beta, rm.mutable_value(), rv.mutable_value(), opt);
}

template class ParamStore<float>;
template class ParamStore<double>;
template Matrix<float> normal_matrix<float>(std::size_t, std::size_t, double, std::mt19937_64&);
template Matrix<double> normal_matrix<double>(std::size_t, std::size_t, double, std::mt19937_64&);
template class Linear<float>;
template class Linear<double>;
template class SparseConvLayer<float>;
template class SparseConvLayer<double>;
template class TransposedConvLayer<float>;
template class TransposedConvLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;

}  // namespace sdet::nn
