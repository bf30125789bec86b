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


// Serial reference kernels against the OpenMP ones on a voxelized synthetic
// scene: timing per kernel and thread count, plus a bitwise comparison.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>

#include "sdet/cli/pipeline.hpp"
#include "sdet/data/synth.hpp"
#include "sdet/sparse/kernels.hpp"

using namespace sdet;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(F&& f, int reps) {
  f();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

bool same_bits(const Matrix<float>& a, const Matrix<float>& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP sparse convolution kernels"};
  int channels = 32, reps = 5, scenes = 2;
  double voxel = 0.05;
  std::vector<int> threads = {1, 2, 4};
  app.add_option("--channels", channels, "input and output channels");
  app.add_option("--reps", reps, "timed repetitions");
  app.add_option("--scenes", scenes, "synthetic scenes stacked into one batch");
  app.add_option("--voxel", voxel, "voxel size in meters");
  app.add_option("--threads", threads, "thread counts to try");
  CLI11_PARSE(app, argc, argv);

  const auto data = data::synth_scenes(1, scenes, data::synth_preset("geometric3"));
  std::vector<sparse::SparseTensor<float>> parts;
  for (const auto& s : data) parts.push_back(data::voxelize_scene(s, voxel));
  const auto input = sparse::stack_batch<float>(parts);
  const auto map = input.geom->submanifold_map(3);
  const sparse::Route route{*map, false};

  std::mt19937_64 rng(0);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Matrix<float> src(input.size(), channels), w(27 * channels, channels), gdst(input.size(), channels);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = n(rng);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = n(rng) * 0.05f;
  for (std::size_t i = 0; i < gdst.size(); ++i) gdst[i] = n(rng);
  std::vector<float> bias(channels, 0.1f);

  std::printf("voxels %zu, channels %d, kernel 3, pairs %zu, available threads %d\n", input.size(), channels,
              map->num_pairs(), omp_get_max_threads());

  Matrix<float> ref_f(input.size(), channels), ref_s(input.size(), channels), ref_w(w.rows(), w.cols());
  const double s_f = time_ms([&] { sparse::serial::conv_forward<float>(src, route, w, bias, ref_f); }, reps);
  const double s_s = time_ms(
      [&] {
        ref_s.fill(0.0f);
        sparse::serial::conv_backward_src<float>(gdst, route, w, ref_s);
      },
      reps);
  const double s_w = time_ms(
      [&] {
        ref_w.fill(0.0f);
        sparse::serial::conv_backward_weight<float>(src, gdst, route, ref_w);
      },
      reps);
  std::printf("%-10s %8s %12s %12s %12s %s\n", "backend", "threads", "forward ms", "grad-in ms", "grad-w ms",
              "bit-identical");
  std::printf("%-10s %8d %12.3f %12.3f %12.3f %s\n", "serial", 1, s_f, s_s, s_w, "reference");

  bool all_same = true;
  for (int t : threads) {
    omp_set_num_threads(t);
    Matrix<float> f(input.size(), channels), g(input.size(), channels), gw(w.rows(), w.cols());
    const double p_f = time_ms([&] { sparse::parallel::conv_forward<float>(src, route, w, bias, f); }, reps);
    const double p_s = time_ms(
        [&] {
          g.fill(0.0f);
          sparse::parallel::conv_backward_src<float>(gdst, route, w, g);
        },
        reps);
    const double p_w = time_ms(
        [&] {
          gw.fill(0.0f);
          sparse::parallel::conv_backward_weight<float>(src, gdst, route, gw);
        },
        reps);
    const bool same = same_bits(f, ref_f) && same_bits(g, ref_s) && same_bits(gw, ref_w);
    all_same = all_same && same;
    std::printf("%-10s %8d %12.3f %12.3f %12.3f %s\n", "openmp", t, p_f, p_s, p_w, same ? "yes" : "NO");
  }

  // Whole network forward under each backend.
  detector::ModelConfig cfg;
  detector::Detector model(cfg);
  const auto net_in = [&] {
    std::vector<sparse::SparseTensor<float>> p;
    for (const auto& s : data) p.push_back(data::voxelize_scene(s, cfg.base_voxel_size));
    return sparse::stack_batch<float>(p);
  }();
  nn::NoGradGuard ng;
  for (auto b : {sparse::Backend::Serial, sparse::Backend::Parallel}) {
    sparse::set_backend(b);
    omp_set_num_threads(threads.back());
    const double ms = time_ms([&] { model.forward(net_in, nullptr, false); }, reps);
    std::printf("network forward (%s): %.3f ms for %d scenes\n", b == sparse::Backend::Serial ? "serial" : "openmp",
                ms, scenes);
  }
  return all_same ? 0 : 1;
}
