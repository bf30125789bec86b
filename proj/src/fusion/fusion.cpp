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


#include "sdet/fusion/fusion.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "sdet/common/error.hpp"

namespace sdet::fusion {
namespace {

static_assert(std::endian::native == std::endian::little, "feature map I/O assumes a little-endian host");

constexpr char kMapMagic[8] = {'S', 'D', 'E', 'T', 'F', 'M', 'A', 'P'};

// 3x3 stride-2 convolution, edge-clamped, followed by ReLU.
std::vector<float> conv3x3_s2(const std::vector<float>& in, int h, int w, int cin, const std::vector<float>& weight,
                              const std::vector<float>& bias, int cout, int& oh, int& ow) {
  oh = (h + 1) / 2;
  ow = (w + 1) / 2;
  std::vector<float> out(std::size_t(oh) * ow * cout);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      float* o = out.data() + (std::size_t(y) * ow + x) * cout;
      for (int co = 0; co < cout; ++co) o[co] = bias[co];
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = std::clamp(2 * y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = std::clamp(2 * x + dx, 0, w - 1);
          const float* s = in.data() + (std::size_t(sy) * w + sx) * cin;
          const float* wk = weight.data() + std::size_t((dy + 1) * 3 + (dx + 1)) * cin * cout;
          for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co) o[co] += s[ci] * wk[ci * cout + co];
        }
      }
      for (int co = 0; co < cout; ++co) o[co] = std::max(o[co], 0.0f);
    }
  }
  return out;
}

template <class U>
void put(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw ParseError(path + ": truncated feature map header");
  return v;
}

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  const double err = (R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-6) throw ConfigError("camera rotation is not orthonormal (error " + std::to_string(err) + ")");
  if (!R.allFinite() || !t.allFinite()) throw ConfigError("camera extrinsics are not finite");
}

std::vector<Projection> project(std::span<const std::array<double, 3>> points, const CameraModel& cam) {
  std::vector<Projection> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d x = cam.R * Eigen::Vector3d(points[i][0], points[i][1], points[i][2]) + cam.t;
    Projection& p = out[i];
    p.depth = x.z();
    if (x.z() <= kMinDepth) continue;
    p.u = cam.fx * x.x() / x.z() + cam.cx;
    p.v = cam.fy * x.y() / x.z() + cam.cy;
    p.valid = p.u >= 0.0 && p.v >= 0.0 && p.u < cam.width && p.v < cam.height;
  }
  return out;
}

void sample_bilinear(const FeatureMap2D& map, double u, double v, float* out) {
  const int c = map.channels;
  std::fill(out, out + c, 0.0f);
  if (map.width == 0 || map.height == 0) return;
  if (!(u >= 0.0 && v >= 0.0 && u < double(map.width) * map.stride && v < double(map.height) * map.stride)) return;
  const double gx = std::clamp(u / map.stride - 0.5, 0.0, double(map.width - 1));
  const double gy = std::clamp(v / map.stride - 0.5, 0.0, double(map.height - 1));
  const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, map.width - 1), y1 = std::min(y0 + 1, map.height - 1);
  const double ax = gx - x0, ay = gy - y0;
  const double w00 = (1 - ax) * (1 - ay), w01 = ax * (1 - ay), w10 = (1 - ax) * ay, w11 = ax * ay;
  const float *f00 = map.cell(y0, x0), *f01 = map.cell(y0, x1), *f10 = map.cell(y1, x0), *f11 = map.cell(y1, x1);
  for (int k = 0; k < c; ++k) {
    out[k] = static_cast<float>(w00 * f00[k] + w01 * f01[k] + w10 * f10[k] + w11 * f11[k]);
  }
}

std::vector<float> sample_bilinear(const FeatureMap2D& map, double u, double v) {
  std::vector<float> out(map.channels);
  sample_bilinear(map, u, v, out.data());
  return out;
}

Matrix<float> sample_voxel_features(const sparse::SparseTensor<float>& voxels, std::span<const View> views) {
  int channels = 0;
  for (const auto& v : views)
    if (v.map) channels = std::max(channels, v.map->channels);
  Matrix<float> out(voxels.size(), channels);
  if (voxels.size() == 0) return out;
  if (voxels.stride() != 1) throw ConfigError("fusion samples stride-1 voxels only");
  std::vector<std::array<double, 3>> centers(voxels.size());
  for (std::size_t r = 0; r < voxels.size(); ++r) centers[r] = voxels.geom->center(r);
  for (std::size_t b = 0; b < views.size(); ++b) {
    const View& view = views[b];
    if (!view.map || !view.camera) continue;
    if (view.map->channels != channels) throw ConfigError("feature maps in one batch differ in channel count");
    std::vector<std::size_t> rows;
    std::vector<std::array<double, 3>> pts;
    for (std::size_t r = 0; r < voxels.size(); ++r) {
      if (voxels.coords()[r].batch == static_cast<int>(b)) {
        rows.push_back(r);
        pts.push_back(centers[r]);
      }
    }
    const auto proj = project(pts, *view.camera);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (proj[i].valid) sample_bilinear(*view.map, proj[i].u, proj[i].v, out.row(rows[i]));
    }
  }
  return out;
}

nn::SparseVar<float> fuse(const nn::SparseVar<float>& voxels, const FeatureMap2D& map, const CameraModel& camera,
                          const nn::Linear<float>* adapter) {
  if (!adapter && static_cast<std::size_t>(map.channels) != voxels.channels()) {
    throw ConfigError("fusion without adapter needs " + std::to_string(voxels.channels()) + " map channels, got " +
                      std::to_string(map.channels));
  }
  const sparse::SparseTensor<float> shell(voxels.geom, Matrix<float>(voxels.size(), 0));
  const View view{&map, &camera};
  int max_batch = 0;
  for (const auto& c : voxels.geom->coords()) max_batch = std::max(max_batch, c.batch);
  std::vector<View> views(static_cast<std::size_t>(max_batch) + 1, view);
  auto sampled = nn::Var<float>::constant(sample_voxel_features(shell, views));
  if (voxels.size() == 0) return voxels;
  return nn::add_features(voxels, adapter ? (*adapter)(sampled) : sampled);
}

FeatureMap2D toy_2d_extractor(const Image& image) {
  if (image.height <= 0 || image.width <= 0 || image.rgb.size() != std::size_t(image.height) * image.width * 3) {
    throw InputError("image buffer does not match its size");
  }
  for (float v : image.rgb)
    if (!std::isfinite(v)) throw InputError("image has non-finite pixels");
  constexpr int kC = 8;
  std::mt19937_64 rng(20260101);
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / 27.0)), n2(0.0, std::sqrt(2.0 / (9.0 * kC)));
  std::vector<float> w1(9 * 3 * kC), b1(kC, 0.05f), w2(9 * kC * kC), b2(kC, 0.05f);
  for (auto& w : w1) w = static_cast<float>(n1(rng));
  for (auto& w : w2) w = static_cast<float>(n2(rng));
  int h1 = 0, wd1 = 0, h2 = 0, wd2 = 0;
  const auto f1 = conv3x3_s2(image.rgb, image.height, image.width, 3, w1, b1, kC, h1, wd1);
  auto f2 = conv3x3_s2(f1, h1, wd1, kC, w2, b2, kC, h2, wd2);
  FeatureMap2D out(h2, wd2, kC, 4);
  out.data = std::move(f2);
  return out;
}

void save_feature_map(const std::string& path, const FeatureMap2D& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write feature map: " + path);
  out.write(kMapMagic, 8);
  for (std::uint32_t v : {1u, std::uint32_t(map.height), std::uint32_t(map.width), std::uint32_t(map.channels),
                          std::uint32_t(map.stride), 0u})
    put(out, v);
  out.write(reinterpret_cast<const char*>(map.data.data()), static_cast<std::streamsize>(map.data.size() * 4));
  if (!out) throw UsageError("failed writing feature map: " + path);
}

FeatureMap2D load_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("missing feature map: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMapMagic, 8) != 0) throw ParseError(path + ": not a feature map (bad magic)");
  const auto version = get_u32(in, path);
  if (version != 1) throw ParseError(path + ": unsupported feature map version " + std::to_string(version));
  const auto h = get_u32(in, path), w = get_u32(in, path), c = get_u32(in, path), s = get_u32(in, path);
  const auto dtype = get_u32(in, path);
  if (dtype != 0) throw ParseError(path + ": unsupported dtype " + std::to_string(dtype));
  if (h > (1u << 16) || w > (1u << 16) || c > (1u << 12) || s == 0) throw ParseError(path + ": implausible header");
  FeatureMap2D map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), static_cast<int>(s));
  in.read(reinterpret_cast<char*>(map.data.data()), static_cast<std::streamsize>(map.data.size() * 4));
  if (!in) throw ParseError(path + ": truncated payload at offset 32");
  return map;
}

void save_camera(const std::string& path, const CameraModel& cam) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot write camera: " + path);
  out.precision(17);
  out << "# intrinsics\n"
      << cam.fx << " 0 " << cam.cx << "\n0 " << cam.fy << " " << cam.cy << "\n0 0 1\n"
      << "# extrinsics, world to camera [R | t]\n";
  for (int r = 0; r < 3; ++r) out << cam.R(r, 0) << " " << cam.R(r, 1) << " " << cam.R(r, 2) << " " << cam.t(r) << "\n";
  out << "# image size\n" << cam.width << " " << cam.height << "\n";
}

CameraModel load_camera(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("missing camera file: " + path);
  std::vector<std::pair<int, std::vector<double>>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
      }
    }
    if (!v.empty()) rows.emplace_back(lineno, std::move(v));
  }
  const std::size_t want[] = {3, 3, 3, 4, 4, 4, 2};
  if (rows.size() != 7) throw ParseError(path + ": expected 7 numeric rows, found " + std::to_string(rows.size()));
  for (std::size_t i = 0; i < 7; ++i) {
    if (rows[i].second.size() != want[i]) {
      throw ParseError(path + ":" + std::to_string(rows[i].first) + ": expected " + std::to_string(want[i]) +
                       " values");
    }
  }
  CameraModel cam;
  cam.fx = rows[0].second[0];
  cam.cx = rows[0].second[2];
  cam.fy = rows[1].second[1];
  cam.cy = rows[1].second[2];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.R(r, c) = rows[3 + r].second[c];
    cam.t(r) = rows[3 + r].second[3];
  }
  cam.width = static_cast<int>(rows[6].second[0]);
  cam.height = static_cast<int>(rows[6].second[1]);
  try {
    cam.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return cam;
}

}  // namespace sdet::fusion
