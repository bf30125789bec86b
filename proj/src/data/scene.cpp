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


#include "sdet/data/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdet/common/error.hpp"

namespace sdet::data {
namespace fs = std::filesystem;
namespace {

static_assert(std::endian::native == std::endian::little, "PLY binary I/O assumes a little-endian host");

std::string strip_comment(std::string line) {
  if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
  return line;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_number(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used == tok.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(where + ": not a number: '" + tok + "'");
}

std::string at_line(const std::string& path, int line) { return path + ":" + std::to_string(line); }

// PLY scalar types.
enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& s, const std::string& where) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  throw ParseError(where + ": unknown PLY type '" + s + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

double ply_decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::I8: return static_cast<std::int8_t>(*p);
    case PlyType::U8: return static_cast<std::uint8_t>(*p);
    case PlyType::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::U16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::U32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::F32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::F64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
  bool is_list = false;
  PlyType count_type = PlyType::U8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("missing file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_box_fields(std::FILE* f, const geometry::Box3D& b) {
  std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", b.center[0], b.center[1], b.center[2], b.size[0],
               b.size[1], b.size[2], b.yaw);
}

geometry::Box3D parse_box_fields(const std::vector<std::string>& tok, const std::string& where) {
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = parse_number(tok[i], where);
  try {
    return geometry::make_box(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
  } catch (const InputError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

int label_index(const LabelMap& labels, const std::string& name, const std::string& where) {
  const int idx = labels.index_of(name);
  if (idx < 0) throw ParseError(where + ": unknown class label '" + name + "'");
  return idx;
}

const std::string& label_name(const LabelMap& labels, int idx) {
  if (idx < 0 || static_cast<std::size_t>(idx) >= labels.size()) {
    throw InputError("class index " + std::to_string(idx) + " outside the label map");
  }
  return labels.names[idx];
}

}  // namespace

int LabelMap::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

LabelMap load_labels(const std::string& path) {
  LabelMap m;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tok = split_ws(strip_comment(lines[i]));
    if (tok.empty()) continue;
    if (tok.size() != 1) throw ParseError(at_line(path, int(i) + 1) + ": class names must be single tokens");
    if (m.index_of(tok[0]) >= 0) throw ParseError(at_line(path, int(i) + 1) + ": duplicate class '" + tok[0] + "'");
    m.names.push_back(tok[0]);
  }
  if (m.names.empty()) throw ParseError(path + ": no class names");
  return m;
}

void save_labels(const std::string& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path);
  for (const auto& n : labels.names) out << n << "\n";
}

void load_ply(const std::string& path, std::vector<std::array<double, 3>>& points,
              std::vector<std::array<float, 3>>& colors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("missing point file: " + path);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") throw ParseError(path + ":1: missing 'ply' magic");
  bool binary = false, have_format = false;
  std::vector<PlyElement> elements;
  while (true) {
    if (!next_line()) throw ParseError(path + ": header ends before end_header");
    const auto tok = split_ws(line);
    const std::string where = at_line(path, lineno);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError(where + ": bad format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw ParseError(where + ": unsupported PLY format '" + tok[1] + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(where + ": bad element line");
      elements.push_back({tok[1], static_cast<std::size_t>(parse_number(tok[2], where)), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(where + ": property before any element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(tok[2], where);
        p.type = ply_type(tok[3], where);
        p.name = tok[4];
      } else if (tok.size() == 3) {
        p.type = ply_type(tok[1], where);
        p.name = tok[2];
      } else {
        throw ParseError(where + ": bad property line");
      }
      elements.back().props.push_back(p);
    } else {
      throw ParseError(where + ": unexpected header keyword '" + tok[0] + "'");
    }
  }
  if (!have_format) throw ParseError(path + ": missing format line");

  points.clear();
  colors.clear();
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (std::size_t i = 0; i < el.props.size(); ++i) {
      const auto& n = el.props[i].name;
      const int k = static_cast<int>(i);
      if (n == "x") ix = k;
      if (n == "y") iy = k;
      if (n == "z") iz = k;
      if (n == "red" || n == "r") ir = k;
      if (n == "green" || n == "g") ig = k;
      if (n == "blue" || n == "b") ib = k;
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw ParseError(path + ": vertex element lacks x, y, z");
    const bool has_rgb = is_vertex && ir >= 0 && ig >= 0 && ib >= 0;
    auto color_value = [&](int k, double v) {
      return el.props[k].type == PlyType::U8 ? static_cast<float>(v / 255.0) : static_cast<float>(v);
    };
    std::vector<double> vals(el.props.size());
    for (std::size_t r = 0; r < el.count; ++r) {
      if (binary) {
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          const auto& p = el.props[i];
          char buf[8];
          const auto offset = static_cast<long long>(in.tellg());
          if (p.is_list) {
            if (!in.read(buf, static_cast<std::streamsize>(ply_size(p.count_type))))
              throw ParseError(path + ": truncated binary data at byte " + std::to_string(offset));
            const auto n = static_cast<std::size_t>(ply_decode(p.count_type, buf));
            in.seekg(static_cast<std::streamoff>(n * ply_size(p.type)), std::ios::cur);
            vals[i] = 0.0;
          } else {
            if (!in.read(buf, static_cast<std::streamsize>(ply_size(p.type))))
              throw ParseError(path + ": truncated binary data at byte " + std::to_string(offset));
            vals[i] = ply_decode(p.type, buf);
          }
        }
        if (!in) throw ParseError(path + ": truncated binary data in element '" + el.name + "'");
      } else {
        if (!next_line()) throw ParseError(path + ": file ends inside element '" + el.name + "'");
        const auto tok = split_ws(line);
        const std::string where = at_line(path, lineno);
        std::size_t t = 0;
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          if (t >= tok.size()) throw ParseError(where + ": too few values");
          if (el.props[i].is_list) {
            const auto n = static_cast<std::size_t>(parse_number(tok[t++], where));
            t += n;
            vals[i] = 0.0;
          } else {
            vals[i] = parse_number(tok[t++], where);
          }
        }
        if (t != tok.size()) throw ParseError(where + ": wrong number of values");
      }
      if (!is_vertex) continue;
      const std::array<double, 3> p = {vals[ix], vals[iy], vals[iz]};
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
        throw ParseError(path + ": non-finite vertex " + std::to_string(r));
      }
      points.push_back(p);
      if (has_rgb) colors.push_back({color_value(ir, vals[ir]), color_value(ig, vals[ig]), color_value(ib, vals[ib])});
    }
  }
}

void save_ply(const std::string& path, const std::vector<std::array<double, 3>>& points,
              const std::vector<std::array<float, 3>>& colors) {
  if (!colors.empty() && colors.size() != points.size()) throw InputError("colors do not match points");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n";
  if (!colors.empty()) out << "property float red\nproperty float green\nproperty float blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.write(reinterpret_cast<const char*>(points[i].data()), 24);
    if (!colors.empty()) out.write(reinterpret_cast<const char*>(colors[i].data()), 12);
  }
  if (!out) throw UsageError("failed writing " + path);
}

std::vector<geometry::GtBox> load_boxes(const std::string& path, const LabelMap& labels) {
  std::vector<geometry::GtBox> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tok = split_ws(strip_comment(lines[i]));
    if (tok.empty()) continue;
    const std::string where = at_line(path, int(i) + 1);
    if (tok.size() != 8) throw ParseError(where + ": expected 8 fields, found " + std::to_string(tok.size()));
    out.push_back({parse_box_fields(tok, where), label_index(labels, tok[7], where)});
  }
  return out;
}

void save_boxes(const std::string& path, const std::vector<geometry::GtBox>& boxes, const LabelMap& labels) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw UsageError("cannot write " + path);
  std::fprintf(f, "# cx cy cz w l h yaw class\n");
  for (const auto& b : boxes) {
    write_box_fields(f, b.box);
    std::fprintf(f, " %s\n", label_name(labels, b.label).c_str());
  }
  std::fclose(f);
}

void save_detections(const std::string& path, const std::vector<geometry::Detection>& dets, const LabelMap& labels) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw UsageError("cannot write " + path);
  std::fprintf(f, "# cx cy cz w l h yaw class score\n");
  for (const auto& d : dets) {
    write_box_fields(f, d.box);
    std::fprintf(f, " %s %.17g\n", label_name(labels, d.label).c_str(), d.score);
  }
  std::fclose(f);
}

std::vector<geometry::Detection> load_detections(const std::string& path, const LabelMap& labels) {
  std::vector<geometry::Detection> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tok = split_ws(strip_comment(lines[i]));
    if (tok.empty()) continue;
    const std::string where = at_line(path, int(i) + 1);
    if (tok.size() != 9) throw ParseError(where + ": expected 9 fields, found " + std::to_string(tok.size()));
    const double score = parse_number(tok[8], where);
    if (!(score >= 0.0 && score <= 1.0)) throw ParseError(where + ": score outside [0, 1]");
    out.push_back({parse_box_fields(tok, where), label_index(labels, tok[7], where), score});
  }
  return out;
}

Scene load_scene(const std::string& dir, const std::string& id, const LabelMap& labels) {
  Scene s;
  s.id = id;
  const fs::path base = fs::path(dir) / id;
  load_ply(base.string() + ".ply", s.points, s.colors);
  const std::string boxes = base.string() + ".boxes.txt";
  if (fs::exists(boxes)) s.gt = load_boxes(boxes, labels);
  const std::string fmap = base.string() + ".fmap.bin", cam = base.string() + ".cam.txt";
  if (fs::exists(fmap)) {
    if (!fs::exists(cam)) throw ParseError(fmap + ": feature map without camera file " + cam);
    s.feature_map = fusion::load_feature_map(fmap);
    s.camera = fusion::load_camera(cam);
  }
  return s;
}

void save_scene(const std::string& dir, const Scene& scene, const LabelMap& labels) {
  fs::create_directories(dir);
  const fs::path base = fs::path(dir) / scene.id;
  save_ply(base.string() + ".ply", scene.points, scene.colors);
  save_boxes(base.string() + ".boxes.txt", scene.gt, labels);
  if (scene.feature_map && scene.camera) {
    fusion::save_feature_map(base.string() + ".fmap.bin", *scene.feature_map);
    fusion::save_camera(base.string() + ".cam.txt", *scene.camera);
  }
}

std::vector<Scene> load_split(const std::string& root, const std::string& split, LabelMap* labels_out) {
  const LabelMap labels = load_labels((fs::path(root) / "labels.txt").string());
  const fs::path dir = fs::path(root) / split;
  if (!fs::is_directory(dir)) throw UsageError("missing split directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ply") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Scene> scenes(ids.size());
  std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < ids.size(); ++i) {
    try {
      scenes[i] = load_scene(dir.string(), ids[i], labels);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ParseError(e);
  if (labels_out) *labels_out = labels;
  return scenes;
}

void save_split(const std::string& root, const std::string& split, const std::vector<Scene>& scenes,
                const LabelMap& labels) {
  fs::create_directories(fs::path(root) / split);
  save_labels((fs::path(root) / "labels.txt").string(), labels);
  for (const auto& s : scenes) save_scene((fs::path(root) / split).string(), s, labels);
}

sparse::SparseTensor<float> voxelize_scene(const Scene& scene, double voxel_size, std::int32_t batch) {
  Matrix<double> f(scene.points.size(), 4);
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    f(i, 0) = 1.0;
    for (int a = 0; a < 3; ++a) {
      const double q = scene.points[i][a] / voxel_size;
      f(i, a + 1) = q - std::floor(q) - 0.5;
    }
  }
  return sparse::voxelize<float>(scene.points, f, voxel_size, batch);
}

}  // namespace sdet::data
