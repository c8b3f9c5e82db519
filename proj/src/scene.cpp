#include "dielinv/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace dielinv {

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Box: return "box";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Shell: return "shell";
  }
  return "box";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "box") return ShapeKind::Box;
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "shell") return ShapeKind::Shell;
  throw InvalidArgument("unknown shape '" + s + "' (expected box, sphere or shell)");
}

namespace {

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

Vec3 half_extent(const Target& t) {
  if (t.shape == ShapeKind::Box) return {t.dims[0] / 2, t.dims[1] / 2, t.dims[2] / 2};
  return {t.dims[0], t.dims[0], t.dims[0]};
}

}  // namespace

bool Target::contains(const Vec3& p) const { return epsilon_at(p).has_value(); }

std::optional<double> Target::epsilon_at(const Vec3& p) const {
  switch (shape) {
    case ShapeKind::Box:
      for (int a = 0; a < 3; ++a)
        if (std::abs(p[a] - center[a]) > dims[a] / 2) return std::nullopt;
      return epsilon;
    case ShapeKind::Sphere:
      if (dist(p, center) > dims[0]) return std::nullopt;
      return epsilon;
    case ShapeKind::Shell: {
      const double r = dist(p, center);
      if (r > dims[0]) return std::nullopt;
      if (r >= dims[0] - dims[1]) return epsilon;
      if (fill_epsilon && p[2] < center[2]) return *fill_epsilon;
      return 1.0;
    }
  }
  return std::nullopt;
}

Vec3 Target::lower() const {
  const Vec3 e = half_extent(*this);
  return {center[0] - e[0], center[1] - e[1], center[2] - e[2]};
}

Vec3 Target::upper() const {
  const Vec3 e = half_extent(*this);
  return {center[0] + e[0], center[1] + e[1], center[2] + e[2]};
}

void TargetScene::validate(const Vec3& lo, const Vec3& hi) const {
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const Target& t = targets[n];
    const std::string who = "scene '" + id + "' target " + std::to_string(n);
    for (int a = 0; a < 3; ++a)
      if (!(t.dims[a] >= 0.0)) throw InvalidArgument(who + ": negative dimension");
    if (t.shape == ShapeKind::Shell && !(t.dims[1] > 0.0 && t.dims[1] <= t.dims[0]))
      throw InvalidArgument(who + ": shell wall must be in (0, radius]");
    const Vec3 l = t.lower(), u = t.upper();
    for (int a = 0; a < 3; ++a)
      if (l[a] < lo[a] - 1e-12 || u[a] > hi[a] + 1e-12) throw InvalidArgument(who + " lies outside Omega");
    if (!(t.epsilon >= 1.0) || (t.fill_epsilon && !(*t.fill_epsilon >= 1.0)))
      throw InvalidArgument(who + ": eps must be at least 1");
    if (label == TargetClass::Metallic && (t.epsilon < 10.0 || t.epsilon > 30.0))
      throw InvalidArgument(who + ": metallic proxies need eps in [10, 30]");
  }
}

ScalarField3 generate_scene(const TargetScene& scene, const Grid3& grid) {
  scene.validate(kOmegaLo, kOmegaHi);
  ScalarField3 eps(grid, 1.0);
  const auto& c = grid.counts();
  for (const Target& t : scene.targets) {
    const Vec3 l = t.lower(), u = t.upper();
    for (std::size_t i = 0; i < c[0]; ++i) {
      const double x = grid.coord(0, i);
      if (x < l[0] - 1e-12 || x > u[0] + 1e-12) continue;
      for (std::size_t j = 0; j < c[1]; ++j) {
        const double y = grid.coord(1, j);
        if (y < l[1] - 1e-12 || y > u[1] + 1e-12) continue;
        for (std::size_t k = 0; k < c[2]; ++k)
          if (auto e = t.epsilon_at(grid.point_at(i, j, k))) eps(i, j, k) = *e;
      }
    }
  }
  return eps;
}

TargetScene preset_scene(const std::string& name) {
  TargetScene s;
  s.id = name;
  if (name == "empty") return s;
  if (name == "dielectric_cube") {
    s.targets.push_back({ShapeKind::Box, {0.0, 0.0, -0.04}, {0.1, 0.1, 0.1}, 4.0, {}});
  } else if (name == "metal_cube") {
    s.label = TargetClass::Metallic;
    s.targets.push_back({ShapeKind::Box, {0.0, 0.0, -0.04}, {0.1, 0.1, 0.1}, 15.0, {}});
  } else if (name == "wood_calibrator") {
    s.targets.push_back({ShapeKind::Box, {0.0, 0.0, -0.04}, {0.12, 0.12, 0.1}, 4.28, {}});
  } else if (name == "metal_calibrator") {
    s.label = TargetClass::Metallic;
    s.targets.push_back({ShapeKind::Sphere, {0.0, 0.0, -0.04}, {0.06, 0.0, 0.0}, 12.0, {}});
  } else if (name == "doll") {
    s.targets.push_back({ShapeKind::Shell, {0.0, 0.0, -0.035}, {0.06, 0.02, 0.0}, 4.4, 4.0});
  } else {
    throw InvalidArgument("unknown scene '" + name + "'");
  }
  return s;
}

std::vector<std::string> preset_names() {
  return {"empty", "dielectric_cube", "metal_cube", "wood_calibrator", "metal_calibrator", "doll"};
}

std::string scene_to_json(const TargetScene& s) {
  nlohmann::ordered_json doc;
  doc["id"] = s.id;
  doc["class"] = to_string(s.label);
  auto arr = nlohmann::ordered_json::array();
  for (const Target& t : s.targets) {
    nlohmann::ordered_json e;
    e["shape"] = to_string(t.shape);
    e["center"] = t.center;
    e["dims"] = t.dims;
    e["epsilon"] = t.epsilon;
    if (t.fill_epsilon) e["fill_epsilon"] = *t.fill_epsilon;
    arr.push_back(std::move(e));
  }
  doc["targets"] = std::move(arr);
  return doc.dump(2) + "\n";
}

TargetScene scene_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    TargetScene s;
    s.id = doc.at("id").get<std::string>();
    s.label = target_class_from_string(doc.at("class").get<std::string>());
    for (const auto& e : doc.at("targets")) {
      Target t;
      t.shape = shape_kind_from_string(e.at("shape").get<std::string>());
      t.center = e.at("center").get<Vec3>();
      t.dims = e.at("dims").get<Vec3>();
      t.epsilon = e.at("epsilon").get<double>();
      if (e.contains("fill_epsilon")) t.fill_epsilon = e["fill_epsilon"].get<double>();
      s.targets.push_back(t);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed scene JSON: ") + e.what());
  }
}

}  // namespace dielinv
