#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dielinv/grid.hpp"
#include "dielinv/preprocess.hpp"

namespace dielinv {

enum class ShapeKind { Box, Sphere, Shell };
const char* to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

/// Box: dims are the side lengths. Sphere: dims[0] is the radius.
/// Shell: spherical shell of outer radius dims[0] and wall thickness dims[1];
/// the cavity below the center holds `fill_epsilon`, the rest of it is air.
struct Target {
  ShapeKind shape = ShapeKind::Box;
  Vec3 center{};
  Vec3 dims{0.1, 0.1, 0.1};
  double epsilon = 4.0;
  std::optional<double> fill_epsilon;

  [[nodiscard]] bool contains(const Vec3& p) const;
  /// Permittivity at p; nullopt outside the target.
  [[nodiscard]] std::optional<double> epsilon_at(const Vec3& p) const;
  [[nodiscard]] Vec3 lower() const;
  [[nodiscard]] Vec3 upper() const;
};

struct TargetScene {
  std::string id = "empty";
  TargetClass label = TargetClass::Dielectric;
  std::vector<Target> targets;

  /// Throws InvalidArgument when a target leaves `bounds` (Omega) or has
  /// eps < 1, or a metallic scene has a target outside the [10, 30] range.
  void validate(const Vec3& lo, const Vec3& hi) const;
};

/// Omega = (-0.5, 0.5)^2 x (-0.1, 0.04).
inline constexpr Vec3 kOmegaLo{-0.5, -0.5, -0.1};
inline constexpr Vec3 kOmegaHi{0.5, 0.5, 0.04};

/// Rasterizes the scene onto `grid` node by node; eps = 1 off the targets,
/// later targets overwrite earlier ones.
ScalarField3 generate_scene(const TargetScene& scene, const Grid3& grid);

/// Named scenes: empty, dielectric_cube, metal_cube, wood_calibrator,
/// metal_calibrator, doll.
TargetScene preset_scene(const std::string& name);
std::vector<std::string> preset_names();

std::string scene_to_json(const TargetScene& s);
TargetScene scene_from_json(const std::string& text);

}  // namespace dielinv
