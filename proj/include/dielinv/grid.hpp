#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dielinv {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::size_t, 3>;

/// Base class for every error raised by the library. The C API maps the
/// concrete subclass onto a status code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Meters-and-nanoseconds to dimensionless conversion. Lengths are already
/// dimensionless at one meter per unit; time is scaled by the free-space
/// speed of light so the homogeneous wave speed is exactly 1.
struct UnitSystem {
  double length_scale = 1.0;  // meters per unit
  double time_scale = 0.3;    // dimensionless time per nanosecond

  [[nodiscard]] double length(double meters) const { return meters / length_scale; }
  [[nodiscard]] double time(double nanoseconds) const { return nanoseconds * time_scale; }
  // free-space speed of light is 0.3 m/ns
  [[nodiscard]] double wave_speed() const { return 0.3 / (length_scale * time_scale); }
};

/// Uniform node-centred Cartesian grid. Nodes sit on the bounding box.
class Grid3 {
public:
  Grid3() = default;
  Grid3(Vec3 origin, Vec3 spacing, Index3 counts);

  [[nodiscard]] const Vec3& origin() const { return origin_; }
  [[nodiscard]] const Vec3& spacing() const { return spacing_; }
  [[nodiscard]] const Index3& counts() const { return counts_; }
  [[nodiscard]] std::size_t size() const { return counts_[0] * counts_[1] * counts_[2]; }

  [[nodiscard]] Vec3 point_at(std::size_t i, std::size_t j, std::size_t k) const {
    return {origin_[0] + static_cast<double>(i) * spacing_[0],
            origin_[1] + static_cast<double>(j) * spacing_[1],
            origin_[2] + static_cast<double>(k) * spacing_[2]};
  }
  [[nodiscard]] double coord(int axis, std::size_t idx) const {
    return origin_[axis] + static_cast<double>(idx) * spacing_[axis];
  }
  [[nodiscard]] Vec3 upper() const { return point_at(counts_[0] - 1, counts_[1] - 1, counts_[2] - 1); }

  // z fastest
  [[nodiscard]] std::size_t linear(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * counts_[1] + j) * counts_[2] + k;
  }
  [[nodiscard]] Index3 unravel(std::size_t n) const {
    const std::size_t k = n % counts_[2];
    const std::size_t ij = n / counts_[2];
    return {ij / counts_[1], ij % counts_[1], k};
  }

  [[nodiscard]] bool on_boundary(std::size_t i, std::size_t j, std::size_t k) const {
    return i == 0 || j == 0 || k == 0 || i + 1 == counts_[0] || j + 1 == counts_[1] ||
           k + 1 == counts_[2];
  }

  /// Bounding-box containment with a relative tolerance of 1e-9 cell.
  [[nodiscard]] bool contains(const Vec3& p) const;

  /// Index of the node nearest to coordinate `x` along `axis`; throws when the
  /// coordinate is not within `tol` cells of a node.
  [[nodiscard]] std::size_t node_index(int axis, double x, double tol = 1e-6) const;

  bool operator==(const Grid3&) const = default;

private:
  Vec3 origin_{};
  Vec3 spacing_{1.0, 1.0, 1.0};
  Index3 counts_{2, 2, 2};
};

Grid3 make_grid(Vec3 origin, Vec3 spacing, Index3 counts);

/// Grid covering the closed box [lo, hi] with the given uniform spacing.
/// Each extent must be an integer multiple of the spacing.
Grid3 grid_from_box(const Vec3& lo, const Vec3& hi, double spacing);

/// Index offsets of `sub` inside `parent` when every node of `sub` is a node
/// of `parent` (same spacing, aligned origin). Throws otherwise.
Index3 node_offset(const Grid3& parent, const Grid3& sub);

class ScalarField3 {
public:
  ScalarField3() = default;
  explicit ScalarField3(Grid3 grid, double fill = 0.0);
  ScalarField3(Grid3 grid, std::vector<double> values);

  [[nodiscard]] const Grid3& grid() const { return grid_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[grid_.linear(i, j, k)]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[grid_.linear(i, j, k)];
  }
  double& operator[](std::size_t n) { return values_[n]; }
  double operator[](std::size_t n) const { return values_[n]; }

  [[nodiscard]] double min() const;
  [[nodiscard]] double max() const;

  /// Trilinear interpolation at an arbitrary point inside the bounding box.
  [[nodiscard]] double sample(const Vec3& p) const;

private:
  Grid3 grid_;
  std::vector<double> values_;
};

/// Checks the dielectric bound 1 <= eps <= 1 + d on every node.
bool epsilon_within_bounds(const ScalarField3& eps, double d, double tol = 1e-12);

ScalarField3 restrict_to_subdomain(const ScalarField3& field, const Grid3& sub);

/// 2-D uniform grid on a detector plane.
struct PlaneGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;
  std::size_t nx = 1;
  std::size_t ny = 1;

  [[nodiscard]] std::size_t size() const { return nx * ny; }
  [[nodiscard]] double x(std::size_t i) const { return x0 + static_cast<double>(i) * dx; }
  [[nodiscard]] double y(std::size_t j) const { return y0 + static_cast<double>(j) * dy; }
  [[nodiscard]] double x_max() const { return x(nx - 1); }
  [[nodiscard]] double y_max() const { return y(ny - 1); }
  [[nodiscard]] double cell_area() const { return dx * dy; }
  bool operator==(const PlaneGrid&) const = default;
};

/// The (x, y) slice of a 3-D grid.
PlaneGrid plane_of(const Grid3& g);

/// Time traces u(x, y, t) on a detector plane, indexed (i, j, t) with t fastest.
class TraceCube {
public:
  TraceCube() = default;
  TraceCube(double plane_z, PlaneGrid xy, double dt, std::size_t n_samples);

  [[nodiscard]] double plane_z() const { return plane_z_; }
  [[nodiscard]] const PlaneGrid& xy() const { return xy_; }
  [[nodiscard]] double dt() const { return dt_; }
  [[nodiscard]] std::size_t n_samples() const { return nt_; }
  [[nodiscard]] double time(std::size_t t) const { return static_cast<double>(t) * dt_; }

  [[nodiscard]] std::span<double> trace(std::size_t i, std::size_t j) {
    return {data_.data() + (i * xy_.ny + j) * nt_, nt_};
  }
  [[nodiscard]] std::span<const double> trace(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * xy_.ny + j) * nt_, nt_};
  }
  double& at(std::size_t i, std::size_t j, std::size_t t) { return data_[(i * xy_.ny + j) * nt_ + t]; }
  [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t t) const {
    return data_[(i * xy_.ny + j) * nt_ + t];
  }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::span<double> data() { return data_; }

  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] double max_abs() const;

private:
  double plane_z_ = 0.0;
  PlaneGrid xy_;
  double dt_ = 1.0;
  std::size_t nt_ = 1;
  std::vector<double> data_;
};

/// Per-sample bilinear interpolation of every trace onto `target`.
TraceCube bilinear_resample_plane(const TraceCube& cube, const PlaneGrid& target);

/// Bilinear interpolation of a plane-sampled scalar (row-major i, j) onto `target`.
std::vector<double> bilinear_resample(std::span<const double> values, const PlaneGrid& src,
                                      const PlaneGrid& target);

}  // namespace dielinv
