#include "dielinv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dielinv {

Grid3::Grid3(Vec3 origin, Vec3 spacing, Index3 counts)
    : origin_(origin), spacing_(spacing), counts_(counts) {
  for (int a = 0; a < 3; ++a) {
    if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a])) {
      throw InvalidArgument("grid spacing must be positive and finite");
    }
    if (counts_[a] < 2) {
      throw InvalidArgument("grid needs at least 2 nodes per axis");
    }
    if (!std::isfinite(origin_[a])) {
      throw InvalidArgument("grid origin must be finite");
    }
  }
}

bool Grid3::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    const double tol = 1e-9 * spacing_[a];
    const double hi = coord(a, counts_[a] - 1);
    if (p[a] < origin_[a] - tol || p[a] > hi + tol) return false;
  }
  return true;
}

std::size_t Grid3::node_index(int axis, double x, double tol) const {
  const double r = (x - origin_[axis]) / spacing_[axis];
  const double n = std::round(r);
  if (std::abs(r - n) > tol || n < 0.0 || n > static_cast<double>(counts_[axis] - 1)) {
    std::ostringstream os;
    os << "coordinate " << x << " is not a grid node on axis " << axis;
    throw InvalidArgument(os.str());
  }
  return static_cast<std::size_t>(n);
}

Grid3 make_grid(Vec3 origin, Vec3 spacing, Index3 counts) { return Grid3(origin, spacing, counts); }

Grid3 grid_from_box(const Vec3& lo, const Vec3& hi, double spacing) {
  Index3 counts{};
  for (int a = 0; a < 3; ++a) {
    const double cells = (hi[a] - lo[a]) / spacing;
    const double n = std::round(cells);
    if (std::abs(cells - n) > 1e-6 || n < 1.0) {
      std::ostringstream os;
      os << "box extent " << hi[a] - lo[a] << " on axis " << a << " is not a multiple of spacing " << spacing;
      throw InvalidArgument(os.str());
    }
    counts[a] = static_cast<std::size_t>(n) + 1;
  }
  return Grid3(lo, {spacing, spacing, spacing}, counts);
}

Index3 node_offset(const Grid3& parent, const Grid3& sub) {
  Index3 off{};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(parent.spacing()[a] - sub.spacing()[a]) > 1e-12 * parent.spacing()[a]) {
      throw InvalidArgument("sub-grid spacing differs from parent spacing");
    }
    off[a] = parent.node_index(a, sub.origin()[a]);
    if (off[a] + sub.counts()[a] > parent.counts()[a]) {
      throw InvalidArgument("sub-grid extends beyond parent grid");
    }
  }
  return off;
}

ScalarField3::ScalarField3(Grid3 grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

ScalarField3::ScalarField3(Grid3 grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw InvalidArgument("field value count does not match grid size");
  }
}

double ScalarField3::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField3::max() const { return *std::max_element(values_.begin(), values_.end()); }

double ScalarField3::sample(const Vec3& p) const {
  if (!grid_.contains(p)) {
    throw InvalidArgument("sample point outside field bounding box");
  }
  std::array<std::size_t, 3> i0{};
  std::array<double, 3> f{};
  for (int a = 0; a < 3; ++a) {
    const double r = (p[a] - grid_.origin()[a]) / grid_.spacing()[a];
    const auto last = static_cast<double>(grid_.counts()[a] - 1);
    const double rc = std::clamp(r, 0.0, last);
    auto base = static_cast<std::size_t>(std::floor(rc));
    if (base >= grid_.counts()[a] - 1) base = grid_.counts()[a] - 2;
    i0[a] = base;
    f[a] = rc - static_cast<double>(base);
  }
  double acc = 0.0;
  for (int di = 0; di < 2; ++di) {
    const double wx = di ? f[0] : 1.0 - f[0];
    for (int dj = 0; dj < 2; ++dj) {
      const double wy = dj ? f[1] : 1.0 - f[1];
      for (int dk = 0; dk < 2; ++dk) {
        const double wz = dk ? f[2] : 1.0 - f[2];
        const double w = wx * wy * wz;
        if (w != 0.0) acc += w * (*this)(i0[0] + di, i0[1] + dj, i0[2] + dk);
      }
    }
  }
  return acc;
}

bool epsilon_within_bounds(const ScalarField3& eps, double d, double tol) {
  return std::all_of(eps.values().begin(), eps.values().end(),
                     [&](double e) { return e >= 1.0 - tol && e <= 1.0 + d + tol; });
}

ScalarField3 restrict_to_subdomain(const ScalarField3& field, const Grid3& sub) {
  const Grid3& g = field.grid();
  if (!g.contains(sub.origin()) || !g.contains(sub.upper())) {
    throw InvalidArgument("sub-domain lies outside the field's bounding box");
  }
  ScalarField3 out(sub);
  const auto& c = sub.counts();
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) out(i, j, k) = field.sample(sub.point_at(i, j, k));
  return out;
}

PlaneGrid plane_of(const Grid3& g) {
  return {g.origin()[0], g.origin()[1], g.spacing()[0], g.spacing()[1], g.counts()[0], g.counts()[1]};
}

TraceCube::TraceCube(double plane_z, PlaneGrid xy, double dt, std::size_t n_samples)
    : plane_z_(plane_z), xy_(xy), dt_(dt), nt_(n_samples) {
  if (!(dt > 0.0)) throw InvalidArgument("trace dt must be positive");
  if (n_samples < 1) throw InvalidArgument("trace needs at least one sample");
  if (xy.nx < 1 || xy.ny < 1 || !(xy.dx > 0.0) || !(xy.dy > 0.0)) {
    throw InvalidArgument("invalid detector plane grid");
  }
  data_.assign(xy.nx * xy.ny * n_samples, 0.0);
}

bool TraceCube::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double TraceCube::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

namespace {

struct Bilinear {
  std::size_t i0, j0;
  double fx, fy;
};

Bilinear locate(const PlaneGrid& src, double x, double y) {
  auto axis = [](double x0, double dx, std::size_t n, double v, std::size_t& base, double& f) {
    if (n == 1) {
      base = 0;
      f = 0.0;
      return;
    }
    double r = std::clamp((v - x0) / dx, 0.0, static_cast<double>(n - 1));
    if (std::abs(r - std::round(r)) < 1e-9) r = std::round(r);  // coincident nodes copy exactly
    base = std::min(static_cast<std::size_t>(std::floor(r)), n - 2);
    f = r - static_cast<double>(base);
  };
  Bilinear b{};
  axis(src.x0, src.dx, src.nx, x, b.i0, b.fx);
  axis(src.y0, src.dy, src.ny, y, b.j0, b.fy);
  return b;
}

void check_footprint(const PlaneGrid& src, const PlaneGrid& target) {
  const double tx = 1e-9 * src.dx;
  const double ty = 1e-9 * src.dy;
  if (target.x0 < src.x0 - tx || target.x_max() > src.x_max() + tx || target.y0 < src.y0 - ty ||
      target.y_max() > src.y_max() + ty) {
    throw InvalidArgument("target footprint exceeds source footprint");
  }
}

}  // namespace

std::vector<double> bilinear_resample(std::span<const double> values, const PlaneGrid& src,
                                      const PlaneGrid& target) {
  check_footprint(src, target);
  if (values.size() != src.size()) throw InvalidArgument("plane value count mismatch");
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < target.nx; ++i) {
    for (std::size_t j = 0; j < target.ny; ++j) {
      const Bilinear b = locate(src, target.x(i), target.y(j));
      const std::size_t i1 = std::min(b.i0 + 1, src.nx - 1);
      const std::size_t j1 = std::min(b.j0 + 1, src.ny - 1);
      const double v00 = values[b.i0 * src.ny + b.j0];
      const double v10 = values[i1 * src.ny + b.j0];
      const double v01 = values[b.i0 * src.ny + j1];
      const double v11 = values[i1 * src.ny + j1];
      out[i * target.ny + j] = (1 - b.fx) * (1 - b.fy) * v00 + b.fx * (1 - b.fy) * v10 +
                               (1 - b.fx) * b.fy * v01 + b.fx * b.fy * v11;
    }
  }
  return out;
}

TraceCube bilinear_resample_plane(const TraceCube& cube, const PlaneGrid& target) {
  const PlaneGrid& src = cube.xy();
  check_footprint(src, target);
  TraceCube out(cube.plane_z(), target, cube.dt(), cube.n_samples());
  const std::size_t nt = cube.n_samples();
  for (std::size_t i = 0; i < target.nx; ++i) {
    for (std::size_t j = 0; j < target.ny; ++j) {
      const Bilinear b = locate(src, target.x(i), target.y(j));
      const std::size_t i1 = std::min(b.i0 + 1, src.nx - 1);
      const std::size_t j1 = std::min(b.j0 + 1, src.ny - 1);
      const double w00 = (1 - b.fx) * (1 - b.fy);
      const double w10 = b.fx * (1 - b.fy);
      const double w01 = (1 - b.fx) * b.fy;
      const double w11 = b.fx * b.fy;
      auto t00 = cube.trace(b.i0, b.j0);
      auto t10 = cube.trace(i1, b.j0);
      auto t01 = cube.trace(b.i0, j1);
      auto t11 = cube.trace(i1, j1);
      auto dst = out.trace(i, j);
      for (std::size_t t = 0; t < nt; ++t) {
        dst[t] = w00 * t00[t] + w10 * t10[t] + w01 * t01[t] + w11 * t11[t];
      }
    }
  }
  return out;
}

}  // namespace dielinv
