#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "dielinv/grid.hpp"

namespace dielinv {

/// Inclusive node-index box inside a grid. Unlike Grid3 it may be a single
/// plane (lo == hi on an axis).
struct IndexBox {
  Index3 lo{};
  Index3 hi{};
  [[nodiscard]] std::size_t extent(int a) const { return hi[a] - lo[a] + 1; }
  [[nodiscard]] std::size_t size() const { return extent(0) * extent(1) * extent(2); }
  bool operator==(const IndexBox&) const = default;
};

IndexBox full_box(const Grid3& g);
/// Node box of `sub` inside `parent` (nodes must coincide).
IndexBox box_of(const Grid3& parent, const Grid3& sub);

enum class FaceKind : std::uint8_t { Neumann, Absorbing, Dirichlet };

enum Face : int { XLo = 0, XHi, YLo, YHi, ZLo, ZHi };

/// Value on a face node at the given step. (a, b) are the in-plane node
/// indices in axis order, e.g. (i, j) on a z face and (j, k) on an x face.
using FaceData = std::function<double(std::size_t a, std::size_t b, std::size_t step, double t)>;

/// Boundary rule for one face of the box. For Neumann faces `data` is the
/// outward normal derivative (empty means 0); for Dirichlet faces it is the
/// node value. Absorbing faces impose d_nu u = -u_t. After time `until` the
/// face switches to `kind_after`.
struct FaceRule {
  FaceKind kind = FaceKind::Neumann;
  FaceData data;
  double until = std::numeric_limits<double>::infinity();
  FaceKind kind_after = FaceKind::Absorbing;
};

/// Explicit leapfrog integrator for eps u_tt = Laplace(u) with the 7-point
/// stencil and ghost-node boundary closures. Shared by the forward problem
/// and the time-reversal propagation.
class WaveKernel {
public:
  WaveKernel(Grid3 grid, std::span<const double> epsilon, double dt, std::array<FaceRule, 6> faces);

  /// Advances u^n -> u^{n+1}.
  void step();

  [[nodiscard]] std::span<const double> current() const { return cur_; }
  [[nodiscard]] std::size_t step_index() const { return n_; }
  [[nodiscard]] double time() const { return static_cast<double>(n_) * dt_; }
  [[nodiscard]] const Grid3& grid() const { return grid_; }
  [[nodiscard]] double dt() const { return dt_; }

private:
  struct BoundaryNode {
    std::size_t idx;
    std::array<std::uint8_t, 3> side;  // 0 interior, 1 low face, 2 high face
    std::array<std::size_t, 3> ijk;
  };

  [[nodiscard]] FaceKind kind_at(int face, double t) const;
  [[nodiscard]] double face_data(int face, const std::array<std::size_t, 3>& ijk, double t) const;

  Grid3 grid_;
  double dt_;
  std::array<FaceRule, 6> faces_;
  std::vector<double> coef_;  // dt^2 / eps
  std::vector<double> eps_;
  std::vector<double> prev_, cur_, next_;
  std::vector<BoundaryNode> boundary_;
  std::size_t n_ = 0;
};

/// Incident waveform f(t) = sin(omega t) on [0, 2 pi / omega], 0 afterwards.
double incident_waveform(double t, double omega);

struct ForwardConfig {
  Grid3 domain;
  ScalarField3 epsilon;
  double omega = 30.0;
  double final_time = 1.2;
  double dt = 0.0015;
  std::optional<double> record_plane_z;
  /// Keep a full-volume snapshot every this many steps; 0 disables storage.
  std::size_t snapshot_every = 0;
  /// Pseudo frequencies for the streamed Laplace transform.
  std::vector<double> laplace_s;
  /// Node region over which the streamed transform is accumulated.
  std::optional<IndexBox> laplace_region;
  /// Scales the boundary source; 0 gives the zero-data problem.
  double source_amplitude = 1.0;
  double cfl_limit = 1.0;

  [[nodiscard]] std::size_t n_steps() const;
  /// Throws InvalidArgument on CFL violation or inconsistent settings.
  void validate() const;
  [[nodiscard]] std::uint64_t hash() const;
};

struct WaveSnapshotSeries {
  std::vector<double> times;
  std::vector<ScalarField3> fields;
};

struct ForwardResult {
  WaveSnapshotSeries snapshots;
  std::optional<TraceCube> trace;
  /// One entry per requested pseudo frequency, laid out over laplace_region
  /// with z fastest.
  std::vector<std::vector<double>> laplace;
  IndexBox laplace_region;
  double max_abs = 0.0;
};

ForwardResult run_forward(const ForwardConfig& cfg);

/// run_forward with eps == 1, memoised on the configuration hash.
std::shared_ptr<const ForwardResult> run_forward_homogeneous(const ForwardConfig& cfg);
void clear_homogeneous_cache();

/// Embeds a field defined on a node-aligned sub-grid into a parent grid
/// filled with `background`.
ScalarField3 embed(const ScalarField3& sub, const Grid3& parent, double background = 1.0);

/// Extracts one pseudo-frequency result of the streamed transform as a field
/// on `sub` (which must coincide with the laplace region).
ScalarField3 laplace_field(const ForwardResult& r, std::size_t s_index, const Grid3& parent, const Grid3& sub);

}  // namespace dielinv
