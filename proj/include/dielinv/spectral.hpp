#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dielinv/grid.hpp"

namespace dielinv {

/// Descending pseudo-frequency grid s_0 = s_hi > s_1 > ... > s_N = s_lo.
/// Layer n (1..N) covers (s_n, s_{n-1}].
struct PseudoFreqGrid {
  double s_lo = 8.0;
  double s_hi = 10.0;
  double h = 0.05;
  std::size_t N = 40;

  /// Builds the grid from its bounds and step; throws if the interval is not
  /// an integer number of steps.
  static PseudoFreqGrid from_step(double s_lo, double s_hi, double h);

  [[nodiscard]] double s(std::size_t n) const { return s_hi - static_cast<double>(n) * h; }
  void validate() const;
};

struct LaplaceValue {
  double value = 0.0;
  /// e^{-sT} max|u| / s, the bound on the dropped tail beyond T.
  double truncation_bound = 0.0;
  /// False when the last 5% of samples exceed 1% of max|u|.
  bool decayed = true;
};

/// Trapezoidal quadrature of int_0^T u(t) e^{-st} dt on a uniform grid
/// starting at t = 0.
LaplaceValue laplace_transform(std::span<const double> trace, double dt, double s);

/// ln(w) / s^2. `where` names the detector/node in the error message.
double v_of_w(double w, double s, std::size_t where = 0);

/// psi = d_s phi / (s^2 phi) - 2 ln(phi) / s^3 with the s-derivative taken
/// by central differences over (s - delta, s + delta).
double psi_from_phi(double phi_minus, double phi, double phi_plus, double s, double delta);

/// Two-point trapezoidal layer average 0.5 (psi(s_n) + psi(s_{n-1})).
double psi_layer_average(double psi_sn, double psi_snm1);

/// Samples over a detector plane, laid out (i, j, s-index).
class PseudoFreqSeries {
public:
  PseudoFreqSeries(PlaneGrid xy, std::vector<double> s);

  [[nodiscard]] const PlaneGrid& xy() const { return xy_; }
  [[nodiscard]] const std::vector<double>& s() const { return s_; }
  [[nodiscard]] std::size_t ns() const { return s_.size(); }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * xy_.ny + j) * s_.size() + k]; }
  [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * xy_.ny + j) * s_.size() + k];
  }
  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  /// All plane values at one s index, (i, j) order.
  [[nodiscard]] std::vector<double> plane(std::size_t k) const;
  void set_plane(std::size_t k, std::span<const double> v);
  /// Index of s within tolerance; throws if absent.
  [[nodiscard]] std::size_t index_of(double s, double tol = 1e-9) const;

  void write_csv(const std::filesystem::path& path) const;
  static PseudoFreqSeries read_csv(const std::filesystem::path& path);

private:
  PlaneGrid xy_;
  std::vector<double> s_;
  std::vector<double> values_;
};

/// Laplace transform of every trace of a cube at the given pseudo frequencies.
/// Traces that have not decayed are counted in `undecayed` when given.
PseudoFreqSeries laplace_of_cube(const TraceCube& cube, const std::vector<double>& s,
                                 std::size_t* undecayed = nullptr);

/// V = ln w / s_bar^2 pointwise.
ScalarField3 tail_from_w(const ScalarField3& w, double s_bar);

/// Clamps non-positive entries to 1e-12 max(w). Returns the number clamped;
/// throws NumericalError when more than 1% of entries needed clamping.
std::size_t enforce_positivity(std::span<double> w);

/// Sample set used for boundary psi: each grid node s_n together with
/// s_n - delta and s_n + delta. Layout: [3n] = s_n - delta, [3n+1] = s_n,
/// [3n+2] = s_n + delta.
std::vector<double> psi_sample_points(const PseudoFreqGrid& grid, double delta);

}  // namespace dielinv
