#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dielinv/elliptic.hpp"
#include "dielinv/forward.hpp"
#include "dielinv/preprocess.hpp"
#include "dielinv/spectral.hpp"

namespace dielinv {

enum class InversionMode { Test1, Test2 };
const char* to_string(InversionMode m);
InversionMode inversion_mode_from_string(const std::string& s);

/// Background domain G and inversion domain Omega on one node lattice.
struct Domains {
  Grid3 G;
  Grid3 omega;
};

/// G = (-0.56,0.56)^2 x (-0.16,0.1), Omega = (-0.5,0.5)^2 x (-0.1,0.04).
Domains standard_domains(double spacing);

struct InversionConfig {
  InversionMode mode = InversionMode::Test1;
  PseudoFreqGrid pseudo{};
  double lambda = 20.0;
  double eta = 1e-6;
  std::size_t max_inner = 25;  // Test 2 uses 5
  double d = 29.0;             // epsilon is clipped to [1, 1 + d]
  double spacing = 0.02;
  double omega_freq = 30.0;
  double final_time = 1.2;
  double dt = 0.0015;
  double projection_threshold = 0.85;
  double depth_truncation = 0.9;
  double margin = 0.03;
  double no_target_level = 1.05;
  double solver_tol = 1e-8;

  void validate() const;
};

/// Boundary values of psi on Omega at every pseudo-frequency node s_0..s_N
/// (interior values unused).
struct BoundaryPsi {
  std::vector<ScalarField3> at_node;
  /// psi_n, the layer average, for n = 1..N (index n-1).
  [[nodiscard]] ScalarField3 layer(std::size_t n) const;
};

/// Backscatter face {z = top of Omega} gets the propagated data, every other
/// face the homogeneous simulation. `prop` must be sampled on Omega's lateral
/// grid at psi_sample_points(grid, delta); `homog` must carry the transform
/// over Omega at the same pseudo frequencies.
BoundaryPsi assemble_boundary_psi(const PseudoFreqSeries& prop, const ForwardResult& homog, const Domains& dom,
                                  const PseudoFreqGrid& grid, double delta);

/// psi from w samples at (s - delta, s, s + delta) for every node s of the grid.
std::vector<double> psi_nodes_from_w(std::span<const double> w_samples, const PseudoFreqGrid& grid, double delta);

/// Harmonic first tail: V0 = p / s_bar with p = -s_bar^2 psi(., s_bar) on the boundary.
ScalarField3 initial_tail(const ScalarField3& psi_sbar_boundary, double s_bar, double tol = 1e-8);

/// Omega_T,ext mask: Gamma_T box widened by `margin`, z from the bottom of
/// Omega to z_front.
std::vector<std::uint8_t> target_box_mask(const Grid3& omega, const XYProjection& gamma_t, double z_front,
                                          double margin);

struct Test2Start {
  ScalarField3 eps0;  // on Omega
  ScalarField3 V0;
  std::vector<std::uint8_t> mask;
};

/// Tail of the forward solution with eps = 1 + d inside Omega_T,ext.
Test2Start initial_tail_test2(const Domains& dom, const XYProjection& gamma_t, double z_front,
                              const InversionConfig& cfg);

/// Delta v + s^2 |grad v|^2 at interior nodes, 1 on the boundary, clipped to
/// [1, 1 + d]; with a mask, nodes outside it are set to 1.
ScalarField3 epsilon_from_v(const ScalarField3& v, double s, double d,
                            const std::vector<std::uint8_t>* mask = nullptr, std::size_t* clipped = nullptr);

/// Inner-iteration stop test on the histories E_{n,1..i}, D_{n,1..i}.
bool inner_stop(std::span<const double> E, std::span<const double> D, double eta, std::size_t max_inner);

struct Test1Selection {
  std::size_t n1 = 0;
  std::optional<std::size_t> n2;
  std::size_t selected = 0;
  bool tie = false;
};

/// Layers are 1-based; D_first[n-1] belongs to layer n.
Test1Selection select_final_test1(std::span<const double> D_first, std::span<const double> D_final,
                                  std::span<const double> max_eps_by_layer);

/// Interior strict local minima (plateaus collapse to their first index), 1-based.
std::vector<std::size_t> local_minima(std::span<const double> D);

/// True once the newest D_final exceeds its predecessor.
bool outer_stop_test2(std::span<const double> D_final);

struct TruncationReport {
  std::size_t z0_index = 0;
  double gamma = 0.0;
  std::size_t footprint_cells = 0;
  std::size_t target_cells = 0;
  bool applied = false;
};

/// Column truncation on the plane of the maximum (footprint area matched to
/// Gamma_T by bisection on gamma) followed by depth truncation at
/// depth_fraction * max.
ScalarField3 postprocess_truncate(const ScalarField3& eps_rec, double gamma_t_area, double depth_fraction = 0.9,
                                  TruncationReport* report = nullptr);

struct NormRecord {
  std::size_t n = 0;
  std::size_t i = 0;
  double E = 0.0;
  double D = 0.0;
};

struct InversionInput {
  BoundaryPsi psi;
  std::vector<double> v_prop;  // V_prop on the backscatter face, Omega lateral grid (i, j)
  XYProjection gamma_t;        // on Omega lateral grid
  std::optional<double> z_front;
};

struct ReconstructionResult {
  InversionMode mode = InversionMode::Test1;
  ScalarField3 eps_rec;
  ScalarField3 eps_trunc;
  double max_eps = 1.0;
  double n_comp = 1.0;
  double eps_comp = 1.0;
  bool no_target = false;
  Test1Selection test1;
  std::size_t stop_layer = 0;  // Test 2
  std::size_t selected_layer = 0;
  std::size_t layers_run = 0;
  std::vector<NormRecord> norms;
  std::vector<double> D_first, D_final, max_eps_by_layer;
  TruncationReport truncation;
  bool mode_fallback = false;  // Test 2 requested but Gamma_T empty
  Vec3 centroid{};             // of eps_trunc - 1 weights
};

ReconstructionResult run_global_reconstruction(const InversionConfig& cfg, const Domains& dom,
                                               const InversionInput& in);

}  // namespace dielinv
