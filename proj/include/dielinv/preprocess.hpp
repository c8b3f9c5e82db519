#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dielinv/grid.hpp"
#include "dielinv/spectral.hpp"

namespace dielinv {

/// Subtracts each trace's mean. With `baseline` = [lo, hi) only those samples
/// form the mean (a pre-trigger window); by default the whole trace.
TraceCube offset_correct(const TraceCube& cube, std::optional<std::pair<std::size_t, std::size_t>> baseline = {});

struct TimeZeroOptions {
  std::size_t window_lo = 0;  // samples of the direct-signal window
  std::size_t window_hi = 0;  // exclusive; 0 means the template length
  int max_lag = 40;
  double threshold = 0.5;
  /// Rescale each trace so its least-squares gain against the template
  /// equals the median gain over usable detectors.
  bool equalize_gain = true;
};

struct TimeZeroResult {
  TraceCube cube;
  std::vector<int> shift;        // applied correction per detector, samples
  std::vector<double> gain;      // least-squares gain vs template before equalisation
  std::vector<double> corr;      // normalised correlation peak
  std::vector<std::uint8_t> flagged;
  std::size_t n_flagged = 0;
};

/// Aligns every detector's direct signal with `direct_template` (sampled on
/// the cube's time axis) by integer shifts. Detectors whose normalised
/// correlation peak stays below the threshold are flagged and zeroed.
TimeZeroResult time_zero_correct(const TraceCube& cube, std::span<const double> direct_template,
                                 const TimeZeroOptions& opt = {});

struct SourceShiftResult {
  TraceCube cube;
  long samples = 0;
  double remainder = 0.0;  // in samples
};

/// Delays all traces by round(distance / (speed dt)) samples, zero-padding at
/// the front. Negative distances advance the traces (zero-padding at the end).
SourceShiftResult source_shift(const TraceCube& cube, double distance, double speed = 1.0);

/// Timing of the unwanted signals and of the equivalent source plane in the
/// cube's time axis.
struct ScatterGeometry {
  double exclusion_end = 0.0;  // everything earlier is direct/structure signal
  double z_source = 0.1;       // plane the incident wave starts from at t = 0
  double z_measure = 0.8;
  double speed = 1.0;
};

struct ExtractOptions {
  double prominence = 0.05;  // fraction of the strongest remaining extremum
  double noise_k = 4.0;      // lobes must also exceed noise_k * MAD noise estimate
  double anchor_ratio = 0.8;
  std::size_t n_peaks = 7;
  double onset_fraction = 0.05;  // arrival = first sample above this share of the anchor lobe
  /// Largest silent gap (samples) allowed between consecutive retained peaks;
  /// 0 means unlimited.
  std::size_t max_gap = 0;
};

struct ScatterSignature {
  bool detected = false;
  std::size_t first = 0;  // window, inclusive sample indices
  std::size_t last = 0;
  double t_first = 0.0;
  double t_last = 0.0;
  double peak_amplitude = 0.0;  // strongest negative peak
  double peak_time = 0.0;
  std::size_t n_negative = 0;
  std::size_t n_positive = 0;
  double distance = 0.0;  // front face to measurement plane
  double z_front = 0.0;
};

struct ExtractResult {
  TraceCube cube;
  std::vector<ScatterSignature> signatures;  // (i, j) order
  std::size_t n_detected = 0;
};

ExtractResult extract_scatter(const TraceCube& cube, const ScatterGeometry& geom, const ExtractOptions& opt = {});

/// Median front-face height over detectors that saw the target.
std::optional<double> estimate_front(const ExtractResult& r);

struct TimeReverseConfig {
  double b = -0.1;         // absorbing bottom of the propagation slab
  double z_out = 0.04;     // plane the data are propagated to
  double spacing = 0.0;    // 0: the detector spacing
  double cfl_limit = 1.0;
};

struct TimeReverseResult {
  TraceCube cube;           // scattered wave on the output plane, forward time
  double input_norm = 0.0;  // H2-type norm of the boundary data
  double output_norm = 0.0; // H1-type norm of the reversed field over the slab
  double stability_ratio = 0.0;
};

/// Solves the time-reversed wave problem in the slab between z = b and the
/// measurement plane (Dirichlet data = reversed traces), returning the
/// re-reversed field on z = z_out.
TimeReverseResult time_reverse_propagate(const TraceCube& cube, const TimeReverseConfig& cfg = {});

/// d_sim / d_exp with d the minimum over the plane at pseudo frequency s.
double calibration_factor(const PseudoFreqSeries& sim, const PseudoFreqSeries& exp, double s);
double calibration_factor(std::span<const double> sim, std::span<const double> exp);

enum class TargetClass { Dielectric, Metallic };
const char* to_string(TargetClass c);
TargetClass target_class_from_string(const std::string& s);

struct CalibrationRecord {
  std::string calibrator;
  TargetClass target_class = TargetClass::Dielectric;
  std::vector<double> s;
  std::vector<double> factor;
  std::vector<double> d_sim;
  std::vector<double> d_exp;
};

/// Mean of the top decile of per-detector max |trace| (the most sensitive
/// detectors).
double sensitive_amplitude(const TraceCube& extracted);

struct Classification {
  TargetClass target_class = TargetClass::Dielectric;
  double amplitude = 0.0;
  double ratio = 0.0;
  bool low_confidence = false;
};

/// Metallic iff the sensitive amplitude is at least twice the dielectric
/// reference.
Classification classify_target(const TraceCube& extracted, double dielectric_reference);

struct XYProjection {
  std::vector<std::uint8_t> mask;  // (i, j) order on the plane grid
  std::vector<std::pair<double, double>> points;
  double area = 0.0;
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  double v_min = 0.0;
  bool empty = true;
};

/// {v < threshold * min v}; empty when min v >= 0.
XYProjection estimate_xy_projection(std::span<const double> v, const PlaneGrid& xy, double threshold = 0.85);

std::string signatures_to_json(const ExtractResult& r, const PlaneGrid& xy);
std::string calibration_to_json(const CalibrationRecord& rec);
CalibrationRecord calibration_from_json(const std::string& text);
std::string projection_to_csv(const XYProjection& p);

/// Discrete H1-type norm of a field history and H2-type norm of a trace cube;
/// exposed for the stability measurement.
double trace_h2_norm(const TraceCube& cube);

}  // namespace dielinv
