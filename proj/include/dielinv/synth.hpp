#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dielinv/grid.hpp"
#include "dielinv/scene.hpp"

namespace dielinv {

/// Geometry of the synthetic measurement: the wave enters through the top
/// face z = z_source, detectors sit on z = z_measure above Omega.
struct AcquisitionConfig {
  double spacing = 0.02;
  double lateral = 1.2;  // wide enough that wall echoes arrive after final_time
  double z_bottom = -0.16;
  double z_source = 1.0;
  double z_measure = 0.8;
  double detector_half_span = 0.5;
  double omega = 30.0;
  double dt = 0.0015;
  double final_time = 3.0;
  std::size_t record_every = 2;  // trace sampling interval in solver steps

  [[nodiscard]] Grid3 grid() const;
  [[nodiscard]] PlaneGrid detectors() const;
  void validate() const;
};

/// Hardware stand-ins, each toggled on its own.
struct CorruptionConfig {
  bool noise = true;
  double noise_level = 0.05;  // sigma as a fraction of the reference amplitude
  bool time_shift = true;
  int max_shift = 20;  // samples
  bool offset = true;
  double dc_offset = 0.37;
  bool gain_jitter = true;
  double jitter = 0.3;  // gains uniform in [1 - jitter, 1 + jitter]
  double instrument_gain = 40.0;
  /// Optional echo off a fixed structure: a copy of the direct signal
  /// arriving `echo_delay` after it, scaled by `echo_amplitude`.
  bool structure_echo = false;
  double echo_delay = 0.35;
  double echo_amplitude = 0.2;
};

struct RawMeasurement {
  TraceCube cube;
  std::vector<int> injected_shift;  // samples, positive delays
  std::vector<double> injected_gain;
  double injected_offset = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Independent generator per (seed, stream id), seeded through seed_seq, so
/// toggling one corruption never changes the draws of another.
class StreamRng {
public:
  StreamRng(std::uint64_t seed, std::uint64_t stream);
  /// Uniform in [0, 1).
  double uniform();
  double normal();
  int integer(int lo, int hi);  // inclusive

private:
  std::mt19937_64 gen_;
};

enum : std::uint64_t { kStreamNoise = 1, kStreamShift = 2, kStreamGain = 3 };

/// Total field recorded on the detector plane for eps given on the
/// acquisition grid: exact incident wave plus the scattered field of the
/// solver. Solves are memoised per eps and configuration.
TraceCube simulate_acquisition(const ScalarField3& eps, const AcquisitionConfig& cfg);

/// Direct signal expected at the detectors, (1 - cos w(t - d)) / w during the
/// pulse, d = z_source - z_measure.
std::vector<double> direct_template(const AcquisitionConfig& cfg, std::size_t n_samples, double dt);

/// Applies gain, shifts, echo, offset and noise to a clean total-field cube.
/// `reference_amplitude` scales the noise sigma.
RawMeasurement corrupt(const TraceCube& clean, const CorruptionConfig& cc, const AcquisitionConfig& ac,
                       double reference_amplitude, std::uint64_t seed);

}  // namespace dielinv
