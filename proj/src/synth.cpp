#include "dielinv/synth.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "dielinv/forward.hpp"

namespace dielinv {

Grid3 AcquisitionConfig::grid() const {
  return grid_from_box({-lateral, -lateral, z_bottom}, {lateral, lateral, z_source}, spacing);
}

PlaneGrid AcquisitionConfig::detectors() const {
  const auto n = static_cast<std::size_t>(std::llround(2.0 * detector_half_span / spacing)) + 1;
  return {-detector_half_span, -detector_half_span, spacing, spacing, n, n};
}

void AcquisitionConfig::validate() const {
  if (!(spacing > 0.0) || !(dt > 0.0) || !(omega > 0.0)) throw InvalidArgument("acquisition steps must be positive");
  if (!(z_bottom < 0.04 && 0.04 < z_measure && z_measure < z_source))
    throw InvalidArgument("acquisition needs z_bottom < top of Omega < z_measure < z_source");
  if (detector_half_span > lateral) throw InvalidArgument("detectors extend past the acquisition domain");
  if (record_every == 0) throw InvalidArgument("record_every must be positive");
  if (final_time < 2.0 * (z_source - z_measure) + 2.0 * (z_measure + 0.1))
    throw InvalidArgument("acquisition time too short for the echo from the bottom of Omega");
}

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  gen_.seed(seq);
}

double StreamRng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
double StreamRng::normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
int StreamRng::integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

namespace {

std::mutex g_mu;
std::map<std::uint64_t, TraceCube> g_cache;

// Solver field on the detectors, memoised per eps and configuration.
TraceCube detector_traces(const ScalarField3& eps, const AcquisitionConfig& cfg) {
  const Grid3 g = cfg.grid();
  ForwardConfig fc{g, eps};
  fc.omega = cfg.omega;
  fc.dt = cfg.dt;
  fc.final_time = cfg.final_time;
  fc.record_plane_z = cfg.z_measure;
  std::uint64_t key = fc.hash();
  key ^= cfg.record_every * 0x9e3779b97f4a7c15ULL + std::hash<double>{}(cfg.detector_half_span);
  {
    std::lock_guard lock(g_mu);
    if (auto it = g_cache.find(key); it != g_cache.end()) return it->second;
  }
  ForwardResult r = run_forward(fc);
  const TraceCube& full = *r.trace;
  const PlaneGrid det = cfg.detectors();
  const std::size_t oi = g.node_index(0, det.x0), oj = g.node_index(1, det.y0);
  const std::size_t nt = (full.n_samples() - 1) / cfg.record_every + 1;
  TraceCube out(full.plane_z(), det, cfg.dt * static_cast<double>(cfg.record_every), nt);
  for (std::size_t i = 0; i < det.nx; ++i)
    for (std::size_t j = 0; j < det.ny; ++j)
      for (std::size_t t = 0; t < nt; ++t) out.at(i, j, t) = full.at(oi + i, oj + j, t * cfg.record_every);
  std::lock_guard lock(g_mu);
  g_cache.emplace(key, out);
  return out;
}

}  // namespace

TraceCube simulate_acquisition(const ScalarField3& eps, const AcquisitionConfig& cfg) {
  cfg.validate();
  if (eps.grid() != cfg.grid()) throw InvalidArgument("permittivity must live on the acquisition grid");
  // The discrete plane wave leaves a slowly decaying O(h^2) wake behind the
  // pulse. Replace the solver's incident field by the exact one and keep only
  // the scattered part from the solves.
  TraceCube out = detector_traces(eps, cfg);
  const TraceCube homog = detector_traces(ScalarField3(cfg.grid(), 1.0), cfg);
  const auto direct = direct_template(cfg, out.n_samples(), out.dt());
  for (std::size_t i = 0; i < out.xy().nx; ++i)
    for (std::size_t j = 0; j < out.xy().ny; ++j)
      for (std::size_t t = 0; t < out.n_samples(); ++t) out.at(i, j, t) += direct[t] - homog.at(i, j, t);
  return out;
}

std::vector<double> direct_template(const AcquisitionConfig& cfg, std::size_t n, double dt) {
  const double d = cfg.z_source - cfg.z_measure;
  const double t1 = 2.0 * std::numbers::pi / cfg.omega;
  std::vector<double> f(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double tau = static_cast<double>(t) * dt - d;
    if (tau > 0.0 && tau < t1) f[t] = (1.0 - std::cos(cfg.omega * tau)) / cfg.omega;
  }
  return f;
}

RawMeasurement corrupt(const TraceCube& clean, const CorruptionConfig& cc, const AcquisitionConfig& ac,
                       double reference_amplitude, std::uint64_t seed) {
  RawMeasurement m;
  m.seed = seed;
  m.cube = clean;
  const PlaneGrid& xy = clean.xy();
  const std::size_t nd = xy.size(), nt = clean.n_samples();
  m.injected_shift.assign(nd, 0);
  m.injected_gain.assign(nd, 1.0);

  StreamRng gain_rng(seed, kStreamGain), shift_rng(seed, kStreamShift), noise_rng(seed, kStreamNoise);
  for (std::size_t d = 0; d < nd; ++d) {
    m.injected_gain[d] = cc.instrument_gain * (cc.gain_jitter ? 1.0 + cc.jitter * (2.0 * gain_rng.uniform() - 1.0) : 1.0);
    if (cc.time_shift) m.injected_shift[d] = shift_rng.integer(-cc.max_shift, cc.max_shift);
  }

  const auto echo_lag = static_cast<long>(std::llround(cc.echo_delay / clean.dt()));
  std::vector<double> buf(nt);
  const auto direct = direct_template(ac, nt, clean.dt());
  for (std::size_t i = 0; i < xy.nx; ++i)
    for (std::size_t j = 0; j < xy.ny; ++j) {
      const std::size_t d = i * xy.ny + j;
      auto tr = m.cube.trace(i, j);
      std::copy(tr.begin(), tr.end(), buf.begin());
      if (cc.structure_echo) {
        for (std::size_t t = 0; t < nt; ++t) {
          const long src = static_cast<long>(t) - echo_lag;
          if (src >= 0) buf[t] += cc.echo_amplitude * direct[src];
        }
      }
      const long s = m.injected_shift[d];
      for (std::size_t t = 0; t < nt; ++t) {
        const long src = static_cast<long>(t) - s;
        tr[t] = (src >= 0 && src < static_cast<long>(nt)) ? m.injected_gain[d] * buf[src] : 0.0;
      }
    }

  if (cc.offset) {
    m.injected_offset = cc.dc_offset * cc.instrument_gain;
    for (double& v : m.cube.data()) v += m.injected_offset;
  }
  if (cc.noise) {
    m.noise_sigma = cc.noise_level * reference_amplitude * cc.instrument_gain;
    for (double& v : m.cube.data()) v += m.noise_sigma * noise_rng.normal();
  }
  spdlog::debug("corrupted cube: offset {}, noise sigma {}, seed {}", m.injected_offset, m.noise_sigma, seed);
  return m;
}

}  // namespace dielinv
