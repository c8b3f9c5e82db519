#include "dielinv/preprocess.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "dielinv/forward.hpp"
#include "dielinv/io.hpp"

namespace dielinv {

TraceCube offset_correct(const TraceCube& cube, std::optional<std::pair<std::size_t, std::size_t>> baseline) {
  TraceCube out = cube;
  const std::size_t nt = cube.n_samples();
  std::size_t lo = 0, hi = nt;
  if (baseline) {
    lo = baseline->first;
    hi = std::min(baseline->second, nt);
    if (lo >= hi) throw InvalidArgument("empty baseline window");
  }
  for (std::size_t i = 0; i < cube.xy().nx; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      auto tr = out.trace(i, j);
      double mean = 0.0;
      for (std::size_t t = lo; t < hi; ++t) mean += tr[t];
      mean /= static_cast<double>(hi - lo);
      for (double& v : tr) v -= mean;
    }
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

// Shifted copy: out[t] = in[t + lag], zero outside.
void shift_into(std::span<const double> in, long lag, std::span<double> out) {
  const long n = static_cast<long>(in.size());
  for (long t = 0; t < n; ++t) {
    const long src = t + lag;
    out[static_cast<std::size_t>(t)] = (src >= 0 && src < n) ? in[static_cast<std::size_t>(src)] : 0.0;
  }
}

}  // namespace

TimeZeroResult time_zero_correct(const TraceCube& cube, std::span<const double> tmpl, const TimeZeroOptions& opt) {
  const std::size_t nt = cube.n_samples();
  if (tmpl.size() != nt) throw InvalidArgument("direct-signal template length differs from trace length");
  const std::size_t lo = opt.window_lo;
  const std::size_t hi = opt.window_hi == 0 ? nt : std::min(opt.window_hi, nt);
  if (lo >= hi) throw InvalidArgument("empty direct-signal window");
  double tnorm2 = 0.0;
  for (std::size_t t = lo; t < hi; ++t) tnorm2 += tmpl[t] * tmpl[t];
  if (!(tnorm2 > 0.0)) throw InvalidArgument("direct-signal template vanishes on its window");

  const std::size_t nd = cube.xy().size();
  TimeZeroResult r{cube, std::vector<int>(nd, 0), std::vector<double>(nd, 0.0), std::vector<double>(nd, 0.0),
                   std::vector<std::uint8_t>(nd, 0), 0};
  const long n = static_cast<long>(nt);
  std::vector<double> buf(nt);
  for (std::size_t i = 0; i < cube.xy().nx; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      const std::size_t d = i * cube.xy().ny + j;
      auto tr = cube.trace(i, j);
      double best = -2.0;
      int best_lag = 0;
      double best_dot = 0.0;
      for (int lag = -opt.max_lag; lag <= opt.max_lag; ++lag) {
        double dot = 0.0, e = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
          const long src = static_cast<long>(t) + lag;
          if (src < 0 || src >= n) continue;
          const double x = tr[static_cast<std::size_t>(src)];
          dot += x * tmpl[t];
          e += x * x;
        }
        const double c = e > 0.0 ? dot / std::sqrt(e * tnorm2) : 0.0;
        // Ties go to the smaller |lag|.
        if (c > best + 1e-14 || (std::abs(c - best) <= 1e-14 && std::abs(lag) < std::abs(best_lag))) {
          best = c;
          best_lag = lag;
          best_dot = dot;
        }
      }
      r.corr[d] = best;
      auto dst = r.cube.trace(i, j);
      if (best < opt.threshold) {
        r.flagged[d] = 1;
        ++r.n_flagged;
        std::fill(dst.begin(), dst.end(), 0.0);
        continue;
      }
      r.shift[d] = -best_lag;
      r.gain[d] = best_dot / tnorm2;
      shift_into(tr, best_lag, buf);
      std::copy(buf.begin(), buf.end(), dst.begin());
    }
  if (r.n_flagged > 0) spdlog::warn("time-zero correction flagged {} of {} detectors as unusable", r.n_flagged, nd);

  if (opt.equalize_gain) {
    std::vector<double> usable;
    for (std::size_t d = 0; d < nd; ++d)
      if (!r.flagged[d] && r.gain[d] > 0.0) usable.push_back(r.gain[d]);
    const double ref = median(usable);
    if (ref > 0.0) {
      for (std::size_t i = 0; i < cube.xy().nx; ++i)
        for (std::size_t j = 0; j < cube.xy().ny; ++j) {
          const std::size_t d = i * cube.xy().ny + j;
          if (r.flagged[d] || !(r.gain[d] > 0.0)) continue;
          const double f = ref / r.gain[d];
          for (double& v : r.cube.trace(i, j)) v *= f;
        }
    }
  }
  return r;
}

SourceShiftResult source_shift(const TraceCube& cube, double distance, double speed) {
  if (!std::isfinite(distance) || !(speed > 0.0)) throw InvalidArgument("source shift must be finite");
  const double exact = distance / (speed * cube.dt());
  const double rounded = std::round(exact);
  SourceShiftResult r{cube, static_cast<long>(rounded), exact - rounded};
  if (std::abs(r.samples) >= static_cast<long>(cube.n_samples()))
    throw InvalidArgument("source shift exceeds the trace length");
  if (std::abs(r.remainder) > 0.25)
    spdlog::warn("source shift of {} is {} samples; rounding remainder {:.3f} samples", distance, exact,
                 r.remainder);
  std::vector<double> buf(cube.n_samples());
  for (std::size_t i = 0; i < cube.xy().nx; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      shift_into(cube.trace(i, j), -r.samples, buf);
      auto dst = r.cube.trace(i, j);
      std::copy(buf.begin(), buf.end(), dst.begin());
    }
  return r;
}

namespace {

struct Lobe {
  std::size_t start, end, peak;  // inclusive
  double amp;
};

std::vector<Lobe> lobes_of(std::span<const double> x, std::size_t from) {
  std::vector<Lobe> out;
  std::size_t t = from;
  const std::size_t n = x.size();
  while (t < n) {
    if (x[t] == 0.0) {
      ++t;
      continue;
    }
    const bool neg = x[t] < 0.0;
    Lobe l{t, t, t, x[t]};
    while (t < n && x[t] != 0.0 && (x[t] < 0.0) == neg) {
      if (std::abs(x[t]) > std::abs(l.amp)) {
        l.amp = x[t];
        l.peak = t;
      }
      l.end = t;
      ++t;
    }
    out.push_back(l);
  }
  return out;
}

}  // namespace

ExtractResult extract_scatter(const TraceCube& cube, const ScatterGeometry& geom, const ExtractOptions& opt) {
  ExtractResult r{cube, std::vector<ScatterSignature>(cube.xy().size()), 0};
  const std::size_t nt = cube.n_samples();
  const double dt = cube.dt();
  std::size_t k0 = 0;
  if (geom.exclusion_end > 0.0)
    k0 = std::min(nt, static_cast<std::size_t>(std::ceil(geom.exclusion_end / dt - 1e-9)));

  for (std::size_t i = 0; i < cube.xy().nx; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      ScatterSignature& sig = r.signatures[i * cube.xy().ny + j];
      auto x = r.cube.trace(i, j);
      std::fill(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k0), 0.0);
      double m = 0.0;
      for (std::size_t t = k0; t < nt; ++t) m = std::max(m, std::abs(x[t]));
      auto reject = [&] { std::fill(x.begin(), x.end(), 0.0); };
      if (!(m > 0.0)) {
        reject();
        continue;
      }
      std::vector<double> rest(x.begin() + static_cast<std::ptrdiff_t>(k0), x.end());
      const double med = median(rest);
      for (double& v : rest) v = std::abs(v - med);
      const double sigma = 1.4826 * median(rest);
      const double thr = std::max(opt.prominence * m, opt.noise_k * sigma);

      std::vector<Lobe> peaks;
      for (const Lobe& l : lobes_of(x, k0)) {
        if (std::abs(l.amp) < thr) continue;
        if (!peaks.empty() && (peaks.back().amp < 0.0) == (l.amp < 0.0)) {
          Lobe& p = peaks.back();  // same-sign neighbours split by a sub-threshold wiggle
          p.end = l.end;
          if (std::abs(l.amp) > std::abs(p.amp)) {
            p.amp = l.amp;
            p.peak = l.peak;
          }
          continue;
        }
        peaks.push_back(l);
      }
      std::ptrdiff_t strongest = -1;
      for (std::size_t p = 0; p < peaks.size(); ++p)
        if (peaks[p].amp < 0.0 && (strongest < 0 || peaks[p].amp < peaks[static_cast<std::size_t>(strongest)].amp))
          strongest = static_cast<std::ptrdiff_t>(p);
      if (strongest < 0) {
        reject();
        continue;
      }
      std::vector<std::size_t> prior_neg;
      for (std::ptrdiff_t p = strongest - 1; p >= 0; --p)
        if (peaks[static_cast<std::size_t>(p)].amp < 0.0) prior_neg.push_back(static_cast<std::size_t>(p));
      auto anchor = static_cast<std::size_t>(strongest);
      if (!prior_neg.empty()) {
        const double ref = std::abs(peaks[static_cast<std::size_t>(strongest)].amp);
        if (std::abs(peaks[prior_neg[0]].amp) < opt.anchor_ratio * ref) anchor = prior_neg[0];
        else anchor = prior_neg.size() > 1 ? prior_neg[1] : prior_neg[0];
      }
      std::size_t last = anchor;
      while (last + 1 < peaks.size() && last + 1 - anchor < opt.n_peaks) {
        if (opt.max_gap > 0 && peaks[last + 1].start > peaks[last].end + opt.max_gap) break;
        ++last;
      }
      sig.detected = true;
      sig.first = peaks[anchor].start;
      sig.last = peaks[last].end;
      // Arrival for the range estimate: the lobe itself starts inside the
      // vanishing precursor, so take the first sample carrying a visible
      // fraction of the lobe.
      std::size_t onset = sig.first;
      while (onset < peaks[anchor].peak && std::abs(x[onset]) < opt.onset_fraction * std::abs(peaks[anchor].amp)) ++onset;
      sig.t_first = cube.time(onset);
      sig.t_last = cube.time(sig.last);
      sig.peak_amplitude = peaks[static_cast<std::size_t>(strongest)].amp;
      sig.peak_time = cube.time(peaks[static_cast<std::size_t>(strongest)].peak);
      for (std::size_t p = anchor; p <= last; ++p) (peaks[p].amp < 0.0 ? sig.n_negative : sig.n_positive)++;
      sig.z_front = 0.5 * (geom.z_source + geom.z_measure - geom.speed * sig.t_first);
      sig.distance = geom.z_measure - sig.z_front;
      for (std::size_t t = 0; t < nt; ++t)
        if (t < sig.first || t > sig.last) x[t] = 0.0;
      ++r.n_detected;
    }
  return r;
}

std::optional<double> estimate_front(const ExtractResult& r) {
  // Use the detectors with the strongest response; weak edge detectors see
  // oblique, later arrivals.
  std::vector<std::pair<double, double>> amp_front;
  for (const auto& s : r.signatures)
    if (s.detected) amp_front.emplace_back(std::abs(s.peak_amplitude), s.z_front);
  if (amp_front.empty()) return std::nullopt;
  std::sort(amp_front.begin(), amp_front.end(), [](auto& a, auto& b) { return a.first > b.first; });
  const std::size_t keep = std::max<std::size_t>(1, amp_front.size() / 10);
  std::vector<double> z;
  for (std::size_t k = 0; k < keep; ++k) z.push_back(amp_front[k].second);
  return median(z);
}

double trace_h2_norm(const TraceCube& cube) {
  const auto& xy = cube.xy();
  const double dt = cube.dt();
  const std::size_t nt = cube.n_samples();
  double acc = 0.0;
  auto g = [&](std::size_t i, std::size_t j, std::size_t t) { return cube.at(i, j, t); };
  for (std::size_t i = 0; i < xy.nx; ++i)
    for (std::size_t j = 0; j < xy.ny; ++j)
      for (std::size_t t = 0; t < nt; ++t) {
        const double u = g(i, j, t);
        double e = u * u;
        if (t + 1 < nt) e += std::pow((g(i, j, t + 1) - u) / dt, 2);
        if (t > 0 && t + 1 < nt) e += std::pow((g(i, j, t + 1) - 2 * u + g(i, j, t - 1)) / (dt * dt), 2);
        if (i + 1 < xy.nx) e += std::pow((g(i + 1, j, t) - u) / xy.dx, 2);
        if (j + 1 < xy.ny) e += std::pow((g(i, j + 1, t) - u) / xy.dy, 2);
        if (i > 0 && i + 1 < xy.nx) e += std::pow((g(i + 1, j, t) - 2 * u + g(i - 1, j, t)) / (xy.dx * xy.dx), 2);
        if (j > 0 && j + 1 < xy.ny) e += std::pow((g(i, j + 1, t) - 2 * u + g(i, j - 1, t)) / (xy.dy * xy.dy), 2);
        acc += e;
      }
  return std::sqrt(acc * xy.dx * xy.dy * dt);
}

TimeReverseResult time_reverse_propagate(const TraceCube& in, const TimeReverseConfig& cfg) {
  const double a = in.plane_z();
  if (!(cfg.b < cfg.z_out) || !(cfg.z_out < a)) throw InvalidArgument("need b < z_out < measurement plane");
  const double h = cfg.spacing > 0.0 ? cfg.spacing : in.xy().dx;
  TraceCube cube = in;
  if (std::abs(h - in.xy().dx) > 1e-12 || std::abs(h - in.xy().dy) > 1e-12) {
    const auto nx = static_cast<std::size_t>(std::floor((in.xy().x_max() - in.xy().x0) / h + 1e-9)) + 1;
    const auto ny = static_cast<std::size_t>(std::floor((in.xy().y_max() - in.xy().y0) / h + 1e-9)) + 1;
    cube = bilinear_resample_plane(in, PlaneGrid{in.xy().x0, in.xy().y0, h, h, nx, ny});
  }
  const std::size_t nt = cube.n_samples();
  const std::size_t tail = std::max<std::size_t>(1, nt / 20);
  const double m = cube.max_abs();
  for (std::size_t i = 0; i < cube.xy().nx && m > 0.0; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      auto tr = cube.trace(i, j);
      for (std::size_t t = nt - tail; t < nt; ++t)
        if (std::abs(tr[t]) > 0.01 * m) throw InvalidArgument("input traces have not decayed before the final time");
    }

  const PlaneGrid& xy = cube.xy();
  const Grid3 slab = grid_from_box({xy.x0, xy.y0, cfg.b}, {xy.x_max(), xy.y_max(), a}, h);
  const std::size_t k_out = slab.node_index(2, cfg.z_out);
  const double dt = cube.dt();
  if (dt > cfg.cfl_limit * h / std::sqrt(3.0)) throw InvalidArgument("CFL violation in time-reversal slab");

  std::array<FaceRule, 6> faces;
  faces[ZLo].kind = FaceKind::Absorbing;
  faces[ZHi].kind = FaceKind::Dirichlet;
  const TraceCube* src = &cube;
  faces[ZHi].data = [src, nt](std::size_t i, std::size_t j, std::size_t step, double) {
    return step < nt ? src->at(i, j, nt - 1 - step) : 0.0;
  };
  std::vector<double> ones(slab.size(), 1.0);
  WaveKernel kernel(slab, ones, dt, faces);

  TimeReverseResult r;
  r.cube = TraceCube(cfg.z_out, xy, dt, nt);
  const auto& c = slab.counts();
  const double dv = h * h * h;
  double acc = 0.0;
  std::vector<double> prev(slab.size(), 0.0);
  for (std::size_t n = 0; n < nt; ++n) {
    auto u = kernel.current();
    for (std::size_t i = 0; i < c[0]; ++i)
      for (std::size_t j = 0; j < c[1]; ++j) r.cube.at(i, j, nt - 1 - n) = u[slab.linear(i, j, k_out)];
    for (std::size_t i = 0; i < c[0]; ++i)
      for (std::size_t j = 0; j < c[1]; ++j)
        for (std::size_t k = 0; k < c[2]; ++k) {
          const std::size_t p = slab.linear(i, j, k);
          double e = u[p] * u[p];
          const double ut = (u[p] - prev[p]) / dt;
          e += ut * ut;
          if (i + 1 < c[0]) e += std::pow((u[slab.linear(i + 1, j, k)] - u[p]) / h, 2);
          if (j + 1 < c[1]) e += std::pow((u[slab.linear(i, j + 1, k)] - u[p]) / h, 2);
          if (k + 1 < c[2]) e += std::pow((u[p + 1] - u[p]) / h, 2);
          acc += e;
        }
    std::copy(u.begin(), u.end(), prev.begin());
    if (n + 1 < nt) kernel.step();
  }
  if (!r.cube.all_finite()) throw NumericalError("time-reversal propagation produced non-finite values");
  r.output_norm = std::sqrt(acc * dv * dt);
  r.input_norm = trace_h2_norm(cube);
  r.stability_ratio = r.input_norm > 0.0 ? r.output_norm / r.input_norm : 0.0;
  return r;
}

double calibration_factor(std::span<const double> sim, std::span<const double> exp) {
  if (sim.empty() || exp.empty()) throw InvalidArgument("calibration needs data on the propagation plane");
  const double ds = *std::min_element(sim.begin(), sim.end());
  const double de = *std::min_element(exp.begin(), exp.end());
  if (!(ds < 0.0)) throw NumericalError("simulated scattered transform has no negative minimum");
  if (!(de < 0.0)) throw NumericalError("propagated measured transform has no negative minimum");
  return ds / de;
}

double calibration_factor(const PseudoFreqSeries& sim, const PseudoFreqSeries& exp, double s) {
  const auto a = sim.plane(sim.index_of(s));
  const auto b = exp.plane(exp.index_of(s));
  return calibration_factor(a, b);
}

const char* to_string(TargetClass c) { return c == TargetClass::Metallic ? "metallic" : "dielectric"; }

TargetClass target_class_from_string(const std::string& s) {
  if (s == "metallic") return TargetClass::Metallic;
  if (s == "dielectric") return TargetClass::Dielectric;
  throw InvalidArgument("unknown target class '" + s + "'");
}

double sensitive_amplitude(const TraceCube& extracted) {
  std::vector<double> peak;
  peak.reserve(extracted.xy().size());
  for (std::size_t i = 0; i < extracted.xy().nx; ++i)
    for (std::size_t j = 0; j < extracted.xy().ny; ++j) {
      double m = 0.0;
      for (double v : extracted.trace(i, j)) m = std::max(m, std::abs(v));
      peak.push_back(m);
    }
  std::sort(peak.begin(), peak.end(), std::greater<>());
  const std::size_t keep = std::max<std::size_t>(1, peak.size() / 10);
  return std::accumulate(peak.begin(), peak.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) /
         static_cast<double>(keep);
}

Classification classify_target(const TraceCube& extracted, double reference) {
  if (!(reference > 0.0)) throw InvalidArgument("dielectric reference amplitude must be positive");
  Classification c;
  c.amplitude = sensitive_amplitude(extracted);
  c.ratio = c.amplitude / reference;
  if (c.ratio >= 2.0) {
    c.target_class = TargetClass::Metallic;
  } else {
    c.low_confidence = c.amplitude == 0.0 || c.ratio >= 1.5;
    if (c.low_confidence) spdlog::warn("target classification low confidence (amplitude ratio {:.3f})", c.ratio);
  }
  return c;
}

XYProjection estimate_xy_projection(std::span<const double> v, const PlaneGrid& xy, double threshold) {
  if (v.size() != xy.size()) throw InvalidArgument("plane value count mismatch");
  XYProjection p;
  p.mask.assign(xy.size(), 0);
  p.v_min = *std::min_element(v.begin(), v.end());
  if (!(p.v_min < 0.0)) {
    spdlog::warn("propagated tail has no negative minimum; target projection is empty");
    return p;
  }
  const double cut = threshold * p.v_min;
  for (std::size_t i = 0; i < xy.nx; ++i)
    for (std::size_t j = 0; j < xy.ny; ++j) {
      if (!(v[i * xy.ny + j] < cut)) continue;
      p.mask[i * xy.ny + j] = 1;
      const double x = xy.x(i), y = xy.y(j);
      if (p.empty) {
        p.x_min = p.x_max = x;
        p.y_min = p.y_max = y;
        p.empty = false;
      }
      p.x_min = std::min(p.x_min, x);
      p.x_max = std::max(p.x_max, x);
      p.y_min = std::min(p.y_min, y);
      p.y_max = std::max(p.y_max, y);
      p.points.emplace_back(x, y);
    }
  p.area = static_cast<double>(p.points.size()) * xy.cell_area();
  return p;
}

std::string signatures_to_json(const ExtractResult& r, const PlaneGrid& xy) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < xy.nx; ++i)
    for (std::size_t j = 0; j < xy.ny; ++j) {
      const auto& s = r.signatures[i * xy.ny + j];
      nlohmann::ordered_json e;
      e["i"] = i;
      e["j"] = j;
      e["x"] = xy.x(i);
      e["y"] = xy.y(j);
      e["detected"] = s.detected;
      if (s.detected) {
        e["t_first"] = s.t_first;
        e["t_last"] = s.t_last;
        e["peak_amplitude"] = s.peak_amplitude;
        e["peak_time"] = s.peak_time;
        e["negative_peaks"] = s.n_negative;
        e["positive_peaks"] = s.n_positive;
        e["distance"] = s.distance;
        e["z_front"] = s.z_front;
      }
      arr.push_back(std::move(e));
    }
  nlohmann::ordered_json doc;
  doc["detected"] = r.n_detected;
  doc["detectors"] = std::move(arr);
  return doc.dump(1) + "\n";
}

std::string calibration_to_json(const CalibrationRecord& rec) {
  nlohmann::ordered_json doc;
  doc["calibrator"] = rec.calibrator;
  doc["target_class"] = to_string(rec.target_class);
  doc["s"] = rec.s;
  doc["factor"] = rec.factor;
  doc["d_sim"] = rec.d_sim;
  doc["d_exp"] = rec.d_exp;
  return doc.dump(1) + "\n";
}

CalibrationRecord calibration_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  CalibrationRecord rec;
  rec.calibrator = doc.at("calibrator").get<std::string>();
  rec.target_class = target_class_from_string(doc.at("target_class").get<std::string>());
  rec.s = doc.at("s").get<std::vector<double>>();
  rec.factor = doc.at("factor").get<std::vector<double>>();
  rec.d_sim = doc.at("d_sim").get<std::vector<double>>();
  rec.d_exp = doc.at("d_exp").get<std::vector<double>>();
  if (rec.s.size() != rec.factor.size()) throw IoError("calibration record is inconsistent");
  for (double f : rec.factor)
    if (!std::isfinite(f) || f == 0.0) throw IoError("calibration factors must be finite and nonzero");
  return rec;
}

std::string projection_to_csv(const XYProjection& p) {
  std::ostringstream os;
  os << "x,y\n";
  for (const auto& [x, y] : p.points) os << io::format_double(x) << ',' << io::format_double(y) << '\n';
  return os.str();
}

}  // namespace dielinv
