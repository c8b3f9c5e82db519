#include "dielinv/spectral.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dielinv/io.hpp"

namespace dielinv {

PseudoFreqGrid PseudoFreqGrid::from_step(double s_lo, double s_hi, double h) {
  if (!(h > 0.0)) throw InvalidArgument("pseudo-frequency step must be positive");
  const double r = (s_hi - s_lo) / h;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-9 * std::max(1.0, n) || n < 1.0)
    throw InvalidArgument("pseudo-frequency interval is not a whole number of steps");
  PseudoFreqGrid g{s_lo, s_hi, h, static_cast<std::size_t>(n)};
  g.validate();
  return g;
}

void PseudoFreqGrid::validate() const {
  if (!(s_lo > 0.0) || !(s_hi > s_lo)) throw InvalidArgument("need s_hi > s_lo > 0");
  if (!(h > 0.0) || N == 0) throw InvalidArgument("need h > 0 and N >= 1");
  const double span = static_cast<double>(N) * h;
  if (std::abs(span - (s_hi - s_lo)) > 1e-12 * static_cast<double>(N) * s_hi)
    throw InvalidArgument("s_hi - s_lo must equal N h");
}

LaplaceValue laplace_transform(std::span<const double> trace, double dt, double s) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(s > 0.0)) throw InvalidArgument("pseudo frequency must be positive");
  LaplaceValue out;
  const std::size_t n = trace.size();
  if (n == 0) return out;
  double m = 0.0;
  for (double u : trace) m = std::max(m, std::abs(u));
  if (n == 1) return out;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
    acc += w * trace[k] * std::exp(-s * dt * static_cast<double>(k));
  }
  out.value = acc * dt;
  const double T = dt * static_cast<double>(n - 1);
  out.truncation_bound = std::exp(-s * T) * m / s;
  const std::size_t tail = std::max<std::size_t>(1, n / 20);
  for (std::size_t k = n - tail; k < n; ++k)
    if (std::abs(trace[k]) > 0.01 * m) {
      out.decayed = false;
      break;
    }
  return out;
}

double v_of_w(double w, double s, std::size_t where) {
  if (!(w > 0.0)) {
    std::ostringstream os;
    os << "non-positive Laplace-domain value " << w << " at index " << where;
    throw NumericalError(os.str());
  }
  return std::log(w) / (s * s);
}

double psi_from_phi(double phi_minus, double phi, double phi_plus, double s, double delta) {
  if (!(phi_minus > 0.0) || !(phi > 0.0) || !(phi_plus > 0.0))
    throw NumericalError("psi requires positive transform samples");
  if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
  const double dphi = (phi_plus - phi_minus) / (2.0 * delta);
  return dphi / (s * s * phi) - 2.0 * std::log(phi) / (s * s * s);
}

double psi_layer_average(double psi_sn, double psi_snm1) { return 0.5 * (psi_sn + psi_snm1); }

PseudoFreqSeries::PseudoFreqSeries(PlaneGrid xy, std::vector<double> s)
    : xy_(xy), s_(std::move(s)), values_(xy.size() * s_.size(), 0.0) {
  if (s_.empty()) throw InvalidArgument("series needs at least one pseudo frequency");
}

std::vector<double> PseudoFreqSeries::plane(std::size_t k) const {
  std::vector<double> out(xy_.size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = values_[p * s_.size() + k];
  return out;
}

void PseudoFreqSeries::set_plane(std::size_t k, std::span<const double> v) {
  if (v.size() != xy_.size()) throw InvalidArgument("plane size mismatch");
  for (std::size_t p = 0; p < v.size(); ++p) values_[p * s_.size() + k] = v[p];
}

std::size_t PseudoFreqSeries::index_of(double s, double tol) const {
  for (std::size_t k = 0; k < s_.size(); ++k)
    if (std::abs(s_[k] - s) <= tol) return k;
  std::ostringstream os;
  os << "pseudo frequency " << s << " not sampled";
  throw InvalidArgument(os.str());
}

void PseudoFreqSeries::write_csv(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "x,y,s,value\n";
  for (std::size_t i = 0; i < xy_.nx; ++i)
    for (std::size_t j = 0; j < xy_.ny; ++j)
      for (std::size_t k = 0; k < s_.size(); ++k)
        os << io::format_double(xy_.x(i)) << ',' << io::format_double(xy_.y(j)) << ',' << io::format_double(s_[k])
           << ',' << io::format_double(at(i, j, k)) << '\n';
  io::write_text(path, os.str());
}

PseudoFreqSeries PseudoFreqSeries::read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("x,y,s,value", 0) != 0) throw IoError("bad series header in " + path.string());
  std::vector<std::array<double, 4>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 4> r{};
    std::istringstream ls(line);
    char comma = 0;
    ls >> r[0] >> comma >> r[1] >> comma >> r[2] >> comma >> r[3];
    if (!ls) throw IoError("bad series row: " + line);
    rows.push_back(r);
  }
  // Rows are written (x, y, s) with s fastest.
  std::vector<double> xs, ys, ss;
  auto push_unique = [](std::vector<double>& v, double x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& r : rows) {
    push_unique(xs, r[0]);
    push_unique(ys, r[1]);
    push_unique(ss, r[2]);
  }
  if (rows.size() != xs.size() * ys.size() * ss.size() || xs.size() < 1 || ys.size() < 1)
    throw IoError("series CSV is not a full (x, y, s) product");
  PlaneGrid xy{xs.front(), ys.front(), xs.size() > 1 ? xs[1] - xs[0] : 1.0, ys.size() > 1 ? ys[1] - ys[0] : 1.0,
               xs.size(), ys.size()};
  PseudoFreqSeries out(xy, ss);
  for (std::size_t n = 0; n < rows.size(); ++n) out.values_[n] = rows[n][3];
  return out;
}

PseudoFreqSeries laplace_of_cube(const TraceCube& cube, const std::vector<double>& s, std::size_t* undecayed) {
  PseudoFreqSeries out(cube.xy(), s);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < cube.xy().nx; ++i)
    for (std::size_t j = 0; j < cube.xy().ny; ++j) {
      auto tr = cube.trace(i, j);
      bool decayed = true;
      for (std::size_t k = 0; k < s.size(); ++k) {
        const LaplaceValue lv = laplace_transform(tr, cube.dt(), s[k]);
        out.at(i, j, k) = lv.value;
        decayed = decayed && lv.decayed;
      }
      if (!decayed) ++bad;
    }
  if (undecayed) *undecayed = bad;
  return out;
}

ScalarField3 tail_from_w(const ScalarField3& w, double s_bar) {
  ScalarField3 v(w.grid());
  auto src = w.values();
  auto dst = v.values();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n] = v_of_w(src[n], s_bar, n);
  return v;
}

std::size_t enforce_positivity(std::span<double> w) {
  if (w.empty()) return 0;
  const double m = *std::max_element(w.begin(), w.end());
  if (!(m > 0.0)) throw NumericalError("no positive Laplace-domain values at all");
  const double floor = 1e-12 * m;
  std::size_t clamped = 0;
  for (double& x : w)
    if (!(x > 0.0)) {
      x = floor;
      ++clamped;
    }
  if (clamped > 0) spdlog::warn("clamped {} non-positive Laplace-domain values to {}", clamped, floor);
  if (static_cast<double>(clamped) > 0.01 * static_cast<double>(w.size())) {
    std::ostringstream os;
    os << clamped << " of " << w.size() << " Laplace-domain values were non-positive";
    throw NumericalError(os.str());
  }
  return clamped;
}

std::vector<double> psi_sample_points(const PseudoFreqGrid& grid, double delta) {
  std::vector<double> s;
  s.reserve(3 * (grid.N + 1));
  for (std::size_t n = 0; n <= grid.N; ++n) {
    const double c = grid.s(n);
    s.push_back(c - delta);
    s.push_back(c);
    s.push_back(c + delta);
  }
  return s;
}

}  // namespace dielinv
