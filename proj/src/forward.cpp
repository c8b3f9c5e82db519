#include "dielinv/forward.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

namespace dielinv {

IndexBox full_box(const Grid3& g) {
  const auto& c = g.counts();
  return {{0, 0, 0}, {c[0] - 1, c[1] - 1, c[2] - 1}};
}

IndexBox box_of(const Grid3& parent, const Grid3& sub) {
  const Index3 off = node_offset(parent, sub);
  const auto& c = sub.counts();
  return {off, {off[0] + c[0] - 1, off[1] + c[1] - 1, off[2] + c[2] - 1}};
}

double incident_waveform(double t, double omega) {
  const double t1 = 2.0 * std::numbers::pi / omega;
  if (t < 0.0 || t > t1) return 0.0;
  return std::sin(omega * t);
}

WaveKernel::WaveKernel(Grid3 grid, std::span<const double> epsilon, double dt, std::array<FaceRule, 6> faces)
    : grid_(grid), dt_(dt), faces_(std::move(faces)) {
  if (epsilon.size() != grid_.size()) throw InvalidArgument("epsilon size does not match kernel grid");
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  eps_.assign(epsilon.begin(), epsilon.end());
  coef_.resize(eps_.size());
  for (std::size_t n = 0; n < eps_.size(); ++n) {
    if (!(eps_[n] > 0.0) || !std::isfinite(eps_[n])) throw InvalidArgument("epsilon must be positive and finite");
    coef_[n] = dt * dt / eps_[n];
  }
  prev_.assign(grid_.size(), 0.0);
  cur_.assign(grid_.size(), 0.0);
  next_.assign(grid_.size(), 0.0);
  const auto& c = grid_.counts();
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        if (!grid_.on_boundary(i, j, k)) continue;
        BoundaryNode b{grid_.linear(i, j, k), {0, 0, 0}, {i, j, k}};
        const std::array<std::size_t, 3> ijk{i, j, k};
        for (int a = 0; a < 3; ++a) {
          if (ijk[a] == 0) b.side[a] = 1;
          else if (ijk[a] + 1 == c[a]) b.side[a] = 2;
        }
        boundary_.push_back(b);
      }
}

FaceKind WaveKernel::kind_at(int face, double t) const {
  const FaceRule& r = faces_[face];
  return t <= r.until ? r.kind : r.kind_after;
}

double WaveKernel::face_data(int face, const std::array<std::size_t, 3>& ijk, double t) const {
  const FaceRule& r = faces_[face];
  if (!r.data) return 0.0;
  const int axis = face / 2;
  std::size_t a = 0, b = 0;
  if (axis == 0) { a = ijk[1]; b = ijk[2]; }
  else if (axis == 1) { a = ijk[0]; b = ijk[2]; }
  else { a = ijk[0]; b = ijk[1]; }
  return r.data(a, b, t == time() ? n_ : n_ + 1, t);
}

void WaveKernel::step() {
  const auto& c = grid_.counts();
  const std::size_t nx = c[0], ny = c[1], nz = c[2];
  const std::size_t sx = ny * nz, sy = nz;
  const double ihx2 = 1.0 / (grid_.spacing()[0] * grid_.spacing()[0]);
  const double ihy2 = 1.0 / (grid_.spacing()[1] * grid_.spacing()[1]);
  const double ihz2 = 1.0 / (grid_.spacing()[2] * grid_.spacing()[2]);
  const double* u = cur_.data();
  const double* um = prev_.data();
  double* up = next_.data();
  const double* cf = coef_.data();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 1; ii < static_cast<std::ptrdiff_t>(nx) - 1; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 1; j + 1 < ny; ++j) {
      const std::size_t base = i * sx + j * sy;
      for (std::size_t k = 1; k + 1 < nz; ++k) {
        const std::size_t n = base + k;
        const double uc = u[n];
        const double lap = (u[n + sx] + u[n - sx] - 2.0 * uc) * ihx2 + (u[n + sy] + u[n - sy] - 2.0 * uc) * ihy2 +
                           (u[n + 1] + u[n - 1] - 2.0 * uc) * ihz2;
        up[n] = 2.0 * uc - um[n] + cf[n] * lap;
      }
    }
  }

  const double t_now = time();
  const double t_next = t_now + dt_;
  const std::array<std::size_t, 3> stride{sx, sy, 1};
  const std::array<double, 3> h = grid_.spacing();
  for (const BoundaryNode& b : boundary_) {
    // Dirichlet faces win at edges and corners.
    int dirichlet_face = -1;
    for (int a = 0; a < 3 && dirichlet_face < 0; ++a) {
      if (b.side[a] == 0) continue;
      const int face = 2 * a + (b.side[a] == 2 ? 1 : 0);
      if (kind_at(face, t_next) == FaceKind::Dirichlet) dirichlet_face = face;
    }
    if (dirichlet_face >= 0) {
      up[b.idx] = face_data(dirichlet_face, b.ijk, t_next);
      continue;
    }
    const double uc = u[b.idx];
    double lap = 0.0;
    double absorb = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double ih2 = 1.0 / (h[a] * h[a]);
      if (b.side[a] == 0) {
        lap += (u[b.idx + stride[a]] + u[b.idx - stride[a]] - 2.0 * uc) * ih2;
        continue;
      }
      const bool high = b.side[a] == 2;
      const std::size_t inner = high ? b.idx - stride[a] : b.idx + stride[a];
      const int face = 2 * a + (high ? 1 : 0);
      lap += 2.0 * (u[inner] - uc) * ih2;
      switch (kind_at(face, t_now)) {
        case FaceKind::Neumann:
          lap += 2.0 * face_data(face, b.ijk, t_now) / h[a];
          break;
        case FaceKind::Absorbing:
          absorb += 1.0 / (h[a] * dt_);
          break;
        case FaceKind::Dirichlet:
          break;
      }
    }
    const double e = eps_[b.idx];
    const double idt2 = 1.0 / (dt_ * dt_);
    up[b.idx] = (lap + e * (2.0 * uc - um[b.idx]) * idt2 + absorb * um[b.idx]) / (e * idt2 + absorb);
  }

  std::swap(prev_, cur_);
  std::swap(cur_, next_);
  ++n_;
}

std::size_t ForwardConfig::n_steps() const {
  return static_cast<std::size_t>(std::llround(final_time / dt));
}

void ForwardConfig::validate() const {
  if (epsilon.grid() != domain) throw InvalidArgument("epsilon grid differs from forward domain");
  if (!(omega > 0.0)) throw InvalidArgument("omega must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const double t1 = 2.0 * std::numbers::pi / omega;
  if (!(final_time > t1)) throw InvalidArgument("final time must exceed the excitation duration 2*pi/omega");
  const auto& h = domain.spacing();
  const double hmin = std::min({h[0], h[1], h[2]});
  if (cfl_limit > 1.0) throw InvalidArgument("CFL constant must not exceed 1");
  const double limit = cfl_limit * hmin / std::sqrt(3.0);
  if (dt > limit) {
    std::ostringstream os;
    os << "CFL violation: dt=" << dt << " exceeds " << limit;
    throw InvalidArgument(os.str());
  }
  if (epsilon.min() < 1.0 - 1e-12) throw InvalidArgument("epsilon below 1 is not supported");
  if (record_plane_z) (void)domain.node_index(2, *record_plane_z);
  if (laplace_region) {
    for (int a = 0; a < 3; ++a)
      if (laplace_region->lo[a] > laplace_region->hi[a] || laplace_region->hi[a] >= domain.counts()[a])
        throw InvalidArgument("laplace region outside domain");
  }
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
};

}  // namespace

std::uint64_t ForwardConfig::hash() const {
  Fnv f;
  f.pod(domain.origin());
  f.pod(domain.spacing());
  f.pod(domain.counts());
  f.bytes(epsilon.values().data(), epsilon.values().size() * sizeof(double));
  f.pod(omega);
  f.pod(final_time);
  f.pod(dt);
  const double rz = record_plane_z.value_or(std::numeric_limits<double>::quiet_NaN());
  f.pod(record_plane_z.has_value());
  f.pod(rz);
  f.pod(snapshot_every);
  f.bytes(laplace_s.data(), laplace_s.size() * sizeof(double));
  f.pod(laplace_region.has_value());
  if (laplace_region) f.pod(*laplace_region);
  f.pod(source_amplitude);
  f.pod(cfl_limit);
  return f.h;
}

ForwardResult run_forward(const ForwardConfig& cfg) {
  cfg.validate();
  const double t1 = 2.0 * std::numbers::pi / cfg.omega;
  const double amp = cfg.source_amplitude;
  const double omega = cfg.omega;
  std::array<FaceRule, 6> faces;
  faces[ZLo].kind = FaceKind::Absorbing;
  faces[ZHi].kind = FaceKind::Neumann;
  faces[ZHi].until = t1;
  faces[ZHi].kind_after = FaceKind::Absorbing;
  if (amp != 0.0) {
    faces[ZHi].data = [amp, omega](std::size_t, std::size_t, std::size_t, double t) {
      return amp * incident_waveform(t, omega);
    };
  }
  WaveKernel kernel(cfg.domain, cfg.epsilon.values(), cfg.dt, faces);

  const std::size_t nsteps = cfg.n_steps();
  ForwardResult res;
  const Grid3& g = cfg.domain;
  std::size_t k_rec = 0;
  if (cfg.record_plane_z) {
    k_rec = g.node_index(2, *cfg.record_plane_z);
    res.trace.emplace(g.coord(2, k_rec), plane_of(g), cfg.dt, nsteps + 1);
  }
  res.laplace_region = cfg.laplace_region.value_or(full_box(g));
  const IndexBox& box = res.laplace_region;
  const std::size_t nbox = box.size();
  res.laplace.assign(cfg.laplace_s.size(), std::vector<double>(nbox, 0.0));
  std::vector<double> gathered(cfg.laplace_s.empty() ? 0 : nbox);

  const auto& c = g.counts();
  for (std::size_t n = 0; n <= nsteps; ++n) {
    auto u = kernel.current();
    const double t = static_cast<double>(n) * cfg.dt;
    double m = 0.0;
    bool finite = true;
    for (double v : u) {
      finite = finite && std::isfinite(v);
      m = std::max(m, std::abs(v));
    }
    if (!finite) {
      std::ostringstream os;
      os << "non-finite wave field at step " << n << " (t=" << t << ")";
      throw NumericalError(os.str());
    }
    res.max_abs = std::max(res.max_abs, m);

    if (res.trace) {
      for (std::size_t i = 0; i < c[0]; ++i)
        for (std::size_t j = 0; j < c[1]; ++j) res.trace->at(i, j, n) = u[g.linear(i, j, k_rec)];
    }
    if (!cfg.laplace_s.empty()) {
      std::size_t q = 0;
      for (std::size_t i = box.lo[0]; i <= box.hi[0]; ++i)
        for (std::size_t j = box.lo[1]; j <= box.hi[1]; ++j) {
          const double* src = u.data() + g.linear(i, j, box.lo[2]);
          for (std::size_t k = 0; k < box.extent(2); ++k) gathered[q++] = src[k];
        }
      const double wt = (n == 0 || n == nsteps) ? 0.5 * cfg.dt : cfg.dt;
      for (std::size_t si = 0; si < cfg.laplace_s.size(); ++si) {
        const double kern = wt * std::exp(-cfg.laplace_s[si] * t);
        double* acc = res.laplace[si].data();
        for (std::size_t p = 0; p < nbox; ++p) acc[p] += kern * gathered[p];
      }
    }
    if (cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) {
      res.snapshots.times.push_back(t);
      res.snapshots.fields.emplace_back(g, std::vector<double>(u.begin(), u.end()));
    }
    if (n < nsteps) kernel.step();
  }
  return res;
}

namespace {
std::mutex g_cache_mutex;
std::map<std::uint64_t, std::shared_ptr<const ForwardResult>> g_cache;
}  // namespace

std::shared_ptr<const ForwardResult> run_forward_homogeneous(const ForwardConfig& cfg) {
  ForwardConfig h = cfg;
  h.epsilon = ScalarField3(cfg.domain, 1.0);
  const std::uint64_t key = h.hash();
  {
    std::lock_guard lock(g_cache_mutex);
    if (auto it = g_cache.find(key); it != g_cache.end()) return it->second;
  }
  auto res = std::make_shared<const ForwardResult>(run_forward(h));
  std::lock_guard lock(g_cache_mutex);
  auto [it, inserted] = g_cache.emplace(key, res);
  return it->second;
}

void clear_homogeneous_cache() {
  std::lock_guard lock(g_cache_mutex);
  g_cache.clear();
}

ScalarField3 embed(const ScalarField3& sub, const Grid3& parent, double background) {
  const Index3 off = node_offset(parent, sub.grid());
  ScalarField3 out(parent, background);
  const auto& c = sub.grid().counts();
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) out(i + off[0], j + off[1], k + off[2]) = sub(i, j, k);
  return out;
}

ScalarField3 laplace_field(const ForwardResult& r, std::size_t s_index, const Grid3& parent, const Grid3& sub) {
  if (box_of(parent, sub) != r.laplace_region) throw InvalidArgument("sub-grid does not match laplace region");
  if (s_index >= r.laplace.size()) throw InvalidArgument("pseudo-frequency index out of range");
  return ScalarField3(sub, r.laplace[s_index]);
}

}  // namespace dielinv
