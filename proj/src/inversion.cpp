#include "dielinv/inversion.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dielinv {

const char* to_string(InversionMode m) { return m == InversionMode::Test2 ? "test2" : "test1"; }

InversionMode inversion_mode_from_string(const std::string& s) {
  if (s == "test1") return InversionMode::Test1;
  if (s == "test2") return InversionMode::Test2;
  throw InvalidArgument("unknown inversion mode '" + s + "' (expected test1 or test2)");
}

Domains standard_domains(double spacing) {
  return {grid_from_box({-0.56, -0.56, -0.16}, {0.56, 0.56, 0.1}, spacing),
          grid_from_box({-0.5, -0.5, -0.1}, {0.5, 0.5, 0.04}, spacing)};
}

void InversionConfig::validate() const {
  pseudo.validate();
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  if (!(d > 0.0)) throw InvalidArgument("contrast bound d must be positive");
  if (max_inner < 1) throw InvalidArgument("max_inner must be at least 1");
  if (!(spacing > 0.0)) throw InvalidArgument("spacing must be positive");
}

ScalarField3 BoundaryPsi::layer(std::size_t n) const {
  if (n < 1 || n >= at_node.size()) throw InvalidArgument("layer index out of range");
  const ScalarField3& a = at_node[n];
  const ScalarField3& b = at_node[n - 1];
  ScalarField3 out(a.grid());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = psi_layer_average(a[p], b[p]);
  return out;
}

std::vector<double> psi_nodes_from_w(std::span<const double> w, const PseudoFreqGrid& grid, double delta) {
  if (w.size() != 3 * (grid.N + 1)) throw InvalidArgument("expected three w samples per pseudo-frequency node");
  std::vector<double> psi(grid.N + 1);
  for (std::size_t n = 0; n <= grid.N; ++n)
    psi[n] = psi_from_phi(w[3 * n], w[3 * n + 1], w[3 * n + 2], grid.s(n), delta);
  return psi;
}

BoundaryPsi assemble_boundary_psi(const PseudoFreqSeries& prop, const ForwardResult& homog, const Domains& dom,
                                  const PseudoFreqGrid& grid, double delta) {
  const Grid3& om = dom.omega;
  const auto& c = om.counts();
  const std::vector<double> s = psi_sample_points(grid, delta);
  const PlaneGrid& pxy = prop.xy();
  const double tol = 1e-9 * om.spacing()[0];
  if (pxy.nx != c[0] || pxy.ny != c[1] || std::abs(pxy.x0 - om.origin()[0]) > tol ||
      std::abs(pxy.y0 - om.origin()[1]) > tol || std::abs(pxy.dx - om.spacing()[0]) > tol ||
      std::abs(pxy.dy - om.spacing()[1]) > tol)
    throw InvalidArgument("propagated data must be sampled on the lateral grid of Omega");
  if (prop.ns() != s.size()) throw InvalidArgument("propagated data lack the pseudo-frequency samples");
  for (std::size_t k = 0; k < s.size(); ++k)
    if (std::abs(prop.s()[k] - s[k]) > 1e-9) throw InvalidArgument("propagated data sampled at wrong s");
  if (homog.laplace.size() != s.size() || homog.laplace_region != box_of(dom.G, om))
    throw InvalidArgument("homogeneous run lacks the transform over Omega");

  BoundaryPsi out;
  out.at_node.assign(grid.N + 1, ScalarField3(om, 0.0));
  std::vector<double> w(s.size());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        if (!om.on_boundary(i, j, k)) continue;
        const std::size_t node = om.linear(i, j, k);
        if (k + 1 == c[2]) {
          for (std::size_t q = 0; q < s.size(); ++q) w[q] = prop.at(i, j, q);
        } else {
          for (std::size_t q = 0; q < s.size(); ++q) w[q] = homog.laplace[q][node];
        }
        const auto psi = psi_nodes_from_w(w, grid, delta);
        for (std::size_t n = 0; n <= grid.N; ++n) out.at_node[n][node] = psi[n];
        ++covered;
      }
  const std::size_t expected = om.size() - (c[0] - 2) * (c[1] - 2) * (c[2] - 2);
  if (covered != expected) throw InvalidArgument("boundary psi does not cover every face node");
  return out;
}

ScalarField3 initial_tail(const ScalarField3& psi_sbar, double s_bar, double tol) {
  ScalarField3 bnd(psi_sbar.grid());
  for (std::size_t p = 0; p < bnd.size(); ++p) bnd[p] = -s_bar * s_bar * psi_sbar[p];
  ScalarField3 p = solve_laplace(bnd, nullptr, tol);
  for (double& v : p.values()) v /= s_bar;
  return p;
}

std::vector<std::uint8_t> target_box_mask(const Grid3& omega, const XYProjection& gt, double z_front,
                                          double margin) {
  std::vector<std::uint8_t> mask(omega.size(), 0);
  if (gt.empty) return mask;
  const double tol = 1e-9;
  const double zb = omega.origin()[2];
  const double zf = std::clamp(z_front, zb, omega.upper()[2]);
  const auto& c = omega.counts();
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        const Vec3 p = omega.point_at(i, j, k);
        if (p[0] < gt.x_min - margin - tol || p[0] > gt.x_max + margin + tol) continue;
        if (p[1] < gt.y_min - margin - tol || p[1] > gt.y_max + margin + tol) continue;
        if (p[2] < zb - tol || p[2] > zf + tol) continue;
        mask[omega.linear(i, j, k)] = 1;
      }
  return mask;
}

namespace {

ForwardConfig tail_config(const Domains& dom, const ScalarField3& eps_G, const InversionConfig& cfg) {
  ForwardConfig fc{dom.G, eps_G};
  fc.omega = cfg.omega_freq;
  fc.final_time = cfg.final_time;
  fc.dt = cfg.dt;
  fc.laplace_s = {cfg.pseudo.s_hi};
  fc.laplace_region = box_of(dom.G, dom.omega);
  return fc;
}

// Tail over Omega of the forward solution for eps given on Omega.
ScalarField3 tail_of(const ScalarField3& eps_omega, const Domains& dom, const InversionConfig& cfg) {
  const ForwardResult r = run_forward(tail_config(dom, embed(eps_omega, dom.G, 1.0), cfg));
  std::vector<double> w = r.laplace[0];
  enforce_positivity(w);
  return tail_from_w(ScalarField3(dom.omega, std::move(w)), cfg.pseudo.s_hi);
}

double l2(const ScalarField3& f, double cell) {
  double acc = 0.0;
  for (double v : f.values()) acc += v * v;
  return std::sqrt(acc * cell);
}

double face_misfit(const ScalarField3& V, std::span<const double> v_prop) {
  const Grid3& g = V.grid();
  const auto& c = g.counts();
  double acc = 0.0;
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j) {
      const double diff = V(i, j, c[2] - 1) - v_prop[i * c[1] + j];
      acc += diff * diff;
    }
  return std::sqrt(acc * g.spacing()[0] * g.spacing()[1]);
}

}  // namespace

Test2Start initial_tail_test2(const Domains& dom, const XYProjection& gt, double z_front, const InversionConfig& cfg) {
  Test2Start st{ScalarField3(dom.omega, 1.0), ScalarField3(dom.omega), target_box_mask(dom.omega, gt, z_front, cfg.margin)};
  for (std::size_t p = 0; p < st.eps0.size(); ++p)
    if (st.mask[p]) st.eps0[p] = 1.0 + cfg.d;
  st.V0 = tail_of(st.eps0, dom, cfg);
  return st;
}

ScalarField3 epsilon_from_v(const ScalarField3& v, double s, double d, const std::vector<std::uint8_t>* mask,
                            std::size_t* clipped) {
  const Grid3& g = v.grid();
  const auto grad = gradient(v);
  const ScalarField3 lap = laplacian(v);
  ScalarField3 eps(g, 1.0);
  const auto& c = g.counts();
  std::size_t out_of_range = 0;
  for (std::size_t i = 1; i + 1 < c[0]; ++i)
    for (std::size_t j = 1; j + 1 < c[1]; ++j)
      for (std::size_t k = 1; k + 1 < c[2]; ++k) {
        const std::size_t n = g.linear(i, j, k);
        const double g2 = grad[0][n] * grad[0][n] + grad[1][n] * grad[1][n] + grad[2][n] * grad[2][n];
        const double raw = lap[n] + s * s * g2;
        if (raw < 1.0 || raw > 1.0 + d) ++out_of_range;
        eps[n] = std::clamp(raw, 1.0, 1.0 + d);
      }
  if (mask) {
    if (mask->size() != g.size()) throw InvalidArgument("mask size mismatch");
    for (std::size_t n = 0; n < g.size(); ++n)
      if (!(*mask)[n]) eps[n] = 1.0;
  }
  if (clipped) *clipped = out_of_range;
  return eps;
}

bool inner_stop(std::span<const double> E, std::span<const double> D, double eta, std::size_t max_inner) {
  if (E.empty() || D.empty() || E.size() != D.size()) throw InvalidArgument("norm histories must be nonempty and aligned");
  const std::size_t i = E.size();
  if (E[i - 1] <= eta || D[i - 1] <= eta) return true;
  if (i >= 2 && (E[i - 1] >= E[i - 2] || D[i - 1] >= D[i - 2])) return true;
  return i >= max_inner;
}

std::vector<std::size_t> local_minima(std::span<const double> D) {
  std::vector<std::size_t> out;
  const std::size_t n = D.size();
  std::size_t a = 1;
  while (a + 1 < n) {
    std::size_t b = a;
    while (b + 1 < n && D[b + 1] == D[a]) ++b;
    if (b + 1 < n && D[a - 1] > D[a] && D[b + 1] > D[b]) out.push_back(a + 1);
    a = b + 1;
  }
  return out;
}

Test1Selection select_final_test1(std::span<const double> D_first, std::span<const double> D_final,
                                  std::span<const double> max_eps) {
  const std::size_t N = D_first.size();
  if (N == 0 || D_final.size() != N || max_eps.size() != N) throw InvalidArgument("layer histories must align");
  Test1Selection sel;
  std::size_t best = 0;
  for (std::size_t n = 1; n < N; ++n)
    if (D_first[n] < D_first[best]) best = n;
  for (std::size_t n = best + 1; n < N; ++n)
    if (D_first[n] == D_first[best]) sel.tie = true;
  if (sel.tie) spdlog::info("several layers share the minimal first norm; taking the earliest (n = {})", best + 1);
  sel.n1 = best + 1;
  sel.selected = sel.n1;
  const double m = max_eps[best];
  if (m >= 5.0 && m <= 10.0) {
    const auto mins = local_minima(D_final);
    if (mins.empty()) {
      spdlog::warn("final norm has no interior local minimum; keeping layer n1 = {}", sel.n1);
    } else {
      std::size_t n2 = mins.front();
      for (std::size_t q : mins)
        if (D_final[q - 1] < D_final[n2 - 1]) n2 = q;
      sel.n2 = n2;
      sel.selected = n2;
    }
  }
  return sel;
}

bool outer_stop_test2(std::span<const double> D_final) {
  const std::size_t n = D_final.size();
  return n >= 2 && D_final[n - 1] > D_final[n - 2];
}

ScalarField3 postprocess_truncate(const ScalarField3& eps, double area, double depth_fraction,
                                  TruncationReport* report) {
  TruncationReport rep;
  const Grid3& g = eps.grid();
  const auto& c = g.counts();
  const double cell = g.spacing()[0] * g.spacing()[1];
  const double M = eps.max();
  if (!(area > 0.0) || !(M > 1.0)) {
    spdlog::warn("post-processing skipped ({})", area > 0.0 ? "reconstruction is identically 1" : "empty target projection");
    if (report) *report = rep;
    return eps;
  }
  // Plane of the maximum; smallest z wins ties.
  std::size_t z0 = c[2];
  for (std::size_t k = 0; k < c[2] && z0 == c[2]; ++k)
    for (std::size_t i = 0; i < c[0] && z0 == c[2]; ++i)
      for (std::size_t j = 0; j < c[1]; ++j)
        if (eps(i, j, k) == M) {
          z0 = k;
          break;
        }
  rep.z0_index = z0;
  const auto target = static_cast<std::size_t>(std::llround(area / cell));
  rep.target_cells = target;
  auto count = [&](double gamma) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < c[0]; ++i)
      for (std::size_t j = 0; j < c[1]; ++j) {
        const double e = eps(i, j, z0);
        if (e > gamma * M && e > 1.0) ++n;
      }
    return n;
  };
  double lo = 0.0, hi = 1.0, gamma = 0.5;
  std::size_t best_gap = SIZE_MAX;
  double best_gamma = 0.5;
  for (int it = 0; it < 80; ++it) {
    gamma = 0.5 * (lo + hi);
    const std::size_t n = count(gamma);
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) {
      best_gap = gap;
      best_gamma = gamma;
    }
    if (gap <= 1) break;
    if (n > target) lo = gamma;
    else hi = gamma;
  }
  rep.gamma = best_gamma;
  ScalarField3 out(g, 1.0);
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j) {
      const double e = eps(i, j, z0);
      if (!(e > best_gamma * M && e > 1.0)) continue;
      ++rep.footprint_cells;
      for (std::size_t k = 0; k < c[2]; ++k) out(i, j, k) = eps(i, j, k);
    }
  const double cut = depth_fraction * out.max();
  for (double& v : out.values())
    if (v < cut) v = 1.0;
  rep.applied = true;
  if (report) *report = rep;
  return out;
}

namespace {

Vec3 excess_centroid(const ScalarField3& f) {
  const Grid3& g = f.grid();
  Vec3 acc{0.0, 0.0, 0.0};
  double w = 0.0;
  const auto& c = g.counts();
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        const double e = f(i, j, k) - 1.0;
        if (e <= 0.0) continue;
        const Vec3 p = g.point_at(i, j, k);
        for (int a = 0; a < 3; ++a) acc[a] += e * p[a];
        w += e;
      }
  if (w <= 0.0) return {0.0, 0.0, 0.0};
  for (double& a : acc) a /= w;
  return acc;
}

}  // namespace

ReconstructionResult run_global_reconstruction(const InversionConfig& cfg, const Domains& dom,
                                               const InversionInput& in) {
  cfg.validate();
  const Grid3& om = dom.omega;
  const PseudoFreqGrid& pg = cfg.pseudo;
  const std::size_t N = pg.N;
  if (in.psi.at_node.size() != N + 1) throw InvalidArgument("boundary psi does not match the pseudo-frequency grid");
  if (in.v_prop.size() != om.counts()[0] * om.counts()[1]) throw InvalidArgument("V_prop must cover the backscatter face");

  ReconstructionResult res;
  res.mode = cfg.mode;
  const double cell = om.spacing()[0] * om.spacing()[1] * om.spacing()[2];

  // First tail and reference coefficient.
  ScalarField3 V(om);
  ScalarField3 eps_prev_layer(om, 1.0);
  std::vector<std::uint8_t> mask;
  InversionMode mode = cfg.mode;
  if (mode == InversionMode::Test2 && in.gamma_t.empty) {
    spdlog::warn("empty target projection: Test 2 falls back to the harmonic first tail");
    res.mode_fallback = true;
    mode = InversionMode::Test1;
  }
  if (mode == InversionMode::Test2) {
    const double zf = in.z_front.value_or(om.upper()[2]);
    Test2Start st = initial_tail_test2(dom, in.gamma_t, zf, cfg);
    V = std::move(st.V0);
    eps_prev_layer = std::move(st.eps0);
    mask = std::move(st.mask);
  } else {
    V = initial_tail(in.psi.at_node[0], pg.s_hi, cfg.solver_tol);
  }
  const std::vector<std::uint8_t>* mask_ptr = mask.empty() ? nullptr : &mask;

  ScalarField3 qbar(om, 0.0);
  std::array<ScalarField3, 3> grad_qbar{ScalarField3(om, 0.0), ScalarField3(om, 0.0), ScalarField3(om, 0.0)};
  std::vector<ScalarField3> eps_by_layer;

  for (std::size_t n = 1; n <= N; ++n) {
    const CarlemanCoefficients A = carleman_coefficients(n, pg, cfg.lambda);
    const ScalarField3 psi_n = in.psi.layer(n);
    const double s_n = pg.s(n);
    std::vector<double> E, D;
    ScalarField3 eps_last = eps_prev_layer;
    ScalarField3 q_keep(om), eps_keep(om), V_keep(om);
    for (std::size_t i = 1;; ++i) {
      try {
        const auto gV = gradient(V);
        std::array<ScalarField3, 3> b{ScalarField3(om), ScalarField3(om), ScalarField3(om)};
        ScalarField3 rhs(om);
        for (std::size_t p = 0; p < om.size(); ++p) {
          double g2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double diff = gV[a][p] - grad_qbar[a][p];
            b[a][p] = A.A1 * diff;
            g2 += diff * diff;
          }
          rhs[p] = A.A3 * g2;
        }
        EllipticProblem prob{om, std::move(b), std::move(rhs), psi_n};
        ScalarField3 q = solve_elliptic(prob, nullptr, cfg.solver_tol);

        ScalarField3 v(om);
        for (std::size_t p = 0; p < om.size(); ++p) v[p] = -pg.h * q[p] - qbar[p] + V[p];
        std::size_t clipped = 0;
        ScalarField3 eps = epsilon_from_v(v, s_n, cfg.d, mask_ptr, &clipped);

        ScalarField3 diff(om);
        for (std::size_t p = 0; p < om.size(); ++p) diff[p] = eps[p] - eps_last[p];
        const double En = l2(diff, cell) / l2(eps_last, cell);
        ScalarField3 V_next = tail_of(eps, dom, cfg);
        const double Dn = face_misfit(V_next, in.v_prop);
        E.push_back(En);
        D.push_back(Dn);
        res.norms.push_back({n, i, En, Dn});
        spdlog::debug("layer {} iteration {}: E={:.4e} D={:.4e} max eps={:.3f} clipped={}", n, i, En, Dn, eps.max(),
                      clipped);

        q_keep = std::move(q);
        eps_keep = eps;
        V_keep = V_next;
        eps_last = std::move(eps);
        V = std::move(V_next);
      } catch (const Error& e) {
        std::ostringstream os;
        os << e.what() << " [layer " << n << ", inner iteration " << i;
        if (!E.empty()) os << ", last E=" << E.back() << ", D=" << D.back();
        os << "]";
        throw NumericalError(os.str());
      }
      if (inner_stop(E, D, cfg.eta, cfg.max_inner)) {
        if (i >= cfg.max_inner && cfg.mode == InversionMode::Test1)
          spdlog::warn("layer {} hit the inner-iteration cap of {}", n, cfg.max_inner);
        break;
      }
    }
    res.D_first.push_back(D.front());
    res.D_final.push_back(D.back());
    res.max_eps_by_layer.push_back(eps_keep.max());
    const auto gq = gradient(q_keep);
    for (std::size_t p = 0; p < om.size(); ++p) {
      qbar[p] += pg.h * q_keep[p];
      for (int a = 0; a < 3; ++a) grad_qbar[a][p] += pg.h * gq[a][p];
    }
    V = std::move(V_keep);
    eps_prev_layer = eps_keep;
    eps_by_layer.push_back(std::move(eps_keep));
    res.layers_run = n;
    spdlog::info("layer {}/{}: {} inner iterations, D_first={:.4e}, D_final={:.4e}, max eps={:.3f}", n, N,
                 D.size(), res.D_first.back(), res.D_final.back(), res.max_eps_by_layer.back());
    if (mode == InversionMode::Test2 && outer_stop_test2(res.D_final)) {
      res.stop_layer = n;
      break;
    }
  }

  if (mode == InversionMode::Test2) {
    res.selected_layer = res.stop_layer > 0 ? res.stop_layer - 1 : res.layers_run;
  } else {
    res.test1 = select_final_test1(res.D_first, res.D_final, res.max_eps_by_layer);
    res.selected_layer = res.test1.selected;
  }
  res.eps_rec = eps_by_layer[res.selected_layer - 1];
  res.max_eps = res.eps_rec.max();
  res.n_comp = std::sqrt(res.max_eps);
  res.eps_comp = res.max_eps;
  res.no_target = res.max_eps < cfg.no_target_level;
  if (res.no_target) spdlog::info("no target detected (max eps {:.4f})", res.max_eps);
  res.eps_trunc = postprocess_truncate(res.eps_rec, in.gamma_t.empty ? 0.0 : in.gamma_t.area, cfg.depth_truncation,
                                       &res.truncation);
  res.centroid = excess_centroid(res.eps_trunc);
  return res;
}

}  // namespace dielinv
