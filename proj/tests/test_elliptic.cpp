#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "dielinv/elliptic.hpp"

using namespace dielinv;

namespace {

double integrate(const std::function<double(double)>& f, double lo, double hi) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 10, 1e-13, &err);
}

// Layer equation obtained from the q equation with q = q_n on (s_n, s_{n-1}],
// multiplied by exp(lambda (s - s_{n-1})) and integrated over the layer, then
// normalised so the Laplacian keeps coefficient one.
CarlemanCoefficients quadrature_coefficients(double a, double h, double lambda) {
  auto w = [a, lambda](double s) { return std::exp(lambda * (s - a)); };
  const double I0 = integrate(w, a - h, a);
  CarlemanCoefficients c;
  c.A1 = integrate([&](double s) { return (2 * s * s - 4 * s * (a - s)) * w(s); }, a - h, a) / I0;
  c.A2 = integrate([&](double s) { return (2 * s * s * (a - s) - 2 * s * (a - s) * (a - s)) * w(s); }, a - h, a) / I0;
  c.A3 = -integrate([&](double s) { return 2 * s * w(s); }, a - h, a) / I0;
  return c;
}

bool close(double x, double ref, double tol) { return std::abs(x - ref) <= tol * std::max(1.0, std::abs(ref)); }

Grid3 box(double h) { return grid_from_box({-0.24, -0.24, -0.1}, {0.24, 0.24, 0.06}, h); }

double qstar(const Vec3& p) {
  using std::numbers::pi;
  return std::sin(pi * p[0]) * std::sin(pi * p[1]) * std::sin(pi * p[2] / 0.14);
}

Vec3 grad_qstar(const Vec3& p) {
  using std::numbers::pi;
  const double sx = std::sin(pi * p[0]), sy = std::sin(pi * p[1]), sz = std::sin(pi * p[2] / 0.14);
  return {pi * std::cos(pi * p[0]) * sy * sz, pi * sx * std::cos(pi * p[1]) * sz,
          pi / 0.14 * sx * sy * std::cos(pi * p[2] / 0.14)};
}

double lap_qstar(const Vec3& p) {
  using std::numbers::pi;
  return -(2 * pi * pi + pi * pi / (0.14 * 0.14)) * qstar(p);
}

using Convection = Vec3 (*)(const Vec3&);

// Max-norm error of the manufactured solution on a grid of spacing h.
double mms_error(double h, Convection b) {
  const Grid3 g = box(h);
  EllipticProblem p;
  p.grid = g;
  ScalarField3 bnd(g), rhs(g), exact(g);
  std::array<ScalarField3, 3> conv{ScalarField3(g), ScalarField3(g), ScalarField3(g)};
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index3 c = g.unravel(n);
    const Vec3 x = g.point_at(c[0], c[1], c[2]);
    exact[n] = bnd[n] = qstar(x);
    rhs[n] = lap_qstar(x);
    if (b) {
      const Vec3 bv = b(x), gq = grad_qstar(x);
      for (int a = 0; a < 3; ++a) conv[a][n] = bv[a];
      rhs[n] += bv[0] * gq[0] + bv[1] * gq[1] + bv[2] * gq[2];
    }
  }
  p.boundary = bnd;
  p.rhs = rhs;
  if (b) p.convection = conv;
  const ScalarField3 u = solve_elliptic(p, nullptr, 1e-12);
  double err = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) err = std::max(err, std::abs(u[n] - exact[n]));
  return err;
}

double observed_order(Convection b, const std::vector<double>& hs = {0.04, 0.02, 0.01}) {
  std::vector<double> e;
  for (double h : hs) e.push_back(mms_error(h, b));
  MESSAGE("errors " << e[0] << " " << e[1] << " " << e[2]);
  return std::min(std::log2(e[0] / e[1]), std::log2(e[1] / e[2]));
}

}  // namespace

TEST_CASE("Carleman coefficients match adaptive quadrature of the defining integrals") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> Nd(10, 80);
  std::uniform_real_distribution<double> L(1.0, 100.0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t N = Nd(rng);
    const PseudoFreqGrid g{8.0, 10.0, 2.0 / static_cast<double>(N), N};
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, N)(rng);
    const double lambda = L(rng);
    const CarlemanCoefficients c = carleman_coefficients(n, g, lambda);
    const CarlemanCoefficients q = quadrature_coefficients(g.s(n - 1), g.h, lambda);
    CHECK(close(c.A1, q.A1, 1e-10));
    CHECK(close(c.A2, q.A2, 1e-10));
    CHECK(close(c.A3, q.A3, 1e-10));
  }
}

TEST_CASE("Carleman coefficients at the standard grid") {
  const PseudoFreqGrid g;
  for (std::size_t n = 1; n <= g.N; ++n) {
    const CarlemanCoefficients c = carleman_coefficients(n, g, 20.0);
    const CarlemanCoefficients q = quadrature_coefficients(g.s(n - 1), g.h, 20.0);
    CHECK(close(c.A1, q.A1, 1e-10));
    CHECK(close(c.A2, q.A2, 1e-10));
    CHECK(close(c.A3, q.A3, 1e-10));
  }
}

TEST_CASE("|A2| decreases with lambda on every layer") {
  const PseudoFreqGrid g;
  for (std::size_t n = 1; n <= g.N; ++n) {
    const double a10 = std::abs(carleman_coefficients(n, g, 10.0).A2);
    const double a20 = std::abs(carleman_coefficients(n, g, 20.0).A2);
    const double a40 = std::abs(carleman_coefficients(n, g, 40.0).A2);
    CHECK(a40 < a20);
    CHECK(a20 < a10);
  }
}

TEST_CASE("large lambda concentrates the weight at the layer top") {
  const double a = 9.5, lambda = 1e4;
  const CarlemanCoefficients c = carleman_coefficients_for_layer(a, 0.05, lambda);
  const CarlemanCoefficients q = quadrature_coefficients(a, 0.05, lambda);
  CHECK(c.A1 == doctest::Approx(2 * a * a).epsilon(1e-3));
  CHECK(c.A3 == doctest::Approx(-2 * a).epsilon(1e-3));
  CHECK(std::abs(c.A2) < 2 * a * a / lambda);
  CHECK(close(c.A1, q.A1, 1e-10));
  CHECK(close(c.A3, q.A3, 1e-10));
}

TEST_CASE("weighted moments stay accurate for tiny lambda h") {
  for (int k = 0; k <= 3; ++k)
    for (double lambda : {1e-6, 0.3, 20.0, 900.0}) {
      const double h = 0.05;
      const double ref = integrate([&](double t) { return std::pow(t, k) * std::exp(-lambda * t); }, 0.0, h);
      CHECK(close(weighted_moment(k, h, lambda) / ref, 1.0, 1e-12));
    }
  CHECK_THROWS_AS(weighted_moment(1, 0.05, 0.0), InvalidArgument);
  CHECK_THROWS_AS(carleman_coefficients_for_layer(9.0, 0.05, -1.0), InvalidArgument);
}

TEST_CASE("harmonic extension of constants and harmonic quadratics") {
  const Grid3 g = box(0.02);
  const ScalarField3 c(g, 3.25);
  const ScalarField3 u = solve_laplace(c, nullptr, 1e-12);
  CHECK(u.min() == doctest::Approx(3.25).epsilon(1e-10));
  CHECK(u.max() == doctest::Approx(3.25).epsilon(1e-10));

  ScalarField3 b(g);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index3 q = g.unravel(n);
    const Vec3 x = g.point_at(q[0], q[1], q[2]);
    b[n] = x[0] * x[0] - x[2] * x[2];
  }
  SolveReport rep;
  const ScalarField3 v = solve_laplace(b, &rep, 1e-12);
  double err = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) err = std::max(err, std::abs(v[n] - b[n]));
  CHECK(err < 1e-9);  // the seven-point stencil is exact on quadratics
  CHECK(rep.relative_residual <= 1e-12);
}

TEST_CASE("discrete maximum principle") {
  const Grid3 g = box(0.02);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-2.0, 3.0);
  ScalarField3 b(g);
  for (double& x : b.values()) x = U(rng);
  double lo = 1e300, hi = -1e300;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index3 q = g.unravel(n);
    if (!g.on_boundary(q[0], q[1], q[2])) continue;
    lo = std::min(lo, b[n]);
    hi = std::max(hi, b[n]);
  }
  const ScalarField3 u = solve_laplace(b);
  CHECK(u.min() >= lo - 1e-9);
  CHECK(u.max() <= hi + 1e-9);
}

TEST_CASE("zero data gives zero") {
  EllipticProblem p;
  p.grid = box(0.04);
  p.boundary = ScalarField3(p.grid, 0.0);
  const ScalarField3 u = solve_elliptic(p);
  CHECK(u.min() == 0.0);
  CHECK(u.max() == 0.0);
}

TEST_CASE("manufactured solution converges at second order without convection") {
  CHECK(observed_order(nullptr) >= 1.9);
}

TEST_CASE("manufactured solution converges at second order with constant convection") {
  CHECK(observed_order([](const Vec3&) { return Vec3{1.0, 0.0, 0.0}; }) >= 1.9);
}

TEST_CASE("manufactured solution converges at second order with variable convection") {
  CHECK(observed_order([](const Vec3& x) { return Vec3{20.0 * x[0], -10.0, 5.0 + 30.0 * x[2]}; },
                       {0.02, 0.01, 0.005}) >= 1.9);
}

TEST_CASE("solution satisfies its own discrete equation") {
  EllipticProblem p;
  p.grid = box(0.02);
  p.boundary = ScalarField3(p.grid, 0.0);
  ScalarField3 rhs(p.grid, 1.0);
  p.rhs = rhs;
  std::array<ScalarField3, 3> conv{ScalarField3(p.grid, 300.0), ScalarField3(p.grid, 0.0), ScalarField3(p.grid, 0.0)};
  p.convection = conv;  // cell Peclet number 3: upwinding
  SolveReport rep;
  const ScalarField3 u = solve_elliptic(p, &rep, 1e-10);
  CHECK(rep.upwind_nodes > 0);
  CHECK(elliptic_residual(p, u) < 1e-9);
}

TEST_CASE("gradient and Laplacian are exact on quadratics") {
  const Grid3 g = box(0.02);
  ScalarField3 f(g);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index3 q = g.unravel(n);
    const Vec3 x = g.point_at(q[0], q[1], q[2]);
    f[n] = x[0] * x[0] + 2 * x[1] * x[2] - 3 * x[2];
  }
  const auto gr = gradient(f);
  const ScalarField3 L = laplacian(f);
  double eg = 0.0, el = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index3 q = g.unravel(n);
    const Vec3 x = g.point_at(q[0], q[1], q[2]);
    eg = std::max({eg, std::abs(gr[0][n] - 2 * x[0]), std::abs(gr[1][n] - 2 * x[2]),
                   std::abs(gr[2][n] - (2 * x[1] - 3))});
    if (!g.on_boundary(q[0], q[1], q[2])) el = std::max(el, std::abs(L[n] - 2.0));
  }
  CHECK(eg < 1e-10);
  CHECK(el < 1e-8);
}
