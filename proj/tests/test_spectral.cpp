#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "dielinv/spectral.hpp"

using namespace dielinv;

namespace {

std::vector<double> sampled(double dt, double T, double (*f)(double)) {
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  std::vector<double> u(n + 1);
  for (std::size_t i = 0; i <= n; ++i) u[i] = f(static_cast<double>(i) * dt);
  return u;
}

}  // namespace

TEST_CASE("Laplace transform of a constant truncated at T") {
  const auto u = sampled(1e-3, 10.0, [](double) { return 1.0; });
  const LaplaceValue L = laplace_transform(u, 1e-3, 8.0);
  CHECK(L.value == doctest::Approx((1.0 - std::exp(-80.0)) / 8.0).epsilon(1e-5));
  CHECK_FALSE(L.decayed);
}

TEST_CASE("Laplace transform of an exponential") {
  const auto u = sampled(1e-3, 10.0, [](double t) { return std::exp(-t); });
  const LaplaceValue L = laplace_transform(u, 1e-3, 9.0);
  CHECK(std::abs(L.value - 0.1) < 1e-6);
  CHECK(L.decayed);
  CHECK(L.truncation_bound < 1e-40);
}

TEST_CASE("Laplace transform of zero") {
  const std::vector<double> u(100, 0.0);
  CHECK(laplace_transform(u, 0.01, 8.0).value == 0.0);
}

TEST_CASE("Laplace transform is decreasing in s for positive traces") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double a = 0.5 + 4 * U(rng), b = 0.1 + U(rng);
    std::vector<double> u(2000);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double t = i * 0.003;
      u[i] = (1 + std::sin(a * t) * 0.5) * std::exp(-b * t) + 1e-3;
    }
    double prev = laplace_transform(u, 0.003, 7.5).value;
    for (double s = 7.75; s <= 10.5; s += 0.25) {
      const double v = laplace_transform(u, 0.003, s).value;
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("v from w") {
  CHECK(v_of_w(1.0, 7.0) == 0.0);
  CHECK(v_of_w(std::exp(100.0), 10.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(v_of_w(2.0, 8.0) == doctest::Approx(std::log(2.0) / 64.0).epsilon(1e-14));
  CHECK_THROWS_AS(v_of_w(0.0, 8.0), NumericalError);
  CHECK_THROWS_AS(v_of_w(-1.0, 8.0), NumericalError);
}

TEST_CASE("psi from sampled phi") {
  const double s = 10.0, d = 1e-4;
  SUBCASE("exponential decay gives c / s^2") {
    const double c = 0.7;
    auto phi = [c](double x) { return std::exp(-c * x); };
    CHECK(psi_from_phi(phi(s - d), phi(s), phi(s + d), s, d) == doctest::Approx(c / (s * s)).epsilon(1e-7));
  }
  SUBCASE("constant one gives zero") { CHECK(psi_from_phi(1.0, 1.0, 1.0, s, d) == 0.0); }
  SUBCASE("phi = s") {
    const double ref = (1.0 - 2.0 * std::log(10.0)) / 1000.0;
    CHECK(psi_from_phi(s - d, s, s + d, s, d) == doctest::Approx(ref).epsilon(1e-8));
    CHECK(ref == doctest::Approx(-0.0036052).epsilon(1e-4));
  }
}

TEST_CASE("psi layer average") {
  CHECK(psi_layer_average(0.3, 0.3) == 0.3);
  CHECK(psi_layer_average(9.95, 10.0) == doctest::Approx(9.975));
}

TEST_CASE("pseudo-frequency grid") {
  const PseudoFreqGrid g = PseudoFreqGrid::from_step(8.0, 10.0, 0.05);
  CHECK(g.N == 40);
  CHECK(g.s(0) == 10.0);
  CHECK(g.s(40) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK_THROWS_AS(PseudoFreqGrid::from_step(8.0, 10.0, 0.07), InvalidArgument);
  CHECK_THROWS_AS(PseudoFreqGrid::from_step(10.0, 8.0, 0.05), InvalidArgument);
  const auto pts = psi_sample_points(g, 1e-3);
  REQUIRE(pts.size() == 3 * 41);
  CHECK(pts[3 * 5 + 1] == g.s(5));
  CHECK(pts[3 * 5] == doctest::Approx(g.s(5) - 1e-3));
  CHECK(pts[3 * 5 + 2] == doctest::Approx(g.s(5) + 1e-3));
}

TEST_CASE("tail from w") {
  const Grid3 grid({0, 0, 0}, {0.1, 0.1, 0.1}, {4, 4, 4});
  const ScalarField3 ones(grid, 1.0);
  const ScalarField3 V0 = tail_from_w(ones, 10.0);
  CHECK(V0.min() == 0.0);
  CHECK(V0.max() == 0.0);
  // w = exp(p s) recovers p / s.
  ScalarField3 w(grid);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Index3 c = grid.unravel(n);
    const double p = -0.2 - 0.1 * grid.coord(0, c[0]) + 0.05 * grid.coord(2, c[2]);
    w[n] = std::exp(p * 10.0);
  }
  const ScalarField3 V = tail_from_w(w, 10.0);
  for (std::size_t n = 0; n < grid.size(); ++n) CHECK(V[n] == doctest::Approx(std::log(w[n]) / 10.0 / 10.0));
}

TEST_CASE("positivity enforcement") {
  std::vector<double> w(200, 1.0);
  w[3] = -1e-9;
  CHECK(enforce_positivity(w) == 1);
  CHECK(w[3] > 0.0);
  std::vector<double> bad(100, -1.0);
  bad[0] = 1.0;
  CHECK_THROWS_AS(enforce_positivity(bad), NumericalError);
}

TEST_CASE("pseudo-frequency series: cube transform and CSV round trip") {
  TraceCube cube(0.8, PlaneGrid{-0.1, -0.1, 0.1, 0.1, 3, 2}, 0.003, 3000);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t t = 0; t < 3000; ++t) cube.at(i, j, t) = (1.0 + i + j) * std::exp(-cube.time(t));
  std::size_t undecayed = 99;
  const PseudoFreqSeries L = laplace_of_cube(cube, {8.0, 9.0}, &undecayed);
  CHECK(undecayed == 0);
  CHECK(L.at(2, 1, 1) == doctest::Approx(4.0 / 10.0).epsilon(1e-4));
  CHECK(L.index_of(9.0) == 1);
  CHECK_THROWS((void)L.index_of(8.5));

  const auto path = std::filesystem::temp_directory_path() / "dielinv_series.csv";
  L.write_csv(path);
  const PseudoFreqSeries R = PseudoFreqSeries::read_csv(path);
  CHECK(R.xy() == L.xy());
  CHECK(R.s() == L.s());
  for (std::size_t n = 0; n < L.values().size(); ++n) CHECK(R.values()[n] == L.values()[n]);
  std::filesystem::remove(path);
}
