#pragma once

#include <array>
#include <optional>
#include <string>

#include "dielinv/grid.hpp"
#include "dielinv/spectral.hpp"

namespace dielinv {

/// Layer coefficients of the Carleman-weighted equation
///   Laplace(q_n) + A1 grad(q_n).(grad V - grad qbar) = A2 |grad q_n|^2 + A3 |grad V - grad qbar|^2.
/// A2 is reported but never used in a solve.
struct CarlemanCoefficients {
  double A1 = 0.0;
  double A2 = 0.0;
  double A3 = 0.0;
};

/// Coefficients for layer n (1..N) of the pseudo-frequency grid.
CarlemanCoefficients carleman_coefficients(std::size_t n, const PseudoFreqGrid& grid, double lambda);

/// Same, for the layer (a - h, a] directly.
CarlemanCoefficients carleman_coefficients_for_layer(double a, double h, double lambda);

/// int_0^h t^k e^{-lambda t} dt, evaluated without cancellation for small lambda h.
double weighted_moment(int k, double h, double lambda);

/// Dirichlet problem Laplace(u) + b.grad(u) = rhs on the interior nodes,
/// u = boundary on the six faces.
struct EllipticProblem {
  Grid3 grid;
  std::optional<std::array<ScalarField3, 3>> convection;
  std::optional<ScalarField3> rhs;  // empty means 0
  ScalarField3 boundary;            // only boundary nodes are read
};

struct SolveReport {
  std::size_t unknowns = 0;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  std::size_t upwind_nodes = 0;
  std::string method;
};

/// Central differences, switching to upwind convection per node where the
/// cell Peclet number |b_a| h / 2 exceeds 1. Solves to relative residual `tol`.
ScalarField3 solve_elliptic(const EllipticProblem& p, SolveReport* report = nullptr, double tol = 1e-8);

/// Harmonic extension of the boundary values of `boundary`.
ScalarField3 solve_laplace(const ScalarField3& boundary, SolveReport* report = nullptr, double tol = 1e-8);

/// Residual of the same discrete operator applied to u (interior nodes only),
/// relative to the rhs norm (absolute when rhs vanishes).
double elliptic_residual(const EllipticProblem& p, const ScalarField3& u);

/// Second-order gradient: central inside, one-sided three-point on faces.
std::array<ScalarField3, 3> gradient(const ScalarField3& f);

/// Seven-point Laplacian at interior nodes; boundary nodes are set to 0.
ScalarField3 laplacian(const ScalarField3& f);

}  // namespace dielinv
