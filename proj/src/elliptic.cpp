#include "dielinv/elliptic.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <Eigen/Sparse>
#include <spdlog/spdlog.h>

#include <cmath>
#include <sstream>

namespace dielinv {

double weighted_moment(int k, double h, double lambda) {
  if (k < 0) throw InvalidArgument("moment order must be non-negative");
  if (!(lambda > 0.0)) throw InvalidArgument("Carleman parameter must be positive");
  if (!(h > 0.0)) throw InvalidArgument("layer width must be positive");
  const double x = lambda * h;
  double kfact = 1.0;
  for (int j = 2; j <= k; ++j) kfact *= j;
  // k!/lambda^{k+1} * P(k+1, x), P the regularised lower incomplete gamma.
  double frac = 0.0;
  if (x < 40.0) {
    // e^{-x} sum_{j>k} x^j / j!, no cancellation.
    double term = 1.0;
    for (int j = 1; j <= k + 1; ++j) term *= x / j;
    double sum = 0.0;
    for (int j = k + 1; j < k + 400; ++j) {
      sum += term;
      term *= x / (j + 1);
      if (term < 1e-18 * sum) break;
    }
    frac = std::exp(-x) * sum;
  } else {
    double term = 1.0, sum = 0.0;
    for (int j = 0; j <= k; ++j) {
      sum += term;
      term *= x / (j + 1);
    }
    frac = 1.0 - std::exp(-x) * sum;
  }
  return kfact / std::pow(lambda, k + 1) * frac;
}

CarlemanCoefficients carleman_coefficients_for_layer(double a, double h, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("Carleman parameter must be positive");
  // With t = a - s the weight is e^{-lambda t}; all integrands are polynomial in t.
  const double M0 = weighted_moment(0, h, lambda);
  const double M1 = weighted_moment(1, h, lambda);
  const double M2 = weighted_moment(2, h, lambda);
  const double M3 = weighted_moment(3, h, lambda);
  CarlemanCoefficients c;
  c.A1 = (2.0 * a * a * M0 - 8.0 * a * M1 + 6.0 * M2) / M0;
  c.A2 = (2.0 * a * a * M1 - 6.0 * a * M2 + 4.0 * M3) / M0;
  c.A3 = -(2.0 * a * M0 - 2.0 * M1) / M0;
  return c;
}

CarlemanCoefficients carleman_coefficients(std::size_t n, const PseudoFreqGrid& grid, double lambda) {
  grid.validate();
  if (n < 1 || n > grid.N) throw InvalidArgument("layer index out of range");
  return carleman_coefficients_for_layer(grid.s(n - 1), grid.h, lambda);
}

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Assembled {
  SpMat A;
  Eigen::VectorXd b;
  std::vector<std::ptrdiff_t> unknown;  // node -> unknown index or -1
  std::size_t upwind = 0;
};

Assembled assemble(const EllipticProblem& p) {
  const Grid3& g = p.grid;
  if (p.boundary.grid() != g) throw InvalidArgument("boundary field grid mismatch");
  if (p.rhs && p.rhs->grid() != g) throw InvalidArgument("rhs grid mismatch");
  if (p.convection)
    for (const auto& c : *p.convection)
      if (c.grid() != g) throw InvalidArgument("convection field grid mismatch");

  const auto& c = g.counts();
  Assembled out;
  out.unknown.assign(g.size(), -1);
  std::ptrdiff_t nu = 0;
  for (std::size_t i = 1; i + 1 < c[0]; ++i)
    for (std::size_t j = 1; j + 1 < c[1]; ++j)
      for (std::size_t k = 1; k + 1 < c[2]; ++k) out.unknown[g.linear(i, j, k)] = nu++;
  if (nu == 0) throw InvalidArgument("grid has no interior nodes");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nu) * 7);
  out.b = Eigen::VectorXd::Zero(nu);
  const std::array<std::size_t, 3> stride{c[1] * c[2], c[2], 1};
  const auto& h = g.spacing();

  for (std::size_t i = 1; i + 1 < c[0]; ++i)
    for (std::size_t j = 1; j + 1 < c[1]; ++j)
      for (std::size_t k = 1; k + 1 < c[2]; ++k) {
        const std::size_t node = g.linear(i, j, k);
        const std::ptrdiff_t row = out.unknown[node];
        double diag = 0.0;
        double rhs = p.rhs ? (*p.rhs)[node] : 0.0;
        bool upwinded = false;
        auto couple = [&](std::size_t nb, double coef) {
          const std::ptrdiff_t col = out.unknown[nb];
          if (col >= 0) trip.emplace_back(row, col, coef);
          else rhs -= coef * p.boundary[nb];
        };
        for (int a = 0; a < 3; ++a) {
          const double ih2 = 1.0 / (h[a] * h[a]);
          double cp = ih2, cm = ih2;
          diag -= 2.0 * ih2;
          if (p.convection) {
            const double ba = (*p.convection)[a][node];
            if (std::abs(ba) * h[a] / 2.0 > 1.0) {
              upwinded = true;
              if (ba > 0.0) {
                cp += ba / h[a];
                diag -= ba / h[a];
              } else {
                cm -= ba / h[a];
                diag += ba / h[a];
              }
            } else {
              cp += ba / (2.0 * h[a]);
              cm -= ba / (2.0 * h[a]);
            }
          }
          couple(node + stride[a], cp);
          couple(node - stride[a], cm);
        }
        trip.emplace_back(row, row, diag);
        out.b[row] = rhs;
        if (upwinded) ++out.upwind;
      }
  out.A.resize(nu, nu);
  out.A.setFromTriplets(trip.begin(), trip.end());
  out.A.makeCompressed();
  return out;
}

ScalarField3 scatter(const EllipticProblem& p, const Assembled& s, const Eigen::VectorXd& x) {
  ScalarField3 u(p.grid);
  const Grid3& g = p.grid;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const std::ptrdiff_t col = s.unknown[n];
    u[n] = col >= 0 ? x[col] : p.boundary[n];
  }
  return u;
}

template <typename Solver>
bool try_iterative(Solver& solver, const SpMat& A, const Eigen::VectorXd& b, double tol, Eigen::VectorXd& x,
                   SolveReport& rep) {
  solver.setTolerance(tol);
  solver.compute(A);
  if (solver.info() != Eigen::Success) return false;
  x = solver.solve(b);
  rep.iterations = static_cast<std::size_t>(solver.iterations());
  rep.relative_residual = (A * x - b).norm() / b.norm();
  return std::isfinite(rep.relative_residual) && rep.relative_residual <= tol * 1.01;
}

}  // namespace

ScalarField3 solve_elliptic(const EllipticProblem& p, SolveReport* report, double tol) {
  Assembled s = assemble(p);
  SolveReport rep;
  rep.unknowns = static_cast<std::size_t>(s.A.rows());
  rep.upwind_nodes = s.upwind;
  if (s.upwind > 0) spdlog::info("convection upwinded at {} nodes (cell Peclet > 1)", s.upwind);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(s.A.rows());
  const double bnorm = s.b.norm();
  if (bnorm == 0.0) {
    rep.method = "trivial";
  } else {
    bool ok = false;
    if (rep.unknowns <= 200000) {
      Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> solver;
      solver.preconditioner().setDroptol(1e-4);
      solver.preconditioner().setFillfactor(10);
      solver.setMaxIterations(4000);
      rep.method = "bicgstab+ilut";
      ok = try_iterative(solver, s.A, s.b, tol, x, rep);
    } else {
      Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> solver;
      solver.setMaxIterations(40000);
      rep.method = "bicgstab+jacobi";
      ok = try_iterative(solver, s.A, s.b, tol, x, rep);
    }
    if (!ok && rep.unknowns <= 400000) {
      spdlog::warn("iterative solve stalled at residual {:.3e}; falling back to sparse LU", rep.relative_residual);
      Eigen::SparseMatrix<double> Ac = s.A;
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(Ac);
      if (lu.info() == Eigen::Success) {
        x = lu.solve(s.b);
        rep.method = "sparse-lu";
        rep.iterations = 0;
        rep.relative_residual = (s.A * x - s.b).norm() / bnorm;
        ok = std::isfinite(rep.relative_residual) && rep.relative_residual <= tol;
      }
    }
    if (!ok) {
      std::ostringstream os;
      os << "elliptic solve did not converge: relative residual " << rep.relative_residual << " after "
         << rep.iterations << " iterations (" << rep.method << ")";
      throw NumericalError(os.str());
    }
  }
  if (report) *report = rep;
  return scatter(p, s, x);
}

ScalarField3 solve_laplace(const ScalarField3& boundary, SolveReport* report, double tol) {
  EllipticProblem p{boundary.grid(), std::nullopt, std::nullopt, boundary};
  return solve_elliptic(p, report, tol);
}

double elliptic_residual(const EllipticProblem& p, const ScalarField3& u) {
  Assembled s = assemble(p);
  Eigen::VectorXd x(s.A.rows());
  for (std::size_t n = 0; n < u.size(); ++n)
    if (s.unknown[n] >= 0) x[s.unknown[n]] = u[n];
  const double r = (s.A * x - s.b).norm();
  const double bn = s.b.norm();
  return bn > 0.0 ? r / bn : r;
}

std::array<ScalarField3, 3> gradient(const ScalarField3& f) {
  const Grid3& g = f.grid();
  const auto& c = g.counts();
  std::array<ScalarField3, 3> out{ScalarField3(g), ScalarField3(g), ScalarField3(g)};
  const std::array<std::size_t, 3> stride{c[1] * c[2], c[2], 1};
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      for (std::size_t k = 0; k < c[2]; ++k) {
        const std::size_t n = g.linear(i, j, k);
        const std::array<std::size_t, 3> ijk{i, j, k};
        for (int a = 0; a < 3; ++a) {
          const double h = g.spacing()[a];
          const std::size_t s = stride[a];
          const std::size_t last = c[a] - 1;
          double d = 0.0;
          if (ijk[a] > 0 && ijk[a] < last) {
            d = (f[n + s] - f[n - s]) / (2.0 * h);
          } else if (c[a] == 2) {
            d = ijk[a] == 0 ? (f[n + s] - f[n]) / h : (f[n] - f[n - s]) / h;
          } else if (ijk[a] == 0) {
            d = (-3.0 * f[n] + 4.0 * f[n + s] - f[n + 2 * s]) / (2.0 * h);
          } else {
            d = (3.0 * f[n] - 4.0 * f[n - s] + f[n - 2 * s]) / (2.0 * h);
          }
          out[a][n] = d;
        }
      }
  return out;
}

ScalarField3 laplacian(const ScalarField3& f) {
  const Grid3& g = f.grid();
  const auto& c = g.counts();
  ScalarField3 out(g, 0.0);
  const std::array<std::size_t, 3> stride{c[1] * c[2], c[2], 1};
  for (std::size_t i = 1; i + 1 < c[0]; ++i)
    for (std::size_t j = 1; j + 1 < c[1]; ++j)
      for (std::size_t k = 1; k + 1 < c[2]; ++k) {
        const std::size_t n = g.linear(i, j, k);
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double h = g.spacing()[a];
          acc += (f[n + stride[a]] - 2.0 * f[n] + f[n - stride[a]]) / (h * h);
        }
        out[n] = acc;
      }
  return out;
}

}  // namespace dielinv
