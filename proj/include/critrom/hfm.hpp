#pragma once

// Control-volume discretisation of the one-group diffusion eigenproblem
// A phi = lambda B phi and its power-method solution.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "critrom/core_model.hpp"
#include "critrom/errors.hpp"
#include "critrom/numerics.hpp"

namespace critrom {

/// Diffusion coefficient given to ghost cells; half the sum with any interior
/// coefficient is negative, so max{., 0} removes the boundary-face coupling.
inline constexpr double kGhostDiffusion = -1e30;

/// Symmetric 3-point (1D) or 5-point (2D) operator stored by stencil bands.
/// Off-diagonal bands hold the (non-positive) coupling to the neighbour in
/// that direction; entries without a neighbour are zero.
struct StencilOperator {
  std::size_t nx = 0;
  std::size_t ny = 1;
  Vector diag, west, east, south, north;

  std::size_t size() const { return diag.size(); }

  void apply(std::span<const double> x, std::span<double> y) const {
    detail::require_dims(x.size() == size() && y.size() == size(), "StencilOperator: length mismatch");
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t c = j * nx + i;
        double s = diag[c] * x[c];
        if (i > 0) s += west[c] * x[c - 1];
        if (i + 1 < nx) s += east[c] * x[c + 1];
        if (j > 0) s += south[c] * x[c - nx];
        if (j + 1 < ny) s += north[c] * x[c + nx];
        y[c] = s;
      }
    }
  }

  Vector apply(std::span<const double> x) const {
    Vector y(size());
    apply(x, y);
    return y;
  }

  /// A * M for a row-major N x P matrix M.
  DenseMatrix apply(const DenseMatrix& m) const {
    detail::require_dims(m.rows() == size(), "StencilOperator: matrix row mismatch");
    const std::size_t p = m.cols();
    DenseMatrix out(m.rows(), p);
    auto axpy = [p](double a, std::span<const double> src, std::span<double> dst) {
      for (std::size_t k = 0; k < p; ++k) dst[k] += a * src[k];
    };
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t c = j * nx + i;
        auto dst = out.row(c);
        axpy(diag[c], m.row(c), dst);
        if (i > 0) axpy(west[c], m.row(c - 1), dst);
        if (i + 1 < nx) axpy(east[c], m.row(c + 1), dst);
        if (j > 0) axpy(south[c], m.row(c - nx), dst);
        if (j + 1 < ny) axpy(north[c], m.row(c + nx), dst);
      }
    }
    return out;
  }

  DenseMatrix to_dense() const {
    const std::size_t n = size();
    DenseMatrix a(n, n);
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t c = j * nx + i;
        a(c, c) = diag[c];
        if (i > 0) a(c, c - 1) = west[c];
        if (i + 1 < nx) a(c, c + 1) = east[c];
        if (j > 0) a(c, c - nx) = south[c];
        if (j + 1 < ny) a(c, c + nx) = north[c];
      }
    }
    return a;
  }
};

struct DiscreteSystem {
  StencilOperator a;   // transport: diffusion + absorption (+ bare-edge leakage)
  Vector b;            // fission operator diagonal, nu * sigma_f per cell
  std::size_t n_dof = 0;
  std::size_t nx = 0, ny = 1;
  double dx = 1.0, dy = 1.0;
  int dims = 1;

  DenseMatrix fission_dense() const {
    DenseMatrix m(n_dof, n_dof);
    for (std::size_t i = 0; i < n_dof; ++i) m(i, i) = b[i];
    return m;
  }
};

struct CriticalitySolution {
  Vector flux;                  // normalised to unit total fission source
  double lambda = 0.0;
  double k_eff = 0.0;
  std::vector<double> history;  // k_eff after each outer iteration
  std::vector<int> inner_iterations;
  int inner_nonconverged = 0;
  bool converged = false;
  int outer_iters = 0;
};

/// Face coupling 1/2 max{D_a + D_b, 0} / h^2.
inline double face_coupling(double d_a, double d_b, double h) {
  return 0.5 * std::max(d_a + d_b, 0.0) / (h * h);
}

inline DiscreteSystem assemble(const MaterialField& field, const Geometry& geom) {
  const std::size_t n = geom.cell_count();
  detail::require_dims(field.xs.size() == n && field.diffusion.size() == n,
                       "assemble: material field does not cover the mesh");
  DiscreteSystem sys;
  sys.n_dof = n;
  sys.nx = geom.nx;
  sys.ny = geom.ny;
  sys.dx = geom.dx;
  sys.dy = geom.dy;
  sys.dims = geom.dims;
  StencilOperator& a = sys.a;
  a.nx = geom.nx;
  a.ny = geom.ny;
  a.diag.assign(n, 0.0);
  a.west.assign(n, 0.0);
  a.east.assign(n, 0.0);
  a.south.assign(n, 0.0);
  a.north.assign(n, 0.0);
  sys.b.assign(n, 0.0);

  const bool two_d = geom.dims == 2;
  for (std::size_t j = 0; j < geom.ny; ++j) {
    for (std::size_t i = 0; i < geom.nx; ++i) {
      const std::size_t c = geom.index(i, j);
      const double d = field.diffusion[c];
      const auto& xs = field.xs[c];

      const double dw = i > 0 ? field.diffusion[c - 1] : kGhostDiffusion;
      const double de = i + 1 < geom.nx ? field.diffusion[c + 1] : kGhostDiffusion;
      const double cw = face_coupling(dw, d, geom.dx);
      const double ce = face_coupling(d, de, geom.dx);
      a.west[c] = i > 0 ? -cw : 0.0;
      a.east[c] = i + 1 < geom.nx ? -ce : 0.0;
      double diag = cw + ce;

      if (two_d) {
        const double ds = j > 0 ? field.diffusion[c - geom.nx] : kGhostDiffusion;
        const double dn = j + 1 < geom.ny ? field.diffusion[c + geom.nx] : kGhostDiffusion;
        const double cs = face_coupling(ds, d, geom.dy);
        const double cn = face_coupling(d, dn, geom.dy);
        a.south[c] = j > 0 ? -cs : 0.0;
        a.north[c] = j + 1 < geom.ny ? -cn : 0.0;
        diag += cs + cn;
      }

      double absorption = xs.sigma_a;
      if (i == 0 && geom.boundary[kLeft] == Boundary::bare) absorption += 0.5 / geom.dx;
      if (i + 1 == geom.nx && geom.boundary[kRight] == Boundary::bare) absorption += 0.5 / geom.dx;
      if (two_d) {
        if (j == 0 && geom.boundary[kBottom] == Boundary::bare) absorption += 0.5 / geom.dy;
        if (j + 1 == geom.ny && geom.boundary[kTop] == Boundary::bare) absorption += 0.5 / geom.dy;
      }
      a.diag[c] = diag + absorption;
      sys.b[c] = xs.nu * xs.sigma_f;
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Power method

struct OuterOptions {
  int max_outer = 1000;
  double k_tol = 1e-8;
};

/// Result of one inner solve as seen by the outer loop.
struct InnerResult {
  Vector flux;
  int iterations = 0;
  bool converged = true;
};

/// Any callable (flux, lambda) -> InnerResult that approximately solves
/// A phi_new = lambda B phi.
using InnerSolver = std::function<InnerResult(const Vector&, double)>;

inline double fission_source(const DiscreteSystem& sys, std::span<const double> flux) {
  return dot(sys.b, flux);
}

/// Outer iterations: inner solve, normalise to unit fission source, update
/// lambda = b^T A phi / b^T B phi, stop when successive k_eff differ by less
/// than k_tol or after max_outer iterations.
template <class Inner>
CriticalitySolution power_iterate(const DiscreteSystem& sys, Vector flux, double lambda,
                                  Inner&& inner, const OuterOptions& opts = {}) {
  detail::require_dims(flux.size() == sys.n_dof, "power_iterate: flux guess has wrong length");
  if (!(lambda > 0.0)) throw DomainError("power_iterate: lambda guess must be positive");
  if (norm_inf(sys.b) == 0.0) throw DomainError("power_iterate: no fissile material (B = 0)");
  if (norm_inf(flux) == 0.0) throw DomainError("power_iterate: flux guess is zero");

  CriticalitySolution sol;
  double k_prev = 1.0 / lambda;
  Vector a_phi(sys.n_dof);
  for (int it = 0; it < opts.max_outer; ++it) {
    InnerResult r = inner(static_cast<const Vector&>(flux), lambda);
    detail::require_dims(r.flux.size() == sys.n_dof, "power_iterate: inner solver changed length");
    const double fission = fission_source(sys, r.flux);
    if (fission == 0.0 || !std::isfinite(fission)) {
      throw DomainError("power_iterate: fission source b^T B phi = " + std::to_string(fission));
    }
    for (double& v : r.flux) v /= fission;
    sys.a.apply(r.flux, a_phi);
    double total = 0.0;
    for (double v : a_phi) total += v;
    lambda = total / fission_source(sys, r.flux);
    if (!std::isfinite(lambda) || lambda == 0.0) {
      throw NumericError("power_iterate: eigenvalue estimate became " + std::to_string(lambda));
    }
    flux = std::move(r.flux);
    const double k = 1.0 / lambda;
    sol.history.push_back(k);
    sol.inner_iterations.push_back(r.iterations);
    if (!r.converged) ++sol.inner_nonconverged;
    sol.outer_iters = it + 1;
    if (std::abs(k - k_prev) < opts.k_tol) {
      sol.converged = true;
      break;
    }
    k_prev = k;
  }
  sol.flux = std::move(flux);
  sol.lambda = lambda;
  sol.k_eff = 1.0 / lambda;
  return sol;
}

struct GaussSeidelOptions {
  double tol = 1e-10;
  int max_sweeps = 10000;
};

/// Forward-backward Gauss-Seidel on the stencil operator, warm-started from x.
inline IterativeSolve stencil_gauss_seidel(const StencilOperator& a, std::span<const double> rhs,
                                           Vector x, const GaussSeidelOptions& opts = {}) {
  const std::size_t n = a.size();
  detail::require_dims(rhs.size() == n && x.size() == n, "stencil_gauss_seidel: length mismatch");
  for (std::size_t c = 0; c < n; ++c) {
    if (a.diag[c] == 0.0) throw DomainError("stencil_gauss_seidel: zero diagonal");
  }
  const std::size_t nx = a.nx;
  const std::size_t ny = a.ny;
  auto relax = [&](std::size_t i, std::size_t j) {
    const std::size_t c = j * nx + i;
    double s = rhs[c];
    if (i > 0) s -= a.west[c] * x[c - 1];
    if (i + 1 < nx) s -= a.east[c] * x[c + 1];
    if (j > 0) s -= a.south[c] * x[c - nx];
    if (j + 1 < ny) s -= a.north[c] * x[c + nx];
    x[c] = s / a.diag[c];
  };
  const double target = opts.tol * norm_inf(rhs);
  Vector ax(n);
  auto residual = [&] {
    a.apply(x, ax);
    double worst = 0.0;
    for (std::size_t c = 0; c < n; ++c) worst = std::max(worst, std::abs(ax[c] - rhs[c]));
    return worst;
  };

  IterativeSolve out;
  if (residual() <= target) {
    out.converged = true;
    out.x = std::move(x);
    return out;
  }
  while (out.sweeps < opts.max_sweeps) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) relax(i, j);
    for (std::size_t j = ny; j-- > 0;)
      for (std::size_t i = nx; i-- > 0;) relax(i, j);
    ++out.sweeps;
    if (residual() <= target) {
      out.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  return out;
}

/// The high-fidelity inner solver: A phi_new = lambda B phi by Gauss-Seidel,
/// warm-started from the current flux.
inline InnerSolver gauss_seidel_inner(const DiscreteSystem& sys, GaussSeidelOptions opts = {}) {
  return [&sys, opts](const Vector& flux, double lambda) {
    Vector rhs(sys.n_dof);
    for (std::size_t c = 0; c < sys.n_dof; ++c) rhs[c] = lambda * sys.b[c] * flux[c];
    IterativeSolve s = stencil_gauss_seidel(sys.a, rhs, flux, opts);
    return InnerResult{std::move(s.x), s.sweeps, s.converged};
  };
}

inline CriticalitySolution power_method(const DiscreteSystem& sys, Vector flux_guess,
                                        double lambda_guess, const InnerSolver& inner,
                                        const OuterOptions& opts = {}) {
  return power_iterate(sys, std::move(flux_guess), lambda_guess, inner, opts);
}

/// Flat flux scaled to unit fission source.
inline Vector flat_initial_flux(const DiscreteSystem& sys) {
  Vector flux(sys.n_dof, 1.0);
  const double f = fission_source(sys, flux);
  if (!(f > 0.0)) throw DomainError("flat_initial_flux: no fissile material (B = 0)");
  for (double& v : flux) v /= f;
  return flux;
}

/// build_material_field -> assemble -> power method from a flat guess, lambda = 1.
inline CriticalitySolution solve_case(const CaseDefinition& c, const RodConfig& config,
                                      const OuterOptions& outer = {},
                                      const GaussSeidelOptions& inner = {}) {
  const DiscreteSystem sys = assemble(build_material_field(c, config), c.geometry);
  return power_method(sys, flat_initial_flux(sys), 1.0, gauss_seidel_inner(sys, inner), outer);
}

inline DiscreteSystem assemble_case(const CaseDefinition& c, const RodConfig& config) {
  return assemble(build_material_field(c, config), c.geometry);
}

}  // namespace critrom
