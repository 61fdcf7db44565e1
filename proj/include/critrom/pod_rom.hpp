#pragma once

// POD-Galerkin reduced-order model: snapshot basis, projection of (A, B) and
// the reduced power method.

#include <fstream>
#include <string>
#include <utility>

#include "json.hpp"

#include "critrom/errors.hpp"
#include "critrom/hfm.hpp"
#include "critrom/numerics.hpp"

namespace critrom {

struct PodBasis {
  DenseMatrix r;                // N x P, orthonormal columns
  Vector singular_values;       // retained sigma_1..sigma_P
  Vector spectrum;              // every non-null singular value of the snapshots
  double capture_fraction = 0.0;

  std::size_t n() const { return r.rows(); }
  std::size_t p() const { return r.cols(); }
};

inline PodBasis build_pod_basis(const DenseMatrix& snapshots, const TruncationCriterion& criterion) {
  const SvdResult svd = method_of_snapshots(snapshots);
  PodBasis basis;
  basis.r = truncate_basis(svd, criterion);
  basis.spectrum = svd.singular_values;
  basis.singular_values.assign(svd.singular_values.begin(),
                               svd.singular_values.begin() + static_cast<std::ptrdiff_t>(basis.p()));
  basis.capture_fraction = capture_fraction(svd, basis.p());
  return basis;
}

/// Wraps an existing orthonormal matrix (e.g. the identity) as a basis.
inline PodBasis basis_from_matrix(DenseMatrix r) {
  PodBasis basis;
  basis.r = std::move(r);
  basis.capture_fraction = 1.0;
  return basis;
}

inline Vector project(const PodBasis& basis, std::span<const double> flux) {
  detail::require_dims(flux.size() == basis.n(), "project: flux length does not match basis rows");
  return matvec_transposed(basis.r, flux);
}

inline Vector reconstruct(const PodBasis& basis, std::span<const double> alpha) {
  detail::require_dims(alpha.size() == basis.p(), "reconstruct: alpha length does not match basis size");
  return matvec(basis.r, alpha);
}

struct ReducedSystem {
  DenseMatrix ar;   // R^T A R
  DenseMatrix br;   // R^T B R
  DenseMatrix rtb;  // R^T B, P x N
};

inline ReducedSystem reduce_system(const DiscreteSystem& sys, const PodBasis& basis) {
  detail::require_dims(basis.n() == sys.n_dof, "reduce_system: basis rows do not match system size");
  const DenseMatrix& r = basis.r;
  const std::size_t n = r.rows();
  const std::size_t p = r.cols();
  ReducedSystem red;
  red.ar = matmul_transposed(r, sys.a.apply(r));
  DenseMatrix br_cols(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) br_cols(i, k) = sys.b[i] * r(i, k);
  red.br = matmul_transposed(r, br_cols);
  red.rtb = br_cols.transpose();
  return red;
}

/// One reduced "inner iteration": s = lambda R^T B phi, solve (R^T A R) alpha = s,
/// return R alpha.
inline Vector pod_inner_iteration(const ReducedSystem& red, const PodBasis& basis,
                                  std::span<const double> flux, double lambda) {
  Vector s = matvec(red.rtb, flux);
  for (double& v : s) v *= lambda;
  return matvec(basis.r, gaussian_elimination(red.ar, s));
}

inline Vector pod_inner_iteration(const DiscreteSystem& sys, const PodBasis& basis,
                                  std::span<const double> flux, double lambda) {
  return pod_inner_iteration(reduce_system(sys, basis), basis, flux, lambda);
}

/// Normalised flat flux projected into span(R).
inline Vector pod_initial_flux(const DiscreteSystem& sys, const PodBasis& basis) {
  return reconstruct(basis, project(basis, flat_initial_flux(sys)));
}

inline CriticalitySolution solve_pod_rom(const DiscreteSystem& sys, const PodBasis& basis,
                                         Vector flux_guess, double lambda_guess,
                                         const OuterOptions& opts = {}) {
  const ReducedSystem red = reduce_system(sys, basis);
  auto inner = [&](const Vector& flux, double lambda) {
    return InnerResult{pod_inner_iteration(red, basis, flux, lambda), 1, true};
  };
  return power_iterate(sys, std::move(flux_guess), lambda_guess, inner, opts);
}

inline CriticalitySolution solve_pod_rom(const DiscreteSystem& sys, const PodBasis& basis,
                                         const OuterOptions& opts = {}) {
  return solve_pod_rom(sys, basis, pod_initial_flux(sys, basis), 1.0, opts);
}

/// `<stem>.bin` holds R; `<stem>.json` holds P, capture fraction and the spectrum.
inline void save_pod_basis(const std::string& stem, const PodBasis& basis) {
  save_matrix(stem + ".bin", basis.r);
  nlohmann::json meta{{"n", basis.n()},
                      {"p", basis.p()},
                      {"capture_fraction", basis.capture_fraction},
                      {"singular_values", basis.singular_values},
                      {"spectrum", basis.spectrum}};
  std::ofstream out(stem + ".json");
  if (!out) throw ConfigError("cannot write " + stem + ".json");
  out << meta.dump(2) << '\n';
}

inline PodBasis load_pod_basis(const std::string& stem) {
  PodBasis basis;
  basis.r = load_matrix(stem + ".bin");
  std::ifstream in(stem + ".json");
  if (!in) throw ConfigError("cannot read " + stem + ".json");
  const nlohmann::json meta = nlohmann::json::parse(in);
  if (meta.at("p").get<std::size_t>() != basis.p() || meta.at("n").get<std::size_t>() != basis.n()) {
    throw ConfigError("basis sidecar " + stem + ".json disagrees with matrix shape");
  }
  basis.capture_fraction = meta.at("capture_fraction").get<double>();
  basis.singular_values = meta.at("singular_values").get<Vector>();
  basis.spectrum = meta.value("spectrum", Vector{});
  return basis;
}

}  // namespace critrom
