#pragma once

// Projection ROM on a nonlinear manifold: the decoder is linearised by
// forward differences around the current latent state and the resulting
// map C is used in a regularised Galerkin correction inside the power method.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>

#include "json.hpp"

#include "critrom/autoencoder.hpp"
#include "critrom/errors.hpp"
#include "critrom/hfm.hpp"
#include "critrom/numerics.hpp"
#include "critrom/pod_rom.hpp"

namespace critrom {

enum class MapKind { pod, ae, svd_ae };

inline const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::pod: return "pod";
    case MapKind::ae: return "ae";
    case MapKind::svd_ae: return "svd_ae";
  }
  return "?";
}

/// A reduction flux <-> latent. Both directions work in physical flux units;
/// any scaling is applied inside. `decode_rows` decodes one latent vector per
/// row and must agree bit-for-bit with `decode` applied row by row.
struct ReductionMap {
  MapKind kind = MapKind::pod;
  std::size_t n = 0;  // flux length
  std::size_t p = 0;  // latent length
  std::function<Vector(std::span<const double>)> encode;
  std::function<Vector(std::span<const double>)> decode;
  std::function<DenseMatrix(const DenseMatrix&)> decode_rows;
  std::shared_ptr<const PodBasis> basis;  // pod and svd_ae only
  // svd_ae only: the autoencoder decoder alone, latent rows -> basis coefficient rows
  std::function<DenseMatrix(const DenseMatrix&)> decode_coefficient_rows;

  Vector reconstruct(std::span<const double> flux) const {
    const Vector latent = encode(flux);
    return decode(latent);
  }
};

inline ReductionMap make_pod_map(PodBasis basis) {
  auto b = std::make_shared<const PodBasis>(std::move(basis));
  ReductionMap map;
  map.kind = MapKind::pod;
  map.n = b->n();
  map.p = b->p();
  map.basis = b;
  map.encode = [b](std::span<const double> flux) { return project(*b, flux); };
  map.decode = [b](std::span<const double> alpha) { return reconstruct(*b, alpha); };
  map.decode_rows = [b](const DenseMatrix& alphas) {
    DenseMatrix out(alphas.rows(), b->n());
    for (std::size_t s = 0; s < alphas.rows(); ++s) {
      const Vector phi = reconstruct(*b, alphas.row(s));
      std::copy(phi.begin(), phi.end(), out.row(s).begin());
    }
    return out;
  };
  return map;
}

inline ReductionMap make_ae_map(TrainedAutoencoder ae) {
  auto a = std::make_shared<const TrainedAutoencoder>(std::move(ae));
  ReductionMap map;
  map.kind = MapKind::ae;
  map.n = a->net.spec.input_size();
  map.p = a->net.spec.latent_size();
  map.encode = [a](std::span<const double> flux) { return a->encode(flux); };
  map.decode = [a](std::span<const double> latent) { return a->decode(latent); };
  map.decode_rows = [a](const DenseMatrix& latents) {
    DenseMatrix out = critrom::decode(a->net, latents);
    for (double& v : out.data()) v = a->scaler.unscale(v);
    return out;
  };
  return map;
}

/// encode = AE_enc(scale(R^T phi)), decode = R unscale(AE_dec(alpha)).
inline ReductionMap compose_svd_ae(PodBasis basis, TrainedAutoencoder ae) {
  if (ae.net.spec.input_size() != basis.p()) {
    throw DimensionError("compose_svd_ae: autoencoder input " + std::to_string(ae.net.spec.input_size()) +
                         " != basis size " + std::to_string(basis.p()));
  }
  auto b = std::make_shared<const PodBasis>(std::move(basis));
  auto a = std::make_shared<const TrainedAutoencoder>(std::move(ae));
  auto rt = std::make_shared<const DenseMatrix>(b->r.transpose());
  ReductionMap map;
  map.kind = MapKind::svd_ae;
  map.n = b->n();
  map.p = a->net.spec.latent_size();
  map.basis = b;
  map.encode = [a, b](std::span<const double> flux) { return a->encode(project(*b, flux)); };
  map.decode = [a, b](std::span<const double> latent) { return reconstruct(*b, a->decode(latent)); };
  map.decode_coefficient_rows = [a](const DenseMatrix& latents) {
    DenseMatrix coeffs = critrom::decode(a->net, latents);
    for (double& v : coeffs.data()) v = a->scaler.unscale(v);
    return coeffs;
  };
  map.decode_rows = [coeff_rows = map.decode_coefficient_rows, rt](const DenseMatrix& latents) {
    return matmul(coeff_rows(latents), *rt);
  };
  return map;
}

// ---------------------------------------------------------------------------
// Linearisation

inline constexpr double kJacobianStep = 1e-6;

struct LinearizedMap {
  DenseMatrix c;        // N x P
  Vector anchor_latent;
  Vector anchor_flux;   // decode(anchor_latent)
  double epsilon = kJacobianStep;
};

/// Forward-difference Jacobian of the decoder: P + 1 decoder evaluations,
/// done as one batch. The step actually taken, (a_k + eps) - a_k, is used as
/// the divisor so rounding of the perturbed latent does not leak into C.
/// For the hybrid map the differences are taken on the basis coefficients and
/// lifted by R afterwards, which is the same quantity without the rounding
/// noise that differencing two N-vectors would add outside span(R).
inline LinearizedMap linearize_decoder(const ReductionMap& map, std::span<const double> anchor,
                                       double epsilon = kJacobianStep) {
  if (!(epsilon > 0.0)) throw DomainError("linearize_decoder: epsilon must be positive");
  detail::require_dims(anchor.size() == map.p, "linearize_decoder: anchor has wrong length");
  const std::size_t p = map.p;
  DenseMatrix latents(p + 1, p);
  Vector steps(p);
  for (std::size_t r = 0; r <= p; ++r) std::copy(anchor.begin(), anchor.end(), latents.row(r).begin());
  for (std::size_t k = 0; k < p; ++k) {
    const double moved = anchor[k] + epsilon;
    latents(k + 1, k) = moved;
    steps[k] = moved - anchor[k];
  }
  const bool lifted = map.kind == MapKind::svd_ae && map.basis && map.decode_coefficient_rows;
  const DenseMatrix decoded = lifted ? map.decode_coefficient_rows(latents) : map.decode_rows(latents);
  const std::size_t width = lifted ? map.basis->p() : map.n;
  detail::require_dims(decoded.rows() == p + 1 && decoded.cols() == width,
                       "linearize_decoder: decoder returned the wrong shape");
  if (!detail::all_finite(decoded.data())) {
    throw NumericError("linearize_decoder: decoder produced non-finite values");
  }
  DenseMatrix diff(width, p);
  for (std::size_t k = 0; k < p; ++k) {
    const auto col = decoded.row(k + 1);
    const auto base = decoded.row(0);
    for (std::size_t i = 0; i < width; ++i) diff(i, k) = (col[i] - base[i]) / steps[k];
  }
  LinearizedMap lin;
  lin.epsilon = epsilon;
  lin.anchor_latent.assign(anchor.begin(), anchor.end());
  if (lifted) {
    lin.anchor_flux = reconstruct(*map.basis, decoded.row(0));
    lin.c = matmul(map.basis->r, diff);
  } else {
    lin.anchor_flux.assign(decoded.row(0).begin(), decoded.row(0).end());
    lin.c = std::move(diff);
  }
  return lin;
}

// ---------------------------------------------------------------------------
// Inner iterations

struct AeInnerOptions {
  int max_iterations = 100;
  double alpha_tol = 1e-8;          // on ||delta alpha||_inf
  double regularization = 1e-8;     // relative to max diag(C^T A C)
  double epsilon = kJacobianStep;
};

struct AeInnerResult {
  Vector flux;
  Vector latent;
  int iterations = 0;
  bool converged = false;
};

/// Fixed-source solve A phi = s, s = lambda B phi_outer, on the decoder's
/// tangent: repeatedly linearise at alpha, solve
/// (C^T A C + eps_reg I) d_alpha = C^T (s - A phi), update alpha and phi.
/// The first iterate is decode(encode(phi_outer)) so that phi and alpha are a
/// consistent expansion point; starting from phi_outer itself leaves its
/// off-tangent part uncorrected and it accumulates across outer iterations.
inline AeInnerResult ae_inner_iterations(const DiscreteSystem& sys, const ReductionMap& map,
                                         std::span<const double> flux, double lambda,
                                         const AeInnerOptions& opts = {}) {
  detail::require_dims(flux.size() == sys.n_dof && map.n == sys.n_dof,
                       "ae_inner_iterations: flux / map / system sizes disagree");
  const std::size_t n = sys.n_dof;
  const std::size_t p = map.p;
  Vector s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = lambda * sys.b[i] * flux[i];

  AeInnerResult out;
  out.latent = map.encode(flux);
  out.flux = map.decode(out.latent);
  Vector a_phi(n), residual(n);
  while (true) {
    const LinearizedMap lin = linearize_decoder(map, out.latent, opts.epsilon);
    DenseMatrix ctac = matmul_transposed(lin.c, sys.a.apply(lin.c));
    double max_diag = 0.0;
    for (std::size_t k = 0; k < p; ++k) max_diag = std::max(max_diag, std::abs(ctac(k, k)));
    const double reg = opts.regularization * max_diag;
    for (std::size_t k = 0; k < p; ++k) ctac(k, k) += reg;

    sys.a.apply(out.flux, a_phi);
    for (std::size_t i = 0; i < n; ++i) residual[i] = s[i] - a_phi[i];
    const Vector rhs = matvec_transposed(lin.c, residual);
    const Vector delta = gaussian_elimination(ctac, rhs);
    if (!detail::all_finite(delta)) throw NumericError("ae_inner_iterations: non-finite latent update");

    for (std::size_t k = 0; k < p; ++k) out.latent[k] += delta[k];
    const Vector dphi = matvec(lin.c, delta);
    for (std::size_t i = 0; i < n; ++i) out.flux[i] += dphi[i];
    ++out.iterations;
    if (norm_inf(delta) < opts.alpha_tol) {
      out.converged = true;
      break;
    }
    if (out.iterations > opts.max_iterations) break;
  }
  return out;
}

/// decode(encode(flat)): the flat guess pulled onto the map's range.
inline Vector ae_initial_flux(const DiscreteSystem& sys, const ReductionMap& map) {
  return map.reconstruct(flat_initial_flux(sys));
}

inline CriticalitySolution solve_ae_rom(const DiscreteSystem& sys, const ReductionMap& map,
                                        Vector flux_guess, double lambda_guess,
                                        const AeInnerOptions& inner_opts = {},
                                        const OuterOptions& outer_opts = {}) {
  auto inner = [&](const Vector& flux, double lambda) {
    AeInnerResult r = ae_inner_iterations(sys, map, flux, lambda, inner_opts);
    return InnerResult{std::move(r.flux), r.iterations, r.converged};
  };
  return power_iterate(sys, std::move(flux_guess), lambda_guess, inner, outer_opts);
}

inline CriticalitySolution solve_ae_rom(const DiscreteSystem& sys, const ReductionMap& map,
                                        const AeInnerOptions& inner_opts = {},
                                        const OuterOptions& outer_opts = {}) {
  return solve_ae_rom(sys, map, ae_initial_flux(sys, map), 1.0, inner_opts, outer_opts);
}

/// One JSON-lines diagnostics record for a ROM solve.
inline nlohmann::json rom_diagnostics(const std::string& sample_id, const std::string& method,
                                      const CriticalitySolution& sol) {
  return nlohmann::json{{"sample", sample_id},
                        {"method", method},
                        {"converged", sol.converged},
                        {"outer_iterations", sol.outer_iters},
                        {"inner_iterations", sol.inner_iterations},
                        {"inner_nonconverged", sol.inner_nonconverged},
                        {"k_eff", sol.k_eff},
                        {"k_history", sol.history}};
}

}  // namespace critrom
