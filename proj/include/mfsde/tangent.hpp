#pragma once

#include "mfsde/engine.hpp"

#include <span>
#include <vector>

namespace mfsde {

// First-variation process J^i_k = ∂X^i_k/∂x0 along a simulated ensemble,
// time-major like the states.
struct TangentEnsemble {
    TimeGrid grid;
    std::size_t particles = 0;
    std::vector<double> J;  // (steps+1) × particles

    double at(std::size_t k, std::size_t i) const {
        return J[k * particles + i];
    }
    std::span<const double> level(std::size_t k) const {
        return {J.data() + k * particles, particles};
    }
};

// Euler recursion for the particle-system tangent, J^i_0 = 1:
//   J^i_{k+1} = J^i_k + dt·[ ∂_y b·J^i_k
//                 + ∂_z b·( (1/N)Σ_j ∂_y phi(t_k,X^i,X^j)·J^i_k
//                          + (1/N)Σ_j ∂_z phi(t_k,X^i,X^j)·J^j_k ) ],
// all coefficients evaluated along the stored paths. Requires
// pair.flags.smooth.
TangentEnsemble propagate_tangent(const PathEnsemble& ens,
                                  const CoefficientPair& pair,
                                  int workers = 1);

// Law-derivative term with the state argument frozen at y:
//   (1/N) Σ_j ∂_z phi(t_k, y, X^j_k) · J^j_k.
double dx_rho(const PathEnsemble& ens, const TangentEnsemble& tang,
              const CoefficientPair& pair, std::size_t step, double y);

// Flow factor D_s X_t = exp ∫_s^t (∂_y b + ∂_z b·(1/N)Σ_j ∂_y phi) du along
// each particle, stored as per-particle prefix sums of left-point Riemann
// log-increments: any (s, t) slice costs O(1), the diagonal is exactly 0,
// and the cocycle identity is additive in the logs.
struct MalliavinFactor {
    TimeGrid grid;
    std::size_t particles = 0;
    std::vector<double> log_prefix;  // (steps+1) × particles

    // D_{t_s} X_{t_t} for one particle; requires s_idx <= t_idx.
    double factor(std::size_t s_idx, std::size_t t_idx, std::size_t i) const;
    double log_factor(std::size_t s_idx, std::size_t t_idx,
                      std::size_t i) const;
};

MalliavinFactor malliavin_factor(const PathEnsemble& ens,
                                 const CoefficientPair& pair,
                                 int workers = 1);

struct DerivativeRelationReport {
    std::size_t s_index = 0;
    double max_residual = 0.0;
    double mean_residual = 0.0;
};

// Checks J_T = D_s X_T · J_s + Σ_{k=s}^{M-1} D_{t_k} X_T · ∂_z b · dx_rho(k,
// y = X^i_k) · dt against the propagated tangent, with the same left-point
// quadrature as the propagation. The residual is the Euler-consistency gap,
// O(dt).
DerivativeRelationReport check_derivative_relation(const PathEnsemble& ens,
                                                   const TangentEnsemble& tang,
                                                   const MalliavinFactor& mf,
                                                   const CoefficientPair& pair,
                                                   std::size_t s_index,
                                                   int workers = 1);

}  // namespace mfsde
