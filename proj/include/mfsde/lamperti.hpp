#pragma once

#include "mfsde/coefficients.hpp"
#include "mfsde/engine.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace mfsde {

// State-dependent volatility sigma together with its derivatives. The second
// derivative is optional; when absent it is replaced by a central difference
// of dsigma where needed. The domain is the open interval on which sigma is
// defined and strictly positive.
struct DiffusionSpec {
    std::function<double(double)> sigma;
    std::function<double(double)> dsigma;
    std::function<double(double)> d2sigma;  // optional
    double domain_lo = -std::numeric_limits<double>::infinity();
    double domain_hi = std::numeric_limits<double>::infinity();
};

// Increasing bijection L with L'(x)·sigma(x) = 1 and L(anchor) = 0, built by
// quadrature, together with its inverse (bracketed Newton) and derivatives
//   derivative(x)        = 1/sigma(x)
//   second_derivative(x) = -dsigma(x)/sigma(x)^2.
// All callables are immutable after construction and safe to share across
// threads.
struct LampertiMap {
    std::function<double(double)> forward;
    std::function<double(double)> inverse;
    std::function<double(double)> derivative;
    std::function<double(double)> second_derivative;
    double anchor = 0.0;
};

// Builds the map by cumulative adaptive Gauss-Legendre quadrature of
// 1/sigma: a panel table covers a wide window around the anchor (evaluation
// inside a panel integrates only the remainder), with pure adaptive
// quadrature as the fallback outside the window. quad_tol bounds the
// accepted panel defect. Throws numerical_error if sigma is nonpositive on
// any quadrature node or an inversion bracket cannot be established.
LampertiMap build_map(const DiffusionSpec& spec, double anchor,
                      double quad_tol = 1e-12);

struct MapProbeReport {
    double max_derivative_defect = 0.0;  // max |FD(forward)·sigma - 1|
    double max_roundtrip_error = 0.0;    // max |inverse(forward(y)) - y|
    bool monotone = true;                // forward increasing on sorted probes
    double inverse_lipschitz = 0.0;      // empirical slope bound of inverse
};

// Random probes of the map invariants on a window inside the domain. The
// derivative defect differentiates the quadrature-backed forward map
// numerically, so it genuinely cross-checks table against derivative.
MapProbeReport probe_map(const LampertiMap& map, const DiffusionSpec& spec,
                         std::size_t n_probes = 1000,
                         std::uint64_t seed = 0x11a0u);

// Coefficient pair of the transformed (unit-noise) system Y = forward(X):
//   b*(t, y, v) = b(t, x, v)/sigma(x) - dsigma(x)/2,   x = inverse(y)
//   phi*(t, y, z) = phi(t, inverse(y), inverse(z))
// with Jacobians composed by the chain rule when the input pair is smooth.
// The law-integral argument v is passed through unchanged (the empirical
// integral of phi* over transformed states equals the original integral).
// The time argument is forwarded verbatim; the construction assumes the
// coefficients are time-homogeneous. Evaluations throw numerical_error when
// inverse(y) leaves the diffusion domain.
CoefficientPair transform_pair(const CoefficientPair& pair,
                               const LampertiMap& map,
                               const DiffusionSpec& spec);

// Direct Euler integrator for the original multiplicative-noise system
//   X_{k+1} = X_k + b(t_k, X_k, rho_k)·dt + sigma(X_k)·dW_k.
// Deliberately independent of the additive-noise engine: it exists as the
// oracle that round-trip checks compare against. Shares the engine's
// determinism contract (fixed-shape reductions, per-particle streams).
// Throws numerical_error on nonpositive sigma, domain exit, or non-finite
// states.
std::vector<double> multiplicative_terminal(const CoefficientPair& pair,
                                            const DiffusionSpec& spec,
                                            const TimeGrid& grid, double x0,
                                            const NoiseBlock& noise,
                                            int workers = 1);

struct RoundTripReport {
    double w1 = 0.0;            // W1 between the two terminal clouds
    double mean_abs_gap = 0.0;  // coupled per-particle gap (same noise)
    std::vector<double> direct_terminal;
    std::vector<double> mapped_terminal;  // inverse of transformed terminal
};

// Simulates the transformed system with unit noise from forward(x0), maps
// the terminal states back through inverse, and compares against the direct
// multiplicative-noise run driven by the same Brownian increments.
RoundTripReport roundtrip_check(const CoefficientPair& pair,
                                const DiffusionSpec& spec,
                                const LampertiMap& map, const TimeGrid& grid,
                                std::size_t particles, double x0,
                                std::uint64_t seed, int workers = 1);

}  // namespace mfsde
