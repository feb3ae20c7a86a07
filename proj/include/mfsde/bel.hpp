#pragma once

#include "mfsde/engine.hpp"
#include "mfsde/tangent.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>

namespace mfsde {

// Terminal payoff Φ with an optional derivative. The derivative is only ever
// touched through eval_dphi, which counts calls — the integration-by-parts
// estimator must never trigger it, and tests assert that.
struct Payoff {
    std::string id;
    std::function<double(double)> phi;
    std::function<double(double)> dphi;  // may be empty
    bool lipschitz = true;
    std::shared_ptr<std::atomic<std::uint64_t>> dphi_calls =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    double eval(double y) const { return phi(y); }
    bool has_dphi() const { return static_cast<bool>(dphi); }
    double eval_dphi(double y) const {
        ++*dphi_calls;
        return dphi(y);
    }
};

// Builtin payoffs:
//   identity          Φ(y) = y
//   square            Φ(y) = y^2                      (not Lipschitz)
//   constant          Φ(y) = value                    {value}
//   call              Φ(y) = max(y - strike, 0)       {strike}
//   smoothed_call     Φ(y) = width·log(1+e^{(y-strike)/width})
//                                                     {strike, width}
Payoff make_payoff(const std::string& id,
                   const std::map<std::string, double>& params = {});

// Weights a(t_k) on the grid with left-point unit mass: Σ_k a(t_k)·dt = 1.
// Raw shapes ("constant", "linear_ramp" ∝ t - t0) are normalized on the grid
// at construction so integral_check holds to roundoff at every M.
struct WeightSchedule {
    std::string kind;
    std::vector<double> values;      // a(t_k), k = 0..steps-1
    std::vector<double> cumulative;  // A_k = Σ_{l<=k} a(t_l)·dt
    double integral_check = 0.0;     // Σ_k a(t_k)·dt
};

WeightSchedule build_schedule(const std::string& kind, const TimeGrid& grid);

enum class CorrectionAnchor {
    solution,  // law-derivative evaluated along the simulated state
    brownian,  // evaluated along x0 + B_t from the same increments
};

struct DeltaEstimate {
    std::string method;
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

// Integration-by-parts (Bismut–Elworthy–Li type) sensitivity of
// E[Φ(X_T)] in x0: estimate = mean_i Φ(X^i_T)·S^i with per-particle weight
//   S^i = Σ_k [ a(t_k)·J^i_k
//               + ∂_z b(t_k, Y^i_k, rho^i_k)·dx_rho(k, y = Y^i_k)·A_k ]·dW^i_k,
// A_k = Σ_{l<=k} a(t_l)·dt and Y the anchor path. Never evaluates dΦ.
DeltaEstimate delta_bel(const PathEnsemble& ens, const TangentEnsemble& tang,
                        const CoefficientPair& pair, const Payoff& payoff,
                        const WeightSchedule& schedule,
                        CorrectionAnchor anchor = CorrectionAnchor::solution,
                        int workers = 1);

// Pathwise differentiation: mean_i Φ'(X^i_T)·J^i_T. Requires payoff.dphi.
DeltaEstimate delta_pathwise(const PathEnsemble& ens,
                             const TangentEnsemble& tang,
                             const Payoff& payoff);

// Central finite difference with common random numbers: the two bumped
// ensembles share one noise block generated from `seed`.
DeltaEstimate delta_fd(const CoefficientPair& pair, const TimeGrid& grid,
                       std::size_t particles, double x0, double h,
                       std::uint64_t seed, const Payoff& payoff,
                       int workers = 1);

struct PayoffCheck {
    bool finite = false;
    double value = 0.0;         // ∫ |Φ(y)|^{2p} ω_T(y) dy estimate
    double growth_ratio = 0.0;  // doubling-order ratio used for the verdict
    double exponent = 0.0;      // 2p
};

// Admissibility gate for the weighted-norm condition: checks
// ∫ |Φ(y)|^{2p} exp(-y²/(4T)) dy < ∞ with p = (1+epsilon)/epsilon by
// Gauss–Hermite quadrature at `quad_points` and 2·`quad_points`; a value
// that keeps growing under refinement is reported divergent.
PayoffCheck validate_payoff(const Payoff& payoff, double horizon,
                            double epsilon = 0.5,
                            std::size_t quad_points = 128);

}  // namespace mfsde
