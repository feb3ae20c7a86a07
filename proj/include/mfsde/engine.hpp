#pragma once

#include "mfsde/coefficients.hpp"
#include "mfsde/measure.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace mfsde {

// Uniform grid t_k = t0 + k·dt, k = 0..steps, with dt = (horizon - t0)/steps.
struct TimeGrid {
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps, double t0 = 0.0);

    double t0 = 0.0;
    double horizon = 1.0;
    std::size_t steps = 1;
    double dt = 1.0;
    std::vector<double> times;  // size steps + 1
};

enum class SchemeTag { interacting, frozen_law };

// Brownian increments, generated once from per-particle streams and shared
// by everything that must be driven by common random numbers (Picard
// iterations, finite differences, transform round trips). Time-major:
// dw[k*particles + i].
struct NoiseBlock {
    std::uint64_t seed = 0;
    std::size_t particles = 0;
    std::size_t steps = 0;
    double dt = 0.0;
    std::vector<double> dw;

    double at(std::size_t k, std::size_t i) const {
        return dw[k * particles + i];
    }
    std::span<const double> level(std::size_t k) const {
        return {dw.data() + k * particles, particles};
    }
};

std::shared_ptr<const NoiseBlock> generate_noise(std::uint64_t seed,
                                                 std::size_t particles,
                                                 const TimeGrid& grid,
                                                 int workers = 1);

// All particle paths on the grid, time-major: states[k*particles + i].
struct PathEnsemble {
    TimeGrid grid;
    std::size_t particles = 0;
    double x0 = 0.0;
    std::uint64_t seed = 0;
    SchemeTag scheme = SchemeTag::interacting;
    std::shared_ptr<const NoiseBlock> noise;
    std::vector<double> states;

    double state(std::size_t k, std::size_t i) const {
        return states[k * particles + i];
    }
    double dw(std::size_t k, std::size_t i) const { return noise->at(k, i); }
    std::span<const double> level(std::size_t k) const {
        return {states.data() + k * particles, particles};
    }
    EmpiricalMeasure snapshot(std::size_t k) const;
};

// Explicit Euler for the interacting particle system
//   X^i_{k+1} = X^i_k + b(t_k, X^i_k, rho^i_k)·dt + dW^i_k,
//   rho^i_k = (1/N) Σ_j phi(t_k, X^i_k, X^j_k).
// When pair.flags.phi_y_independent the law integral is computed once per
// step (O(N)); otherwise the exact O(N^2) double loop runs. Cross-particle
// reductions use the fixed-shape pairwise tree, so results are bit-identical
// for every worker count. Throws numerical_error on non-finite states.
PathEnsemble simulate(const CoefficientPair& pair, const TimeGrid& grid,
                      std::size_t particles, double x0, std::uint64_t seed,
                      int workers = 1);

// Forward evolution of the interacting system that keeps only the current
// level (O(N) memory). The transition arithmetic matches simulate() exactly,
// so runs sharing a noise block couple deterministically; used for bumped
// finite-difference runs and large-N bias studies.
std::vector<double> simulate_terminal(const CoefficientPair& pair,
                                      const TimeGrid& grid, double x0,
                                      const NoiseBlock& noise,
                                      int workers = 1);

// Law flow: one empirical snapshot per grid node.
using LawFlow = std::vector<EmpiricalMeasure>;

LawFlow law_flow(const PathEnsemble& ens);

// Euler step against a frozen law flow: the drift integrates phi against the
// supplied snapshots instead of the live particle cloud.
PathEnsemble simulate_frozen(const CoefficientPair& pair, const TimeGrid& grid,
                             const LawFlow& flow, std::size_t particles,
                             double x0,
                             std::shared_ptr<const NoiseBlock> noise,
                             int workers = 1);

struct PicardResult {
    PathEnsemble ensemble;  // last iterate, scheme = frozen_law
    LawFlow flow;
    std::size_t iterations = 0;
    std::vector<double> history;  // sup-W1 between consecutive law flows
    bool converged = false;
};

// Fixed-point iteration on law flows: start from the zero-drift flow, then
// repeatedly simulate against the frozen previous flow with the same
// Brownian increments; stop once sup_k W1 between consecutive flows is at
// most `tolerance`.
PicardResult picard_iterate(const CoefficientPair& pair, const TimeGrid& grid,
                            std::size_t particles, double x0,
                            std::uint64_t seed, std::size_t max_iterations,
                            double tolerance, int workers = 1);

struct HoelderRow {
    std::size_t pair_id = 0;
    double t = 0.0;
    double s = 0.0;
    double x = 0.0;
    double y = 0.0;
    double lhs = 0.0;    // estimate of E|X_t^x - X_s^y|^2
    double denom = 0.0;  // |t - s| + |x - y|^2
    double ratio = 0.0;
};

struct HoelderReport {
    std::vector<HoelderRow> rows;
    double c_hat = 0.0;  // max ratio over probed pairs
};

// Synchronous-coupling probe of E|X_t^x - X_s^y|^2 <= C(|t-s| + |x-y|^2).
// All initial points share one noise block; the estimator uses the Brownian
// increment over (s, t] as a control variate with exact mean, so zero-drift
// moments come out exact to roundoff. Diagnostic only.
HoelderReport hoelder_probe(const CoefficientPair& pair, const TimeGrid& grid,
                            std::size_t particles,
                            const std::vector<double>& initial_points,
                            std::uint64_t seed, std::size_t time_probes = 8,
                            int workers = 1);

}  // namespace mfsde
