#pragma once

#include "mfsde/engine.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mfsde {

struct CaratheodoryResult {
    std::vector<double> times;
    std::vector<double> mc_mean;   // particle-system mean curve
    std::vector<double> ode_mean;  // RK4 solution of u' = b_mean(t, u)
    double max_gap = 0.0;
};

// Bridge between the engine and the pure ODE oracle for drifts that depend
// on the law only through the running mean: simulates b(t, y, z) = b_mean(t,
// z) with phi = z and compares the Monte Carlo mean curve against RK4 on
// u' = b_mean(t, u), u(t0) = x0. Lives outside the oracle module so oracle
// curves stay engine-free.
CaratheodoryResult caratheodory_solve(
    const std::function<double(double, double)>& b_mean, double x0,
    const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
    std::size_t ode_substeps = 8, int workers = 1);

}  // namespace mfsde
