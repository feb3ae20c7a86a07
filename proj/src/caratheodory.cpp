#include "mfsde/caratheodory.hpp"

#include "mfsde/common.hpp"
#include "mfsde/oracles.hpp"

#include <cmath>
#include <utility>

namespace mfsde {

CaratheodoryResult caratheodory_solve(
    const std::function<double(double, double)>& b_mean, double x0,
    const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
    std::size_t ode_substeps, int workers) {
    require(static_cast<bool>(b_mean), "caratheodory_solve: empty drift");
    require(ode_substeps >= 1, "caratheodory_solve: ode_substeps must be >= 1");

    CoefficientPair pair;
    pair.id = "mean_feedback";
    pair.b = [b_mean](double t, double, double z) { return b_mean(t, z); };
    pair.phi = [](double, double, double z) { return z; };
    pair.growth_constant = 1.0;  // unused by the simulator
    pair.flags.phi_y_independent = true;
    pair.flags.lipschitz_z_phi = true;
    pair.flags.lipschitz_y_phi = true;

    PathEnsemble ens = simulate(pair, grid, particles, x0, seed, workers);

    CaratheodoryResult out;
    out.times = grid.times;
    out.mc_mean.resize(grid.steps + 1);
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        auto level = ens.level(k);
        out.mc_mean[k] = pairwise_mean(level.data(), level.size());
    }

    // RK4 on the substep-refined grid; every ode_substeps-th node lands
    // exactly on a grid node.
    std::vector<double> fine = rk4_solve(b_mean, x0, grid.t0, grid.horizon,
                                         grid.steps * ode_substeps);
    out.ode_mean.resize(grid.steps + 1);
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        out.ode_mean[k] = fine[k * ode_substeps];
    }

    out.max_gap = 0.0;
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        out.max_gap =
            std::max(out.max_gap, std::abs(out.mc_mean[k] - out.ode_mean[k]));
    }
    return out;
}

}  // namespace mfsde
