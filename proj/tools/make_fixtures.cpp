// Regenerates tests/fixtures/oracle_fixtures.json: high-resolution RK4
// solutions of the threshold-interaction shift ODE, frozen so tests and the
// acceptance suite compare simulations against fixed numbers instead of
// re-deriving them. Run from the repository root (or pass the fixtures
// directory as the first argument).
#include "mfsde/oracles.hpp"

#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "tests/fixtures";
    nlohmann::json j;

    {
        const auto oracle = mfsde::cdf_drift_oracle(0.0, 0.0, 1.0, 10000, 0.0);
        j["cdf_drift"] = {
            {"threshold", 0.0},
            {"x0", 0.0},
            {"horizon", 1.0},
            {"steps", 10000},
            {"width", 0.0},
            {"terminal_shift", oracle.shift.back()},
            {"richardson_gap", oracle.richardson_gap},
        };
    }
    {
        const auto oracle = mfsde::cdf_drift_oracle(0.0, 0.0, 1.0, 10000, 0.1);
        j["smoothed_cdf_drift"] = {
            {"threshold", 0.0},
            {"x0", 0.0},
            {"horizon", 1.0},
            {"steps", 10000},
            {"width", 0.1},
            {"terminal_shift", oracle.shift.back()},
            {"richardson_gap", oracle.richardson_gap},
        };
    }

    const std::string path = dir + "/oracle_fixtures.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "cannot open " << path << "\n";
        return 1;
    }
    out << j.dump(2) << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}
