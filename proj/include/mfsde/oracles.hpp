#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace mfsde {

// Classic fixed-step RK4 for y' = f(t, y); returns the solution at every
// node t0 + k·(horizon - t0)/steps, k = 0..steps. Engine-independent.
std::vector<double> rk4_solve(const std::function<double(double, double)>& f,
                              double y0, double t0, double horizon,
                              std::size_t steps);

// Closed forms for the linear mean-field model b = a·y + c·z, phi = z with
// unit additive noise started at x0:
//   mean(t)     = x0·e^{(a+c)t}
//   variance(t) = (e^{2at} - 1)/(2a)   (t when a = 0)
//   tangent(t)  = e^{(a+c)t}
struct OuOracle {
    double a = -1.0;
    double c = 0.5;
    double x0 = 1.0;

    double mean(double t) const;
    double variance(double t) const;
    double tangent(double t) const;
};

// Deterministic shift A(t) for the threshold-interaction model b = z,
// phi = 1{z <= u} (width = 0) or its logistic smoothing (width > 0): the
// solution is Gaussian X_t ~ N(x0 + A(t), t) with
//   A'(t) = E[ kernel((u - x0 - A(t) - sqrt(t)·Z)) ],  A(0) = 0,
// which collapses to Phi((u - x0 - A)/sqrt(t)) for the sharp indicator. The
// t -> 0+ limit of A' is 0, 1/2 or 1 by the sign of u - x0 (kernel value for
// width > 0). Solved with RK4; `richardson_gap` is |A_steps(T) - A_2steps(T)|.
struct CdfDriftOracle {
    double threshold = 0.0;
    double x0 = 0.0;
    double width = 0.0;
    double horizon = 1.0;
    std::size_t steps = 0;
    std::vector<double> shift;  // A at nodes k·horizon/steps
    double richardson_gap = 0.0;

    double terminal_mean() const { return x0 + shift.back(); }
    double terminal_stddev() const;
};

CdfDriftOracle cdf_drift_oracle(double threshold, double x0, double horizon,
                                std::size_t steps, double width = 0.0);

}  // namespace mfsde
