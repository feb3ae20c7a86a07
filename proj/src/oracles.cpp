#include "mfsde/oracles.hpp"

#include "mfsde/common.hpp"
#include "mfsde/mollify.hpp"

#include <cmath>

namespace mfsde {

std::vector<double> rk4_solve(const std::function<double(double, double)>& f,
                              double y0, double t0, double horizon,
                              std::size_t steps) {
    require(steps >= 1, "rk4_solve: steps must be >= 1");
    require(horizon > t0, "rk4_solve: require horizon > t0");
    const double h = (horizon - t0) / static_cast<double>(steps);
    std::vector<double> out(steps + 1);
    out[0] = y0;
    double y = y0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * h;
        const double k1 = f(t, y);
        const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        require(std::isfinite(y), "rk4_solve: solution became non-finite");
        out[k + 1] = y;
    }
    return out;
}

double OuOracle::mean(double t) const { return x0 * std::exp((a + c) * t); }

double OuOracle::variance(double t) const {
    if (a == 0.0) return t;
    return (std::exp(2.0 * a * t) - 1.0) / (2.0 * a);
}

double OuOracle::tangent(double t) const { return std::exp((a + c) * t); }

double CdfDriftOracle::terminal_stddev() const { return std::sqrt(horizon); }

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Right-hand side A'(t) for given shift A; handles the t -> 0+ limit.
double cdf_drift_rhs(double threshold, double x0, double width, double t,
                     double A) {
    const double gap = threshold - x0 - A;
    if (width == 0.0) {
        if (t <= 0.0) {
            if (gap > 0.0) return 1.0;
            if (gap < 0.0) return 0.0;
            return 0.5;
        }
        return normal_cdf(gap / std::sqrt(t));
    }
    if (t <= 0.0) return logistic(gap / width);
    // E[K((gap - sqrt(t) Z)/width)] by Gauss–Hermite; the integrand is
    // smooth, so a fixed moderate order is spectrally accurate.
    const auto& rule = gauss_hermite(64);
    const double sqrt2t = std::sqrt(2.0 * t);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        acc += rule.weights[i] *
               logistic((gap - sqrt2t * rule.nodes[i]) / width);
    }
    return acc / std::sqrt(M_PI);
}

}  // namespace

CdfDriftOracle cdf_drift_oracle(double threshold, double x0, double horizon,
                                std::size_t steps, double width) {
    require(steps >= 2, "cdf_drift_oracle: steps must be >= 2");
    require(horizon > 0.0, "cdf_drift_oracle: horizon must be positive");
    require(width >= 0.0, "cdf_drift_oracle: width must be >= 0");

    CdfDriftOracle oracle;
    oracle.threshold = threshold;
    oracle.x0 = x0;
    oracle.width = width;
    oracle.horizon = horizon;
    oracle.steps = steps;

    const auto rhs = [&](double t, double A) {
        return cdf_drift_rhs(threshold, x0, width, t, A);
    };
    oracle.shift = rk4_solve(rhs, 0.0, 0.0, horizon, steps);
    const auto fine = rk4_solve(rhs, 0.0, 0.0, horizon, 2 * steps);
    oracle.richardson_gap = std::abs(oracle.shift.back() - fine.back());
    return oracle;
}

}  // namespace mfsde
