#include "mfsde/bel.hpp"

#include "mfsde/common.hpp"
#include "mfsde/mollify.hpp"

#include <cmath>
#include <set>

namespace mfsde {

namespace {

double read_param(const std::map<std::string, double>& params,
                  const std::string& key, double fallback,
                  std::set<std::string>& used) {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    used.insert(key);
    return it->second;
}

void finish_params(const std::map<std::string, double>& params,
                   const std::set<std::string>& used, const std::string& id) {
    for (const auto& [key, _] : params) {
        require(used.count(key) != 0,
                "make_payoff(" + id + "): unknown parameter '" + key + "'");
    }
}

}  // namespace

Payoff make_payoff(const std::string& id,
                   const std::map<std::string, double>& params) {
    std::set<std::string> used;
    Payoff p;
    p.id = id;
    if (id == "identity") {
        p.phi = [](double y) { return y; };
        p.dphi = [](double) { return 1.0; };
    } else if (id == "square") {
        p.phi = [](double y) { return y * y; };
        p.dphi = [](double y) { return 2.0 * y; };
        p.lipschitz = false;
    } else if (id == "constant") {
        const double v = read_param(params, "value", 1.0, used);
        p.phi = [v](double) { return v; };
        p.dphi = [](double) { return 0.0; };
    } else if (id == "call") {
        const double strike = read_param(params, "strike", 0.0, used);
        p.phi = [strike](double y) { return std::max(y - strike, 0.0); };
        // Kink at the strike; derivative defined almost everywhere.
        p.dphi = [strike](double y) { return y > strike ? 1.0 : 0.0; };
    } else if (id == "smoothed_call") {
        const double strike = read_param(params, "strike", 0.0, used);
        const double width = read_param(params, "width", 0.2, used);
        require(width > 0.0, "make_payoff(smoothed_call): width must be > 0");
        p.phi = [strike, width](double y) {
            const double u = (y - strike) / width;
            // softplus with a stable large-argument branch
            return u > 30.0 ? y - strike : width * std::log1p(std::exp(u));
        };
        p.dphi = [strike, width](double y) {
            return 1.0 / (1.0 + std::exp(-(y - strike) / width));
        };
    } else {
        throw std::invalid_argument("make_payoff: unknown payoff '" + id +
                                    "'");
    }
    finish_params(params, used, id);
    return p;
}

WeightSchedule build_schedule(const std::string& kind, const TimeGrid& grid) {
    WeightSchedule schedule;
    schedule.kind = kind;
    const std::size_t m = grid.steps;
    std::vector<double> raw(m);
    if (kind == "constant") {
        for (std::size_t k = 0; k < m; ++k) raw[k] = 1.0;
    } else if (kind == "linear_ramp") {
        // ∝ (t - t0); vanishing first weight is fine, mass is normalized below.
        for (std::size_t k = 0; k < m; ++k) {
            raw[k] = grid.times[k] - grid.t0;
        }
        require(m >= 2, "build_schedule: linear_ramp needs at least 2 steps");
    } else {
        throw std::invalid_argument("build_schedule: unknown kind '" + kind +
                                    "'");
    }
    std::vector<double> mass(m);
    for (std::size_t k = 0; k < m; ++k) mass[k] = raw[k] * grid.dt;
    const double total = pairwise_sum(mass);
    require(total > 0.0, "build_schedule: schedule has no mass");
    schedule.values.resize(m);
    schedule.cumulative.resize(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        schedule.values[k] = raw[k] / total;
        acc += schedule.values[k] * grid.dt;
        schedule.cumulative[k] = acc;
    }
    std::vector<double> check(m);
    for (std::size_t k = 0; k < m; ++k) {
        check[k] = schedule.values[k] * grid.dt;
    }
    schedule.integral_check = pairwise_sum(check);
    return schedule;
}

namespace {

DeltaEstimate summarize(const std::string& method,
                        std::span<const double> samples) {
    DeltaEstimate est;
    est.method = method;
    est.n_samples = samples.size();
    est.value = pairwise_mean(samples);
    const double var = population_variance(samples, est.value);
    est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
    return est;
}

}  // namespace

DeltaEstimate delta_bel(const PathEnsemble& ens, const TangentEnsemble& tang,
                        const CoefficientPair& pair, const Payoff& payoff,
                        const WeightSchedule& schedule,
                        CorrectionAnchor anchor, int workers) {
    require(pair.flags.smooth,
            "delta_bel: pair must declare flags.smooth (mollify first)");
    require(pair.db_dz && pair.dphi_dz,
            "delta_bel: smooth pair must provide z-Jacobians");
    const std::size_t n = ens.particles;
    const std::size_t steps = ens.grid.steps;
    require(tang.particles == n, "delta_bel: ensembles do not match");
    require(schedule.values.size() == steps,
            "delta_bel: schedule does not match the grid");
    require(std::abs(schedule.integral_check - 1.0) <= 1e-10,
            "delta_bel: weight schedule must have unit mass on the grid");

    const bool fast = pair.flags.phi_y_independent;
    const double dt = ens.grid.dt;

    std::vector<double> S(n, 0.0);
    // Anchor path for the correction term: the simulated state itself, or
    // the driving noise path started at x0.
    std::vector<double> anchor_path;
    if (anchor == CorrectionAnchor::brownian) {
        anchor_path.assign(n, ens.x0);
    }

    std::vector<double> buf(n);
    const long long nn = static_cast<long long>(n);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = ens.grid.times[k];
        const double* xk = ens.states.data() + k * n;
        const double* Jk = tang.J.data() + k * n;
        const double* dwk = ens.noise->dw.data() + k * n;
        const double ak = schedule.values[k];
        const double Ak = schedule.cumulative[k];

        double rho_common = 0.0;
        double dxr_common = 0.0;
        if (fast) {
            for (std::size_t j = 0; j < n; ++j) {
                buf[j] = pair.phi(t, 0.0, xk[j]);
            }
            rho_common = pairwise_mean(buf);
            for (std::size_t j = 0; j < n; ++j) {
                buf[j] = pair.dphi_dz(t, 0.0, xk[j]) * Jk[j];
            }
            dxr_common = pairwise_mean(buf);
        }

#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            std::vector<double> scratch(fast ? 0 : n);
#pragma omp for schedule(static)
            for (long long i = 0; i < nn; ++i) {
                const double y = anchor_path.empty()
                                     ? xk[i]
                                     : anchor_path[i];
                double rho, dxr;
                if (fast) {
                    rho = rho_common;
                    dxr = dxr_common;
                } else {
                    for (std::size_t j = 0; j < n; ++j) {
                        scratch[j] = pair.phi(t, y, xk[j]);
                    }
                    rho = pairwise_mean(scratch);
                    for (std::size_t j = 0; j < n; ++j) {
                        scratch[j] = pair.dphi_dz(t, y, xk[j]) * Jk[j];
                    }
                    dxr = pairwise_mean(scratch);
                }
                const double correction =
                    pair.db_dz(t, y, rho) * dxr * Ak;
                S[i] += (ak * Jk[i] + correction) * dwk[i];
            }
        }
        if (!anchor_path.empty()) {
            for (std::size_t i = 0; i < n; ++i) anchor_path[i] += dwk[i];
        }
    }

    std::vector<double> samples(n);
    const double* xT = ens.states.data() + steps * n;
    for (std::size_t i = 0; i < n; ++i) {
        samples[i] = payoff.eval(xT[i]) * S[i];
    }
    DeltaEstimate est = summarize("bel", samples);
    return est;
}

DeltaEstimate delta_pathwise(const PathEnsemble& ens,
                             const TangentEnsemble& tang,
                             const Payoff& payoff) {
    require(payoff.has_dphi(), "delta_pathwise: payoff derivative required");
    require(tang.particles == ens.particles,
            "delta_pathwise: ensembles do not match");
    const std::size_t n = ens.particles;
    const std::size_t steps = ens.grid.steps;
    const double* xT = ens.states.data() + steps * n;
    const double* JT = tang.J.data() + steps * n;
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        samples[i] = payoff.eval_dphi(xT[i]) * JT[i];
    }
    return summarize("pathwise", samples);
}

DeltaEstimate delta_fd(const CoefficientPair& pair, const TimeGrid& grid,
                       std::size_t particles, double x0, double h,
                       std::uint64_t seed, const Payoff& payoff, int workers) {
    require(h > 0.0, "delta_fd: bump size must be positive");
    auto noise = generate_noise(seed, particles, grid, workers);
    const std::vector<double> up =
        simulate_terminal(pair, grid, x0 + h, *noise, workers);
    const std::vector<double> dn =
        simulate_terminal(pair, grid, x0 - h, *noise, workers);
    std::vector<double> samples(particles);
    for (std::size_t i = 0; i < particles; ++i) {
        samples[i] = (payoff.eval(up[i]) - payoff.eval(dn[i])) / (2.0 * h);
    }
    return summarize("fd", samples);
}

PayoffCheck validate_payoff(const Payoff& payoff, double horizon,
                            double epsilon, std::size_t quad_points) {
    require(horizon > 0.0, "validate_payoff: horizon must be positive");
    require(epsilon > 0.0, "validate_payoff: epsilon must be positive");
    require(quad_points >= 8, "validate_payoff: quad_points must be >= 8");

    const double p = (1.0 + epsilon) / epsilon;
    const double two_p = 2.0 * p;
    const double scale = 2.0 * std::sqrt(horizon);  // y = scale·x
    const auto integral_at = [&](std::size_t order) {
        const auto& rule = gauss_hermite(order);
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double y = scale * rule.nodes[i];
            acc += rule.weights[i] *
                   std::pow(std::abs(payoff.eval(y)), two_p);
        }
        return scale * acc;
    };

    PayoffCheck check;
    check.exponent = two_p;
    const double v1 = integral_at(quad_points);
    const double v2 = integral_at(2 * quad_points);
    check.value = v2;
    check.growth_ratio = v1 > 0.0 ? v2 / v1 : 1.0;
    check.finite = std::isfinite(v1) && std::isfinite(v2) &&
                   check.growth_ratio < 2.0;
    return check;
}

}  // namespace mfsde
