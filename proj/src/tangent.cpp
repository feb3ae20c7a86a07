#include "mfsde/tangent.hpp"

#include "mfsde/common.hpp"

#include <cmath>
#include <string>

namespace mfsde {

namespace {

void check_smooth(const CoefficientPair& pair, const char* op) {
    require(pair.flags.smooth,
            std::string(op) + ": pair must declare flags.smooth");
    require(pair.db_dy && pair.db_dz && pair.dphi_dy && pair.dphi_dz,
            std::string(op) + ": smooth pair must provide all four Jacobians");
    require(pair.dim == 1, std::string(op) + ": requires dim == 1");
}

// Common per-step reductions for the sensitivity recursions. In the
// phi-y-independent fast path rho and the two interaction means are shared
// by all particles and cost O(N); otherwise they are recomputed per particle
// in a thread-local scratch buffer (O(N^2) per step).
struct StepReductions {
    const CoefficientPair& pair;
    const PathEnsemble& ens;
    bool fast;
    std::vector<double> buf;
    double rho_common = 0.0;
    double s2_common = 0.0;

    StepReductions(const CoefficientPair& p, const PathEnsemble& e)
        : pair(p), ens(e), fast(p.flags.phi_y_independent),
          buf(e.particles) {}

    void prepare(std::size_t k, const double* Jk) {
        if (!fast) return;
        const double t = ens.grid.times[k];
        const double* xk = ens.states.data() + k * ens.particles;
        for (std::size_t j = 0; j < ens.particles; ++j) {
            buf[j] = pair.phi(t, 0.0, xk[j]);
        }
        rho_common = pairwise_mean(buf);
        if (Jk != nullptr) {
            for (std::size_t j = 0; j < ens.particles; ++j) {
                buf[j] = pair.dphi_dz(t, 0.0, xk[j]) * Jk[j];
            }
            s2_common = pairwise_mean(buf);
        }
    }

    double rho(std::size_t k, double y, std::vector<double>& scratch) const {
        if (fast) return rho_common;
        const double t = ens.grid.times[k];
        const double* xk = ens.states.data() + k * ens.particles;
        for (std::size_t j = 0; j < ens.particles; ++j) {
            scratch[j] = pair.phi(t, y, xk[j]);
        }
        return pairwise_mean(scratch);
    }

    // (1/N) Σ_j ∂_y phi(t_k, y, X^j_k) — zero when phi ignores y.
    double s1(std::size_t k, double y, std::vector<double>& scratch) const {
        if (fast) return 0.0;
        const double t = ens.grid.times[k];
        const double* xk = ens.states.data() + k * ens.particles;
        for (std::size_t j = 0; j < ens.particles; ++j) {
            scratch[j] = pair.dphi_dy(t, y, xk[j]);
        }
        return pairwise_mean(scratch);
    }

    // (1/N) Σ_j ∂_z phi(t_k, y, X^j_k) · J^j_k.
    double s2(std::size_t k, double y, const double* Jk,
              std::vector<double>& scratch) const {
        if (fast) return s2_common;
        const double t = ens.grid.times[k];
        const double* xk = ens.states.data() + k * ens.particles;
        for (std::size_t j = 0; j < ens.particles; ++j) {
            scratch[j] = pair.dphi_dz(t, y, xk[j]) * Jk[j];
        }
        return pairwise_mean(scratch);
    }
};

}  // namespace

TangentEnsemble propagate_tangent(const PathEnsemble& ens,
                                  const CoefficientPair& pair, int workers) {
    check_smooth(pair, "propagate_tangent");
    const std::size_t n = ens.particles;
    const std::size_t steps = ens.grid.steps;

    TangentEnsemble tang;
    tang.grid = ens.grid;
    tang.particles = n;
    tang.J.assign((steps + 1) * n, 1.0);

    StepReductions red(pair, ens);
    const long long nn = static_cast<long long>(n);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = ens.grid.times[k];
        const double dt = ens.grid.dt;
        const double* xk = ens.states.data() + k * n;
        const double* Jk = tang.J.data() + k * n;
        double* Jk1 = tang.J.data() + (k + 1) * n;
        red.prepare(k, Jk);
#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            std::vector<double> scratch(red.fast ? 0 : n);
#pragma omp for schedule(static)
            for (long long i = 0; i < nn; ++i) {
                const double y = xk[i];
                const double rho = red.rho(k, y, scratch);
                const double s1 = red.s1(k, y, scratch);
                const double s2 = red.s2(k, y, Jk, scratch);
                const double ji = Jk[i];
                Jk1[i] = ji + dt * (pair.db_dy(t, y, rho) * ji +
                                    pair.db_dz(t, y, rho) * (s1 * ji + s2));
            }
        }
    }
    return tang;
}

double dx_rho(const PathEnsemble& ens, const TangentEnsemble& tang,
              const CoefficientPair& pair, std::size_t step, double y) {
    check_smooth(pair, "dx_rho");
    require(step <= ens.grid.steps, "dx_rho: step index out of range");
    require(tang.particles == ens.particles,
            "dx_rho: tangent/path ensembles do not match");
    const std::size_t n = ens.particles;
    const double t = ens.grid.times[step];
    const double* xk = ens.states.data() + step * n;
    const double* Jk = tang.J.data() + step * n;
    std::vector<double> vals(n);
    for (std::size_t j = 0; j < n; ++j) {
        vals[j] = pair.dphi_dz(t, y, xk[j]) * Jk[j];
    }
    return pairwise_mean(vals);
}

double MalliavinFactor::log_factor(std::size_t s_idx, std::size_t t_idx,
                                   std::size_t i) const {
    require(s_idx <= t_idx && t_idx <= grid.steps,
            "MalliavinFactor: require s <= t within the grid");
    return log_prefix[t_idx * particles + i] -
           log_prefix[s_idx * particles + i];
}

double MalliavinFactor::factor(std::size_t s_idx, std::size_t t_idx,
                               std::size_t i) const {
    return std::exp(log_factor(s_idx, t_idx, i));
}

MalliavinFactor malliavin_factor(const PathEnsemble& ens,
                                 const CoefficientPair& pair, int workers) {
    check_smooth(pair, "malliavin_factor");
    const std::size_t n = ens.particles;
    const std::size_t steps = ens.grid.steps;

    MalliavinFactor mf;
    mf.grid = ens.grid;
    mf.particles = n;
    mf.log_prefix.assign((steps + 1) * n, 0.0);

    StepReductions red(pair, ens);
    const long long nn = static_cast<long long>(n);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = ens.grid.times[k];
        const double dt = ens.grid.dt;
        const double* xk = ens.states.data() + k * n;
        const double* Pk = mf.log_prefix.data() + k * n;
        double* Pk1 = mf.log_prefix.data() + (k + 1) * n;
        red.prepare(k, nullptr);
#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            std::vector<double> scratch(red.fast ? 0 : n);
#pragma omp for schedule(static)
            for (long long i = 0; i < nn; ++i) {
                const double y = xk[i];
                const double rho = red.rho(k, y, scratch);
                const double s1 = red.s1(k, y, scratch);
                const double integrand = pair.db_dy(t, y, rho) +
                                         pair.db_dz(t, y, rho) * s1;
                Pk1[i] = Pk[i] + dt * integrand;
            }
        }
    }
    return mf;
}

DerivativeRelationReport check_derivative_relation(const PathEnsemble& ens,
                                                   const TangentEnsemble& tang,
                                                   const MalliavinFactor& mf,
                                                   const CoefficientPair& pair,
                                                   std::size_t s_index,
                                                   int workers) {
    check_smooth(pair, "check_derivative_relation");
    const std::size_t n = ens.particles;
    const std::size_t steps = ens.grid.steps;
    require(s_index <= steps,
            "check_derivative_relation: s_index out of range");
    require(tang.particles == n && mf.particles == n,
            "check_derivative_relation: ensembles do not match");

    const double* Js = tang.J.data() + s_index * n;
    const double* JT = tang.J.data() + steps * n;
    const double* Ps = mf.log_prefix.data() + s_index * n;
    const double* PT = mf.log_prefix.data() + steps * n;

    // Accumulate the correction integral with left-point quadrature.
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = std::exp(PT[i] - Ps[i]) * Js[i];
    }
    StepReductions red(pair, ens);
    const long long nn = static_cast<long long>(n);
    for (std::size_t k = s_index; k < steps; ++k) {
        const double t = ens.grid.times[k];
        const double dt = ens.grid.dt;
        const double* xk = ens.states.data() + k * n;
        const double* Jk = tang.J.data() + k * n;
        const double* Pk = mf.log_prefix.data() + k * n;
        red.prepare(k, Jk);
#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            std::vector<double> scratch(red.fast ? 0 : n);
#pragma omp for schedule(static)
            for (long long i = 0; i < nn; ++i) {
                const double y = xk[i];
                const double rho = red.rho(k, y, scratch);
                const double dxr = red.s2(k, y, Jk, scratch);
                rhs[i] += std::exp(PT[i] - Pk[i]) *
                          pair.db_dz(t, y, rho) * dxr * dt;
            }
        }
    }

    DerivativeRelationReport report;
    report.s_index = s_index;
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) {
        res[i] = std::abs(JT[i] - rhs[i]);
        report.max_residual = std::max(report.max_residual, res[i]);
    }
    report.mean_residual = pairwise_mean(res);
    return report;
}

}  // namespace mfsde
