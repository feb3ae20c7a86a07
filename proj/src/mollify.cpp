#include "mfsde/mollify.hpp"

#include "mfsde/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <mutex>

namespace mfsde {

namespace {

GaussHermiteRule compute_rule(std::size_t n) {
    // Golub–Welsch on the Jacobi matrix of the (physicists') Hermite
    // polynomials: zero diagonal, off-diagonal sqrt(k/2).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const double off = std::sqrt(0.5 * static_cast<double>(k));
        jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = off;
        jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double sqrt_pi = std::sqrt(M_PI);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
        const double v0 = solver.eigenvectors()(0, static_cast<Eigen::Index>(i));
        rule.weights[i] = sqrt_pi * v0 * v0;
    }
    return rule;
}

std::mutex rule_mutex;
std::map<std::size_t, GaussHermiteRule> rule_cache;

}  // namespace

const GaussHermiteRule& gauss_hermite(std::size_t order) {
    require(order >= 2 && order <= 4096,
            "gauss_hermite: order must lie in [2, 4096]");
    std::lock_guard<std::mutex> lock(rule_mutex);
    auto it = rule_cache.find(order);
    if (it == rule_cache.end()) {
        it = rule_cache.emplace(order, compute_rule(order)).first;
    }
    return it->second;
}

namespace {

constexpr double kInvSqrtPi = 0.5641895835477562869;

// E[g(xi)] for xi ~ N(0,1) at one GH order, optionally with the score factor
// xi (differentiated kernel).
template <typename G>
double gh_expect_1d(const GaussHermiteRule& rule, bool score, G&& g) {
    const double sqrt2 = std::sqrt(2.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double xi = sqrt2 * rule.nodes[i];
        const double factor = score ? xi : 1.0;
        acc += rule.weights[i] * factor * g(xi);
    }
    return kInvSqrtPi * acc;
}

// Two-level Richardson extrapolation in 1/order across {q, 2q, 4q}: the
// coefficients (1, -6, 8)/3 sum to one, so constants pass through exactly.
template <typename Eval>
double extrapolate(Eval&& eval_at_order) {
    const double v1 = eval_at_order(0);
    const double v2 = eval_at_order(1);
    const double v4 = eval_at_order(2);
    return (8.0 * v4 - 6.0 * v2 + v1) / 3.0;
}

struct Kernel {
    const GaussHermiteRule* rules[3];
    double h;

    // E[ s(xi,eta) * f(t, y + h xi, z + h eta) ] with s one of
    // {1, xi/h, eta/h}; mode 0/1/2.
    double tensor(const CoefficientFn& f, double t, double y, double z,
                  int mode) const {
        return extrapolate([&](int level) {
            const auto& rule = *rules[level];
            const double sqrt2 = std::sqrt(2.0);
            double acc = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double xi = sqrt2 * rule.nodes[i];
                const double yi = y + h * xi;
                double inner = 0.0;
                for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
                    const double eta = sqrt2 * rule.nodes[j];
                    const double factor = mode == 2 ? eta / h : 1.0;
                    inner += rule.weights[j] * factor * f(t, yi, z + h * eta);
                }
                const double outer = mode == 1 ? xi / h : 1.0;
                acc += rule.weights[i] * outer * inner;
            }
            return kInvSqrtPi * kInvSqrtPi * acc;
        });
    }

    // Smoothing in z only (used when phi ignores its y argument).
    double line_z(const CoefficientFn& f, double t, double y, double z,
                  bool score) const {
        return extrapolate([&](int level) {
            return gh_expect_1d(*rules[level], score, [&](double eta) {
                const double value = f(t, y, z + h * eta);
                return score ? value / h : value;
            });
        });
    }
};

}  // namespace

CoefficientPair mollify(const CoefficientPair& pair, const MollifyConfig& cfg) {
    require(static_cast<bool>(pair.b) && static_cast<bool>(pair.phi),
            "mollify: pair must define b and phi");
    require(pair.dim == 1, "mollify: requires dim == 1");
    require(cfg.bandwidth > 0.0, "mollify: bandwidth must be positive");
    require(cfg.quadrature_order >= 2 && cfg.quadrature_order <= 1024,
            "mollify: quadrature_order must lie in [2, 1024]");

    Kernel kernel{{&gauss_hermite(cfg.quadrature_order),
                   &gauss_hermite(2 * cfg.quadrature_order),
                   &gauss_hermite(4 * cfg.quadrature_order)},
                  cfg.bandwidth};

    CoefficientPair out;
    out.id = pair.id + "|mollified(h=" + format_double(cfg.bandwidth) + ")";
    out.dim = pair.dim;
    // Convolution with a probability kernel preserves Lipschitz bounds and
    // turns everything differentiable.
    out.flags = pair.flags;
    out.flags.smooth = true;
    out.flags.lipschitz_z_b = pair.flags.lipschitz_z_b;
    out.growth_constant =
        pair.growth_constant * (1.0 + 2.0 * cfg.bandwidth);

    const CoefficientFn b = pair.b;
    const CoefficientFn phi = pair.phi;

    out.b = [kernel, b](double t, double y, double z) {
        return kernel.tensor(b, t, y, z, 0);
    };
    out.db_dy = [kernel, b](double t, double y, double z) {
        return kernel.tensor(b, t, y, z, 1);
    };
    out.db_dz = [kernel, b](double t, double y, double z) {
        return kernel.tensor(b, t, y, z, 2);
    };

    if (pair.flags.phi_y_independent) {
        out.phi = [kernel, phi](double t, double y, double z) {
            return kernel.line_z(phi, t, y, z, false);
        };
        out.dphi_dy = [](double, double, double) { return 0.0; };
        out.dphi_dz = [kernel, phi](double t, double y, double z) {
            return kernel.line_z(phi, t, y, z, true);
        };
    } else {
        out.phi = [kernel, phi](double t, double y, double z) {
            return kernel.tensor(phi, t, y, z, 0);
        };
        out.dphi_dy = [kernel, phi](double t, double y, double z) {
            return kernel.tensor(phi, t, y, z, 1);
        };
        out.dphi_dz = [kernel, phi](double t, double y, double z) {
            return kernel.tensor(phi, t, y, z, 2);
        };
    }
    return out;
}

}  // namespace mfsde
