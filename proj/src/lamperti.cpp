#include "mfsde/lamperti.hpp"

#include "mfsde/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfsde {
namespace {

// 15-point Gauss-Legendre rule on [-1, 1] (node, weight), positive half.
constexpr int kGlHalf = 8;
constexpr double kGlNode[kGlHalf] = {
    0.0,
    0.2011940939974345,
    0.3941513470775634,
    0.5709721726085388,
    0.7244177313601701,
    0.8482065834104272,
    0.9372733924007060,
    0.9879925180204854,
};
constexpr double kGlWeight[kGlHalf] = {
    0.2025782419255613, 0.1984314853271116, 0.1861610000155622,
    0.1662692058169939, 0.1395706779261543, 0.1071592204671719,
    0.0703660474881081, 0.0307532419961173,
};

double positive_sigma(const DiffusionSpec& spec, double x) {
    if (x <= spec.domain_lo || x >= spec.domain_hi) {
        std::ostringstream msg;
        msg << "lamperti: point " << x << " outside diffusion domain ("
            << spec.domain_lo << ", " << spec.domain_hi << ")";
        throw numerical_error(msg.str());
    }
    double s = spec.sigma(x);
    if (!(s > 0.0) || !std::isfinite(s)) {
        std::ostringstream msg;
        msg << "lamperti: sigma(" << x << ") = " << s
            << " is not strictly positive";
        throw numerical_error(msg.str());
    }
    return s;
}

double gl15(const DiffusionSpec& spec, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = kGlWeight[0] / positive_sigma(spec, mid);
    for (int i = 1; i < kGlHalf; ++i) {
        const double d = half * kGlNode[i];
        acc += kGlWeight[i] * (1.0 / positive_sigma(spec, mid - d) +
                               1.0 / positive_sigma(spec, mid + d));
    }
    return acc * half;
}

double adaptive_gl(const DiffusionSpec& spec, double a, double b, double tol,
                   int depth) {
    const double whole = gl15(spec, a, b);
    const double mid = 0.5 * (a + b);
    const double left = gl15(spec, a, mid);
    const double right = gl15(spec, mid, b);
    const double refined = left + right;
    // The relative term keeps near-singular panels (sigma vanishing toward a
    // domain edge) from chasing an absolute tolerance below the roundoff
    // floor of the panel value.
    const double accept = tol + 4.0 * std::numeric_limits<double>::epsilon() *
                                    std::abs(refined);
    if (std::abs(refined - whole) <= accept ||
        b - a < 1e-14 * (1.0 + std::abs(a))) {
        return refined;
    }
    if (depth >= 40) {
        throw numerical_error(
            "lamperti: quadrature of 1/sigma failed to converge");
    }
    return adaptive_gl(spec, a, mid, 0.5 * tol, depth + 1) +
           adaptive_gl(spec, mid, b, 0.5 * tol, depth + 1);
}

// signed integral from a to b (a may exceed b)
double integrate(const DiffusionSpec& spec, double a, double b, double tol) {
    if (a == b) return 0.0;
    if (a < b) return adaptive_gl(spec, a, b, tol, 0);
    return -adaptive_gl(spec, b, a, tol, 0);
}

struct MapTable {
    DiffusionSpec spec;
    double anchor = 0.0;
    double quad_tol = 1e-12;
    std::vector<double> edges;   // sorted panel edges, anchor is an edge
    std::vector<double> values;  // forward value at each edge

    double forward(double y) const {
        if (y <= spec.domain_lo || y >= spec.domain_hi) {
            std::ostringstream msg;
            msg << "lamperti: forward argument " << y
                << " outside diffusion domain";
            throw numerical_error(msg.str());
        }
        if (y <= edges.front()) {
            return values.front() + integrate(spec, edges.front(), y, quad_tol);
        }
        if (y >= edges.back()) {
            return values.back() + integrate(spec, edges.back(), y, quad_tol);
        }
        const auto it = std::upper_bound(edges.begin(), edges.end(), y);
        const std::size_t j = static_cast<std::size_t>(it - edges.begin()) - 1;
        return values[j] + integrate(spec, edges[j], y, quad_tol);
    }

    double inverse(double v) const {
        require(std::isfinite(v), "lamperti: inverse of non-finite value");
        double lo, hi;
        if (v >= values.front() && v <= values.back()) {
            const auto it = std::upper_bound(values.begin(), values.end(), v);
            std::size_t j = static_cast<std::size_t>(it - values.begin());
            if (j == 0) j = 1;
            if (j > edges.size() - 1) j = edges.size() - 1;
            lo = edges[j - 1];
            hi = edges[j];
        } else if (!expand_bracket(v, lo, hi)) {
            std::ostringstream msg;
            msg << "lamperti: could not bracket inverse of " << v
                << " inside the diffusion domain";
            throw numerical_error(msg.str());
        }
        // Bracketed Newton on g(x) = forward(x) - v with g'(x) = 1/sigma(x);
        // bisection fallback keeps the iterate inside [lo, hi].
        double flo = forward(lo) - v;
        double x = lo + (hi - lo) * 0.5;
        if (hi > lo) {
            const double fhi = forward(hi) - v;
            const double span = fhi - flo;
            if (span > 0.0) x = lo + (hi - lo) * (-flo / span);
        }
        const double tol = 1e-13 * (1.0 + std::abs(v));
        for (int iter = 0; iter < 100; ++iter) {
            const double g = forward(x) - v;
            if (std::abs(g) <= tol) return x;
            if (g > 0.0) {
                hi = x;
            } else {
                lo = x;
                flo = g;
            }
            double next = x - g * positive_sigma(spec, x);
            if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
            if (next == x) return x;  // bracket exhausted at roundoff
            x = next;
        }
        throw numerical_error("lamperti: inversion did not converge");
    }

    // Extends a bracket beyond the table for targets outside its value range;
    // fails (returns false) when the domain boundary is reached first.
    bool expand_bracket(double v, double& lo, double& hi) const {
        if (v < values.front()) {
            hi = edges.front();
            double width = std::max(1.0, 0.01 * std::abs(hi));
            double fhi = values.front();
            for (int round = 0; round < 200; ++round) {
                double cand = hi - width;
                if (cand <= spec.domain_lo) {
                    cand = spec.domain_lo +
                           1e-12 * (1.0 + std::abs(spec.domain_lo));
                    if (cand >= hi) return false;
                }
                const double fc = fhi + integrate(spec, hi, cand, quad_tol);
                if (fc <= v) {
                    lo = cand;
                    return true;
                }
                hi = cand;
                fhi = fc;
                if (cand <= spec.domain_lo + 1e-11 * (1.0 + std::abs(cand))) {
                    return false;
                }
                width *= 2.0;
            }
            return false;
        }
        lo = edges.back();
        double width = std::max(1.0, 0.01 * std::abs(lo));
        double flo = values.back();
        for (int round = 0; round < 200; ++round) {
            double cand = lo + width;
            if (cand >= spec.domain_hi) {
                cand =
                    spec.domain_hi - 1e-12 * (1.0 + std::abs(spec.domain_hi));
                if (cand <= lo) return false;
            }
            const double fc = flo + integrate(spec, lo, cand, quad_tol);
            if (fc >= v) {
                hi = cand;
                return true;
            }
            lo = cand;
            flo = fc;
            if (cand >= spec.domain_hi - 1e-11 * (1.0 + std::abs(cand))) {
                return false;
            }
            width *= 2.0;
        }
        return false;
    }
};

}  // namespace

LampertiMap build_map(const DiffusionSpec& spec, double anchor,
                      double quad_tol) {
    require(static_cast<bool>(spec.sigma), "lamperti: sigma is required");
    require(static_cast<bool>(spec.dsigma), "lamperti: dsigma is required");
    require(spec.domain_lo < spec.domain_hi,
            "lamperti: empty diffusion domain");
    require(anchor > spec.domain_lo && anchor < spec.domain_hi,
            "lamperti: anchor outside diffusion domain");
    require(quad_tol > 0.0 && quad_tol < 1.0,
            "lamperti: quad_tol must lie in (0, 1)");
    positive_sigma(spec, anchor);

    auto table = std::make_shared<MapTable>();
    table->spec = spec;
    table->anchor = anchor;
    table->quad_tol = quad_tol;

    // Window around the anchor covered by the cumulative panel table. Finite
    // domain edges are approached but not touched (1/sigma may blow up
    // there); the pure quadrature fallback handles the rare points beyond.
    const double span = 50.0;
    double lo_edge = anchor - span;
    double hi_edge = anchor + span;
    if (std::isfinite(spec.domain_lo)) {
        const double width = std::isfinite(spec.domain_hi)
                                 ? spec.domain_hi - spec.domain_lo
                                 : 1.0 + std::abs(spec.domain_lo);
        lo_edge = std::max(lo_edge, spec.domain_lo + 1e-6 * width);
    }
    if (std::isfinite(spec.domain_hi)) {
        const double width = std::isfinite(spec.domain_lo)
                                 ? spec.domain_hi - spec.domain_lo
                                 : 1.0 + std::abs(spec.domain_hi);
        hi_edge = std::min(hi_edge, spec.domain_hi - 1e-6 * width);
    }
    lo_edge = std::min(lo_edge, anchor);
    hi_edge = std::max(hi_edge, anchor);

    const double target_width = 0.05;
    const auto panels = [&](double a, double b) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil((b - a) / target_width)));
    };
    const std::size_t nl = lo_edge < anchor ? panels(lo_edge, anchor) : 0;
    const std::size_t nr = hi_edge > anchor ? panels(anchor, hi_edge) : 0;

    table->edges.resize(nl + nr + 1);
    for (std::size_t j = 0; j <= nl; ++j) {
        const double f = nl == 0 ? 0.0 : static_cast<double>(nl - j) /
                                             static_cast<double>(nl);
        table->edges[j] = anchor - f * (anchor - lo_edge);
    }
    for (std::size_t j = 1; j <= nr; ++j) {
        const double f = static_cast<double>(j) / static_cast<double>(nr);
        table->edges[nl + j] = anchor + f * (hi_edge - anchor);
    }
    table->edges[nl] = anchor;

    const double panel_tol =
        quad_tol / static_cast<double>(std::max<std::size_t>(1, nl + nr));
    table->values.assign(nl + nr + 1, 0.0);
    for (std::size_t j = nl; j > 0; --j) {
        table->values[j - 1] =
            table->values[j] -
            integrate(spec, table->edges[j - 1], table->edges[j], panel_tol);
    }
    for (std::size_t j = nl; j < nl + nr; ++j) {
        table->values[j + 1] =
            table->values[j] +
            integrate(spec, table->edges[j], table->edges[j + 1], panel_tol);
    }

    LampertiMap map;
    map.anchor = anchor;
    map.forward = [table](double y) { return table->forward(y); };
    map.inverse = [table](double v) { return table->inverse(v); };
    map.derivative = [spec](double y) { return 1.0 / positive_sigma(spec, y); };
    map.second_derivative = [spec](double y) {
        const double s = positive_sigma(spec, y);
        return -spec.dsigma(y) / (s * s);
    };
    return map;
}

MapProbeReport probe_map(const LampertiMap& map, const DiffusionSpec& spec,
                         std::size_t n_probes, std::uint64_t seed) {
    require(n_probes >= 2, "probe_map: need at least two probes");
    const double lo = std::max(spec.domain_lo, map.anchor - 8.0);
    const double hi = std::min(spec.domain_hi, map.anchor + 8.0);
    const double margin = 1e-3 * (hi - lo);

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(lo + margin, hi - margin);
    std::vector<double> probes(n_probes);
    for (double& p : probes) p = unif(gen);
    std::sort(probes.begin(), probes.end());

    MapProbeReport report;
    double prev_value = -std::numeric_limits<double>::infinity();
    double prev_inverse = 0.0;
    bool have_prev = false;
    for (double y : probes) {
        const double v = map.forward(y);
        const double s = positive_sigma(spec, y);
        // Step scaled by the local sigma: the map varies at rate 1/sigma, so
        // a fixed step would lose the truncation budget near a vanishing-
        // volatility domain edge.
        const double h = 1e-5 * std::max(1.0, std::abs(y)) * std::min(1.0, s);
        const double fd = (map.forward(y + h) - map.forward(y - h)) / (2.0 * h);
        report.max_derivative_defect =
            std::max(report.max_derivative_defect, std::abs(fd * s - 1.0));
        const double back = map.inverse(v);
        report.max_roundtrip_error =
            std::max(report.max_roundtrip_error, std::abs(back - y));
        if (have_prev) {
            if (!(v > prev_value)) report.monotone = false;
            const double dv = v - prev_value;
            if (dv > 0.0) {
                report.inverse_lipschitz = std::max(
                    report.inverse_lipschitz, (back - prev_inverse) / dv);
            }
        }
        prev_value = v;
        prev_inverse = back;
        have_prev = true;
    }
    return report;
}

CoefficientPair transform_pair(const CoefficientPair& pair,
                               const LampertiMap& map,
                               const DiffusionSpec& spec) {
    require(pair.dim == 1, "transform_pair: only one-dimensional pairs");
    require(static_cast<bool>(pair.b) && static_cast<bool>(pair.phi),
            "transform_pair: pair must provide b and phi");

    const auto inv = map.inverse;
    const auto sigma = spec.sigma;
    const auto dsigma = spec.dsigma;
    auto d2sigma = spec.d2sigma;
    if (!d2sigma) {
        // Central difference of dsigma stands in for the second derivative.
        d2sigma = [dsigma](double x) {
            const double h = 1e-5 * std::max(1.0, std::abs(x));
            return (dsigma(x + h) - dsigma(x - h)) / (2.0 * h);
        };
    }

    CoefficientPair out;
    out.id = pair.id + "|lamperti";
    out.dim = 1;
    out.growth_constant = std::max(1.0, pair.growth_constant);
    out.flags.phi_y_independent = pair.flags.phi_y_independent;
    // Lipschitz claims are not preserved in general: the inverse map has
    // slope sigma, which may be unbounded on the domain.
    out.flags.lipschitz_z_b = false;
    out.flags.lipschitz_z_phi = false;
    out.flags.lipschitz_y_phi = false;

    const auto b = pair.b;
    const auto phi = pair.phi;
    out.b = [b, inv, sigma, dsigma](double t, double y, double v) {
        const double x = inv(y);
        return b(t, x, v) / sigma(x) - 0.5 * dsigma(x);
    };
    out.phi = [phi, inv](double t, double y, double z) {
        return phi(t, inv(y), inv(z));
    };

    if (pair.flags.smooth) {
        out.flags.smooth = true;
        const auto db_dy = pair.db_dy;
        const auto db_dz = pair.db_dz;
        const auto dphi_dy = pair.dphi_dy;
        const auto dphi_dz = pair.dphi_dz;
        out.db_dy = [b, db_dy, inv, sigma, dsigma, d2sigma](double t, double y,
                                                            double v) {
            const double x = inv(y);
            const double s = sigma(x);
            const double inner = db_dy(t, x, v) / s -
                                 b(t, x, v) * dsigma(x) / (s * s) -
                                 0.5 * d2sigma(x);
            return inner * s;
        };
        out.db_dz = [db_dz, inv, sigma](double t, double y, double v) {
            const double x = inv(y);
            return db_dz(t, x, v) / sigma(x);
        };
        out.dphi_dy = [dphi_dy, inv, sigma](double t, double y, double z) {
            const double x = inv(y);
            return dphi_dy(t, x, inv(z)) * sigma(x);
        };
        out.dphi_dz = [dphi_dz, inv, sigma](double t, double y, double z) {
            const double w = inv(z);
            return dphi_dz(t, inv(y), w) * sigma(w);
        };
    }
    return out;
}

std::vector<double> multiplicative_terminal(const CoefficientPair& pair,
                                            const DiffusionSpec& spec,
                                            const TimeGrid& grid, double x0,
                                            const NoiseBlock& noise,
                                            int workers) {
    require(pair.dim == 1, "multiplicative_terminal: one-dimensional only");
    require(noise.steps == grid.steps && noise.particles >= 2,
            "multiplicative_terminal: noise block does not match the grid");
    require(std::abs(noise.dt - grid.dt) <= 1e-15 * std::max(1.0, grid.dt),
            "multiplicative_terminal: noise step size mismatch");
    require(std::isfinite(x0) && x0 > spec.domain_lo && x0 < spec.domain_hi,
            "multiplicative_terminal: x0 outside diffusion domain");
    if (workers < 1) workers = 1;

    const std::size_t n = noise.particles;
    const double dt = grid.dt;
    std::vector<double> cur(n, x0);
    std::vector<double> next(n, 0.0);
    std::vector<double> buffer(n, 0.0);

    // kind: 1 = nonpositive sigma, 2 = domain exit, 3 = non-finite state
    std::atomic<long long> bad_index{-1};
    std::atomic<int> bad_kind{0};
    const auto record = [&](std::size_t i, int kind) {
        long long expected = -1;
        if (bad_index.compare_exchange_strong(expected,
                                              static_cast<long long>(i))) {
            bad_kind.store(kind);
        }
    };
    const auto raise_if_bad = [&](std::size_t step) {
        const long long idx = bad_index.load();
        if (idx < 0) return;
        std::ostringstream msg;
        switch (bad_kind.load()) {
            case 1:
                msg << "multiplicative_terminal: sigma nonpositive";
                break;
            case 2:
                msg << "multiplicative_terminal: path exited the diffusion "
                       "domain";
                break;
            default:
                msg << "multiplicative_terminal: non-finite state";
                break;
        }
        msg << " at step " << step << ", particle " << idx;
        throw numerical_error(msg.str());
    };

    const bool fast = pair.flags.phi_y_independent;
    std::vector<double> rho(fast ? 0 : n, 0.0);

    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = grid.times[k];
        double rho_common = 0.0;
        if (fast) {
#pragma omp parallel for schedule(static) num_threads(workers) if (workers > 1)
            for (long long j = 0; j < static_cast<long long>(n); ++j) {
                buffer[static_cast<std::size_t>(j)] =
                    pair.phi(t, 0.0, cur[static_cast<std::size_t>(j)]);
            }
            rho_common = pairwise_mean(buffer.data(), n);
        } else {
#pragma omp parallel num_threads(workers) if (workers > 1)
            {
                std::vector<double> scratch(n, 0.0);
#pragma omp for schedule(static)
                for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
                    const std::size_t i = static_cast<std::size_t>(ii);
                    for (std::size_t j = 0; j < n; ++j) {
                        scratch[j] = pair.phi(t, cur[i], cur[j]);
                    }
                    rho[i] = pairwise_mean(scratch.data(), n);
                }
            }
        }

#pragma omp parallel for schedule(static) num_threads(workers) if (workers > 1)
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            const double x = cur[i];
            const double s = spec.sigma(x);
            if (!(s > 0.0) || !std::isfinite(s)) {
                record(i, 1);
                next[i] = x;
                continue;
            }
            const double drift = pair.b(t, x, fast ? rho_common : rho[i]);
            const double value = x + drift * dt + s * noise.at(k, i);
            if (!std::isfinite(value)) {
                record(i, 3);
                next[i] = x;
                continue;
            }
            if (value <= spec.domain_lo || value >= spec.domain_hi) {
                record(i, 2);
                next[i] = x;
                continue;
            }
            next[i] = value;
        }
        raise_if_bad(k);
        cur.swap(next);
    }
    return cur;
}

RoundTripReport roundtrip_check(const CoefficientPair& pair,
                                const DiffusionSpec& spec,
                                const LampertiMap& map, const TimeGrid& grid,
                                std::size_t particles, double x0,
                                std::uint64_t seed, int workers) {
    require(particles >= 2, "roundtrip_check: need at least two particles");
    auto noise = generate_noise(seed, particles, grid, workers);

    RoundTripReport report;
    report.direct_terminal =
        multiplicative_terminal(pair, spec, grid, x0, *noise, workers);

    const CoefficientPair star = transform_pair(pair, map, spec);
    std::vector<double> transformed =
        simulate_terminal(star, grid, map.forward(x0), *noise, workers);
    report.mapped_terminal.resize(particles);
    for (std::size_t i = 0; i < particles; ++i) {
        report.mapped_terminal[i] = map.inverse(transformed[i]);
    }

    EmpiricalMeasure direct(1, report.direct_terminal);
    EmpiricalMeasure mapped(1, report.mapped_terminal);
    report.w1 = wasserstein1(direct, mapped);

    std::vector<double> gaps(particles, 0.0);
    for (std::size_t i = 0; i < particles; ++i) {
        gaps[i] =
            std::abs(report.direct_terminal[i] - report.mapped_terminal[i]);
    }
    report.mean_abs_gap = pairwise_mean(gaps.data(), particles);
    return report;
}

}  // namespace mfsde
