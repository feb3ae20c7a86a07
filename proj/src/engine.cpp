#include "mfsde/engine.hpp"

#include "mfsde/common.hpp"
#include "mfsde/rng.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace mfsde {

TimeGrid::TimeGrid(double horizon_, std::size_t steps_, double t0_) {
    require(steps_ >= 1, "TimeGrid: steps must be >= 1");
    require(std::isfinite(horizon_) && std::isfinite(t0_) && horizon_ > t0_,
            "TimeGrid: require finite horizon > t0");
    t0 = t0_;
    horizon = horizon_;
    steps = steps_;
    dt = (horizon - t0) / static_cast<double>(steps);
    times.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        times[k] = t0 + static_cast<double>(k) * dt;
    }
}

std::shared_ptr<const NoiseBlock> generate_noise(std::uint64_t seed,
                                                 std::size_t particles,
                                                 const TimeGrid& grid,
                                                 int workers) {
    require(particles >= 1, "generate_noise: particles must be >= 1");
    auto block = std::make_shared<NoiseBlock>();
    block->seed = seed;
    block->particles = particles;
    block->steps = grid.steps;
    block->dt = grid.dt;
    block->dw.resize(grid.steps * particles);
    const double scale = std::sqrt(grid.dt);
    double* dw = block->dw.data();
    const long long n = static_cast<long long>(particles);
#pragma omp parallel for schedule(static) num_threads(workers) if (workers > 1)
    for (long long i = 0; i < n; ++i) {
        fill_scaled_normals(seed, static_cast<std::uint64_t>(i), grid.steps,
                            scale, dw + i, particles);
    }
    return block;
}

EmpiricalMeasure PathEnsemble::snapshot(std::size_t k) const {
    const auto lv = level(k);
    return EmpiricalMeasure(1, std::vector<double>(lv.begin(), lv.end()));
}

LawFlow law_flow(const PathEnsemble& ens) {
    LawFlow flow;
    flow.reserve(ens.grid.steps + 1);
    for (std::size_t k = 0; k <= ens.grid.steps; ++k) {
        flow.push_back(ens.snapshot(k));
    }
    return flow;
}

namespace {

void check_pair_for_simulation(const CoefficientPair& pair) {
    require(static_cast<bool>(pair.b) && static_cast<bool>(pair.phi),
            "simulate: pair must define b and phi");
    require(pair.dim == 1, "simulate: requires dim == 1");
}

[[noreturn]] void throw_nonfinite(std::size_t step, long long particle) {
    throw numerical_error("simulation produced a non-finite state at step " +
                          std::to_string(step) + ", particle " +
                          std::to_string(particle));
}

// One Euler transition for every particle; `law_at` supplies the level-k
// interaction term rho^i_k. Used for both the interacting scheme (law = live
// cloud) and the frozen-law scheme (law = stored snapshots).
template <typename LawAt>
void euler_sweep(const CoefficientPair& pair, const TimeGrid& grid,
                 std::size_t particles, const NoiseBlock& noise,
                 std::vector<double>& states, int workers, LawAt&& law_at) {
    const long long n = static_cast<long long>(particles);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = grid.times[k];
        const double* xk = states.data() + k * particles;
        double* xk1 = states.data() + (k + 1) * particles;
        const double* dwk = noise.dw.data() + k * particles;
        std::atomic<long long> bad{-1};
        law_at.prepare(k, xk);
#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            auto ctx = law_at.thread_context();
#pragma omp for schedule(static)
            for (long long i = 0; i < n; ++i) {
                const double y = xk[i];
                const double rho = law_at.value(k, xk, y, ctx);
                const double next = y + pair.b(t, y, rho) * grid.dt + dwk[i];
                if (!std::isfinite(next)) {
                    long long expected = -1;
                    bad.compare_exchange_strong(expected, i);
                }
                xk1[i] = next;
            }
        }
        if (bad.load() >= 0) throw_nonfinite(k, bad.load());
    }
}

// Interaction term against the live particle cloud.
struct LiveLaw {
    const CoefficientPair& pair;
    std::size_t particles;
    const std::vector<double>& times;
    bool fast;
    double common = 0.0;
    std::vector<double> buffer;  // shared scratch for the common reduction

    LiveLaw(const CoefficientPair& p, std::size_t n,
            const std::vector<double>& ts)
        : pair(p), particles(n), times(ts),
          fast(p.flags.phi_y_independent), buffer(n) {}

    void prepare(std::size_t k, const double* xk) {
        if (!fast) return;
        // phi ignores y by contract; evaluate at a fixed representative.
        for (std::size_t j = 0; j < particles; ++j) {
            buffer[j] = pair.phi(times[k], 0.0, xk[j]);
        }
        common = pairwise_mean(buffer);
    }

    std::vector<double> thread_context() const {
        return fast ? std::vector<double>() : std::vector<double>(particles);
    }

    double value(std::size_t k, const double* xk, double y,
                 std::vector<double>& scratch) const {
        if (fast) return common;
        for (std::size_t j = 0; j < particles; ++j) {
            scratch[j] = pair.phi(times[k], y, xk[j]);
        }
        return pairwise_mean(scratch);
    }
};

// Interaction term against a frozen law flow.
struct FrozenLaw {
    const CoefficientPair& pair;
    const LawFlow& flow;
    const std::vector<double>& times;
    bool fast;
    double common = 0.0;

    FrozenLaw(const CoefficientPair& p, const LawFlow& f,
              const std::vector<double>& ts)
        : pair(p), flow(f), times(ts), fast(p.flags.phi_y_independent) {}

    void prepare(std::size_t k, const double*) {
        if (fast) common = integrate_phi(flow[k], pair, times[k], 0.0);
    }

    std::vector<double> thread_context() const {
        return fast ? std::vector<double>()
                    : std::vector<double>(flow.front().size());
    }

    double value(std::size_t k, const double*, double y,
                 std::vector<double>& scratch) const {
        if (fast) return common;
        const auto pts = flow[k].flat();
        for (std::size_t j = 0; j < pts.size(); ++j) {
            scratch[j] = pair.phi(times[k], y, pts[j]);
        }
        return pairwise_mean(scratch);
    }
};

PathEnsemble make_ensemble(const TimeGrid& grid, std::size_t particles,
                           double x0, std::uint64_t seed, SchemeTag scheme,
                           std::shared_ptr<const NoiseBlock> noise) {
    PathEnsemble ens;
    ens.grid = grid;
    ens.particles = particles;
    ens.x0 = x0;
    ens.seed = seed;
    ens.scheme = scheme;
    ens.noise = std::move(noise);
    ens.states.assign((grid.steps + 1) * particles, x0);
    return ens;
}

}  // namespace

PathEnsemble simulate(const CoefficientPair& pair, const TimeGrid& grid,
                      std::size_t particles, double x0, std::uint64_t seed,
                      int workers) {
    check_pair_for_simulation(pair);
    require(particles >= 2, "simulate: at least two particles required");
    require(std::isfinite(x0), "simulate: x0 must be finite");
    auto noise = generate_noise(seed, particles, grid, workers);
    PathEnsemble ens = make_ensemble(grid, particles, x0, seed,
                                     SchemeTag::interacting, noise);
    LiveLaw law(pair, particles, grid.times);
    euler_sweep(pair, grid, particles, *noise, ens.states, workers, law);
    return ens;
}

std::vector<double> simulate_terminal(const CoefficientPair& pair,
                                      const TimeGrid& grid, double x0,
                                      const NoiseBlock& noise, int workers) {
    check_pair_for_simulation(pair);
    require(std::isfinite(x0), "simulate_terminal: x0 must be finite");
    require(noise.steps == grid.steps,
            "simulate_terminal: noise block does not match the grid");
    const std::size_t n = noise.particles;
    require(n >= 2, "simulate_terminal: at least two particles required");

    std::vector<double> cur(n, x0), next(n);
    LiveLaw law(pair, n, grid.times);
    const long long nn = static_cast<long long>(n);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = grid.times[k];
        const double* dwk = noise.dw.data() + k * n;
        std::atomic<long long> bad{-1};
        law.prepare(k, cur.data());
#pragma omp parallel num_threads(workers) if (workers > 1)
        {
            auto ctx = law.thread_context();
#pragma omp for schedule(static)
            for (long long i = 0; i < nn; ++i) {
                const double y = cur[i];
                const double rho = law.value(k, cur.data(), y, ctx);
                const double v = y + pair.b(t, y, rho) * grid.dt + dwk[i];
                if (!std::isfinite(v)) {
                    long long expected = -1;
                    bad.compare_exchange_strong(expected, i);
                }
                next[i] = v;
            }
        }
        if (bad.load() >= 0) throw_nonfinite(k, bad.load());
        cur.swap(next);
    }
    return cur;
}

PathEnsemble simulate_frozen(const CoefficientPair& pair, const TimeGrid& grid,
                             const LawFlow& flow, std::size_t particles,
                             double x0,
                             std::shared_ptr<const NoiseBlock> noise,
                             int workers) {
    check_pair_for_simulation(pair);
    require(particles >= 2, "simulate_frozen: at least two particles required");
    require(flow.size() == grid.steps + 1,
            "simulate_frozen: law flow must have one snapshot per grid node");
    require(noise && noise->particles == particles &&
                noise->steps == grid.steps,
            "simulate_frozen: noise block does not match grid/particles");
    for (const auto& mu : flow) {
        require(mu.dim() == 1, "simulate_frozen: law flow must be 1-d");
    }
    PathEnsemble ens = make_ensemble(grid, particles, x0, noise->seed,
                                     SchemeTag::frozen_law, noise);
    FrozenLaw law(pair, flow, grid.times);
    euler_sweep(pair, grid, particles, *ens.noise, ens.states, workers, law);
    return ens;
}

PicardResult picard_iterate(const CoefficientPair& pair, const TimeGrid& grid,
                            std::size_t particles, double x0,
                            std::uint64_t seed, std::size_t max_iterations,
                            double tolerance, int workers) {
    check_pair_for_simulation(pair);
    require(max_iterations >= 1, "picard_iterate: max_iterations must be >= 1");
    require(tolerance >= 0.0, "picard_iterate: tolerance must be >= 0");
    auto noise = generate_noise(seed, particles, grid, workers);

    // Iteration zero: the zero-drift flow from the same increments.
    PathEnsemble base = make_ensemble(grid, particles, x0, seed,
                                      SchemeTag::frozen_law, noise);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double* xk = base.states.data() + k * particles;
        double* xk1 = base.states.data() + (k + 1) * particles;
        const double* dwk = noise->dw.data() + k * particles;
        for (std::size_t i = 0; i < particles; ++i) xk1[i] = xk[i] + dwk[i];
    }
    LawFlow prev = law_flow(base);

    PicardResult result;
    result.ensemble = std::move(base);
    for (std::size_t m = 1; m <= max_iterations; ++m) {
        PathEnsemble cur =
            simulate_frozen(pair, grid, prev, particles, x0, noise, workers);
        LawFlow curf = law_flow(cur);
        double d = 0.0;
        for (std::size_t k = 0; k <= grid.steps; ++k) {
            d = std::max(d, wasserstein1(prev[k], curf[k]));
        }
        result.history.push_back(d);
        result.iterations = m;
        result.ensemble = std::move(cur);
        prev = std::move(curf);
        if (d <= tolerance) {
            result.converged = true;
            break;
        }
    }
    result.flow = std::move(prev);
    return result;
}

HoelderReport hoelder_probe(const CoefficientPair& pair, const TimeGrid& grid,
                            std::size_t particles,
                            const std::vector<double>& initial_points,
                            std::uint64_t seed, std::size_t time_probes,
                            int workers) {
    check_pair_for_simulation(pair);
    require(!initial_points.empty(),
            "hoelder_probe: need at least one initial point");
    require(time_probes >= 1, "hoelder_probe: time_probes must be >= 1");

    auto noise = generate_noise(seed, particles, grid, workers);

    std::vector<PathEnsemble> runs;
    runs.reserve(initial_points.size());
    for (double x : initial_points) {
        require(std::isfinite(x), "hoelder_probe: initial point not finite");
        PathEnsemble ens = make_ensemble(grid, particles, x, seed,
                                         SchemeTag::interacting, noise);
        LiveLaw law(pair, particles, grid.times);
        euler_sweep(pair, grid, particles, *noise, ens.states, workers, law);
        runs.push_back(std::move(ens));
    }

    // Probe instants: evenly spread grid indices including both endpoints.
    std::vector<std::size_t> probe_idx;
    for (std::size_t j = 0; j <= time_probes; ++j) {
        const std::size_t k = (j * grid.steps) / time_probes;
        if (probe_idx.empty() || probe_idx.back() != k) probe_idx.push_back(k);
    }

    // Brownian prefix sums at the probe instants, per particle.
    const std::size_t np = probe_idx.size();
    std::vector<double> prefix(np * particles, 0.0);
    {
        std::vector<double> cum(particles, 0.0);
        std::size_t next = 0;
        for (std::size_t k = 0; k <= grid.steps; ++k) {
            if (next < np && probe_idx[next] == k) {
                for (std::size_t i = 0; i < particles; ++i) {
                    prefix[next * particles + i] = cum[i];
                }
                ++next;
            }
            if (k == grid.steps) break;
            const double* dwk = noise->dw.data() + k * particles;
            for (std::size_t i = 0; i < particles; ++i) cum[i] += dwk[i];
        }
    }

    HoelderReport report;
    std::vector<double> vals(particles);
    std::vector<double> vals2(particles);
    std::size_t pair_id = 0;
    const std::size_t nx = initial_points.size();
    for (std::size_t a = 0; a < np * nx; ++a) {
        for (std::size_t b = a + 1; b < np * nx; ++b) {
            const std::size_t p1 = a / nx, x1 = a % nx;
            const std::size_t p2 = b / nx, x2 = b % nx;
            const double t1 = grid.times[probe_idx[p1]];
            const double t2 = grid.times[probe_idx[p2]];
            const double xa = initial_points[x1];
            const double xb = initial_points[x2];
            const double denom = std::abs(t1 - t2) + (xa - xb) * (xa - xb);
            if (denom == 0.0) continue;
            const double* lev1 =
                runs[x1].states.data() + probe_idx[p1] * particles;
            const double* lev2 =
                runs[x2].states.data() + probe_idx[p2] * particles;
            const double* c1 = prefix.data() + p1 * particles;
            const double* c2 = prefix.data() + p2 * particles;
            // E|X_t - X_s|^2 with both Brownian moments removed exactly:
            // write X_t - X_s = A + dB with dB the coupled increment, then
            //   E|X_t - X_s|^2 = E[A^2] + 2 cov(A, dB) + |t - s|
            // since E[dB] = 0 and E[dB^2] = |t - s|. Using the centered
            // sample covariance makes the zero-drift case (A constant) exact
            // to roundoff instead of O(N^{-1/2}).
            for (std::size_t i = 0; i < particles; ++i) {
                const double db = c1[i] - c2[i];
                vals[i] = (lev1[i] - lev2[i]) - db;
            }
            const double a_bar = pairwise_mean(vals);
            double lhs = std::abs(t1 - t2);
            {
                std::vector<double>& sq = vals2;
                for (std::size_t i = 0; i < particles; ++i) {
                    const double db = c1[i] - c2[i];
                    sq[i] = vals[i] * vals[i] +
                            2.0 * (vals[i] - a_bar) * db;
                }
                lhs += pairwise_mean(sq);
            }
            HoelderRow row;
            row.pair_id = pair_id++;
            row.t = t1;
            row.s = t2;
            row.x = xa;
            row.y = xb;
            row.lhs = lhs;
            row.denom = denom;
            row.ratio = lhs / denom;
            report.c_hat = std::max(report.c_hat, row.ratio);
            report.rows.push_back(row);
        }
    }
    return report;
}

}  // namespace mfsde
