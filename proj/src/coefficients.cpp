#include "mfsde/coefficients.hpp"

#include "mfsde/common.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace mfsde {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Consumes typed parameters and rejects unknown keys.
class ParamReader {
public:
    explicit ParamReader(const ModelParams& params, const std::string& model)
        : params_(params), model_(model) {}

    double scalar(const std::string& key) {
        const auto it = params_.scalars.find(key);
        require(it != params_.scalars.end(),
                model_ + ": missing required parameter '" + key + "'");
        used_scalars_.insert(key);
        return it->second;
    }

    double scalar_or(const std::string& key, double fallback) {
        const auto it = params_.scalars.find(key);
        if (it == params_.scalars.end()) return fallback;
        used_scalars_.insert(key);
        return it->second;
    }

    std::vector<double> array(const std::string& key) {
        const auto it = params_.arrays.find(key);
        require(it != params_.arrays.end(),
                model_ + ": missing required array parameter '" + key + "'");
        used_arrays_.insert(key);
        return it->second;
    }

    void finish() const {
        for (const auto& [key, _] : params_.scalars) {
            require(used_scalars_.count(key) != 0,
                    model_ + ": unknown parameter '" + key + "'");
        }
        for (const auto& [key, _] : params_.arrays) {
            require(used_arrays_.count(key) != 0,
                    model_ + ": unknown array parameter '" + key + "'");
        }
    }

private:
    const ModelParams& params_;
    std::string model_;
    std::set<std::string> used_scalars_;
    std::set<std::string> used_arrays_;
};

CoefficientFn constant_fn(double v) {
    return [v](double, double, double) { return v; };
}

void set_identity_phi(CoefficientPair& pair) {
    pair.phi = [](double, double, double z) { return z; };
    pair.dphi_dy = constant_fn(0.0);
    pair.dphi_dz = constant_fn(1.0);
    pair.flags.phi_y_independent = true;
    pair.flags.lipschitz_z_phi = true;
    pair.flags.lipschitz_y_phi = true;
}

}  // namespace

CoefficientPair make_builtin(const std::string& model_id,
                             const ModelParams& params) {
    ParamReader reader(params, model_id);
    CoefficientPair pair;
    pair.id = model_id;
    pair.dim = 1;

    if (model_id == "zero_drift") {
        pair.b = constant_fn(0.0);
        pair.phi = constant_fn(0.0);
        pair.db_dy = constant_fn(0.0);
        pair.db_dz = constant_fn(0.0);
        pair.dphi_dy = constant_fn(0.0);
        pair.dphi_dz = constant_fn(0.0);
        pair.growth_constant = 0.0;
        pair.flags = {true, true, true, true, true};
    } else if (model_id == "expectation_drift") {
        const double rate = reader.scalar_or("rate", -1.0);
        pair.b = [rate](double, double, double z) { return rate * z; };
        pair.db_dy = constant_fn(0.0);
        pair.db_dz = constant_fn(rate);
        set_identity_phi(pair);
        pair.flags.lipschitz_z_b = true;
        pair.flags.smooth = true;
        pair.growth_constant = std::max(1.0, std::abs(rate));
    } else if (model_id == "mean_field_ou") {
        const double a = reader.scalar_or("a", -1.0);
        const double c = reader.scalar_or("c", 0.5);
        pair.b = [a, c](double, double y, double z) { return a * y + c * z; };
        pair.db_dy = constant_fn(a);
        pair.db_dz = constant_fn(c);
        set_identity_phi(pair);
        pair.flags.lipschitz_z_b = true;
        pair.flags.smooth = true;
        pair.growth_constant = std::max({1.0, std::abs(a), std::abs(c)});
    } else if (model_id == "cdf_drift") {
        const double u = reader.scalar_or("threshold", 0.0);
        pair.b = [](double, double, double z) { return z; };
        pair.phi = [u](double, double, double z) { return z <= u ? 1.0 : 0.0; };
        pair.growth_constant = 1.0;
        pair.flags.lipschitz_z_b = true;
        pair.flags.lipschitz_z_phi = false;  // indicator jumps at the threshold
        pair.flags.lipschitz_y_phi = true;
        pair.flags.phi_y_independent = true;
        pair.flags.smooth = false;
    } else if (model_id == "smoothed_cdf_drift") {
        const double u = reader.scalar_or("threshold", 0.0);
        const double w = reader.scalar_or("width", 0.1);
        require(w > 0.0, "smoothed_cdf_drift: width must be positive");
        pair.b = [](double, double, double z) { return z; };
        pair.phi = [u, w](double, double, double z) {
            return logistic((u - z) / w);
        };
        pair.db_dy = constant_fn(0.0);
        pair.db_dz = constant_fn(1.0);
        pair.dphi_dy = constant_fn(0.0);
        pair.dphi_dz = [u, w](double, double, double z) {
            const double s = logistic((u - z) / w);
            return -s * (1.0 - s) / w;
        };
        pair.growth_constant = 1.0;
        pair.flags = {true, true, true, true, true};
    } else if (model_id == "custom_table") {
        const std::vector<double> knots = reader.array("knots");
        const std::vector<double> values = reader.array("values");
        require(knots.size() >= 2, "custom_table: need at least two knots");
        require(knots.size() == values.size(),
                "custom_table: knots and values must have equal length");
        for (std::size_t i = 1; i < knots.size(); ++i) {
            require(knots[i] > knots[i - 1],
                    "custom_table: knots must be strictly increasing");
        }
        // Piecewise-linear in z with constant extrapolation: bounded and
        // Lipschitz with constant max|slope|.
        pair.b = [knots, values](double, double, double z) {
            if (z <= knots.front()) return values.front();
            if (z >= knots.back()) return values.back();
            const auto it =
                std::upper_bound(knots.begin(), knots.end(), z) - 1;
            const std::size_t i = static_cast<std::size_t>(it - knots.begin());
            const double w = (z - knots[i]) / (knots[i + 1] - knots[i]);
            return values[i] + w * (values[i + 1] - values[i]);
        };
        set_identity_phi(pair);
        double vmax = 0.0;
        for (double v : values) vmax = std::max(vmax, std::abs(v));
        pair.growth_constant = std::max(1.0, vmax);
        pair.flags.lipschitz_z_b = true;
        pair.flags.smooth = false;
    } else {
        throw std::invalid_argument("make_builtin: unknown model '" +
                                    model_id + "'");
    }

    reader.finish();
    return pair;
}

namespace {

struct ProbeOutcome {
    double ratio = 0.0;
    std::array<double, 4> witness{};
};

// Coarse random pairs followed by bisection refinement of the worst pair:
// for a genuine jump the difference quotient keeps growing as the bracket
// shrinks, so discontinuities hiding between coarse probes are found.
template <typename Fn>
ProbeOutcome probe_lipschitz(Fn&& f, std::mt19937_64& eng,
                             std::size_t n_probes) {
    std::normal_distribution<double> wide(0.0, 3.0);
    std::uniform_real_distribution<double> tdist(0.0, 1.0);
    std::uniform_real_distribution<double> gap(-2.0, 2.0);

    ProbeOutcome out;
    double best_t = 0.0, best_other = 0.0, best_lo = 0.0, best_hi = 0.0;
    double best_jump = -1.0;
    for (std::size_t p = 0; p < n_probes; ++p) {
        const double t = tdist(eng);
        const double other = wide(eng);
        double v1 = wide(eng);
        double v2 = v1 + gap(eng);
        if (v2 < v1) std::swap(v1, v2);
        if (v2 == v1) continue;
        const double df = std::abs(f(t, other, v2) - f(t, other, v1));
        const double ratio = df / (v2 - v1);
        if (ratio > out.ratio) {
            out.ratio = ratio;
            out.witness = {t, other, v1, v2};
        }
        if (df > best_jump) {
            best_jump = df;
            best_t = t;
            best_other = other;
            best_lo = v1;
            best_hi = v2;
        }
    }
    // Refine the largest jump: bisect towards the steepest half.
    double lo = best_lo, hi = best_hi;
    double flo = f(best_t, best_other, lo), fhi = f(best_t, best_other, hi);
    for (int iter = 0; iter < 80 && hi - lo > 1e-13; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fmid = f(best_t, best_other, mid);
        if (std::abs(fmid - flo) >= std::abs(fhi - fmid)) {
            hi = mid;
            fhi = fmid;
        } else {
            lo = mid;
            flo = fmid;
        }
        const double width = hi - lo;
        if (width > 0.0) {
            const double ratio = std::abs(fhi - flo) / width;
            if (ratio > out.ratio) {
                out.ratio = ratio;
                out.witness = {best_t, best_other, lo, hi};
            }
        }
    }
    return out;
}

}  // namespace

RegularityReport probe_regularity(const CoefficientPair& pair,
                                  std::size_t n_probes, std::uint64_t seed) {
    require(static_cast<bool>(pair.b) && static_cast<bool>(pair.phi),
            "probe_regularity: pair must define b and phi");
    require(pair.dim == 1, "probe_regularity: requires dim == 1");

    RegularityReport report;
    std::mt19937_64 eng(mix64(seed));
    std::normal_distribution<double> wide(0.0, 3.0);
    std::uniform_real_distribution<double> tdist(0.0, 1.0);

    constexpr double kGrowthSlack = 1.0 + 1e-9;
    constexpr double kLipschitzCeiling = 1e7;

    // Linear growth against the declared constant.
    for (int which = 0; which < 2; ++which) {
        const auto& f = which == 0 ? pair.b : pair.phi;
        RegularityCheck check;
        check.name = which == 0 ? "growth_b" : "growth_phi";
        check.declared = true;
        check.passed = true;
        for (std::size_t p = 0; p < n_probes; ++p) {
            const double t = tdist(eng);
            const double y = wide(eng);
            const double z = wide(eng);
            const double bound =
                pair.growth_constant * (1.0 + std::abs(y) + std::abs(z));
            const double val = std::abs(f(t, y, z));
            const double stat =
                pair.growth_constant > 0.0 ? val / bound : val;
            if (stat > check.statistic) {
                check.statistic = stat;
                check.witness = {t, y, z, 0.0};
            }
        }
        check.passed = pair.growth_constant > 0.0
                           ? check.statistic <= kGrowthSlack
                           : check.statistic == 0.0;
        if (!check.passed) check.note = "growth bound exceeded";
        report.checks.push_back(check);
    }

    // Lipschitz claims; checked only when declared.
    struct LipSpec {
        const char* name;
        bool declared;
        int target;  // 0: b in z, 1: phi in z, 2: phi in y
    };
    const LipSpec lip_specs[] = {
        {"lipschitz_z_b", pair.flags.lipschitz_z_b, 0},
        {"lipschitz_z_phi", pair.flags.lipschitz_z_phi, 1},
        {"lipschitz_y_phi", pair.flags.lipschitz_y_phi, 2},
    };
    for (const auto& spec : lip_specs) {
        RegularityCheck check;
        check.name = spec.name;
        check.declared = spec.declared;
        if (!spec.declared) {
            check.passed = true;
            check.note = "not declared; skipped";
            report.checks.push_back(check);
            continue;
        }
        ProbeOutcome out;
        if (spec.target == 0) {
            out = probe_lipschitz(
                [&](double t, double y, double z) { return pair.b(t, y, z); },
                eng, n_probes);
        } else if (spec.target == 1) {
            out = probe_lipschitz(
                [&](double t, double y, double z) { return pair.phi(t, y, z); },
                eng, n_probes);
        } else {
            out = probe_lipschitz(
                [&](double t, double z, double y) { return pair.phi(t, y, z); },
                eng, n_probes);
        }
        check.statistic = out.ratio;
        check.witness = out.witness;
        check.passed = out.ratio < kLipschitzCeiling;
        if (!check.passed) check.note = "difference quotient diverges";
        report.checks.push_back(check);
    }

    // phi y-independence must hold exactly.
    {
        RegularityCheck check;
        check.name = "phi_y_independent";
        check.declared = pair.flags.phi_y_independent;
        if (!check.declared) {
            check.passed = true;
            check.note = "not declared; skipped";
        } else {
            for (std::size_t p = 0; p < n_probes; ++p) {
                const double t = tdist(eng);
                const double y1 = wide(eng);
                const double y2 = wide(eng);
                const double z = wide(eng);
                const double diff =
                    std::abs(pair.phi(t, y1, z) - pair.phi(t, y2, z));
                if (diff > check.statistic) {
                    check.statistic = diff;
                    check.witness = {t, y1, y2, z};
                }
            }
            check.passed = check.statistic <= 0.0;
            if (!check.passed) check.note = "phi depends on y";
        }
        report.checks.push_back(check);
    }

    // Declared Jacobians against central differences.
    {
        RegularityCheck check;
        check.name = "jacobians";
        check.declared = pair.flags.smooth;
        if (!pair.flags.smooth) {
            check.passed = true;
            check.note = "not declared; skipped";
        } else {
            require(pair.db_dy && pair.db_dz && pair.dphi_dy && pair.dphi_dz,
                    "probe_regularity: smooth pair must provide all Jacobians");
            constexpr double fd_step = 1e-5;
            constexpr double tol = 1e-4;
            std::normal_distribution<double> narrow(0.0, 2.0);
            check.passed = true;
            for (std::size_t p = 0; p < 100; ++p) {
                const double t = tdist(eng);
                const double y = narrow(eng);
                const double z = narrow(eng);
                const auto check_one = [&](const CoefficientFn& f,
                                           const CoefficientFn& jac, bool in_y) {
                    const double up = in_y ? f(t, y + fd_step, z)
                                           : f(t, y, z + fd_step);
                    const double dn = in_y ? f(t, y - fd_step, z)
                                           : f(t, y, z - fd_step);
                    const double fd = (up - dn) / (2.0 * fd_step);
                    const double exact = jac(t, y, z);
                    const double err =
                        std::abs(fd - exact) / std::max(1.0, std::abs(exact));
                    if (err > check.statistic) {
                        check.statistic = err;
                        check.witness = {t, y, z, 0.0};
                    }
                };
                check_one(pair.b, pair.db_dy, true);
                check_one(pair.b, pair.db_dz, false);
                check_one(pair.phi, pair.dphi_dy, true);
                check_one(pair.phi, pair.dphi_dz, false);
            }
            check.passed = check.statistic <= tol;
            if (!check.passed) check.note = "Jacobian mismatch";
        }
        report.checks.push_back(check);
    }

    for (const auto& c : report.checks) {
        report.all_passed = report.all_passed && c.passed;
    }
    return report;
}

}  // namespace mfsde
