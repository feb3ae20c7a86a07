#include "mfsde/experiment.hpp"

#include "mfsde/bel.hpp"
#include "mfsde/caratheodory.hpp"
#include "mfsde/common.hpp"
#include "mfsde/engine.hpp"
#include "mfsde/measure.hpp"
#include "mfsde/mollify.hpp"
#include "mfsde/oracles.hpp"
#include "mfsde/tangent.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <sstream>

namespace mfsde {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
    throw config_error("config: " + msg);
}

void check_object(const json& j, const std::string& where) {
    if (!j.is_object()) fail(where + " must be an object");
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) fail("unknown key \"" + it.key() + "\" in " + where);
    }
}

double as_double(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(where + " must be finite");
    return d;
}

std::uint64_t as_uint(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const long long i = v.get<long long>();
        if (i < 0) fail(where + " must be nonnegative");
        return static_cast<std::uint64_t>(i);
    }
    fail(where + " must be an integer");
}

std::size_t as_count(const json& v, const std::string& where,
                     std::size_t lo, std::size_t hi) {
    const std::uint64_t raw = as_uint(v, where);
    if (raw < lo || raw > hi) {
        fail(where + " must lie in [" + std::to_string(lo) + ", " +
             std::to_string(hi) + "]");
    }
    return static_cast<std::size_t>(raw);
}

std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) fail(where + " must be a string");
    return v.get<std::string>();
}

std::map<std::string, double> as_scalar_map(const json& v,
                                            const std::string& where) {
    check_object(v, where);
    std::map<std::string, double> out;
    for (auto it = v.begin(); it != v.end(); ++it) {
        out[it.key()] = as_double(it.value(), where + "." + it.key());
    }
    return out;
}

void parse_model(const json& j, ExperimentConfig& cfg) {
    check_object(j, "model");
    check_keys(j, "model", {"id", "params"});
    if (!j.contains("id")) fail("model.id is required");
    cfg.model_id = as_string(j.at("id"), "model.id");
    if (!j.contains("params")) return;
    const json& p = j.at("params");
    check_object(p, "model.params");
    for (auto it = p.begin(); it != p.end(); ++it) {
        const std::string where = "model.params." + it.key();
        const json& v = it.value();
        if (v.is_number()) {
            cfg.model_params.scalars[it.key()] = as_double(v, where);
        } else if (v.is_array()) {
            std::vector<double> arr;
            arr.reserve(v.size());
            for (const json& e : v) arr.push_back(as_double(e, where + "[]"));
            cfg.model_params.arrays[it.key()] = std::move(arr);
        } else {
            fail(where + " must be a number or an array of numbers");
        }
    }
}

void parse_grid(const json& j, ExperimentConfig& cfg) {
    check_object(j, "grid");
    check_keys(j, "grid", {"T", "steps"});
    if (!j.contains("T") || !j.contains("steps")) {
        fail("grid requires both T and steps");
    }
    cfg.horizon = as_double(j.at("T"), "grid.T");
    if (!(cfg.horizon > 0.0)) fail("grid.T must be positive");
    cfg.steps = as_count(j.at("steps"), "grid.steps", 1, 10'000'000);
}

void parse_payoff(const json& j, ExperimentConfig& cfg) {
    check_object(j, "payoff");
    check_keys(j, "payoff", {"id", "params", "epsilon"});
    if (j.contains("id")) cfg.payoff.id = as_string(j.at("id"), "payoff.id");
    if (j.contains("params")) {
        cfg.payoff.params = as_scalar_map(j.at("params"), "payoff.params");
    }
    if (j.contains("epsilon")) {
        cfg.payoff.epsilon = as_double(j.at("epsilon"), "payoff.epsilon");
        if (!(cfg.payoff.epsilon > 0.0)) fail("payoff.epsilon must be positive");
    }
}

void parse_estimators(const json& j, ExperimentConfig& cfg) {
    if (!j.is_array() || j.empty()) {
        fail("estimators must be a non-empty array of strings");
    }
    cfg.estimators.clear();
    for (const json& e : j) {
        const std::string name = as_string(e, "estimators[]");
        if (name != "bel" && name != "pathwise" && name != "fd") {
            fail("estimators[] must be one of \"bel\", \"pathwise\", \"fd\"");
        }
        cfg.estimators.push_back(name);
    }
}

void parse_mollify(const json& j, ExperimentConfig& cfg) {
    check_object(j, "mollify");
    check_keys(j, "mollify", {"bandwidth", "quadrature_order"});
    MollifySection m;
    if (j.contains("bandwidth")) {
        m.bandwidth = as_double(j.at("bandwidth"), "mollify.bandwidth");
        if (!(m.bandwidth > 0.0)) fail("mollify.bandwidth must be positive");
    }
    if (j.contains("quadrature_order")) {
        m.quadrature_order =
            as_count(j.at("quadrature_order"), "mollify.quadrature_order", 2,
                     4096);
    }
    cfg.mollify = m;
}

void parse_picard(const json& j, ExperimentConfig& cfg) {
    check_object(j, "picard");
    check_keys(j, "picard", {"max_iter", "tol"});
    PicardSection p;
    if (j.contains("max_iter")) {
        p.max_iter = as_count(j.at("max_iter"), "picard.max_iter", 1, 1000);
    }
    if (j.contains("tol")) {
        p.tol = as_double(j.at("tol"), "picard.tol");
        if (!(p.tol > 0.0)) fail("picard.tol must be positive");
    }
    cfg.picard = p;
}

void parse_hoelder(const json& j, ExperimentConfig& cfg) {
    check_object(j, "hoelder");
    check_keys(j, "hoelder", {"initial_points", "time_probes"});
    HoelderSection h;
    if (j.contains("initial_points")) {
        const json& pts = j.at("initial_points");
        if (!pts.is_array() || pts.empty()) {
            fail("hoelder.initial_points must be a non-empty array");
        }
        for (const json& e : pts) {
            h.initial_points.push_back(
                as_double(e, "hoelder.initial_points[]"));
        }
    }
    if (j.contains("time_probes")) {
        h.time_probes =
            as_count(j.at("time_probes"), "hoelder.time_probes", 1, 10'000);
    }
    cfg.hoelder = h;
}

void parse_lamperti(const json& j, ExperimentConfig& cfg) {
    check_object(j, "lamperti");
    check_keys(j, "lamperti",
               {"sigma", "anchor", "quad_tol", "w1_bound", "map_probes"});
    LampertiSection lam;
    if (!j.contains("sigma")) fail("lamperti.sigma is required");
    const json& s = j.at("sigma");
    check_object(s, "lamperti.sigma");
    check_keys(s, "lamperti.sigma", {"id", "params"});
    if (!s.contains("id")) fail("lamperti.sigma.id is required");
    lam.sigma.id = as_string(s.at("id"), "lamperti.sigma.id");
    if (s.contains("params")) {
        lam.sigma.params =
            as_scalar_map(s.at("params"), "lamperti.sigma.params");
    }
    if (j.contains("anchor")) {
        lam.anchor = as_double(j.at("anchor"), "lamperti.anchor");
    }
    if (j.contains("quad_tol")) {
        lam.quad_tol = as_double(j.at("quad_tol"), "lamperti.quad_tol");
        if (!(lam.quad_tol > 0.0 && lam.quad_tol < 1.0)) {
            fail("lamperti.quad_tol must lie in (0, 1)");
        }
    }
    if (j.contains("w1_bound")) {
        lam.w1_bound = as_double(j.at("w1_bound"), "lamperti.w1_bound");
        if (!(lam.w1_bound > 0.0)) fail("lamperti.w1_bound must be positive");
    }
    if (j.contains("map_probes")) {
        lam.map_probes =
            as_count(j.at("map_probes"), "lamperti.map_probes", 2, 1'000'000);
    }
    cfg.lamperti = lam;
}

void parse_converge(const json& j, ExperimentConfig& cfg) {
    check_object(j, "converge");
    check_keys(j, "converge", {"sweep", "values", "metric"});
    ConvergeSection c;
    if (j.contains("sweep")) {
        c.sweep = as_string(j.at("sweep"), "converge.sweep");
        if (c.sweep != "steps" && c.sweep != "particles") {
            fail("converge.sweep must be \"steps\" or \"particles\"");
        }
    }
    if (!j.contains("values")) fail("converge.values is required");
    const json& vals = j.at("values");
    if (!vals.is_array() || vals.empty()) {
        fail("converge.values must be a non-empty array of integers");
    }
    const std::size_t lo = c.sweep == "particles" ? 2 : 1;
    for (const json& e : vals) {
        c.values.push_back(
            as_count(e, "converge.values[]", lo, 100'000'000));
    }
    if (j.contains("metric")) {
        c.metric = as_string(j.at("metric"), "converge.metric");
        if (c.metric != "abs_bias") {
            fail("converge.metric: only \"abs_bias\" is supported");
        }
    }
    cfg.converge = c;
}

void parse_ode(const json& j, ExperimentConfig& cfg) {
    check_object(j, "ode");
    check_keys(j, "ode", {"substeps", "tolerance"});
    OdeSection o;
    if (j.contains("substeps")) {
        o.substeps = as_count(j.at("substeps"), "ode.substeps", 1, 10'000);
    }
    if (j.contains("tolerance")) {
        const double tol = as_double(j.at("tolerance"), "ode.tolerance");
        if (!(tol > 0.0)) fail("ode.tolerance must be positive");
        o.tolerance = tol;
    }
    cfg.ode = o;
}

std::string hex16(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xfu];
        v >>= 4;
    }
    return out;
}

std::string iso_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double model_scalar_or(const ModelParams& params, const std::string& key,
                       double dflt) {
    const auto it = params.scalars.find(key);
    return it == params.scalars.end() ? dflt : it->second;
}

double fd_bump(double x0) { return 1e-4 * std::max(1.0, std::abs(x0)); }

std::string resolve_output_path(const std::string& output) {
    namespace fs = std::filesystem;
    fs::path p(output);
    if (const char* dir = std::getenv("MFSDE_OUTPUT_DIR")) {
        if (*dir != '\0') p = fs::path(dir) / p.filename();
    }
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    return p.string();
}

SubcommandResult run_simulate(const ExperimentConfig& cfg, int workers) {
    const CoefficientPair pair = build_pair(cfg);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    const PathEnsemble ens =
        simulate(pair, grid, cfg.particles, cfg.x0, cfg.seed, workers);
    const auto curve = law_curve_for(cfg.model_id, cfg.model_params, cfg.x0,
                                     cfg.horizon, cfg.steps);

    SubcommandResult res;
    res.table.header = {"time", "mean", "variance"};
    if (curve) res.table.header.push_back("w1_to_oracle");
    std::vector<double> dev(cfg.particles, 0.0);
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        const auto level = ens.level(k);
        const double m = pairwise_mean(level);
        const double v = population_variance(level, m);
        std::vector<std::string> row{csv_cell(grid.times[k]), csv_cell(m),
                                     csv_cell(v)};
        if (curve) {
            double w1;
            if (curve->stddev[k] > 0.0) {
                w1 = wasserstein1_gaussian(ens.snapshot(k), curve->mean[k],
                                           curve->stddev[k]);
            } else {
                // degenerate oracle law (t = 0): W1 against a point mass
                for (std::size_t i = 0; i < cfg.particles; ++i) {
                    dev[i] = std::abs(ens.state(k, i) - curve->mean[k]);
                }
                w1 = pairwise_mean(dev.data(), cfg.particles);
            }
            row.push_back(csv_cell(w1));
        }
        res.table.rows.push_back(std::move(row));
    }
    return res;
}

SubcommandResult run_delta(const ExperimentConfig& cfg, int workers) {
    const CoefficientPair pair = build_pair(cfg);
    if (!pair.flags.smooth) {
        throw config_error("delta: model \"" + cfg.model_id +
                           "\" has no Jacobians; add a mollify section");
    }
    const Payoff payoff = make_payoff(cfg.payoff.id, cfg.payoff.params);
    const PayoffCheck gate =
        validate_payoff(payoff, cfg.horizon, cfg.payoff.epsilon);
    if (!gate.finite) {
        std::ostringstream msg;
        msg << "delta: payoff \"" << cfg.payoff.id
            << "\" fails the integrability gate (exponent " << gate.exponent
            << ", growth ratio " << gate.growth_ratio << ")";
        throw config_error(msg.str());
    }

    const TimeGrid grid(cfg.horizon, cfg.steps);
    bool needs_paths = false;
    for (const std::string& est : cfg.estimators) {
        if (est != "fd") needs_paths = true;
    }
    PathEnsemble ens;
    TangentEnsemble tang;
    if (needs_paths) {
        ens = simulate(pair, grid, cfg.particles, cfg.x0, cfg.seed, workers);
        tang = propagate_tangent(ens, pair, workers);
    }

    SubcommandResult res;
    res.table.header = {"method", "value", "std_error", "n_samples"};
    for (const std::string& est : cfg.estimators) {
        DeltaEstimate d;
        if (est == "bel") {
            const WeightSchedule schedule =
                build_schedule(cfg.weight_schedule, grid);
            d = delta_bel(ens, tang, pair, payoff, schedule,
                          CorrectionAnchor::solution, workers);
        } else if (est == "pathwise") {
            if (!payoff.has_dphi()) {
                throw config_error(
                    "delta: payoff \"" + cfg.payoff.id +
                    "\" has no derivative for the pathwise estimator");
            }
            d = delta_pathwise(ens, tang, payoff);
        } else {
            d = delta_fd(pair, grid, cfg.particles, cfg.x0, fd_bump(cfg.x0),
                         cfg.seed, payoff, workers);
        }
        res.table.rows.push_back({d.method, csv_cell(d.value),
                                  csv_cell(d.std_error),
                                  csv_cell(d.n_samples)});
    }
    return res;
}

SubcommandResult run_picard(const ExperimentConfig& cfg, int workers) {
    const CoefficientPair pair = build_pair(cfg);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    const PicardSection ps = cfg.picard.value_or(PicardSection{});
    const PicardResult pr =
        picard_iterate(pair, grid, cfg.particles, cfg.x0, cfg.seed,
                       ps.max_iter, ps.tol, workers);

    SubcommandResult res;
    res.table.header = {"iteration", "sup_w1"};
    for (std::size_t i = 0; i < pr.history.size(); ++i) {
        res.table.rows.push_back(
            {csv_cell(i + 1), csv_cell(pr.history[i])});
    }
    return res;
}

SubcommandResult run_ode(const ExperimentConfig& cfg, int workers) {
    bool mean_feedback = cfg.model_id == "zero_drift" ||
                         cfg.model_id == "expectation_drift" ||
                         cfg.model_id == "custom_table";
    if (cfg.model_id == "mean_field_ou") {
        mean_feedback = model_scalar_or(cfg.model_params, "a", -1.0) == 0.0;
    }
    if (!mean_feedback) {
        throw config_error(
            "ode: the drift must depend on the state only through its mean "
            "(zero_drift, expectation_drift, custom_table, or mean_field_ou "
            "with a = 0)");
    }

    const CoefficientPair pair = build_pair(cfg);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    const OdeSection os = cfg.ode.value_or(OdeSection{});
    const auto b_mean = [pair](double t, double z) {
        return pair.b(t, 0.0, z);
    };
    const CaratheodoryResult cr = caratheodory_solve(
        b_mean, cfg.x0, grid, cfg.particles, cfg.seed, os.substeps, workers);

    // Heuristic default: Monte Carlo fluctuation of the mean plus the Euler
    // bias, both with generous slack; override with ode.tolerance.
    const double scale = 1.0 + std::abs(cfg.x0);
    const double tol = os.tolerance.value_or(
        4.0 * std::sqrt(grid.horizon / static_cast<double>(cfg.particles)) *
            scale +
        4.0 * grid.dt * scale);

    SubcommandResult res;
    res.table.header = {"time", "mc_mean", "rk4", "gap"};
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        res.table.rows.push_back(
            {csv_cell(cr.times[k]), csv_cell(cr.mc_mean[k]),
             csv_cell(cr.ode_mean[k]),
             csv_cell(cr.mc_mean[k] - cr.ode_mean[k])});
    }
    if (cr.max_gap > tol) {
        res.exit_code = 4;
        std::ostringstream msg;
        msg << "ode: max |mc_mean - rk4| = " << cr.max_gap
            << " exceeds tolerance " << tol;
        res.failure = msg.str();
    }
    return res;
}

SubcommandResult run_hoelder(const ExperimentConfig& cfg, int workers) {
    const CoefficientPair pair = build_pair(cfg);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    HoelderSection hs = cfg.hoelder.value_or(HoelderSection{});
    if (hs.initial_points.empty()) {
        hs.initial_points = {cfg.x0 - 1.0, cfg.x0, cfg.x0 + 1.0};
    }
    const HoelderReport rep =
        hoelder_probe(pair, grid, cfg.particles, hs.initial_points, cfg.seed,
                      hs.time_probes, workers);

    SubcommandResult res;
    res.table.header = {"pair_id", "lhs", "rhs_bound", "ratio"};
    for (const HoelderRow& row : rep.rows) {
        res.table.rows.push_back(
            {csv_cell(row.pair_id), csv_cell(row.lhs),
             csv_cell(rep.c_hat * row.denom), csv_cell(row.ratio)});
    }
    return res;
}

SubcommandResult run_lamperti_check(const ExperimentConfig& cfg,
                                    int workers) {
    if (!cfg.lamperti) {
        throw config_error(
            "lamperti-check: config must contain a lamperti section");
    }
    const LampertiSection& ls = *cfg.lamperti;
    const DiffusionSpec spec =
        make_diffusion(ls.sigma.id, ls.sigma.params);
    const LampertiMap map = build_map(spec, ls.anchor, ls.quad_tol);
    const MapProbeReport probe =
        probe_map(map, spec, ls.map_probes, cfg.seed);

    const CoefficientPair pair = build_pair(cfg);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    const RoundTripReport rt = roundtrip_check(
        pair, spec, map, grid, cfg.particles, cfg.x0, cfg.seed, workers);

    const double inf = std::numeric_limits<double>::infinity();
    SubcommandResult res;
    res.table.header = {"check", "value", "bound", "pass"};
    std::vector<std::string> failed;
    // gated == false marks informational rows that never fail the run.
    const auto add = [&res, &failed](const std::string& name, double value,
                                     double bound, bool pass,
                                     bool gated = true) {
        res.table.rows.push_back({name, csv_cell(value), csv_cell(bound),
                                  pass ? "1" : "0"});
        if (gated && !pass) failed.push_back(name);
    };
    add("derivative_identity", probe.max_derivative_defect, 1e-8,
        probe.max_derivative_defect <= 1e-8);
    add("inverse_roundtrip", probe.max_roundtrip_error, 1e-8,
        probe.max_roundtrip_error <= 1e-8);
    add("monotone", probe.monotone ? 1.0 : 0.0, 1.0, probe.monotone);
    add("inverse_lipschitz", probe.inverse_lipschitz, inf, true, false);
    add("roundtrip_w1", rt.w1, ls.w1_bound, rt.w1 <= ls.w1_bound);
    add("roundtrip_coupled_gap", rt.mean_abs_gap, inf, true, false);
    if (!failed.empty()) {
        res.exit_code = 4;
        std::string names;
        for (const auto& name : failed) {
            if (!names.empty()) names += ", ";
            names += name;
        }
        res.failure = "lamperti-check: failed: " + names;
    }
    return res;
}

SubcommandResult run_converge(const ExperimentConfig& cfg, int workers) {
    if (!cfg.converge) {
        throw config_error(
            "converge: config must contain a converge section");
    }
    const ConvergeSection& cs = *cfg.converge;
    if (!law_curve_for(cfg.model_id, cfg.model_params, cfg.x0, cfg.horizon,
                       1)) {
        throw config_error("converge: model \"" + cfg.model_id +
                           "\" has no terminal-mean oracle");
    }
    const CoefficientPair pair = build_pair(cfg);
    const bool sweep_steps = cs.sweep == "steps";

    SubcommandResult res;
    res.table.header = {sweep_steps ? "steps" : "particles", "metric",
                        "value", "std_error"};
    for (const std::size_t v : cs.values) {
        const std::size_t steps = sweep_steps ? v : cfg.steps;
        const std::size_t particles = sweep_steps ? cfg.particles : v;
        const TimeGrid grid(cfg.horizon, steps);
        auto noise = generate_noise(cfg.seed, particles, grid, workers);
        const std::vector<double> terminal =
            simulate_terminal(pair, grid, cfg.x0, *noise, workers);
        noise.reset();
        const double m = pairwise_mean(terminal.data(), particles);
        const double var = population_variance(terminal, m);
        const double se = std::sqrt(var / static_cast<double>(particles));
        const auto curve = law_curve_for(cfg.model_id, cfg.model_params,
                                         cfg.x0, cfg.horizon, steps);
        const double exact = curve->mean.back();
        res.table.rows.push_back({csv_cell(v), cs.metric,
                                  csv_cell(std::abs(m - exact)),
                                  csv_cell(se)});
    }
    return res;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(e.what());
    }
    check_object(j, "config");
    check_keys(j, "config",
               {"model", "grid", "particles", "x0", "seed", "payoff",
                "weight_schedule", "estimators", "mollify", "picard",
                "hoelder", "lamperti", "converge", "ode", "output"});
    for (const char* key : {"model", "grid", "particles", "x0", "seed",
                            "output"}) {
        if (!j.contains(key)) {
            fail(std::string("required key \"") + key + "\" is missing");
        }
    }

    ExperimentConfig cfg;
    cfg.estimators = {"bel", "pathwise", "fd"};
    parse_model(j.at("model"), cfg);
    parse_grid(j.at("grid"), cfg);
    cfg.particles = as_count(j.at("particles"), "particles", 2, 100'000'000);
    cfg.x0 = as_double(j.at("x0"), "x0");
    cfg.seed = as_uint(j.at("seed"), "seed");
    cfg.output = as_string(j.at("output"), "output");
    if (cfg.output.empty()) fail("output must be a non-empty path");
    if (j.contains("payoff")) parse_payoff(j.at("payoff"), cfg);
    if (j.contains("weight_schedule")) {
        cfg.weight_schedule =
            as_string(j.at("weight_schedule"), "weight_schedule");
        if (cfg.weight_schedule != "constant" &&
            cfg.weight_schedule != "linear_ramp") {
            fail("weight_schedule must be \"constant\" or \"linear_ramp\"");
        }
    }
    if (j.contains("estimators")) parse_estimators(j.at("estimators"), cfg);
    if (j.contains("mollify")) parse_mollify(j.at("mollify"), cfg);
    if (j.contains("picard")) parse_picard(j.at("picard"), cfg);
    if (j.contains("hoelder")) parse_hoelder(j.at("hoelder"), cfg);
    if (j.contains("lamperti")) parse_lamperti(j.at("lamperti"), cfg);
    if (j.contains("converge")) parse_converge(j.at("converge"), cfg);
    if (j.contains("ode")) parse_ode(j.at("ode"), cfg);

    cfg.canonical = j.dump();
    cfg.digest = fnv1a64(cfg.canonical);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

DiffusionSpec make_diffusion(const std::string& id,
                             const std::map<std::string, double>& params) {
    const auto check_params =
        [&](std::initializer_list<const char*> allowed) {
            for (const auto& [key, value] : params) {
                bool known = false;
                for (const char* k : allowed) {
                    if (key == k) {
                        known = true;
                        break;
                    }
                }
                if (!known) {
                    throw config_error("sigma \"" + id +
                                       "\": unknown parameter \"" + key +
                                       "\"");
                }
                if (!std::isfinite(value)) {
                    throw config_error("sigma \"" + id + "\": parameter \"" +
                                       key + "\" must be finite");
                }
            }
        };
    const auto param_or = [&](const char* key, double dflt) {
        const auto it = params.find(key);
        return it == params.end() ? dflt : it->second;
    };

    DiffusionSpec spec;
    if (id == "constant") {
        check_params({"value"});
        const double v = param_or("value", 1.0);
        if (!(v > 0.0)) {
            throw config_error("sigma \"constant\": value must be positive");
        }
        spec.sigma = [v](double) { return v; };
        spec.dsigma = [](double) { return 0.0; };
        spec.d2sigma = [](double) { return 0.0; };
    } else if (id == "sqrt_quadratic") {
        check_params({});
        spec.sigma = [](double y) { return std::sqrt(1.0 + y * y); };
        spec.dsigma = [](double y) { return y / std::sqrt(1.0 + y * y); };
        spec.d2sigma = [](double y) {
            const double s = 1.0 + y * y;
            return 1.0 / (s * std::sqrt(s));
        };
    } else if (id == "bounded_sine") {
        check_params({"base", "amplitude"});
        const double base = param_or("base", 2.0);
        const double amp = param_or("amplitude", 0.5);
        if (!(base - std::abs(amp) > 0.0)) {
            throw config_error(
                "sigma \"bounded_sine\": base must exceed |amplitude|");
        }
        spec.sigma = [base, amp](double y) { return base + amp * std::sin(y); };
        spec.dsigma = [amp](double y) { return amp * std::cos(y); };
        spec.d2sigma = [amp](double y) { return -amp * std::sin(y); };
    } else {
        throw config_error("unknown sigma id \"" + id + "\"");
    }
    return spec;
}

CoefficientPair build_pair(const ExperimentConfig& cfg) {
    CoefficientPair pair = make_builtin(cfg.model_id, cfg.model_params);
    if (cfg.mollify) {
        MollifyConfig mc;
        mc.bandwidth = cfg.mollify->bandwidth;
        mc.quadrature_order = cfg.mollify->quadrature_order;
        pair = mollify(pair, mc);
    }
    return pair;
}

std::optional<LawCurve> law_curve_for(const std::string& model_id,
                                      const ModelParams& params, double x0,
                                      double horizon, std::size_t steps) {
    // Parameter defaults below mirror make_builtin.
    const TimeGrid grid(horizon, steps);
    LawCurve curve;
    curve.mean.resize(steps + 1);
    curve.stddev.resize(steps + 1);
    if (model_id == "zero_drift") {
        for (std::size_t k = 0; k <= steps; ++k) {
            curve.mean[k] = x0;
            curve.stddev[k] = std::sqrt(grid.times[k]);
        }
    } else if (model_id == "expectation_drift") {
        const double rate = model_scalar_or(params, "rate", -1.0);
        for (std::size_t k = 0; k <= steps; ++k) {
            curve.mean[k] = x0 * std::exp(rate * grid.times[k]);
            curve.stddev[k] = std::sqrt(grid.times[k]);
        }
    } else if (model_id == "mean_field_ou") {
        OuOracle oracle;
        oracle.a = model_scalar_or(params, "a", -1.0);
        oracle.c = model_scalar_or(params, "c", 0.5);
        oracle.x0 = x0;
        for (std::size_t k = 0; k <= steps; ++k) {
            curve.mean[k] = oracle.mean(grid.times[k]);
            curve.stddev[k] = std::sqrt(oracle.variance(grid.times[k]));
        }
    } else if (model_id == "cdf_drift" || model_id == "smoothed_cdf_drift") {
        const double threshold = model_scalar_or(params, "threshold", 0.0);
        const double width = model_id == "smoothed_cdf_drift"
                                 ? model_scalar_or(params, "width", 0.1)
                                 : 0.0;
        const std::size_t refine = 8;
        const CdfDriftOracle oracle = cdf_drift_oracle(
            threshold, x0, horizon, steps * refine, width);
        for (std::size_t k = 0; k <= steps; ++k) {
            curve.mean[k] = x0 + oracle.shift[k * refine];
            curve.stddev[k] = std::sqrt(grid.times[k]);
        }
    } else {
        return std::nullopt;
    }
    return curve;
}

SubcommandResult run_subcommand(const std::string& subcommand,
                                const ExperimentConfig& cfg, int workers) {
    if (workers < 1) throw config_error("workers must be >= 1");
    if (subcommand == "simulate") return run_simulate(cfg, workers);
    if (subcommand == "delta") return run_delta(cfg, workers);
    if (subcommand == "picard") return run_picard(cfg, workers);
    if (subcommand == "ode") return run_ode(cfg, workers);
    if (subcommand == "hoelder") return run_hoelder(cfg, workers);
    if (subcommand == "lamperti-check") return run_lamperti_check(cfg, workers);
    if (subcommand == "converge") return run_converge(cfg, workers);
    throw config_error("unknown subcommand \"" + subcommand + "\"");
}

int run_experiment(const std::string& subcommand,
                   const std::string& config_path, int workers,
                   std::ostream& err) {
    try {
        const ExperimentConfig cfg = parse_config_file(config_path);
        SubcommandResult res = run_subcommand(subcommand, cfg, workers);
        CsvTable table = std::move(res.table);
        std::vector<std::string> meta;
        meta.push_back("mfsde " + subcommand +
                       " config_digest=" + hex16(cfg.digest) +
                       " seed=" + std::to_string(cfg.seed));
        meta.push_back("generated " + iso_utc_now());
        table.comments.insert(table.comments.begin(), meta.begin(),
                              meta.end());
        write_csv_file(resolve_output_path(cfg.output), table);
        if (res.exit_code != 0) {
            err << "error code=" << res.exit_code << " kind=check: "
                << res.failure << '\n';
            return res.exit_code;
        }
        return 0;
    } catch (const config_error& e) {
        err << "error code=2 kind=config: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error code=2 kind=config: " << e.what() << '\n';
        return 2;
    } catch (const numerical_error& e) {
        err << "error code=3 kind=numerical: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error code=3 kind=runtime: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace mfsde
