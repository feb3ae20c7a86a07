#pragma once

#include "mfsde/coefficients.hpp"
#include "mfsde/csv.hpp"
#include "mfsde/lamperti.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mfsde {

// Parsed experiment description. The on-disk format is strict JSON with the
// sections below (see README for the schema); unknown keys, wrong types and
// out-of-range values raise config_error.

struct PayoffSection {
    std::string id = "identity";
    std::map<std::string, double> params;
    double epsilon = 0.5;  // exponent parameter of the integrability gate
};

struct MollifySection {
    double bandwidth = 0.1;
    std::size_t quadrature_order = 64;
};

struct PicardSection {
    std::size_t max_iter = 8;
    double tol = 1e-3;
};

struct HoelderSection {
    std::vector<double> initial_points;  // default {x0 - 1, x0, x0 + 1}
    std::size_t time_probes = 8;
};

struct SigmaSection {
    std::string id = "constant";
    std::map<std::string, double> params;
};

struct LampertiSection {
    SigmaSection sigma;
    double anchor = 0.0;
    double quad_tol = 1e-12;
    double w1_bound = 0.05;  // round-trip acceptance threshold
    std::size_t map_probes = 1000;
};

struct ConvergeSection {
    std::string sweep = "steps";  // "steps" | "particles"
    std::vector<std::size_t> values;
    std::string metric = "abs_bias";
};

struct OdeSection {
    std::size_t substeps = 8;
    std::optional<double> tolerance;  // default derived from N and dt
};

struct ExperimentConfig {
    std::string model_id = "zero_drift";
    ModelParams model_params;
    double horizon = 1.0;
    std::size_t steps = 100;
    std::size_t particles = 1000;
    double x0 = 0.0;
    std::uint64_t seed = 1;
    PayoffSection payoff;
    std::string weight_schedule = "constant";
    std::vector<std::string> estimators{"bel", "pathwise", "fd"};
    std::optional<MollifySection> mollify;
    std::optional<PicardSection> picard;
    std::optional<HoelderSection> hoelder;
    std::optional<LampertiSection> lamperti;
    std::optional<ConvergeSection> converge;
    std::optional<OdeSection> ode;
    std::string output = "out.csv";

    std::string canonical;     // sorted-key minified dump, basis of `digest`
    std::uint64_t digest = 0;  // fnv1a64(canonical)
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Builtin volatility functions for the transform checks:
//   constant        sigma = value                      {value}, default 1
//   sqrt_quadratic  sigma = sqrt(1 + y^2)
//   bounded_sine    sigma = base + amplitude*sin(y)    {base, amplitude}
DiffusionSpec make_diffusion(const std::string& id,
                             const std::map<std::string, double>& params = {});

// Model coefficients with the optional mollify section applied.
CoefficientPair build_pair(const ExperimentConfig& cfg);

// Exact marginal law N(mean_k, stddev_k^2) at every grid node for models
// whose continuous-time solution is Gaussian; empty for custom_table.
struct LawCurve {
    std::vector<double> mean;
    std::vector<double> stddev;
};

std::optional<LawCurve> law_curve_for(const std::string& model_id,
                                      const ModelParams& params, double x0,
                                      double horizon, std::size_t steps);

struct SubcommandResult {
    CsvTable table;
    int exit_code = 0;    // 0 ok; 4 = check-mode tolerance violation
    std::string failure;  // reason when exit_code != 0
};

// Executes one subcommand (simulate, delta, picard, ode, hoelder,
// lamperti-check, converge) against a parsed config. Throws config_error for
// semantic configuration problems, numerical_error for simulation failures;
// check modes report tolerance violations through exit_code 4 after still
// producing their table.
SubcommandResult run_subcommand(const std::string& subcommand,
                                const ExperimentConfig& cfg, int workers = 1);

// Full pipeline used by the command-line tool: parse the config file, run
// the subcommand, resolve the output path (the MFSDE_OUTPUT_DIR environment
// variable overrides the directory part), prepend metadata comments
//   # mfsde <subcommand> config_digest=<hex16> seed=<n>
//   # generated <ISO-8601 UTC>
// and write the CSV. Errors map to exit codes 2 (configuration),
// 3 (numerical/runtime), 4 (check-mode mismatch); the reason is written to
// `err` as a single line "error code=<n> kind=<kind>: <message>".
int run_experiment(const std::string& subcommand,
                   const std::string& config_path, int workers,
                   std::ostream& err);

}  // namespace mfsde
