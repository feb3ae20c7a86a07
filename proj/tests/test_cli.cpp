#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfsde/common.hpp"
#include "mfsde/csv.hpp"
#include "mfsde/experiment.hpp"
#include "mfsde/oracles.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace mfsde;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal = R"({
  "model": {"id": "mean_field_ou", "params": {"a": -1.0, "c": 0.5}},
  "grid": {"T": 1.0, "steps": 32},
  "particles": 500,
  "x0": 1.0,
  "seed": 7,
  "output": "run.csv"
})";

ExperimentConfig minimal() { return parse_config_text(kMinimal); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// File contents with the volatile timestamp comment removed.
std::string stable_body(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# generated", 0) == 0) continue;
        out << line << '\n';
    }
    return out.str();
}

struct CliRun {
    int exit_code = -1;
    std::string stderr_text;
};

// Runs the installed binary through the shell; `env_prefix` may export
// variables for the child only.
CliRun run_cli(const std::string& args, const fs::path& dir,
               const std::string& env_prefix = "") {
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = env_prefix + std::string(MFSDE_CLI_PATH) + " " +
                            args + " 2>" + err_file.string();
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.stderr_text = slurp(err_file);
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mfsde_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static std::size_t& counter() {
        static std::size_t c = 0;
        return c;
    }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << text;
}

}  // namespace

TEST_CASE("config parsing: defaults and canonical digest") {
    const auto cfg = minimal();
    CHECK(cfg.model_id == "mean_field_ou");
    CHECK(cfg.steps == 32);
    CHECK(cfg.particles == 500);
    CHECK(cfg.seed == 7);
    CHECK(cfg.payoff.id == "identity");
    CHECK(cfg.weight_schedule == "constant");
    REQUIRE(cfg.estimators.size() == 3);
    CHECK_FALSE(cfg.mollify.has_value());
    CHECK(cfg.digest != 0);
    CHECK(!cfg.canonical.empty());

    // Whitespace and key order are canonicalized away.
    const std::string reordered = R"({"output":"run.csv","seed":7,
        "x0":1.0,"particles":500,
        "grid":{"steps":32,"T":1.0},
        "model":{"params":{"c":0.5,"a":-1.0},"id":"mean_field_ou"}})";
    const auto cfg2 = parse_config_text(reordered);
    CHECK(cfg2.canonical == cfg.canonical);
    CHECK(cfg2.digest == cfg.digest);

    // Any semantic change moves the digest.
    std::string changed = kMinimal;
    changed.replace(changed.find("\"seed\": 7"), 9, "\"seed\": 8");
    CHECK(parse_config_text(changed).digest != cfg.digest);
}

TEST_CASE("config parsing: strictness") {
    // Unknown keys are rejected at every nesting level.
    CHECK_THROWS_AS(parse_config_text(R"({"model": {"id": "zero_drift"},
        "grid": {"T": 1, "steps": 2}, "particles": 2, "x0": 0,
        "seed": 1, "output": "o.csv", "extra": 1})"),
                    config_error);
    CHECK_THROWS_AS(parse_config_text(R"({"model": {"id": "zero_drift"},
        "grid": {"T": 1, "steps": 2, "dt": 0.5}, "particles": 2,
        "x0": 0, "seed": 1, "output": "o.csv"})"),
                    config_error);
    CHECK_THROWS_AS(parse_config_text(R"({"model": {"id": "zero_drift"},
        "grid": {"T": 1, "steps": 2}, "particles": 2, "x0": 0,
        "seed": 1, "output": "o.csv",
        "payoff": {"id": "call", "spread": 1}})"),
                    config_error);

    // Missing required keys.
    CHECK_THROWS_AS(parse_config_text(R"({"grid": {"T": 1, "steps": 2},
        "particles": 2, "x0": 0, "seed": 1, "output": "o.csv"})"),
                    config_error);
    CHECK_THROWS_AS(parse_config_text(R"({"model": {"id": "zero_drift"},
        "grid": {"T": 1, "steps": 2}, "particles": 2, "x0": 0,
        "seed": 1})"),
                    config_error);

    // Type and range violations.
    const auto bad = [](const std::string& mutation) {
        std::string text = kMinimal;
        const auto pos = text.find("\"particles\": 500");
        text.replace(pos, 16, mutation);
        CHECK_THROWS_AS(parse_config_text(text), config_error);
    };
    bad("\"particles\": 1");          // below minimum
    bad("\"particles\": 2.5");        // not an integer
    bad("\"particles\": \"many\"");   // wrong type
    bad("\"particles\": -4");         // negative

    std::string neg_seed = kMinimal;
    neg_seed.replace(neg_seed.find("\"seed\": 7"), 9, "\"seed\": -1");
    CHECK_THROWS_AS(parse_config_text(neg_seed), config_error);

    // Malformed JSON and unknown enum values.
    CHECK_THROWS_AS(parse_config_text("{"), config_error);
    std::string bad_est = kMinimal;
    bad_est.insert(bad_est.rfind('}'), R"(, "estimators": ["bel", "magic"])");
    CHECK_THROWS_AS(parse_config_text(bad_est), config_error);
    std::string bad_sched = kMinimal;
    bad_sched.insert(bad_sched.rfind('}'),
                     R"(, "weight_schedule": "quadratic")");
    CHECK_THROWS_AS(parse_config_text(bad_sched), config_error);
    std::string bad_sweep = kMinimal;
    bad_sweep.insert(bad_sweep.rfind('}'),
                     R"(, "converge": {"sweep": "seeds", "values": [2, 4]})");
    CHECK_THROWS_AS(parse_config_text(bad_sweep), config_error);
    std::string no_sigma = kMinimal;
    no_sigma.insert(no_sigma.rfind('}'), R"(, "lamperti": {"anchor": 0.0})");
    CHECK_THROWS_AS(parse_config_text(no_sigma), config_error);
}

TEST_CASE("volatility registry for the transform checks") {
    const auto c = make_diffusion("constant", {{"value", 2.5}});
    CHECK(c.sigma(3.0) == 2.5);
    CHECK(c.dsigma(3.0) == 0.0);
    const auto q = make_diffusion("sqrt_quadratic");
    CHECK(q.sigma(2.0) == doctest::Approx(std::sqrt(5.0)));
    const auto s = make_diffusion("bounded_sine",
                                  {{"base", 2.0}, {"amplitude", 0.5}});
    CHECK(s.sigma(0.0) == 2.0);
    CHECK(s.sigma(std::acos(-1.0) / 2.0) == doctest::Approx(2.5));

    CHECK_THROWS_AS(make_diffusion("triangle"), config_error);
    CHECK_THROWS_AS(make_diffusion("constant", {{"value", 0.0}}),
                    config_error);
    CHECK_THROWS_AS(
        make_diffusion("bounded_sine", {{"base", 0.5}, {"amplitude", 1.0}}),
        config_error);
    CHECK_THROWS_AS(make_diffusion("constant", {{"slope", 1.0}}),
                    config_error);
}

TEST_CASE("closed-form law curves exist exactly for the Gaussian models") {
    ModelParams ou;
    ou.scalars = {{"a", -1.0}, {"c", 0.5}};
    const auto curve = law_curve_for("mean_field_ou", ou, 1.0, 1.0, 10);
    REQUIRE(curve.has_value());
    REQUIRE(curve->mean.size() == 11);
    OuOracle oracle;
    CHECK(curve->mean.back() == doctest::Approx(oracle.mean(1.0)).epsilon(1e-12));
    CHECK(curve->stddev.back() ==
          doctest::Approx(std::sqrt(oracle.variance(1.0))).epsilon(1e-12));

    const auto zero = law_curve_for("zero_drift", {}, 0.5, 1.0, 4);
    REQUIRE(zero.has_value());
    CHECK(zero->mean.front() == 0.5);
    CHECK(zero->mean.back() == 0.5);
    CHECK(zero->stddev.back() == doctest::Approx(1.0));

    ModelParams cdf;
    // The drift ODE has a sqrt(t) kink at the start, so the coarse-grid
    // curve is only first-refinement accurate; the frozen high-resolution
    // value lives in the oracle fixtures.
    const auto shift = law_curve_for("cdf_drift", cdf, 0.0, 1.0, 8);
    REQUIRE(shift.has_value());
    CHECK(shift->mean.back() ==
          doctest::Approx(0.39135507226621313).epsilon(1e-4));

    ModelParams table;
    table.arrays["knots"] = {0.0, 1.0};
    table.arrays["values"] = {0.0, 1.0};
    CHECK_FALSE(law_curve_for("custom_table", table, 0.0, 1.0, 4).has_value());
}

TEST_CASE("run_subcommand: simulate schema") {
    auto cfg = minimal();
    const auto res = run_subcommand("simulate", cfg);
    CHECK(res.exit_code == 0);
    REQUIRE(res.table.header ==
            std::vector<std::string>{"time", "mean", "variance",
                                     "w1_to_oracle"});
    REQUIRE(res.table.rows.size() == cfg.steps + 1);
    CHECK(res.table.rows.front()[0] == "0");
    CHECK(std::stod(res.table.rows.front()[1]) == 1.0);  // mean at t=0 is x0
    CHECK(std::stod(res.table.rows.front()[2]) == 0.0);

    // Without a closed-form law the oracle column disappears.
    std::string table_cfg = R"({
      "model": {"id": "custom_table",
                "params": {"knots": [-1.0, 1.0], "values": [0.5, -0.5]}},
      "grid": {"T": 1.0, "steps": 8},
      "particles": 64, "x0": 0.0, "seed": 3, "output": "t.csv"})";
    const auto res2 = run_subcommand("simulate", parse_config_text(table_cfg));
    CHECK(res2.table.header ==
          std::vector<std::string>{"time", "mean", "variance"});

    CHECK_THROWS_AS(run_subcommand("teleport", cfg), config_error);
}

TEST_CASE("run_subcommand: delta schema and smoothness gate") {
    auto cfg = minimal();
    const auto res = run_subcommand("delta", cfg);
    CHECK(res.exit_code == 0);
    REQUIRE(res.table.header ==
            std::vector<std::string>{"method", "value", "std_error",
                                     "n_samples"});
    REQUIRE(res.table.rows.size() == 3);
    CHECK(res.table.rows[0][0] == "bel");
    CHECK(res.table.rows[1][0] == "pathwise");
    CHECK(res.table.rows[2][0] == "fd");
    for (const auto& row : res.table.rows) {
        CHECK(std::isfinite(std::stod(row[1])));
        // fd on a linear model with an affine payoff has exactly zero
        // spread (every coupled particle pair differs by the same amount),
        // so only nonnegativity is generic.
        CHECK(std::stod(row[2]) >= 0.0);
        CHECK(row[3] == "500");
    }
    // All three target the same derivative.
    const double bel = std::stod(res.table.rows[0][1]);
    const double fd = std::stod(res.table.rows[2][1]);
    const double se = std::stod(res.table.rows[0][2]);
    CHECK(std::abs(bel - fd) < 5.0 * se + 1e-9);

    // A jump interaction needs an explicit mollify section.
    const std::string raw = R"({
      "model": {"id": "cdf_drift"},
      "grid": {"T": 1.0, "steps": 16},
      "particles": 128, "x0": 0.0, "seed": 5, "output": "d.csv"})";
    CHECK_THROWS_AS(run_subcommand("delta", parse_config_text(raw)),
                    config_error);
    std::string mollified = raw;
    mollified.insert(mollified.rfind('}'),
                     R"(, "mollify": {"bandwidth": 0.2})");
    const auto res3 =
        run_subcommand("delta", parse_config_text(mollified));
    CHECK(res3.exit_code == 0);
    REQUIRE(res3.table.rows.size() == 3);
}

TEST_CASE("run_subcommand: picard and hoelder schemas") {
    std::string text = R"({
      "model": {"id": "zero_drift"},
      "grid": {"T": 1.0, "steps": 8},
      "particles": 32, "x0": 0.0, "seed": 2, "output": "p.csv",
      "picard": {"max_iter": 6, "tol": 0.001}})";
    const auto pic = run_subcommand("picard", parse_config_text(text));
    CHECK(pic.exit_code == 0);
    REQUIRE(pic.table.header == std::vector<std::string>{"iteration",
                                                         "sup_w1"});
    REQUIRE(pic.table.rows.size() == 1);  // zero drift converges immediately
    CHECK(pic.table.rows[0][0] == "1");
    CHECK(std::stod(pic.table.rows[0][1]) == 0.0);

    std::string htext = R"({
      "model": {"id": "zero_drift"},
      "grid": {"T": 1.0, "steps": 8},
      "particles": 256, "x0": 0.25, "seed": 2, "output": "h.csv"})";
    const auto hoe = run_subcommand("hoelder", parse_config_text(htext));
    CHECK(hoe.exit_code == 0);
    REQUIRE(hoe.table.header ==
            std::vector<std::string>{"pair_id", "lhs", "rhs_bound", "ratio"});
    REQUIRE(!hoe.table.rows.empty());
    for (const auto& row : hoe.table.rows) {
        CHECK(std::stod(row[3]) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("run_subcommand: ode gate and agreement") {
    std::string text = R"({
      "model": {"id": "expectation_drift", "params": {"rate": -0.8}},
      "grid": {"T": 1.0, "steps": 64},
      "particles": 20000, "x0": 1.0, "seed": 9, "output": "o.csv"})";
    const auto res = run_subcommand("ode", parse_config_text(text));
    CHECK(res.exit_code == 0);
    REQUIRE(res.table.header ==
            std::vector<std::string>{"time", "mc_mean", "rk4", "gap"});
    REQUIRE(res.table.rows.size() == 65);
    CHECK(std::stod(res.table.rows.back()[2]) ==
          doctest::Approx(std::exp(-0.8)).epsilon(1e-8));

    // State-dependent drift has no deterministic mean dynamics: rejected.
    const auto bad = minimal();  // mean_field_ou with a != 0
    CHECK_THROWS_AS(run_subcommand("ode", bad), config_error);

    // An unreachable tolerance turns into exit code 4, not an exception.
    std::string strict = text;
    strict.insert(strict.rfind('}'), R"(, "ode": {"tolerance": 1e-12})");
    const auto failed = run_subcommand("ode", parse_config_text(strict));
    CHECK(failed.exit_code == 4);
    CHECK(!failed.failure.empty());
    REQUIRE(failed.table.rows.size() == 65);  // table still produced
}

TEST_CASE("run_subcommand: lamperti-check rows and converge sweep") {
    std::string text = R"({
      "model": {"id": "mean_field_ou"},
      "grid": {"T": 1.0, "steps": 32},
      "particles": 2000, "x0": 0.5, "seed": 4, "output": "l.csv",
      "lamperti": {"sigma": {"id": "sqrt_quadratic"}}})";
    const auto res = run_subcommand("lamperti-check", parse_config_text(text));
    CHECK(res.exit_code == 0);
    REQUIRE(res.table.header ==
            std::vector<std::string>{"check", "value", "bound", "pass"});
    REQUIRE(res.table.rows.size() == 6);
    const std::vector<std::string> names{
        "derivative_identity", "inverse_roundtrip", "monotone",
        "inverse_lipschitz",   "roundtrip_w1",      "roundtrip_coupled_gap"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        CHECK(res.table.rows[i][0] == names[i]);
        CHECK(res.table.rows[i][3] == "1");
    }

    // Impossible round-trip bound: reported as a check failure.
    std::string strict = text;
    strict.replace(strict.find(R"("sigma": {"id": "sqrt_quadratic"})"),
                   std::string(R"("sigma": {"id": "sqrt_quadratic"})").size(),
                   R"("sigma": {"id": "sqrt_quadratic"}, "w1_bound": 1e-12)");
    const auto failed =
        run_subcommand("lamperti-check", parse_config_text(strict));
    CHECK(failed.exit_code == 4);
    CHECK(failed.failure.find("roundtrip_w1") != std::string::npos);

    std::string ctext = R"({
      "model": {"id": "mean_field_ou"},
      "grid": {"T": 1.0, "steps": 16},
      "particles": 4000, "x0": 1.0, "seed": 8, "output": "c.csv",
      "converge": {"sweep": "steps", "values": [8, 16, 32]}})";
    const auto conv = run_subcommand("converge", parse_config_text(ctext));
    CHECK(conv.exit_code == 0);
    REQUIRE(conv.table.header ==
            std::vector<std::string>{"steps", "metric", "value",
                                     "std_error"});
    REQUIRE(conv.table.rows.size() == 3);
    CHECK(conv.table.rows[0][0] == "8");
    CHECK(conv.table.rows[2][0] == "32");
    for (const auto& row : conv.table.rows) {
        CHECK(row[1] == "abs_bias");
        CHECK(std::stod(row[2]) >= 0.0);
    }

    // Sweeping particles relabels the first column.
    std::string ptext = ctext;
    ptext.replace(ptext.find("\"sweep\": \"steps\""), 16,
                  "\"sweep\": \"particles\"");
    const auto pconv = run_subcommand("converge", parse_config_text(ptext));
    CHECK(pconv.table.header[0] == "particles");

    // No closed-form law, no bias metric: configuration error.
    std::string no_curve = R"({
      "model": {"id": "custom_table",
                "params": {"knots": [0.0, 1.0], "values": [0.0, 0.0]}},
      "grid": {"T": 1.0, "steps": 8},
      "particles": 100, "x0": 0.0, "seed": 1, "output": "c.csv",
      "converge": {"sweep": "steps", "values": [4, 8]}})";
    CHECK_THROWS_AS(run_subcommand("converge", parse_config_text(no_curve)),
                    config_error);
}

TEST_CASE("csv rendering is stable and exact") {
    CsvTable t;
    t.comments = {"first", "second"};
    t.header = {"a", "b"};
    t.rows = {{csv_cell(0.1), csv_cell(std::size_t{42})},
              {csv_cell(-1.0), csv_cell(1.0 / 3.0)}};
    const std::string text = render_csv(t);
    CHECK(text == "# first\n# second\na,b\n0.1,42\n-1,0.3333333333333333\n");

    // Shortest-round-trip doubles: parsing the cell recovers the exact bits.
    for (double v : {0.1, -2.5e-17, 3.141592653589793, 1e300, 0.0}) {
        CHECK(std::stod(csv_cell(v)) == v);
    }

    CsvTable ragged;
    ragged.header = {"a", "b"};
    ragged.rows = {{"1"}};
    CHECK_THROWS_AS(render_csv(ragged), std::invalid_argument);
}

TEST_CASE("command line: end-to-end runs, determinism, redirection") {
    TempDir dir;
    const fs::path cfg_path = dir.path / "sim.json";
    const fs::path out_path = dir.path / "run.csv";
    std::string cfg = kMinimal;
    cfg.replace(cfg.find("\"output\": \"run.csv\""), 19,
                "\"output\": \"" + out_path.string() + "\"");
    write_file(cfg_path, cfg);

    const auto first = run_cli("simulate -c " + cfg_path.string(), dir.path);
    CHECK(first.exit_code == 0);
    CHECK(first.stderr_text.empty());
    REQUIRE(fs::exists(out_path));

    const std::string body = stable_body(out_path);
    const std::string full = slurp(out_path);
    CHECK(full.find("# mfsde simulate config_digest=") == 0);
    CHECK(full.find("# generated ") != std::string::npos);
    CHECK(body.find("time,mean,variance,w1_to_oracle") != std::string::npos);

    // Rerun: identical up to the timestamp.
    fs::remove(out_path);
    (void)run_cli("simulate -c " + cfg_path.string(), dir.path);
    CHECK(stable_body(out_path) == body);

    // Worker count must not change a single byte of the payload.
    fs::remove(out_path);
    (void)run_cli("simulate -c " + cfg_path.string() + " --workers 4",
                  dir.path);
    CHECK(stable_body(out_path) == body);

    // MFSDE_OUTPUT_DIR moves the file, keeping the name.
    const fs::path redirected = dir.path / "redirected";
    fs::create_directories(redirected);
    const auto env_run =
        run_cli("simulate -c " + cfg_path.string(), dir.path,
                "MFSDE_OUTPUT_DIR=" + redirected.string() + " ");
    CHECK(env_run.exit_code == 0);
    CHECK(fs::exists(redirected / "run.csv"));
    CHECK(stable_body(redirected / "run.csv") == body);
}

TEST_CASE("command line: exit codes and machine-readable errors") {
    TempDir dir;

    SUBCASE("missing config file -> 2") {
        const auto r = run_cli("simulate -c " +
                                   (dir.path / "absent.json").string(),
                               dir.path);
        CHECK(r.exit_code == 2);
        CHECK(r.stderr_text.rfind("error code=2 kind=config:", 0) == 0);
    }
    SUBCASE("config with unknown key -> 2") {
        const fs::path p = dir.path / "bad.json";
        std::string cfg = kMinimal;
        cfg.insert(cfg.rfind('}'), R"(, "turbo": true)");
        write_file(p, cfg);
        const auto r = run_cli("simulate -c " + p.string(), dir.path);
        CHECK(r.exit_code == 2);
        CHECK(r.stderr_text.rfind("error code=2 kind=config:", 0) == 0);
        CHECK(r.stderr_text.find("turbo") != std::string::npos);
    }
    SUBCASE("diverging simulation -> 3") {
        const fs::path p = dir.path / "explode.json";
        write_file(p, R"({
          "model": {"id": "expectation_drift", "params": {"rate": 1e6}},
          "grid": {"T": 1.0, "steps": 128},
          "particles": 16, "x0": 1.0, "seed": 1,
          "output": ")" + (dir.path / "x.csv").string() + R"("})");
        const auto r = run_cli("simulate -c " + p.string(), dir.path);
        CHECK(r.exit_code == 3);
        CHECK(r.stderr_text.rfind("error code=3 kind=numerical:", 0) == 0);
        CHECK(r.stderr_text.find("non-finite") != std::string::npos);
    }
    SUBCASE("violated check tolerance -> 4, table still written") {
        const fs::path p = dir.path / "check.json";
        const fs::path out = dir.path / "ode.csv";
        write_file(p, R"({
          "model": {"id": "zero_drift"},
          "grid": {"T": 1.0, "steps": 16},
          "particles": 64, "x0": 0.0, "seed": 1,
          "ode": {"tolerance": 1e-15},
          "output": ")" + out.string() + R"("})");
        const auto r = run_cli("ode -c " + p.string(), dir.path);
        CHECK(r.exit_code == 4);
        CHECK(r.stderr_text.rfind("error code=4 kind=check:", 0) == 0);
        CHECK(fs::exists(out));
        CHECK(slurp(out).find("# mfsde ode config_digest=") == 0);
    }
    SUBCASE("bad command line -> 2 without touching the filesystem") {
        const auto r = run_cli("simulate", dir.path);  // missing -c
        CHECK(r.exit_code == 2);
        const auto r2 = run_cli("warp -c nowhere.json", dir.path);
        CHECK(r2.exit_code != 0);
    }
}
