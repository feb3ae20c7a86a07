#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfsde/coefficients.hpp"
#include "mfsde/mollify.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

using namespace mfsde;

namespace {

const RegularityCheck& find_check(const RegularityReport& report,
                                  const std::string& name) {
    for (const auto& c : report.checks) {
        if (c.name == name) return c;
    }
    throw std::logic_error("check not found: " + name);
}

}  // namespace

TEST_CASE("builtin registry: values and flags") {
    SUBCASE("zero_drift") {
        const auto pair = make_builtin("zero_drift");
        CHECK(pair.b(0.3, 1.7, -2.0) == 0.0);
        CHECK(pair.phi(0.3, 1.7, -2.0) == 0.0);
        CHECK(pair.flags.smooth);
        CHECK(pair.flags.phi_y_independent);
        CHECK(pair.growth_constant == 0.0);
    }
    SUBCASE("expectation_drift") {
        ModelParams p;
        p.scalars["rate"] = 2.5;
        const auto pair = make_builtin("expectation_drift", p);
        CHECK(pair.b(0.0, 9.0, 1.5) == doctest::Approx(3.75));
        CHECK(pair.phi(0.0, 9.0, 1.5) == 1.5);
        CHECK(pair.db_dz(0.0, 0.0, 0.0) == 2.5);
        CHECK(pair.db_dy(0.0, 0.0, 0.0) == 0.0);
        CHECK(pair.flags.smooth);
    }
    SUBCASE("mean_field_ou") {
        ModelParams p;
        p.scalars = {{"a", -2.0}, {"c", 0.5}};
        const auto pair = make_builtin("mean_field_ou", p);
        CHECK(pair.b(0.0, 1.0, 4.0) == doctest::Approx(-2.0 + 2.0));
        CHECK(pair.db_dy(0.0, 1.0, 4.0) == -2.0);
        CHECK(pair.db_dz(0.0, 1.0, 4.0) == 0.5);
        CHECK(pair.dphi_dz(0.0, 1.0, 4.0) == 1.0);
        CHECK(pair.dphi_dy(0.0, 1.0, 4.0) == 0.0);
    }
    SUBCASE("cdf_drift is an indicator and not smooth") {
        ModelParams p;
        p.scalars["threshold"] = 0.25;
        const auto pair = make_builtin("cdf_drift", p);
        CHECK(pair.phi(0.0, 0.0, 0.25) == 1.0);   // closed at the threshold
        CHECK(pair.phi(0.0, 0.0, 0.2500001) == 0.0);
        CHECK(pair.b(0.0, 0.0, 0.7) == 0.7);
        CHECK_FALSE(pair.flags.smooth);
        CHECK_FALSE(pair.flags.lipschitz_z_phi);
        CHECK(pair.flags.phi_y_independent);
    }
    SUBCASE("smoothed_cdf_drift matches the logistic kernel") {
        ModelParams p;
        p.scalars = {{"threshold", 0.0}, {"width", 0.2}};
        const auto pair = make_builtin("smoothed_cdf_drift", p);
        CHECK(pair.phi(0.0, 0.0, 0.0) == doctest::Approx(0.5));
        const double z = 0.3;
        const double expect = 1.0 / (1.0 + std::exp(-(0.0 - z) / 0.2));
        CHECK(pair.phi(0.0, 0.0, z) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(pair.flags.smooth);
        // derivative of the logistic: -s(1-s)/width
        const double s = pair.phi(0.0, 0.0, z);
        CHECK(pair.dphi_dz(0.0, 0.0, z) ==
              doctest::Approx(-s * (1.0 - s) / 0.2).epsilon(1e-12));
    }
    SUBCASE("custom_table interpolates and extrapolates flat") {
        ModelParams p;
        p.arrays["knots"] = {-1.0, 0.0, 2.0};
        p.arrays["values"] = {3.0, 1.0, 5.0};
        const auto pair = make_builtin("custom_table", p);
        CHECK(pair.b(0.0, 0.0, -1.0) == 3.0);
        CHECK(pair.b(0.0, 0.0, -0.5) == doctest::Approx(2.0));
        CHECK(pair.b(0.0, 0.0, 1.0) == doctest::Approx(3.0));
        CHECK(pair.b(0.0, 0.0, -10.0) == 3.0);  // flat extrapolation
        CHECK(pair.b(0.0, 0.0, 10.0) == 5.0);
        CHECK(pair.phi(0.0, 0.0, 0.7) == 0.7);  // identity interaction
        CHECK_FALSE(pair.flags.smooth);
        CHECK(pair.flags.lipschitz_z_b);
    }
}

TEST_CASE("builtin registry: rejection of bad requests") {
    CHECK_THROWS_AS(make_builtin("no_such_model"), std::invalid_argument);

    ModelParams unknown;
    unknown.scalars["bogus"] = 1.0;
    CHECK_THROWS_AS(make_builtin("mean_field_ou", unknown),
                    std::invalid_argument);

    ModelParams negative_width;
    negative_width.scalars["width"] = -0.1;
    CHECK_THROWS_AS(make_builtin("smoothed_cdf_drift", negative_width),
                    std::invalid_argument);

    ModelParams mismatched;
    mismatched.arrays["knots"] = {0.0, 1.0};
    mismatched.arrays["values"] = {1.0};
    CHECK_THROWS_AS(make_builtin("custom_table", mismatched),
                    std::invalid_argument);

    ModelParams unsorted;
    unsorted.arrays["knots"] = {1.0, 0.0};
    unsorted.arrays["values"] = {1.0, 2.0};
    CHECK_THROWS_AS(make_builtin("custom_table", unsorted),
                    std::invalid_argument);
}

TEST_CASE("probe_regularity confirms declared properties of the builtins") {
    for (const char* id :
         {"zero_drift", "expectation_drift", "mean_field_ou",
          "smoothed_cdf_drift"}) {
        CAPTURE(id);
        const auto report = probe_regularity(make_builtin(id), 256, 0x5eed);
        CHECK(report.all_passed);
    }
    ModelParams p;
    p.arrays["knots"] = {-1.0, 0.5, 2.0};
    p.arrays["values"] = {2.0, -1.0, 0.5};
    const auto report =
        probe_regularity(make_builtin("custom_table", p), 256, 0x5eed);
    CHECK(report.all_passed);
}

TEST_CASE("probe_regularity finds a falsely declared Lipschitz property") {
    // Indicator interaction that *claims* to be Lipschitz in z: the bisection
    // refinement must drive the difference quotient through the ceiling.
    auto pair = make_builtin("cdf_drift");
    pair.flags.lipschitz_z_phi = true;
    const auto report = probe_regularity(pair, 256, 0x5eed);
    CHECK_FALSE(report.all_passed);
    const auto& check = find_check(report, "lipschitz_z_phi");
    CHECK(check.declared);
    CHECK_FALSE(check.passed);
    CHECK(check.statistic >= 1e7);
    // The refined witness brackets the jump at the threshold 0.
    CHECK(check.witness[2] <= 0.0);
    CHECK(check.witness[3] >= 0.0);
}

TEST_CASE("probe_regularity flags an understated growth constant") {
    auto pair = make_builtin("mean_field_ou");  // |b| <= 1*(1+|y|+|z|)
    pair.growth_constant = 0.25;                // false claim
    const auto report = probe_regularity(pair, 256, 0x5eed);
    const auto& check = find_check(report, "growth_b");
    CHECK_FALSE(check.passed);
    CHECK(check.statistic > 1.0);
}

TEST_CASE("probe_regularity detects hidden y-dependence in phi") {
    auto pair = make_builtin("zero_drift");
    pair.phi = [](double, double y, double) { return 0.01 * y; };
    // flags still claim y-independence
    const auto report = probe_regularity(pair, 256, 0x5eed);
    const auto& check = find_check(report, "phi_y_independent");
    CHECK_FALSE(check.passed);
    CHECK(check.statistic > 0.0);
}

TEST_CASE("probe_regularity cross-checks Jacobians against differences") {
    auto pair = make_builtin("mean_field_ou");
    pair.db_dy = [](double, double, double) { return -0.5; };  // truth: -1
    const auto report = probe_regularity(pair, 256, 0x5eed);
    const auto& check = find_check(report, "jacobians");
    CHECK_FALSE(check.passed);
    CHECK(check.statistic > 1e-4);
}

TEST_CASE("gauss_hermite integrates low-degree polynomials exactly") {
    const auto& rule = gauss_hermite(8);
    REQUIRE(rule.nodes.size() == 8);
    double mass = 0.0, second = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        mass += rule.weights[i];
        second += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    }
    const double sqrt_pi = std::sqrt(std::acos(-1.0));
    CHECK(mass == doctest::Approx(sqrt_pi).epsilon(1e-13));
    CHECK(second == doctest::Approx(0.5 * sqrt_pi).epsilon(1e-13));
    CHECK_THROWS_AS(gauss_hermite(1), std::invalid_argument);
}

TEST_CASE("mollify leaves affine coefficients unchanged") {
    const auto pair = make_builtin("mean_field_ou");
    MollifyConfig cfg;
    cfg.bandwidth = 0.3;
    const auto smooth = mollify(pair, cfg);
    for (double y : {-2.0, 0.0, 1.5}) {
        for (double z : {-1.0, 0.5}) {
            CHECK(std::abs(smooth.b(0.2, y, z) - pair.b(0.2, y, z)) < 1e-10);
            CHECK(std::abs(smooth.phi(0.2, y, z) - pair.phi(0.2, y, z)) <
                  1e-10);
        }
    }
    CHECK(smooth.flags.smooth);
    CHECK(smooth.flags.phi_y_independent == pair.flags.phi_y_independent);
}

TEST_CASE("mollified indicator takes the value one half at the jump") {
    const auto pair = make_builtin("cdf_drift");  // phi = 1{z <= 0}
    MollifyConfig cfg;
    cfg.bandwidth = 0.1;
    const auto smooth = mollify(pair, cfg);
    CHECK(smooth.phi(0.0, 0.0, 0.0) == doctest::Approx(0.5).epsilon(1e-10));
    // Far from the jump the indicator value is recovered.
    CHECK(smooth.phi(0.0, 0.0, -1.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(smooth.phi(0.0, 0.0, 1.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(smooth.flags.smooth);
}

TEST_CASE("mollified |y| at the kink equals h*sqrt(2/pi)") {
    CoefficientPair pair;
    pair.id = "abs_kink";
    pair.b = [](double, double y, double) { return std::abs(y); };
    pair.phi = [](double, double, double) { return 0.0; };
    MollifyConfig cfg;
    cfg.bandwidth = 0.1;
    const auto smooth = mollify(pair, cfg);
    const double expect = 0.1 * std::sqrt(2.0 / std::acos(-1.0));
    CHECK(std::abs(smooth.b(0.0, 0.0, 0.0) - expect) < 1e-6);
}

TEST_CASE("mollification error shrinks monotonically with the bandwidth") {
    ModelParams p;
    p.arrays["knots"] = {-1.0, 0.0, 1.0};
    p.arrays["values"] = {1.0, -0.5, 2.0};
    const auto pair = make_builtin("custom_table", p);

    double previous = std::numeric_limits<double>::infinity();
    for (double h : {0.4, 0.2, 0.1, 0.05}) {
        MollifyConfig cfg;
        cfg.bandwidth = h;
        const auto smooth = mollify(pair, cfg);
        double sup = 0.0;
        for (int i = 0; i <= 80; ++i) {
            const double z = -2.0 + 4.0 * i / 80.0;
            sup = std::max(sup,
                           std::abs(smooth.b(0.0, 0.0, z) - pair.b(0.0, 0.0, z)));
        }
        CAPTURE(h);
        CHECK(sup < previous);
        previous = sup;
    }
}

TEST_CASE("mollified Jacobians agree with central differences") {
    // Smooth input: the quadrature realization is itself smooth, so finite
    // differences of the realized function match the differentiated-kernel
    // Jacobians directly.
    ModelParams p;
    p.scalars = {{"threshold", 0.0}, {"width", 0.3}};
    const auto pair = make_builtin("smoothed_cdf_drift", p);
    MollifyConfig cfg;
    cfg.bandwidth = 0.2;
    const auto smooth = mollify(pair, cfg);
    const double fd_step = 1e-5;
    for (double z : {-0.3, 0.0, 0.4}) {
        const double fd = (smooth.phi(0.0, 0.0, z + fd_step) -
                           smooth.phi(0.0, 0.0, z - fd_step)) /
                          (2.0 * fd_step);
        CHECK(smooth.dphi_dz(0.0, 0.0, z) ==
              doctest::Approx(fd).epsilon(1e-6));
        const double fdb = (smooth.b(0.0, 0.0, z + fd_step) -
                            smooth.b(0.0, 0.0, z - fd_step)) /
                           (2.0 * fd_step);
        CHECK(smooth.db_dz(0.0, 0.0, z) ==
              doctest::Approx(fdb).epsilon(1e-6));
    }
    const auto report = probe_regularity(smooth, 128, 0x5eed);
    CHECK(report.all_passed);
}

TEST_CASE("mollified indicator derivative at the jump is the kernel peak") {
    // At the jump location symmetry makes the quadrature exact, and the
    // derivative of the smoothed step equals the Gaussian kernel peak
    // -1/(h*sqrt(2*pi)). Away from the jump the quadrature realization of a
    // *discontinuous* input is a staircase in z (values land between nodes),
    // so only jump-centered quantities carry guaranteed digits; continuous
    // inputs such as kinks and tables converge everywhere.
    const auto pair = make_builtin("cdf_drift");
    MollifyConfig cfg;
    cfg.bandwidth = 0.2;
    const auto smooth = mollify(pair, cfg);
    const double peak = -1.0 / (0.2 * std::sqrt(2.0 * std::acos(-1.0)));
    CHECK(smooth.dphi_dz(0.0, 0.0, 0.0) ==
          doctest::Approx(peak).epsilon(1e-6));
}
