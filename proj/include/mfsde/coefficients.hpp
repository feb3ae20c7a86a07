#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mfsde {

// Scalar drift/interaction kernel component: (t, y, z) -> value, where y is
// the state argument and z the value of the law integral fed back into the
// drift.
using CoefficientFn = std::function<double(double, double, double)>;

// Declared analytic properties. Flags are trusted by downstream code (fast
// paths, admissibility gates); probe_regularity spot-checks them numerically.
struct CoefficientFlags {
    bool lipschitz_z_b = false;    // b Lipschitz in its z argument
    bool lipschitz_z_phi = false;  // phi Lipschitz in its z argument
    bool lipschitz_y_phi = false;  // phi Lipschitz in its y argument
    bool phi_y_independent = false;  // phi(t, y, z) does not depend on y
    bool smooth = false;             // all four Jacobians available
};

struct CoefficientPair {
    std::string id;
    int dim = 1;  // state dimension; all builtin models are one-dimensional
    CoefficientFn b;
    CoefficientFn phi;
    // Partial derivatives in the 2nd (y) and 3rd (z) arguments; present iff
    // flags.smooth.
    CoefficientFn db_dy;
    CoefficientFn db_dz;
    CoefficientFn dphi_dy;
    CoefficientFn dphi_dz;
    // |b(t,y,z)| and |phi(t,y,z)| are bounded by this constant times
    // (1 + |y| + |z|).
    double growth_constant = 1.0;
    CoefficientFlags flags;
};

// Typed parameter bag for the builtin registry; scalar entries cover most
// models, array entries feed the tabulated drift.
struct ModelParams {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> arrays;
};

// Builtin models:
//   zero_drift          b = 0, phi = 0
//   expectation_drift   b = rate * z, phi = z           {rate}
//   mean_field_ou       b = a*y + c*z, phi = z          {a, c}
//   cdf_drift           b = z, phi = 1{z <= threshold}  {threshold}
//   smoothed_cdf_drift  b = z, phi = logistic((threshold - z)/width)
//                                                       {threshold, width}
//   custom_table        b = piecewise-linear(z), phi = z {knots[], values[]}
// Unknown model ids, unknown parameter keys, and invalid parameter values are
// rejected.
CoefficientPair make_builtin(const std::string& model_id,
                             const ModelParams& params = {});

struct RegularityCheck {
    std::string name;
    bool declared = false;  // whether the corresponding flag claims the property
    bool passed = false;
    double statistic = 0.0;         // worst observed ratio / error
    std::array<double, 4> witness{};  // (t, y, z or z_lo, z2 or z_hi)
    std::string note;
};

struct RegularityReport {
    std::vector<RegularityCheck> checks;
    bool all_passed = true;
};

// Randomized probes of the declared flags: linear growth against
// growth_constant, Lipschitz claims (with bisection refinement so jump
// discontinuities are actually found), phi y-independence, and Jacobian
// consistency against central differences for smooth pairs. Diagnostic:
// failures are reported, not thrown.
RegularityReport probe_regularity(const CoefficientPair& pair,
                                  std::size_t n_probes = 256,
                                  std::uint64_t seed = 0x5eedu);

}  // namespace mfsde
