#pragma once

#include "mfsde/coefficients.hpp"

#include <cstddef>
#include <vector>

namespace mfsde {

// Nodes/weights for ∫ f(x) e^{-x^2} dx ≈ Σ w_i f(x_i) (physicists'
// convention), computed by Golub–Welsch and cached per order.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

const GaussHermiteRule& gauss_hermite(std::size_t order);

struct MollifyConfig {
    double bandwidth = 0.1;          // kernel standard deviation h
    std::size_t quadrature_order = 64;  // base order q; evaluation uses q, 2q, 4q
};

// Gaussian-kernel smoothing of b and phi jointly in their (y, z) arguments:
//   b_h(t, y, z) = E[ b(t, y + h·xi, z + h·eta) ],  xi, eta ~ N(0,1) iid,
// computed by tensor Gauss–Hermite quadrature evaluated at orders
// {q, 2q, 4q} with two-level Richardson extrapolation in 1/order (plain
// fixed-order GH converges only at O(1/order) across kinks and jumps, which
// is not enough for the pinned 6-digit values; the extrapolation restores
// them at kink-centered points while leaving constants and smooth inputs
// exact). Jacobians come from the differentiated kernel
//   d/dy b_h = E[ xi · b(t, y + h·xi, z + h·eta) ] / h,
// so the result is always smooth regardless of the input pair.
CoefficientPair mollify(const CoefficientPair& pair, const MollifyConfig& cfg);

}  // namespace mfsde
