#include "mfsde/common.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <charconv>
#include <cmath>

namespace mfsde {

namespace {
constexpr std::size_t kPairwiseLeaf = 32;
}

double pairwise_sum(const double* data, std::size_t n) {
    if (n <= kPairwiseLeaf) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += data[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

double pairwise_mean(std::span<const double> v) {
    require(!v.empty(), "pairwise_mean: empty input");
    return pairwise_sum(v) / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v, double mean) {
    require(!v.empty(), "population_variance: empty input");
    double s = 0.0;
    std::size_t i = 0;
    const std::size_t n = v.size();
    // Two-pass with a fixed-order accumulation; accuracy is ample for
    // Monte Carlo output and the order is deterministic.
    for (; i + 4 <= n; i += 4) {
        const double d0 = v[i] - mean, d1 = v[i + 1] - mean;
        const double d2 = v[i + 2] - mean, d3 = v[i + 3] - mean;
        s += d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3;
    }
    for (; i < n; ++i) {
        const double d = v[i] - mean;
        s += d * d;
    }
    return s / static_cast<double>(n);
}

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0, 1)");
    return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
}

std::string format_double(double x) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace mfsde
