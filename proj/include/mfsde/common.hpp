#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mfsde {

// Simulation or estimator produced non-finite values, or an iterative
// procedure failed to converge within its budget.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent experiment configuration.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Deterministic fixed-shape pairwise summation: the reduction tree depends
// only on n, never on thread count, so parallel and serial runs agree bitwise.
double pairwise_sum(const double* data, std::size_t n);

inline double pairwise_sum(std::span<const double> v) {
    return pairwise_sum(v.data(), v.size());
}

double pairwise_mean(std::span<const double> v);

inline double pairwise_mean(const double* data, std::size_t n) {
    return pairwise_mean(std::span<const double>(data, n));
}

// Population convention: divide by N.
double population_variance(std::span<const double> v, double mean);

// SplitMix64 finalizer; used to derive independent per-particle stream seeds.
std::uint64_t mix64(std::uint64_t z);

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace mfsde
