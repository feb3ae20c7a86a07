#pragma once

#include "mfsde/coefficients.hpp"

#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace mfsde {

// Uniformly weighted empirical measure on N points in R^d. Immutable after
// construction; the sorted view (d = 1 only) is built lazily exactly once,
// safe under concurrent first access.
class EmpiricalMeasure {
public:
    EmpiricalMeasure(std::size_t dim, std::vector<double> points);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return size_; }
    double coord(std::size_t i, std::size_t j = 0) const {
        return points_[i * dim_ + j];
    }
    std::span<const double> flat() const { return points_; }

    // Ascending order statistics; requires dim == 1.
    const std::vector<double>& sorted() const;

private:
    struct SortedCache {
        std::once_flag once;
        std::vector<double> data;
    };

    std::size_t dim_;
    std::size_t size_;
    std::vector<double> points_;
    std::unique_ptr<SortedCache> sorted_cache_;
};

// Right-continuous empirical CDF (1/N)·#{x_i <= u}; requires dim == 1.
double cdf(const EmpiricalMeasure& mu, double u);

// (1/N) Σ_j phi(t, y, z_j) with the fixed-shape pairwise reduction; requires
// dim == 1.
double integrate_phi(const EmpiricalMeasure& mu, const CoefficientPair& pair,
                     double t, double y);

// Exact 1-Wasserstein distance between equal-size one-dimensional empirical
// measures: mean absolute difference of order statistics. Unequal sizes or
// dim != 1 are errors.
double wasserstein1(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

// order 1: mean vector (size d); order 2: covariance matrix (d*d, row-major,
// population convention — divide by N). Other orders are errors.
std::vector<double> moments(const EmpiricalMeasure& mu, int order);

// Exact W1 between a one-dimensional empirical measure and N(mean, stddev^2),
// integrating |F_emp - F_gauss| in closed form piece by piece.
double wasserstein1_gaussian(const EmpiricalMeasure& mu, double mean,
                             double stddev);

}  // namespace mfsde
