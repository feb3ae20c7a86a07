#include "mfsde/measure.hpp"

#include "mfsde/common.hpp"

#include <algorithm>
#include <cmath>

namespace mfsde {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points)
    : dim_(dim),
      size_(dim ? points.size() / dim : 0),
      points_(std::move(points)),
      sorted_cache_(std::make_unique<SortedCache>()) {
    require(dim_ >= 1, "EmpiricalMeasure: dim must be >= 1");
    require(!points_.empty() && points_.size() % dim_ == 0,
            "EmpiricalMeasure: points size must be a positive multiple of dim");
    for (double v : points_) {
        require(std::isfinite(v), "EmpiricalMeasure: non-finite point");
    }
}

const std::vector<double>& EmpiricalMeasure::sorted() const {
    require(dim_ == 1, "EmpiricalMeasure::sorted: requires dim == 1");
    std::call_once(sorted_cache_->once, [this] {
        sorted_cache_->data = points_;
        std::sort(sorted_cache_->data.begin(), sorted_cache_->data.end());
    });
    return sorted_cache_->data;
}

double cdf(const EmpiricalMeasure& mu, double u) {
    require(mu.dim() == 1, "cdf: requires dim == 1");
    const auto& s = mu.sorted();
    const auto it = std::upper_bound(s.begin(), s.end(), u);
    return static_cast<double>(it - s.begin()) / static_cast<double>(s.size());
}

double integrate_phi(const EmpiricalMeasure& mu, const CoefficientPair& pair,
                     double t, double y) {
    require(mu.dim() == 1, "integrate_phi: requires dim == 1");
    require(static_cast<bool>(pair.phi), "integrate_phi: pair.phi missing");
    const auto pts = mu.flat();
    std::vector<double> vals(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) {
        vals[j] = pair.phi(t, y, pts[j]);
    }
    return pairwise_mean(vals);
}

double wasserstein1(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    require(a.dim() == 1 && b.dim() == 1, "wasserstein1: requires dim == 1");
    require(a.size() == b.size(),
            "wasserstein1: requires equal numbers of support points");
    const auto& sa = a.sorted();
    const auto& sb = b.sorted();
    std::vector<double> diff(sa.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        diff[i] = std::abs(sa[i] - sb[i]);
    }
    return pairwise_mean(diff);
}

std::vector<double> moments(const EmpiricalMeasure& mu, int order) {
    require(order == 1 || order == 2, "moments: order must be 1 or 2");
    const std::size_t d = mu.dim();
    const std::size_t n = mu.size();
    std::vector<double> col(n);
    std::vector<double> mean(d);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = mu.coord(i, j);
        mean[j] = pairwise_mean(col);
    }
    if (order == 1) return mean;
    std::vector<double> cov(d * d);
    std::vector<double> prod(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = j; k < d; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                prod[i] = (mu.coord(i, j) - mean[j]) * (mu.coord(i, k) - mean[k]);
            }
            cov[j * d + k] = cov[k * d + j] = pairwise_mean(prod);
        }
    }
    return cov;
}

namespace {

// ∫_{-inf}^{z} Phi(u) du for the standard normal CDF Phi.
double std_cdf_antiderivative(double z) {
    return z * normal_cdf(z) + normal_pdf(z);
}

// ∫_l^r |c - Phi((x - mean)/sd)| dx, exact (splits at the crossing point).
double segment_gap(double l, double r, double c, double mean, double sd) {
    if (r <= l) return 0.0;
    const double zl = (l - mean) / sd;
    const double zr = (r - mean) / sd;
    const auto gauss_mass = [&](double a, double b) {
        return sd * (std_cdf_antiderivative(b) - std_cdf_antiderivative(a));
    };
    if (normal_cdf(zr) <= c) {
        return c * (r - l) - gauss_mass(zl, zr);
    }
    if (normal_cdf(zl) >= c) {
        return gauss_mass(zl, zr) - c * (r - l);
    }
    const double split = mean + sd * normal_quantile(c);
    const double zs = (split - mean) / sd;
    return c * (split - l) - gauss_mass(zl, zs) + gauss_mass(zs, zr) -
           c * (r - split);
}

}  // namespace

double wasserstein1_gaussian(const EmpiricalMeasure& mu, double mean,
                             double stddev) {
    require(mu.dim() == 1, "wasserstein1_gaussian: requires dim == 1");
    require(stddev > 0.0, "wasserstein1_gaussian: stddev must be positive");
    const auto& s = mu.sorted();
    const std::size_t n = s.size();
    const double zl = (s.front() - mean) / stddev;
    const double zr = (s.back() - mean) / stddev;
    // Tails: F_emp is 0 left of the smallest point and 1 right of the largest.
    double total = stddev * std_cdf_antiderivative(zl);
    total += stddev * (normal_pdf(zr) - zr * (1.0 - normal_cdf(zr)));
    for (std::size_t i = 1; i < n; ++i) {
        const double level = static_cast<double>(i) / static_cast<double>(n);
        total += segment_gap(s[i - 1], s[i], level, mean, stddev);
    }
    return total;
}

}  // namespace mfsde
