#include "mfsde/rng.hpp"

#include "mfsde/common.hpp"

namespace mfsde {

std::mt19937_64 particle_engine(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t w0 = mix64(seed ^ mix64(2 * index));
    const std::uint64_t w1 = mix64(seed ^ mix64(2 * index + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(w0), static_cast<std::uint32_t>(w0 >> 32),
                      static_cast<std::uint32_t>(w1), static_cast<std::uint32_t>(w1 >> 32)};
    return std::mt19937_64(seq);
}

void fill_scaled_normals(std::uint64_t seed, std::uint64_t index,
                         std::size_t m, double scale,
                         double* out, std::size_t stride) {
    auto eng = particle_engine(seed, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < m; ++k) {
        out[k * stride] = scale * normal(eng);
    }
}

}  // namespace mfsde
