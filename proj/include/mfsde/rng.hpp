#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace mfsde {

// Independent per-particle generator derived deterministically from
// (seed, index). Stream identity depends on nothing else, so any scheduling
// of particles across workers reproduces the same draws.
std::mt19937_64 particle_engine(std::uint64_t seed, std::uint64_t index);

// Writes m standard normal draws scaled by `scale` for one particle stream,
// strided so that time-major noise blocks can be filled particle by particle.
void fill_scaled_normals(std::uint64_t seed, std::uint64_t index,
                         std::size_t m, double scale,
                         double* out, std::size_t stride);

}  // namespace mfsde
