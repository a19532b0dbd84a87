#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "idyn/linalg.hpp"

namespace idyn::sampling {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Generator for sample `index` of a run seeded with `seed`; independent of
/// evaluation order and thread count.
std::mt19937_64 point_rng(std::uint64_t seed, std::uint64_t index);

/// Radical inverse of `index` in `base` (Halton coordinate in [0, 1)).
double halton(std::uint64_t index, int base) noexcept;

Vec unit_direction(std::mt19937_64& rng, int dim);

/// Uniform in the closed ball of radius `radius`.
Vec in_ball(std::mt19937_64& rng, int dim, double radius);

/// Radius uniform in (r_min, r_max], direction uniform on the sphere.
Vec in_annulus(std::mt19937_64& rng, int dim, double r_min, double r_max);

/// Deterministic cover of the closed ball: origin, Halton interior points and
/// boundary points (coordinate axes plus Halton directions). At least `count`
/// points for radius > 0; only the origin for radius == 0.
std::vector<Vec> ball_cover(int dim, double radius, std::size_t count);

/// Deterministic directions on the unit sphere (circle for dim == 2).
std::vector<Vec> sphere_directions(int dim, std::size_t count);

/// Worker count: `requested` if > 0, else IDYN_THREADS, else hardware concurrency.
int thread_count(int requested = 0);

}  // namespace idyn::sampling
