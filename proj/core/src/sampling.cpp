#include "idyn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

namespace idyn::sampling {

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

int prime(int i) { return kPrimes[i % static_cast<int>(std::size(kPrimes))]; }

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 point_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double halton(std::uint64_t index, int base) noexcept {
    double f = 1.0;
    double r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
        index /= static_cast<std::uint64_t>(base);
    }
    return r;
}

Vec unit_direction(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(dim);
    do {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    } while (v.norm() < 1e-12);
    return v / v.norm();
}

Vec in_ball(std::mt19937_64& rng, int dim, double radius) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const Vec dir = unit_direction(rng, dim);
    return radius * std::pow(uni(rng), 1.0 / dim) * dir;
}

Vec in_annulus(std::mt19937_64& rng, int dim, double r_min, double r_max) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const Vec dir = unit_direction(rng, dim);
    const double r = r_max - (r_max - r_min) * uni(rng);  // uni in [0,1) -> r in (r_min, r_max]
    return std::max(r, std::nextafter(r_min, r_max)) * dir;
}

std::vector<Vec> ball_cover(int dim, double radius, std::size_t count) {
    std::vector<Vec> pts;
    pts.push_back(Vec::Zero(dim));
    if (radius <= 0.0) return pts;

    for (int i = 0; i < dim; ++i) {
        Vec e = Vec::Zero(dim);
        e(i) = radius;
        pts.push_back(e);
        pts.push_back(-e);
    }
    const std::size_t boundary = std::max<std::size_t>(count / 4, 8);
    for (const Vec& d : sphere_directions(dim, boundary)) pts.push_back(radius * d);

    // Interior Halton points, rejection from the cube.
    std::uint64_t idx = 1;
    while (pts.size() < count + 1) {
        Vec p(dim);
        for (int i = 0; i < dim; ++i) p(i) = 2.0 * halton(idx, prime(i)) - 1.0;
        ++idx;
        if (p.norm() <= 1.0) pts.push_back(radius * p);
    }
    return pts;
}

std::vector<Vec> sphere_directions(int dim, std::size_t count) {
    std::vector<Vec> dirs;
    dirs.reserve(count);
    if (dim == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
        dirs.push_back(Vec::Constant(1, -1.0));
        return dirs;
    }
    if (dim == 2) {
        for (std::size_t k = 0; k < count; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
            Vec d(2);
            d << std::cos(a), std::sin(a);
            dirs.push_back(d);
        }
        return dirs;
    }
    // Box-Muller on Halton pairs, normalised.
    std::uint64_t idx = 1;
    while (dirs.size() < count) {
        Vec g(dim);
        for (int i = 0; i < dim; i += 2) {
            const double u1 = std::max(halton(idx, prime(i)), 1e-12);
            const double u2 = halton(idx, prime(i + 1));
            const double r = std::sqrt(-2.0 * std::log(u1));
            g(i) = r * std::cos(2.0 * std::numbers::pi * u2);
            if (i + 1 < dim) g(i + 1) = r * std::sin(2.0 * std::numbers::pi * u2);
        }
        ++idx;
        if (g.norm() > 1e-12) dirs.push_back(g / g.norm());
    }
    return dirs;
}

int thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("IDYN_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace idyn::sampling
