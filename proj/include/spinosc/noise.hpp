// Counter-based Wiener increments keyed by (seed, trajectory, step)

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace spinosc {

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter, std::uint64_t lane) noexcept {
    std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ stream);
    h = mix64(h ^ counter);
    return mix64(h ^ (lane * 0xd6e8feb86659fd93ULL));
}

// Uniform in (0, 1], 53-bit resolution.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace detail

// Uniform draw in (0, 1] keyed the same way as counter_normal.
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
    return detail::to_unit(detail::hash_key(seed, stream, counter, 2));
}

// Standard normal draw that depends only on (seed, stream, counter).
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
    const double u1 = detail::to_unit(detail::hash_key(seed, stream, counter, 0));
    const double u2 = detail::to_unit(detail::hash_key(seed, stream, counter, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Wiener increments for one trajectory. Increment i over a step dt is the sum
// of 2^refine base draws scaled to variance dt, so a run at (dt, refine = r+1)
// and a run at (dt/2, refine = r) see the same Brownian path.
struct NoiseStream {
    std::uint64_t seed{0};
    std::uint64_t trajectory_id{0};
    std::uint64_t counter{0};
    unsigned refine{0};

    double increment_at(std::uint64_t step, double dt) const noexcept {
        const std::uint64_t sub = std::uint64_t{1} << refine;
        double sum = 0.0;
        for (std::uint64_t j = 0; j < sub; ++j) sum += counter_normal(seed, trajectory_id, step * sub + j);
        return sum * std::sqrt(dt / static_cast<double>(sub));
    }

    double next(double dt) noexcept { return increment_at(counter++, dt); }
};

} // namespace spinosc
