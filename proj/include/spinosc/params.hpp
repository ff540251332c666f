// Model constants, derived scales, and the truncated Fock⊗spin basis

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "spinosc/errors.hpp"

namespace spinosc {

// Converts a spin magnitude J (in units of hbar) to 2J, rejecting non-half-integers.
inline int two_j_from(double J) {
    const double twice = 2.0 * J;
    const double rounded = std::round(twice);
    if (!(J >= 0.0) || std::abs(twice - rounded) > 1e-9) {
        throw ConfigError("J must be a nonnegative half-integer, got " + std::to_string(J));
    }
    return static_cast<int>(rounded);
}

// Physical parameters of H = p^2/2m + m w^2 z^2/2 + b z J_z under continuous
// measurement of z with strength k.
//
// b and delta_z are tied by b = -m w^2 delta_z / (J hbar); construct through make()
// (or natural()) so the pair is always consistent.
struct ModelParams {
    double m{1.0};
    double omega{1.0};
    double hbar{1.0};
    int two_j{1};            // 2J
    double b{0.0};           // force per unit angular momentum
    double k{0.1};           // measurement strength, 1/(length^2 time)
    double delta_z{0.0};     // outermost well offset, length
    double I_action{50.0};   // orbit action in units of hbar

    double J() const noexcept { return 0.5 * two_j; }
    int spin_dim() const noexcept { return two_j + 1; }
    double z_g() const noexcept { return std::sqrt(hbar / (2.0 * m * omega)); }
    double p_g() const noexcept { return std::sqrt(hbar * m * omega / 2.0); }
    double period() const noexcept { return 2.0 * std::numbers::pi / omega; }

    // Center of the harmonic well seen by the J_z = M hbar component.
    double well_center(double M) const noexcept {
        return -b * M * hbar / (m * omega * omega);
    }

    // Initial displacement whose coherent orbit carries I_action quanta.
    double orbit_amplitude() const noexcept {
        return std::sqrt(2.0 * I_action * hbar / (m * omega));
    }

    void validate() const {
        if (!(m > 0.0) || !(omega > 0.0) || !(hbar > 0.0)) {
            throw ConfigError("m, omega and hbar must be positive");
        }
        if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("measurement strength k must be nonnegative");
        if (!(I_action > 0.0)) throw ConfigError("I_action must be positive");
        if (two_j < 0) throw ConfigError("2J must be nonnegative");
        if (!std::isfinite(b) || !std::isfinite(delta_z)) throw ConfigError("b and delta_z must be finite");
        const double implied = two_j > 0 ? -b * J() * hbar / (m * omega * omega) : 0.0;
        if (std::abs(implied - delta_z) > 1e-9 * std::max(1.0, std::abs(delta_z))) {
            throw ConfigError("b and delta_z are inconsistent with b = -m omega^2 delta_z / (J hbar)");
        }
    }

    struct Inputs {
        double m{1.0};
        double omega{1.0};
        double hbar{1.0};
        double J{0.5};
        double k{0.1};
        double I_action{50.0};
        std::optional<double> b;
        std::optional<double> delta_z;
    };

    // Either b or delta_z (or both, if consistent) must be supplied.
    static ModelParams make(const Inputs& in) {
        ModelParams p;
        p.m = in.m;
        p.omega = in.omega;
        p.hbar = in.hbar;
        p.two_j = two_j_from(in.J);
        p.k = in.k;
        p.I_action = in.I_action;
        const double mw2 = in.m * in.omega * in.omega;
        if (in.b && in.delta_z) {
            p.b = *in.b;
            p.delta_z = *in.delta_z;
            if (p.two_j == 0 && p.delta_z != 0.0) {
                throw ConfigError("delta_z must be zero for J = 0");
            }
        } else if (in.delta_z) {
            if (p.two_j == 0) {
                if (*in.delta_z != 0.0) throw ConfigError("delta_z cannot be set for J = 0; give b instead");
                p.b = 0.0;
            } else {
                p.b = -mw2 * *in.delta_z / (p.J() * in.hbar);
            }
            p.delta_z = *in.delta_z;
        } else if (in.b) {
            p.b = *in.b;
            p.delta_z = p.two_j > 0 ? -p.b * p.J() * in.hbar / mw2 : 0.0;
        } else {
            throw ConfigError("one of b or delta_z must be given");
        }
        p.validate();
        return p;
    }

    // hbar = m = omega = 1 with everything else given as dimensionless ratios:
    // delta_z / z_g, k z_g^2 / omega, I / hbar.
    static ModelParams natural(double J, double delta_z_over_zg, double k_zg2_over_omega,
                               double action_over_hbar) {
        const double zg = std::sqrt(0.5);
        Inputs in;
        in.J = J;
        in.k = k_zg2_over_omega / (zg * zg);
        in.I_action = action_over_hbar;
        in.delta_z = delta_z_over_zg * zg;
        return make(in);
    }
};

// Truncated basis: Fock levels 0..n_max on the motion, M = -J..J on the spin.
// Flat index = fock * spin_dim + spin, spin index ascending in M.
struct BasisSpec {
    std::size_t n_max{0};
    std::size_t spin_dim{1};

    std::size_t fock_dim() const noexcept { return n_max + 1; }
    std::size_t dim() const noexcept { return fock_dim() * spin_dim; }

    std::size_t index(std::size_t fock, std::size_t spin) const noexcept { return fock * spin_dim + spin; }
    std::pair<std::size_t, std::size_t> split(std::size_t idx) const noexcept {
        return {idx / spin_dim, idx % spin_dim};
    }
    // M_J (units of hbar) of a spin index.
    double m_value(std::size_t spin) const noexcept {
        return static_cast<double>(spin) - 0.5 * static_cast<double>(spin_dim - 1);
    }

    // Levels inspected by the cutoff check: the top 5% (at least one).
    std::size_t tail_begin() const noexcept {
        const std::size_t n = fock_dim();
        const std::size_t count = std::max<std::size_t>(1, (n + 19) / 20);
        return n - count;
    }

    void validate() const {
        if (spin_dim == 0) throw ConfigError("spin_dim must be at least 1");
    }
};

// Cutoff estimate for coherent-state initial data of amplitude |alpha0|: the
// outermost spinor branch orbits a well displaced by delta_z, so its coherent
// amplitude reaches |alpha0| + delta_z/z_g. Measurement back action adds
// h = hbar k t / (m omega) quanta on average, as a random displacement of each
// conditioned state; the amplitude gets 4 sqrt(h) for that, and the 8a + 32
// margin covers the Poisson tail.
inline std::size_t recommended_n_max(double alpha_max, double heating_quanta = 0.0) {
    const double a = std::abs(alpha_max) + 4.0 * std::sqrt(std::max(0.0, heating_quanta));
    const double n = a * a + 8.0 * a + 32.0;
    return static_cast<std::size_t>(std::ceil(n));
}

inline std::size_t recommended_n_max(const ModelParams& p, double t_final) {
    const double alpha = p.orbit_amplitude() / (2.0 * p.z_g()) + std::abs(p.delta_z) / p.z_g();
    const double heating = p.hbar * p.k * t_final / (p.m * p.omega);
    return recommended_n_max(alpha, heating);
}

inline BasisSpec make_basis(const ModelParams& p, std::size_t n_max) {
    if (n_max == 0) throw ConfigError("n_max must be at least 1");
    BasisSpec b{n_max, static_cast<std::size_t>(p.spin_dim())};
    b.validate();
    return b;
}

} // namespace spinosc
