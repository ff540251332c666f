// Hamilton's equations for a magnetic moment in a trapped
// gradient field: (z, p) in a harmonic well plus free precession of S about z.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "spinosc/errors.hpp"
#include "spinosc/params.hpp"

namespace spinosc {

struct ClassicalState {
    double z{0.0};
    double p{0.0};
    std::array<double, 3> S{0.0, 0.0, 0.0};  // angular momentum, |S| = J hbar

    double spin_length() const noexcept { return std::sqrt(S[0] * S[0] + S[1] * S[1] + S[2] * S[2]); }
};

inline double classical_energy(const ClassicalState& s, const ModelParams& p) {
    return s.p * s.p / (2.0 * p.m) + 0.5 * p.m * p.omega * p.omega * s.z * s.z + p.b * s.z * s.S[2];
}

// Matches the quantum means: (z0, p0) and S = J hbar along `direction`.
inline ClassicalState classical_initial(const ModelParams& params, double z0, double p0, std::array<double, 3> direction) {
    const double len = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
    if (!(len > 0.0)) throw ConfigError("spin direction must be a nonzero vector");
    ClassicalState s{z0, p0, {}};
    for (int i = 0; i < 3; ++i) s.S[i] = params.J() * params.hbar * direction[i] / len;
    return s;
}

// One step of
//   dz/dt = p/m,  dp/dt = -m w^2 z - b S_z,  dS/dt = b z (z_hat x S).
// S_z is conserved, so (z, p) is a harmonic oscillator about -b S_z / (m w^2)
// and is advanced by its exact flow; S is rotated about z_hat by b * integral(z dt)
// over the step. Both maps are exact, so |S|, S_z and the energy are conserved
// to rounding.
inline ClassicalState classical_step(const ClassicalState& s, const ModelParams& params, double dt) {
    if (!(dt > 0.0)) throw ConfigError("classical_step: dt must be positive");
    const double w = params.omega;
    const double mw = params.m * w;
    const double center = -params.b * s.S[2] / (params.m * w * w);
    const double u0 = s.z - center;
    const double c = std::cos(w * dt);
    const double sn = std::sin(w * dt);
    ClassicalState out = s;
    out.z = center + u0 * c + s.p / mw * sn;
    out.p = -mw * u0 * sn + s.p * c;
    const double z_integral = center * dt + u0 * sn / w + s.p / (mw * w) * (1.0 - c);
    const double angle = params.b * z_integral;
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    out.S[0] = s.S[0] * ca - s.S[1] * sa;
    out.S[1] = s.S[0] * sa + s.S[1] * ca;
    if (!std::isfinite(out.z) || !std::isfinite(out.p) || !std::isfinite(out.S[0]) || !std::isfinite(out.S[1])) {
        throw NumericalError("classical_step produced a non-finite state");
    }
    return out;
}

struct ClassicalRecord {
    std::vector<double> t, z, p, Sx, Sy, Sz;

    std::size_t size() const noexcept { return t.size(); }
    void push(double time, const ClassicalState& s) {
        t.push_back(time);
        z.push_back(s.z);
        p.push_back(s.p);
        Sx.push_back(s.S[0]);
        Sy.push_back(s.S[1]);
        Sz.push_back(s.S[2]);
    }
};

// Same step count and sampling rule as run_trajectory, so the two records share a grid.
inline ClassicalRecord run_classical(ClassicalState s, const ModelParams& params, double dt, double t_final,
                                     long sample_stride = 1) {
    if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
    if (sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
    const long steps = std::max(1L, static_cast<long>(std::llround(t_final / dt)));
    ClassicalRecord rec;
    rec.push(0.0, s);
    for (long i = 0; i < steps; ++i) {
        s = classical_step(s, params, dt);
        const long done = i + 1;
        if (done % sample_stride == 0 || done == steps) rec.push(static_cast<double>(done) * dt, s);
    }
    return rec;
}

} // namespace spinosc
