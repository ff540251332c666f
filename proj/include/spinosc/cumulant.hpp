// Gaussian moment closure: stochastic means of (z, p, J_z)
// driven by the measurement innovation, with the covariance obeying a
// deterministic matrix Riccati equation once third cumulants are dropped.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spinosc/errors.hpp"
#include "spinosc/noise.hpp"
#include "spinosc/params.hpp"

namespace spinosc {

// Index order everywhere: 0 = z, 1 = p, 2 = J_z.
struct MomentState {
    Eigen::Vector3d mean{Eigen::Vector3d::Zero()};
    Eigen::Matrix3d C{Eigen::Matrix3d::Zero()};
};

// Moments of the product of a motional coherent state at (z0, p0) and a spin
// coherent state along `direction`.
inline MomentState coherent_moments(const ModelParams& params, double z0, double p0, std::array<double, 3> direction) {
    const double len = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
    if (!(len > 0.0)) throw ConfigError("spin direction must be a nonzero vector");
    const double nz = direction[2] / len;
    const double jh = params.J() * params.hbar;
    MomentState m;
    m.mean << z0, p0, jh * nz;
    m.C(0, 0) = params.z_g() * params.z_g();
    m.C(1, 1) = params.p_g() * params.p_g();
    m.C(2, 2) = 0.5 * jh * params.hbar * (1.0 - nz * nz);
    return m;
}

// Linear drift of (<z>, <p>, <J_z>) under H.
inline Eigen::Matrix3d drift_matrix(const ModelParams& p) {
    Eigen::Matrix3d A;
    A << 0.0, 1.0 / p.m, 0.0,
        -p.m * p.omega * p.omega, 0.0, -p.b,
        0.0, 0.0, 0.0;
    return A;
}

// Momentum diffusion from measurement back action; J_z commutes with z and gets none.
inline Eigen::Matrix3d diffusion_matrix(const ModelParams& p) {
    Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
    D(1, 1) = 2.0 * p.hbar * p.hbar * p.k;
    return D;
}

inline double asymmetry(const Eigen::Matrix3d& C) { return (C - C.transpose()).cwiseAbs().maxCoeff(); }

// dC/dt = A C + C A^T + D - 8k c c^T with c = C e_z.
inline Eigen::Matrix3d covariance_rhs(const Eigen::Matrix3d& C, const ModelParams& params) {
    if (asymmetry(C) > 1e-12 * std::max(1.0, C.cwiseAbs().maxCoeff())) {
        throw ConfigError("covariance_rhs: covariance matrix is not symmetric");
    }
    const Eigen::Matrix3d A = drift_matrix(params);
    const Eigen::Vector3d c = C.col(0);
    return A * C + C * A.transpose() + diffusion_matrix(params) - 8.0 * params.k * c * c.transpose();
}

// Mean step: exact flow of the linear drift over dt (J_z is constant, so (z, p)
// rotates about -b <J_z> / (m w^2)), plus the innovation kick sqrt(8k) C e_z dW.
inline Eigen::Vector3d mean_step(const MomentState& ms, const ModelParams& params, double dt, double dW) {
    const double w = params.omega;
    const double mw = params.m * w;
    const double center = -params.b * ms.mean(2) / (params.m * w * w);
    const double u0 = ms.mean(0) - center;
    const double c = std::cos(w * dt);
    const double sn = std::sin(w * dt);
    Eigen::Vector3d out(center + u0 * c + ms.mean(1) / mw * sn, -mw * u0 * sn + ms.mean(1) * c, ms.mean(2));
    return out + std::sqrt(8.0 * params.k) * ms.C.col(0) * dW;
}

inline Eigen::Matrix3d covariance_rk4(const Eigen::Matrix3d& C, const ModelParams& params, double dt) {
    const Eigen::Matrix3d k1 = covariance_rhs(C, params);
    const Eigen::Matrix3d k2 = covariance_rhs(C + 0.5 * dt * k1, params);
    const Eigen::Matrix3d k3 = covariance_rhs(C + 0.5 * dt * k2, params);
    const Eigen::Matrix3d k4 = covariance_rhs(C + dt * k3, params);
    Eigen::Matrix3d out = C + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return 0.5 * (out + out.transpose());
}

// Projects tiny negative eigenvalues (>= -1e-10 trace) to zero; larger ones abort.
// Returns true when clipping happened.
inline bool enforce_psd(Eigen::Matrix3d& C, long step = -1) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(C);
    const double floor = -1e-10 * std::max(C.trace(), 0.0);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin >= 0.0) return false;
    if (lmin < floor) {
        throw NumericalError("covariance lost positive semidefiniteness: min eigenvalue " + std::to_string(lmin) +
                                 ", trace " + std::to_string(C.trace()),
                             step);
    }
    const Eigen::Vector3d l = es.eigenvalues().cwiseMax(0.0);
    C = es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose();
    return true;
}

struct CumulantSeries {
    std::vector<double> t;
    std::vector<Eigen::Vector3d> mean;
    std::vector<Eigen::Matrix3d> C;
    std::size_t psd_clips{0};
    double z_g{1.0}, p_g{1.0}, hbar{1.0};

    std::size_t size() const noexcept { return t.size(); }

    // Covariances in dimensionless units: C_zz/z_g^2, C_pp/p_g^2, C_JzJz/hbar^2,
    // C_zp/(z_g p_g), C_zJz/(hbar z_g), C_pJz/(hbar p_g).
    std::array<double, 6> normalized(std::size_t i) const {
        const Eigen::Matrix3d& c = C[i];
        return {c(0, 0) / (z_g * z_g), c(1, 1) / (p_g * p_g), c(2, 2) / (hbar * hbar),
                c(0, 1) / (z_g * p_g), c(0, 2) / (hbar * z_g), c(1, 2) / (hbar * p_g)};
    }
};

// Means step on the noise stream (same keys as the SSE), covariance by RK4.
inline CumulantSeries run_cumulant(MomentState state, const ModelParams& params, double dt, double t_final,
                                   NoiseStream noise, long sample_stride = 1) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
    if (sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
    const long steps = std::max(1L, static_cast<long>(std::llround(t_final / dt)));
    CumulantSeries out;
    out.z_g = params.z_g();
    out.p_g = params.p_g();
    out.hbar = params.hbar;
    auto push = [&](double t) {
        out.t.push_back(t);
        out.mean.push_back(state.mean);
        out.C.push_back(state.C);
    };
    push(0.0);
    const std::uint64_t start = noise.counter;
    for (long i = 0; i < steps; ++i) {
        const double dW = noise.increment_at(start + static_cast<std::uint64_t>(i), dt);
        state.mean = mean_step(state, params, dt, dW);
        state.C = covariance_rk4(state.C, params, dt);
        if (asymmetry(state.C) > 1e-12 * std::max(1.0, state.C.cwiseAbs().maxCoeff())) {
            throw NumericalError("covariance became asymmetric", i);
        }
        if (enforce_psd(state.C, i)) ++out.psd_clips;
        if (!state.mean.allFinite() || !state.C.allFinite()) throw NumericalError("non-finite moments", i);
        const long done = i + 1;
        if (done % sample_stride == 0 || done == steps) push(static_cast<double>(done) * dt);
    }
    return out;
}

} // namespace spinosc
