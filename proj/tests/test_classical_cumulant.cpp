#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "spinosc/classical.hpp"
#include "spinosc/cumulant.hpp"
#include "spinosc/noise.hpp"

using namespace spinosc;

namespace {

// Plain RK4 on (z, p, Sx, Sy, Sz) as an independent reference.
std::array<double, 5> rk4_reference(std::array<double, 5> y, const ModelParams& p, double dt, long steps) {
    auto f = [&](const std::array<double, 5>& s) {
        return std::array<double, 5>{s[1] / p.m, -p.m * p.omega * p.omega * s[0] - p.b * s[4], -p.b * s[0] * s[3],
                                     p.b * s[0] * s[2], 0.0};
    };
    auto axpy = [](const std::array<double, 5>& a, double h, const std::array<double, 5>& b) {
        std::array<double, 5> r{};
        for (int i = 0; i < 5; ++i) r[i] = a[i] + h * b[i];
        return r;
    };
    for (long i = 0; i < steps; ++i) {
        const auto k1 = f(y);
        const auto k2 = f(axpy(y, dt / 2, k1));
        const auto k3 = f(axpy(y, dt / 2, k2));
        const auto k4 = f(axpy(y, dt, k3));
        for (int j = 0; j < 5; ++j) y[j] += dt / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    }
    return y;
}

ModelParams params_with(double J, double delta_z, double k, double m = 1.0, double omega = 1.0, double hbar = 1.0) {
    ModelParams::Inputs in;
    in.J = J;
    in.delta_z = delta_z;
    in.k = k;
    in.m = m;
    in.omega = omega;
    in.hbar = hbar;
    return ModelParams::make(in);
}

} // namespace

TEST(Classical, UnpolarizedSpinGivesPlainOscillator) {
    const ModelParams p = params_with(2.0, 3.0, 0.1, 1.3, 0.8);
    const ClassicalState s0 = classical_initial(p, 2.0, 0.5, {1, 0, 0});
    const double dt = 0.01;
    const ClassicalRecord r = run_classical(s0, p, dt, 20.0, 100);
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double w = p.omega;
        const double t = r.t[i];
        EXPECT_NEAR(r.z[i], 2.0 * std::cos(w * t) + 0.5 / (p.m * w) * std::sin(w * t), 1e-10);
        EXPECT_NEAR(r.p[i], -p.m * w * 2.0 * std::sin(w * t) + 0.5 * std::cos(w * t), 1e-10);
    }
}

TEST(Classical, MatchesIndependentRk4) {
    const ModelParams p = params_with(1.5, 2.0, 0.1, 0.9, 1.4, 0.7);
    const ClassicalState s0 = classical_initial(p, 1.0, -0.3, {0.6, 0.0, 0.8});
    ClassicalState s = s0;
    const double dt = 0.05;
    const long steps = 400;
    for (long i = 0; i < steps; ++i) s = classical_step(s, p, dt);
    const auto ref = rk4_reference({s0.z, s0.p, s0.S[0], s0.S[1], s0.S[2]}, p, dt / 50, steps * 50);
    EXPECT_NEAR(s.z, ref[0], 1e-9);
    EXPECT_NEAR(s.p, ref[1], 1e-9);
    EXPECT_NEAR(s.S[0], ref[2], 1e-9);
    EXPECT_NEAR(s.S[1], ref[3], 1e-9);
}

TEST(Classical, ConservedQuantities) {
    const ModelParams p = params_with(10.0, 8.0 * std::sqrt(0.5), 0.1);
    ClassicalState s = classical_initial(p, 10.0, 0.0, {0.5, 0.5, std::sqrt(0.5)});
    const double e0 = classical_energy(s, p);
    const double len0 = s.spin_length();
    const double sz0 = s.S[2];
    for (int i = 0; i < 100000; ++i) s = classical_step(s, p, 2.0 * std::numbers::pi * 1e-3);
    EXPECT_LT(std::abs(classical_energy(s, p) - e0) / std::abs(e0), 1e-10);
    EXPECT_LT(std::abs(s.spin_length() - len0) / len0, 1e-12);
    EXPECT_EQ(s.S[2], sz0);
}

TEST(Classical, SpinLengthIsJHbar) {
    const ModelParams p = params_with(2.5, 1.0, 0.1, 1.0, 1.0, 0.3);
    const ClassicalState s = classical_initial(p, 0.0, 0.0, {1, 2, 3});
    EXPECT_NEAR(s.spin_length(), 2.5 * 0.3, 1e-15);
    EXPECT_THROW(classical_initial(p, 0, 0, {0, 0, 0}), ConfigError);
}

TEST(Cumulant, CoherentStateIsFixedPointWithoutCoupling) {
    ModelParams::Inputs in;
    in.J = 3.0;
    in.b = 0.0;
    in.k = 0.0;
    in.m = 1.7;
    in.omega = 0.6;
    in.hbar = 0.9;
    const ModelParams p = ModelParams::make(in);
    EXPECT_NEAR(p.p_g() * p.p_g() / p.m, p.m * p.omega * p.omega * p.z_g() * p.z_g(), 1e-15);
    EXPECT_NEAR(p.p_g() * p.p_g() / p.m, p.hbar * p.omega / 2, 1e-15);
    const MomentState m = coherent_moments(p, 0.0, 0.0, {1, 0, 0});
    EXPECT_LT(covariance_rhs(m.C, p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Cumulant, SpinVarianceIsStationaryInitially) {
    const ModelParams p = params_with(5.0, 3.0, 0.1);
    const MomentState m = coherent_moments(p, 1.0, 0.0, {1, 0, 0});
    EXPECT_NEAR(m.C(2, 2), 5.0 / 2.0, 1e-15);
    EXPECT_EQ(covariance_rhs(m.C, p)(2, 2), 0.0);
}

TEST(Cumulant, DecoupledSpinRowStaysZero) {
    ModelParams::Inputs in;
    in.J = 2.0;
    in.b = 0.0;
    in.k = 0.2;
    const ModelParams p = ModelParams::make(in);
    MomentState m = coherent_moments(p, 1.0, 0.0, {1, 0, 0});
    const CumulantSeries s = run_cumulant(m, p, 0.01, 10.0, NoiseStream{1, 0}, 10);
    for (const auto& C : s.C) {
        EXPECT_EQ(C(0, 2), 0.0);
        EXPECT_EQ(C(1, 2), 0.0);
        EXPECT_EQ(C(2, 2), 1.0);
    }
}

TEST(Cumulant, LinearFlowMatchesVanLoanExponential) {
    const ModelParams pk = params_with(4.0, 2.5, 0.0, 1.2, 0.7, 0.8);
    const MomentState m0 = coherent_moments(pk, 0.5, 0.1, {1, 0, 0});
    const double dt = 0.002;
    const double t = 5.0;
    const CumulantSeries s = run_cumulant(m0, pk, dt, t, NoiseStream{1, 0}, 100);
    const Eigen::Matrix3d A = drift_matrix(pk);
    const Eigen::Matrix3d D = diffusion_matrix(pk);
    Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
    M.topLeftCorner<3, 3>() = -A;
    M.topRightCorner<3, 3>() = D;
    M.bottomRightCorner<3, 3>() = A.transpose();
    const Eigen::Matrix<double, 6, 6> E = (M * s.t.back()).exp();
    const Eigen::Matrix3d F = E.bottomRightCorner<3, 3>().transpose();
    const Eigen::Matrix3d Q = F * E.topRightCorner<3, 3>();
    const Eigen::Matrix3d oracle = F * m0.C * F.transpose() + Q;
    EXPECT_LT((s.C.back() - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Cumulant, MeasuredOscillatorSteadyState) {
    ModelParams::Inputs in;
    in.J = 0.5;
    in.b = 0.0;
    in.k = 0.3;
    in.m = 1.4;
    in.omega = 0.8;
    const ModelParams p = ModelParams::make(in);
    const double mw2 = p.m * p.omega * p.omega;
    const double czp = (-2 * mw2 + std::sqrt(4 * mw2 * mw2 + 64 * p.k * p.k)) / (16 * p.k);
    const double czz = std::sqrt(czp / (4 * p.k * p.m));
    const double cpp = p.m * (mw2 * czz + 8 * p.k * czz * czp);
    const CumulantSeries s = run_cumulant(coherent_moments(p, 0, 0, {1, 0, 0}), p, 0.01, 80.0, NoiseStream{1, 0}, 1000);
    EXPECT_NEAR(s.C.back()(0, 0), czz, 1e-9);
    EXPECT_NEAR(s.C.back()(0, 1), czp, 1e-9);
    EXPECT_NEAR(s.C.back()(1, 1), cpp, 1e-9);
}

TEST(Cumulant, RejectsAsymmetricCovariance) {
    const ModelParams p = params_with(1.0, 1.0, 0.1);
    Eigen::Matrix3d C = Eigen::Matrix3d::Identity();
    C(0, 1) = 0.1;
    EXPECT_THROW(covariance_rhs(C, p), ConfigError);
}

TEST(Cumulant, PsdFloor) {
    Eigen::Matrix3d C = Eigen::Vector3d(1.0, 2.0, -1e-12).asDiagonal();
    EXPECT_TRUE(enforce_psd(C));
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(C).eigenvalues().minCoeff(), 0.0);
    Eigen::Matrix3d bad = Eigen::Vector3d(1.0, 2.0, -1e-3).asDiagonal();
    EXPECT_THROW(enforce_psd(bad, 7), NumericalError);
    Eigen::Matrix3d ok = Eigen::Matrix3d::Identity();
    EXPECT_FALSE(enforce_psd(ok));
}

TEST(Cumulant, ZeroCovarianceMeansFollowClassicalFlow) {
    const ModelParams p = params_with(2.0, 3.0, 0.1);
    MomentState m;
    m.mean << 1.0, 0.0, 1.5;
    ClassicalState c{1.0, 0.0, {0.0, 0.0, 1.5}};
    const double dt = 1e-3;
    for (int i = 0; i < 10000; ++i) {
        m.mean = mean_step(m, p, dt, counter_normal(1, 0, static_cast<std::uint64_t>(i)) * std::sqrt(dt));
        c = classical_step(c, p, dt);
    }
    EXPECT_NEAR(m.mean(0), c.z, 1e-10);
    EXPECT_NEAR(m.mean(1), c.p, 1e-10);
    EXPECT_EQ(m.mean(2), 1.5);
}

TEST(Cumulant, FrozenSpinMeanWithoutCrossCovariance) {
    const ModelParams p = params_with(2.0, 3.0, 0.1);
    MomentState m = coherent_moments(p, 1.0, 0.0, {1, 0, 0});
    const Eigen::Vector3d next = mean_step(m, p, 0.01, 0.3);
    EXPECT_EQ(next(2), m.mean(2));
}

TEST(Cumulant, EnsembleMeanTracksClassicalOrbit) {
    const ModelParams p = ModelParams::natural(2.0, 8.0, 0.05, 50.0);
    const double dt = 2.0 * std::numbers::pi * 1e-3;
    const double t = 2.0 * std::numbers::pi;
    const int n = 400;
    const MomentState m0 = coherent_moments(p, p.orbit_amplitude(), 0.0, {1, 0, 0});
    std::vector<double> z_end;
    for (int i = 0; i < n; ++i) {
        z_end.push_back(run_cumulant(m0, p, dt, t, NoiseStream{11, static_cast<std::uint64_t>(i)}, 1000).mean.back()(0));
    }
    double mean = 0, var = 0;
    for (double z : z_end) mean += z / n;
    for (double z : z_end) var += (z - mean) * (z - mean) / (n - 1);
    const ClassicalRecord cl = run_classical(classical_initial(p, p.orbit_amplitude(), 0.0, {1, 0, 0}), p, dt, t, 1000);
    EXPECT_LT(std::abs(mean - cl.z.back()), 3.0 * std::sqrt(var / n) + 1e-3);
}

TEST(Cumulant, LargerSpinHasSmallerPositionSpread) {
    double previous = std::numeric_limits<double>::infinity();
    for (double J : {5.0, 10.0, 25.0}) {
        const ModelParams p = ModelParams::natural(J, 8.0, 0.05, 50.0);
        const CumulantSeries s = run_cumulant(coherent_moments(p, p.orbit_amplitude(), 0, {1, 0, 0}), p,
                                              2.0 * std::numbers::pi * 1e-3, 8.0 * p.period(), NoiseStream{1, 0}, 10);
        double cmax = 0;
        for (const auto& C : s.C) cmax = std::max(cmax, C(0, 0));
        EXPECT_LT(cmax, previous) << "J = " << J;
        previous = cmax;
    }
}

TEST(Cumulant, NormalizedColumns) {
    const ModelParams p = params_with(1.0, 1.0, 0.1, 2.0, 3.0, 0.5);
    const MomentState m = coherent_moments(p, 0, 0, {1, 0, 0});
    const CumulantSeries s = run_cumulant(m, p, 0.001, 0.001, NoiseStream{1, 0});
    const auto n = s.normalized(0);
    EXPECT_NEAR(n[0], 1.0, 1e-14);
    EXPECT_NEAR(n[1], 1.0, 1e-14);
    EXPECT_NEAR(n[2], 0.5, 1e-14);
}
