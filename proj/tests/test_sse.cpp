#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>

#include "spinosc/diagnostics.hpp"
#include "spinosc/noise.hpp"
#include "spinosc/propagator.hpp"
#include "spinosc/sse.hpp"
#include "test_support.hpp"

using namespace spinosc;
using spinosc::test::dense;

namespace {

Eigen::VectorXcd random_state(std::size_t dim, std::uint64_t seed) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        v[static_cast<Eigen::Index>(i)] = {counter_normal(seed, 0, 2 * i), counter_normal(seed, 0, 2 * i + 1)};
    }
    return v.normalized();
}

// Random state confined to the lower half of the Fock ladder.
Eigen::VectorXcd low_state(const BasisSpec& b, std::uint64_t seed) {
    Eigen::VectorXcd v = random_state(b.dim(), seed);
    for (std::size_t i = 0; i < b.dim(); ++i) {
        if (b.split(i).first > b.n_max / 2) v[static_cast<Eigen::Index>(i)] = 0.0;
    }
    return v.normalized();
}

// Steady conditional covariance of a continuously measured oscillator:
// 0 = 2 Czp/m - 8k Czz^2, 0 = Cpp/m - m w^2 Czz - 8k Czz Czp, 0 = -2 m w^2 Czp + 2 hbar^2 k - 8k Czp^2.
Eigen::Vector3d measured_oscillator_steady_state(const ModelParams& p) {
    const double mw2 = p.m * p.omega * p.omega;
    const double czp = (-2.0 * mw2 + std::sqrt(4.0 * mw2 * mw2 + 64.0 * p.hbar * p.hbar * p.k * p.k)) / (16.0 * p.k);
    const double czz = std::sqrt(2.0 * czp / (8.0 * p.k * p.m));
    const double cpp = p.m * (mw2 * czz + 8.0 * p.k * czz * czp);
    return {czz, czp, cpp};
}

} // namespace

TEST(SectorKernels, MatchSparseOperators) {
    const ModelParams p = ModelParams::natural(1.5, 2.0, 0.05, 2.0);
    const BasisSpec b = make_basis(p, 15);
    const SectorSystem sys = SectorSystem::from_model(p, b);
    const Operators ops = build_operators(p, b);
    const Eigen::VectorXcd v = random_state(b.dim(), 3);
    Eigen::VectorXcd out(v.size());
    sys.apply_z(v.data(), out.data());
    EXPECT_LT((out - ops.z.mat * v).norm(), 1e-13);
    sys.apply_h(v.data(), out.data());
    EXPECT_LT((out - ops.h.mat * v).norm(), 1e-12);
    sys.apply_h(v.data(), out.data(), 1.5, 0.25);
    EXPECT_LT((out - 0.25 * (ops.h.mat * v - 1.5 * v)).norm(), 1e-12);
}

TEST(Chebyshev, MatchesDenseExponential) {
    ModelParams::Inputs in;
    in.J = 1.0;
    in.delta_z = 1.3;
    in.hbar = 0.8;
    in.m = 1.1;
    in.omega = 1.7;
    const ModelParams p = ModelParams::make(in);
    const BasisSpec b = make_basis(p, 20);
    const SectorSystem sys = SectorSystem::from_model(p, b);
    const Eigen::MatrixXcd h = dense(build_operators(p, b).h);
    for (double tau : {0.001, 0.05, 0.7}) {
        const ChebyshevPropagator prop(sys, tau);
        Eigen::VectorXcd psi = random_state(b.dim(), 11);
        const Eigen::VectorXcd oracle = (std::complex<double>(0.0, -tau / p.hbar) * h).exp() * psi;
        ScratchVectors work;
        prop.apply(sys, psi, work);
        EXPECT_LT((psi - oracle).norm(), 1e-12) << "tau = " << tau;
    }
}

TEST(Measurement, MatchesDenseGaussianOperator) {
    const ModelParams p = ModelParams::natural(0.5, 3.0, 0.05, 2.0);
    const BasisSpec b = make_basis(p, 24);
    const SectorSystem sys = SectorSystem::from_model(p, b);
    const Eigen::MatrixXcd z = dense(build_operators(p, b).z);
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(z.rows(), z.cols());
    for (double y : {0.0, 1.5, -40.0}) {
        const double dt = 0.01;
        const Eigen::MatrixXcd zy = z - y * id;
        const Eigen::MatrixXcd m = (-2.0 * p.k * dt * zy * zy).exp();
        Eigen::VectorXcd psi = low_state(b, 5);
        const Eigen::VectorXcd oracle = m * psi;
        ScratchVectors work;
        apply_gaussian_measurement(sys, psi, y, dt, work);
        EXPECT_LT((psi - oracle).norm(), 1e-12 * oracle.norm()) << "y = " << y;
    }
}

TEST(Kernels, TrimSupportDropsOnlyNegligibleLevels) {
    const BasisSpec b{30, 3};
    Eigen::VectorXcd psi = low_state(b, 8);
    const Eigen::VectorXcd original = psi;
    psi[static_cast<Eigen::Index>(b.index(25, 1))] = 1e-31;
    psi[static_cast<Eigen::Index>(b.index(28, 2))] = 1e-20;
    EXPECT_EQ(trim_support(psi, b.spin_dim), b.index(29, 0));
    EXPECT_EQ(psi[static_cast<Eigen::Index>(b.index(28, 2))], std::complex<double>(1e-20));
    EXPECT_EQ(psi[static_cast<Eigen::Index>(b.index(25, 1))], std::complex<double>(1e-31));
    psi[static_cast<Eigen::Index>(b.index(28, 2))] = 0.0;
    EXPECT_EQ(trim_support(psi, b.spin_dim), b.index(b.n_max / 2 + 1, 0));
    EXPECT_EQ(psi[static_cast<Eigen::Index>(b.index(25, 1))], std::complex<double>(0.0));
    EXPECT_EQ((psi - original).norm(), 0.0);
}

TEST(Kernels, PartialAndFullSupportShareScratch) {
    const ModelParams p = ModelParams::natural(1.0, 2.0, 0.08, 3.0);
    const BasisSpec b = make_basis(p, 30);
    const SectorSystem sys = SectorSystem::from_model(p, b);
    const Operators ops = build_operators(p, b);
    const Eigen::MatrixXcd h = dense(ops.h);
    const Eigen::MatrixXcd z = dense(ops.z);
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(z.rows(), z.cols());
    ScratchVectors work;
    const double tau = 0.3, dt = 0.02, y = 2.5;
    const ChebyshevPropagator prop(sys, tau);
    const Eigen::MatrixXcd u = (std::complex<double>(0.0, -tau / p.hbar) * h).exp();
    const Eigen::MatrixXcd g = (-2.0 * p.k * dt * (z - y * id) * (z - y * id)).exp();
    for (std::uint64_t seed : {21u, 22u, 23u, 24u}) {
        Eigen::VectorXcd psi = seed % 2 ? random_state(b.dim(), seed) : low_state(b, seed);
        const Eigen::VectorXcd after_u = u * psi;
        prop.apply(sys, psi, work);
        EXPECT_LT((psi - after_u).norm(), 1e-12) << seed;
        const Eigen::VectorXcd after_g = g * psi;
        apply_gaussian_measurement(sys, psi, y, dt, work);
        EXPECT_LT((psi - after_g).norm(), 1e-12 * after_g.norm()) << seed;
    }
}

TEST(Sse, RecordIncrementFormula) {
    const ModelParams p = ModelParams::natural(1.0, 2.0, 0.05, 3.0);
    const BasisSpec b = make_basis(p, recommended_n_max(p, 1.0));
    const SseEngine eng(p, b, SseConfig{});
    QuantumState s = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    NoiseStream noise{5, 1};
    SseWorkspace ws;
    for (int i = 0; i < 20; ++i) {
        const StepResult r = sse_step(s, eng, noise, ws);
        EXPECT_DOUBLE_EQ(r.dy, r.z_measured * eng.config().dt + r.dW / std::sqrt(8.0 * p.k));
        EXPECT_LT(r.czz_posterior, r.czz_prior);
        EXPECT_NEAR(s.norm_sq(), 1.0, 1e-14);
    }
}

TEST(Sse, UnitaryLimitConservesEnergy) {
    ModelParams::Inputs in;
    in.J = 1.0;
    in.delta_z = 2.0;
    in.k = 0.0;
    in.I_action = 4.0;
    const ModelParams p = ModelParams::make(in);
    const BasisSpec b = make_basis(p, recommended_n_max(p, 10.0));
    const SseEngine eng(p, b, SseConfig{});
    QuantumState s = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    const double e0 = expectation(s, eng.operators().h);
    NoiseStream noise{1, 0};
    SseWorkspace ws;
    for (int i = 0; i < 2000; ++i) sse_step(s, eng, noise, ws);
    EXPECT_LT(std::abs(expectation(s, eng.operators().h) - e0) / std::abs(e0), 1e-10);
}

TEST(Sse, DecoupledSpinStaysUnentangled) {
    ModelParams::Inputs in;
    in.J = 1.0;
    in.b = 0.0;
    in.k = 0.2;
    in.I_action = 3.0;
    const ModelParams p = ModelParams::make(in);
    const BasisSpec b = make_basis(p, recommended_n_max(p, 20.0));
    const SseEngine eng(p, b, SseConfig{});
    const QuantumState s0 = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    const TrajectoryRecord rec = run_trajectory(s0, eng, NoiseStream{2, 0}, 6.0, 50);
    ASSERT_TRUE(rec.ok());
    for (double e : rec.entropy) EXPECT_LT(e, 1e-10);
    for (double jz : rec.jz) EXPECT_NEAR(jz, 0.0, 1e-12);
}

TEST(Sse, MeasurementLocalizesToRiccatiSteadyState) {
    ModelParams::Inputs in;
    in.J = 0.5;
    in.b = 0.0;
    in.k = 0.5;
    in.I_action = 2.0;
    const ModelParams p = ModelParams::make(in);
    const Eigen::Vector3d oracle = measured_oscillator_steady_state(p);
    const BasisSpec b = make_basis(p, recommended_n_max(p, 30.0));
    SseConfig cfg;
    cfg.dt = 2e-3;
    const SseEngine eng(p, b, cfg);
    const QuantumState s0 = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    const TrajectoryRecord rec = run_trajectory(s0, eng, NoiseStream{4, 0}, 15.0, 500);
    ASSERT_TRUE(rec.ok());
    EXPECT_NEAR(rec.czz.back(), oracle[0], 2e-3 * oracle[0]);
    EXPECT_NEAR(rec.czp.back(), oracle[1], 2e-3 * std::abs(oracle[1]) + 1e-4);
    EXPECT_NEAR(rec.cpp.back(), oracle[2], 2e-3 * oracle[2]);
}

TEST(Sse, SameNoiseSameTrajectory) {
    const ModelParams p = ModelParams::natural(2.0, 4.0, 0.05, 5.0);
    const BasisSpec b = make_basis(p, recommended_n_max(p, 3.0));
    const SseEngine eng(p, b, SseConfig{});
    const QuantumState s0 = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    const TrajectoryRecord a = run_trajectory(s0, eng, NoiseStream{9, 3}, 3.0, 7);
    const TrajectoryRecord c = run_trajectory(s0, eng, NoiseStream{9, 3}, 3.0, 7);
    const TrajectoryRecord d = run_trajectory(s0, eng, NoiseStream{9, 4}, 3.0, 7);
    ASSERT_EQ(a.size(), c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.z[i], c.z[i]);
        EXPECT_EQ(a.entropy[i], c.entropy[i]);
    }
    EXPECT_NE(a.z.back(), d.z.back());
}

TEST(Sse, SchemesAgreeOnSharedNoise) {
    const ModelParams p = ModelParams::natural(1.0, 1.0, 0.05, 1.0);
    const BasisSpec b = make_basis(p, 30);
    SseConfig ck;
    ck.dt = 1e-3;
    SseConfig cm = ck;
    cm.scheme = Scheme::milstein;
    const SseEngine ek(p, b, ck), em(p, b, cm);
    QuantumState sk = initial_product_state(p, b.n_max, 0.5, 0.0, {1, 0, 0});
    QuantumState sm = sk;
    NoiseStream nk{3, 0}, nm{3, 0};
    SseWorkspace wk, wm;
    for (int i = 0; i < 1000; ++i) {
        sse_step(sk, ek, nk, wk);
        sse_step(sm, em, nm, wm);
    }
    const double f = std::norm(sk.amplitudes().dot(sm.amplitudes()));
    EXPECT_GT(f, 1.0 - 1e-6);
}

TEST(Sse, CutoffFailureKeepsPartialRecord) {
    const ModelParams p = ModelParams::natural(0.5, 6.0, 0.05, 4.0);
    const BasisSpec b = make_basis(p, 40);
    const SseEngine eng(p, b, SseConfig{});
    // fits at t = 0 but the spin-split branches later outgrow the ladder
    const QuantumState s0 = initial_product_state(p, b.n_max, p.orbit_amplitude(), 0.0, {1, 0, 0});
    const TrajectoryRecord rec = run_trajectory(s0, eng, NoiseStream{1, 0}, 2.0 * p.period(), 10);
    EXPECT_FALSE(rec.ok());
    EXPECT_GE(rec.failed_step, 0);
    EXPECT_GT(rec.size(), 0u);
    EXPECT_NE(rec.error->find("n_max"), std::string::npos);
}

TEST(Noise, RefinedStreamsShareTheBrownianPath) {
    const NoiseStream coarse{17, 2, 0, 1};
    const NoiseStream fine{17, 2, 0, 0};
    const double dt = 0.01;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const double sum = fine.increment_at(2 * i, dt / 2) + fine.increment_at(2 * i + 1, dt / 2);
        EXPECT_NEAR(coarse.increment_at(i, dt), sum, 1e-15);
    }
}

TEST(Noise, MomentsOfIncrements) {
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = counter_normal(123, 0, static_cast<std::uint64_t>(i));
        s += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(Noise, StreamsAreUncorrelated) {
    const int steps = 20000;
    for (std::uint64_t a = 0; a < 4; ++a) {
        for (std::uint64_t b = a + 1; b < 5; ++b) {
            double c = 0;
            for (int i = 0; i < steps; ++i) {
                c += counter_normal(1, a, static_cast<std::uint64_t>(i)) * counter_normal(1, b, static_cast<std::uint64_t>(i));
            }
            EXPECT_LT(std::abs(c / steps), 4.0 / std::sqrt(steps));
        }
    }
}
