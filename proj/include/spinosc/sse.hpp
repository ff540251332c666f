// Conditioned stochastic Schrödinger equation for continuous
// position measurement, single-trajectory integration and its record.
//
// Each step is a symmetric split around the measurement:
//   psi -> U(dt/2) psi,  dy = <z> dt + dW / sqrt(8k),  psi -> M(dy) psi,  psi -> U(dt/2) psi
// where U is the unitary of H and M(dy) is either the Gaussian Kraus operator
// exp(-2k dt (z - dy/dt)^2) (Scheme::kraus) or its Milstein truncation
//   1 + (-k z^2 + 4k<z> z) dt + sqrt(2k) z dW + k z^2 (dW^2 - dt)   (Scheme::milstein).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spinosc/diagnostics.hpp"
#include "spinosc/errors.hpp"
#include "spinosc/hilbert.hpp"
#include "spinosc/noise.hpp"
#include "spinosc/params.hpp"
#include "spinosc/propagator.hpp"

namespace spinosc {

enum class Scheme { kraus, milstein };

inline const char* to_string(Scheme s) { return s == Scheme::kraus ? "kraus" : "milstein"; }

struct SseConfig {
    double dt{1e-3 * 2.0 * 3.14159265358979323846};  // 1e-3 periods at omega = 1
    Scheme scheme{Scheme::kraus};
    int renormalize_every{1};
    int tail_check_every{10};
    double propagator_tol{1e-15};
    bool third_cumulants{false};         // record k_abc at every sample
    std::vector<long> histogram_steps;   // steps at which to store J_z histograms

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
        if (renormalize_every < 1) throw ConfigError("renormalize_every must be >= 1");
        if (tail_check_every < 1) throw ConfigError("tail_check_every must be >= 1");
    }
};

struct StepResult {
    double dW{0.0};
    double dy{0.0};
    double z_measured{0.0};     // <z> entering the record for this step
    double norm_residual{0.0};  // | ||psi~||^2 - 1 | before renormalization
    double czz_prior{0.0};      // C_zz just before the measurement update
    double czz_posterior{0.0};  // C_zz just after it
};

// Scratch buffers owned by one trajectory.
struct SseWorkspace {
    ScratchVectors work;
    Eigen::VectorXcd zpsi;
};

// Immutable after construction; share one engine across trajectory workers.
class SseEngine {
public:
    SseEngine(const ModelParams& params, const BasisSpec& basis, SseConfig cfg)
        : params_(params)
        , cfg_(std::move(cfg))
        , sys_(SectorSystem::from_model(params, basis))
        , ops_(build_operators(params, basis)) {
        cfg_.validate();
        half_ = ChebyshevPropagator(sys_, 0.5 * cfg_.dt, cfg_.propagator_tol);
    }

    // Engine on a caller-supplied sector system (e.g. with H switched off).
    SseEngine(const ModelParams& params, SectorSystem sys, SseConfig cfg)
        : params_(params)
        , cfg_(std::move(cfg))
        , sys_(std::move(sys))
        , ops_(build_operators(params, sys_.basis)) {
        cfg_.validate();
        half_ = ChebyshevPropagator(sys_, 0.5 * cfg_.dt, cfg_.propagator_tol);
    }

    const ModelParams& params() const noexcept { return params_; }
    const SseConfig& config() const noexcept { return cfg_; }
    const SectorSystem& system() const noexcept { return sys_; }
    const Operators& operators() const noexcept { return ops_; }
    const BasisSpec& basis() const noexcept { return sys_.basis; }
    const ChebyshevPropagator& half_step() const noexcept { return half_; }

    // <z> of an arbitrary-norm amplitude vector, through the structured kernel.
    double mean_z(const Eigen::VectorXcd& psi, SseWorkspace& ws) const {
        if (ws.zpsi.size() != psi.size()) ws.zpsi.resize(psi.size());
        sys_.apply_z(psi.data(), ws.zpsi.data());
        return psi.dot(ws.zpsi).real() / psi.squaredNorm();
    }

    StepResult step(QuantumState& state, double dW, SseWorkspace& ws, long step_index = -1) const {
        if (state.dim() != sys_.dim()) throw ConfigError("state dimension does not match engine basis");
        const SubnormalGuard guard;
        Eigen::VectorXcd& psi = state.mutable_amplitudes();
        const double dt = cfg_.dt;
        const double k = params_.k;

        half_.apply(sys_, psi, ws.work);
        const double zm = mean_z(psi, ws);
        const double czz_prior = ws.zpsi.squaredNorm() / psi.squaredNorm() - zm * zm;
        // Without measurement the record carries no information and the step is unitary.
        const double dy = k > 0.0 ? zm * dt + dW / std::sqrt(8.0 * k) : zm * dt;
        if (k > 0.0 && cfg_.scheme == Scheme::kraus) {
            const double y = dy / dt;
            apply_gaussian_measurement(sys_, psi, y, dt, ws.work);
            // Rescale by exp(2k dt (<z> - y)^2) so the step is norm-preserving to leading order.
            psi *= std::exp(2.0 * k * dt * (zm - y) * (zm - y));
        } else if (k > 0.0) {
            // ws.zpsi holds z psi from mean_z
            Eigen::VectorXcd& z2psi = ws.work[0];
            if (z2psi.size() != psi.size()) z2psi.resize(psi.size());
            sys_.apply_z(ws.zpsi.data(), z2psi.data());
            const double c1 = 4.0 * k * zm * dt + std::sqrt(2.0 * k) * dW;
            const double c2 = -k * dt + k * (dW * dW - dt);
            psi += c1 * ws.zpsi + c2 * z2psi;
        }
        const double pre = psi.squaredNorm();
        if (!std::isfinite(pre)) throw NumericalError("non-finite state norm", step_index);
        if (pre < 1e-280) throw NumericalError("norm underflow of the unnormalized state", step_index);
        const double residual = std::abs(pre - 1.0);
        const double zpost = mean_z(psi, ws);
        const double czz_posterior = ws.zpsi.squaredNorm() / pre - zpost * zpost;
        half_.apply(sys_, psi, ws.work);
        state.refresh_norm();
        if (step_index < 0 || (step_index + 1) % cfg_.renormalize_every == 0) state.normalize();
        if (step_index >= 0 && (step_index + 1) % cfg_.tail_check_every == 0) check_tail(state, step_index);
        return {dW, dy, zm, residual, czz_prior, czz_posterior};
    }

    void check_tail(const QuantumState& state, long step_index) const {
        const double tail = tail_population(state);
        if (!(tail < kTailTolerance)) {
            // coherent amplitude implied by the current energy, plus the well offset
            const double quanta = std::max(0.0, expectation(state, ops_.h) / (params_.hbar * params_.omega));
            const double alpha = std::sqrt(quanta) + std::abs(params_.delta_z) / params_.z_g();
            throw CutoffError("Fock tail population " + std::to_string(tail) + " exceeds " + std::to_string(kTailTolerance),
                              recommended_n_max(alpha), step_index);
        }
    }

private:
    ModelParams params_;
    SseConfig cfg_;
    SectorSystem sys_;
    Operators ops_;
    ChebyshevPropagator half_;
};

// One step driven by the next increment of `noise`.
inline StepResult sse_step(QuantumState& state, const SseEngine& engine, NoiseStream& noise, SseWorkspace& ws) {
    const auto index = static_cast<long>(noise.counter);
    const double dW = noise.next(engine.config().dt);
    return engine.step(state, dW, ws, index);
}

// ------------------------------------------------------------- sampling -----

struct Observables {
    double z{0.0}, p{0.0}, jx{0.0}, jy{0.0}, jz{0.0};
    Eigen::Matrix3d C{Eigen::Matrix3d::Zero()};  // symmetrized covariances of (z, p, J_z)
};

inline Observables observe(const QuantumState& s, const Operators& ops) {
    const Eigen::VectorXcd psi = s.amplitudes() / std::sqrt(s.norm_sq());
    const std::array<Eigen::VectorXcd, 3> v{ops.z.mat * psi, ops.p.mat * psi, ops.jz.mat * psi};
    Observables o;
    std::array<double, 3> mean{};
    for (int a = 0; a < 3; ++a) mean[a] = psi.dot(v[a]).real();
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            o.C(a, b) = v[a].dot(v[b]).real() - mean[a] * mean[b];
            o.C(b, a) = o.C(a, b);
        }
    }
    o.z = mean[0];
    o.p = mean[1];
    o.jz = mean[2];
    o.jx = psi.dot(ops.jx.mat * psi).real();
    o.jy = psi.dot(ops.jy.mat * psi).real();
    return o;
}

struct TrajectoryRecord {
    std::vector<double> t;
    std::vector<double> dy;       // record increment of the last step before the sample
    std::vector<double> dW;
    std::vector<double> z_meas;   // <z> that entered that dy
    std::vector<double> z, p, jx, jy, jz;
    std::vector<double> czz, czp, cpp, czjz, cpjz, cjzjz;
    std::vector<double> entropy;
    std::vector<double> norm_residual;  // worst pre-renormalization residual since the previous sample
    std::vector<diag::ThirdCumulants> third;
    std::vector<std::pair<double, std::vector<double>>> histograms;  // (t, P(M_J))

    double dt{0.0};
    std::uint64_t seed{0};
    std::uint64_t trajectory_id{0};
    unsigned refine{0};
    std::optional<std::string> error;
    long failed_step{-1};

    std::size_t size() const noexcept { return t.size(); }
    bool ok() const noexcept { return !error.has_value(); }
};

inline void append_sample(TrajectoryRecord& rec, const SseEngine& engine, const QuantumState& s, double t,
                          const StepResult* last, double norm_residual) {
    const Observables o = observe(s, engine.operators());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.t.push_back(t);
    rec.dy.push_back(last ? last->dy : nan);
    rec.dW.push_back(last ? last->dW : nan);
    rec.z_meas.push_back(last ? last->z_measured : nan);
    rec.z.push_back(o.z);
    rec.p.push_back(o.p);
    rec.jx.push_back(o.jx);
    rec.jy.push_back(o.jy);
    rec.jz.push_back(o.jz);
    rec.czz.push_back(o.C(0, 0));
    rec.czp.push_back(o.C(0, 1));
    rec.cpp.push_back(o.C(1, 1));
    rec.czjz.push_back(o.C(0, 2));
    rec.cpjz.push_back(o.C(1, 2));
    rec.cjzjz.push_back(o.C(2, 2));
    rec.entropy.push_back(diag::von_neumann_entropy(s));
    rec.norm_residual.push_back(norm_residual);
    if (engine.config().third_cumulants) rec.third.push_back(diag::third_cumulants(s, engine.operators()));
}

// Integrates to t_final (rounded to whole steps), sampling every
// `sample_stride` steps and at the end. A numerical failure stops the run and
// returns the partial record with `error` set.
inline TrajectoryRecord run_trajectory(const QuantumState& initial, const SseEngine& engine, NoiseStream noise,
                                       double t_final, long sample_stride = 1) {
    if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
    if (sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
    const SseConfig& cfg = engine.config();
    const long steps = std::max(1L, static_cast<long>(std::llround(t_final / cfg.dt)));

    TrajectoryRecord rec;
    rec.dt = cfg.dt;
    rec.seed = noise.seed;
    rec.trajectory_id = noise.trajectory_id;
    rec.refine = noise.refine;

    QuantumState state = initial;
    state.normalize();
    SseWorkspace ws;
    const std::uint64_t start = noise.counter;
    auto histogram_due = [&](long step) {
        for (long h : cfg.histogram_steps) {
            if (h == step) return true;
        }
        return false;
    };
    try {
        append_sample(rec, engine, state, 0.0, nullptr, 0.0);
        if (histogram_due(0)) rec.histograms.emplace_back(0.0, diag::jz_histogram(state));
        double worst = 0.0;
        for (long i = 0; i < steps; ++i) {
            const double dW = noise.increment_at(start + static_cast<std::uint64_t>(i), cfg.dt);
            const StepResult r = engine.step(state, dW, ws, i);
            worst = std::max(worst, r.norm_residual);
            if (!state.amplitudes().allFinite()) throw NumericalError("NaN in state", i);
            const long done = i + 1;
            const double t = static_cast<double>(done) * cfg.dt;
            if (done % sample_stride == 0 || done == steps) {
                append_sample(rec, engine, state, t, &r, worst);
                worst = 0.0;
            }
            if (histogram_due(done)) rec.histograms.emplace_back(t, diag::jz_histogram(state));
        }
    } catch (const NumericalError& e) {
        rec.error = e.what();
        rec.failed_step = e.step();
    }
    return rec;
}

} // namespace spinosc
