// Many independent measurement trajectories on a worker pool,
// reduced in trajectory-id order so results never depend on scheduling.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spinosc/cumulant.hpp"
#include "spinosc/diagnostics.hpp"
#include "spinosc/errors.hpp"
#include "spinosc/hilbert.hpp"
#include "spinosc/params.hpp"
#include "spinosc/sse.hpp"

namespace spinosc {

struct EnsembleSpec {
    std::size_t n_traj{1};
    std::uint64_t base_seed{1};
    ModelParams params;
    SseConfig cfg;
    std::size_t n_max{0};         // 0: recommended_n_max for t_final
    double t_final{1.0};
    long sample_stride{1};
    double z0{0.0};
    double p0{0.0};
    std::array<double, 3> spin_direction{1.0, 0.0, 0.0};
    unsigned refine{0};
    unsigned workers{0};          // 0: hardware concurrency
    std::optional<double> entropy_norm;  // E_0 override for normalized_max_entropy

    void validate() const {
        if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
        if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
        if (sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
        params.validate();
        cfg.validate();
    }

    std::size_t resolved_n_max() const { return n_max ? n_max : recommended_n_max(params, t_final); }
};

struct Aggregates {
    std::vector<double> t;
    std::vector<double> z_mean, z_var, p_mean, p_var, jz_mean, jz_var, entropy_mean, entropy_var;
    std::size_t n_used{0};       // trajectories that completed and enter the pointwise statistics
    std::size_t n_failed{0};
    bool partial{false};         // some trajectories were excluded
    double up_fraction{0.0};     // share of completed trajectories ending with <J_z> > 0
    std::vector<double> emax_normalized;  // per completed trajectory, id order
    double emax_normalized_mean{0.0};
    double emax_normalized_sem{0.0};
};

struct EnsembleResult {
    std::vector<TrajectoryRecord> records;  // index = trajectory_id
    Aggregates aggregates;
};

namespace detail {

inline void mean_var(const std::vector<const std::vector<double>*>& cols, std::size_t i, double& mean, double& var) {
    const double n = static_cast<double>(cols.size());
    double s = 0.0;
    for (const auto* c : cols) s += (*c)[i];
    mean = s / n;
    double q = 0.0;
    for (const auto* c : cols) q += ((*c)[i] - mean) * ((*c)[i] - mean);
    var = cols.size() > 1 ? q / (n - 1.0) : 0.0;
}

} // namespace detail

// Fixed-order reduction over completed records.
inline Aggregates aggregate(const std::vector<TrajectoryRecord>& records, double J,
                            std::optional<double> entropy_norm = std::nullopt) {
    Aggregates a;
    std::vector<const TrajectoryRecord*> ok;
    for (const auto& r : records) {
        if (r.ok() && r.size() > 0) ok.push_back(&r);
        else ++a.n_failed;
    }
    a.partial = a.n_failed > 0;
    a.n_used = ok.size();
    if (ok.empty()) return a;
    const std::size_t len = ok.front()->size();
    for (const auto* r : ok) {
        if (r->size() != len) throw NumericalError("completed trajectories have different sample counts");
    }
    a.t = ok.front()->t;
    auto columns = [&](auto member) {
        std::vector<const std::vector<double>*> cols;
        for (const auto* r : ok) cols.push_back(&(r->*member));
        return cols;
    };
    struct Target {
        std::vector<double> TrajectoryRecord::*src;
        std::vector<double>* mean;
        std::vector<double>* var;
    };
    const std::array<Target, 4> targets{{{&TrajectoryRecord::z, &a.z_mean, &a.z_var},
                                         {&TrajectoryRecord::p, &a.p_mean, &a.p_var},
                                         {&TrajectoryRecord::jz, &a.jz_mean, &a.jz_var},
                                         {&TrajectoryRecord::entropy, &a.entropy_mean, &a.entropy_var}}};
    for (const auto& tg : targets) {
        const auto cols = columns(tg.src);
        tg.mean->resize(len);
        tg.var->resize(len);
        for (std::size_t i = 0; i < len; ++i) detail::mean_var(cols, i, (*tg.mean)[i], (*tg.var)[i]);
    }
    std::size_t up = 0;
    double esum = 0.0;
    for (const auto* r : ok) {
        if (r->jz.back() > 0.0) ++up;
        const double e = diag::normalized_max_entropy(r->entropy, J, entropy_norm);
        a.emax_normalized.push_back(e);
        esum += e;
    }
    const double n = static_cast<double>(ok.size());
    a.up_fraction = static_cast<double>(up) / n;
    a.emax_normalized_mean = esum / n;
    if (ok.size() > 1) {
        double q = 0.0;
        for (double e : a.emax_normalized) q += (e - a.emax_normalized_mean) * (e - a.emax_normalized_mean);
        a.emax_normalized_sem = std::sqrt(q / (n - 1.0) / n);
    }
    return a;
}

// Runs trajectories 0..n_traj-1 on streams (base_seed, id). A trajectory that
// hits a numerical failure keeps its partial record and is left out of the
// aggregates; anything else is rethrown.
inline EnsembleResult run_ensemble(const EnsembleSpec& spec) {
    spec.validate();
    const std::size_t n_max = spec.resolved_n_max();
    const BasisSpec basis = make_basis(spec.params, n_max);
    const SseEngine engine(spec.params, basis, spec.cfg);
    const QuantumState initial = initial_product_state(spec.params, n_max, spec.z0, spec.p0, spec.spin_direction);

    EnsembleResult out;
    out.records.resize(spec.n_traj);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t id = next.fetch_add(1);
            if (id >= spec.n_traj) return;
            try {
                NoiseStream noise{spec.base_seed, id, 0, spec.refine};
                out.records[id] = run_trajectory(initial, engine, noise, spec.t_final, spec.sample_stride);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(spec.n_traj);
                return;
            }
        }
    };
    unsigned n_workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
    n_workers = static_cast<unsigned>(std::min<std::size_t>(n_workers, spec.n_traj));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    out.aggregates = aggregate(out.records, spec.params.J(), spec.entropy_norm);
    return out;
}

// Least-squares slope of ln y against ln x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope needs at least two matched points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("loglog_slope needs positive values");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw ConfigError("loglog_slope needs distinct x values");
    return (n * sxy - sx * sy) / den;
}

// --------------------------------------------------- closure comparison -----

struct ConvergenceRow {
    double t{0.0};
    std::array<double, 6> discrepancy{};  // zz, pp, JzJz, zp, zJz, pJz
    double third_cumulant{0.0};            // ensemble-mean of the largest normalized k_abc
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    double max_discrepancy{0.0};
    double max_third_cumulant{0.0};
    bool has_third_cumulants{false};

    bool closure_valid(double discrepancy_tol = 0.2, double third_tol = 0.1) const {
        return max_discrepancy <= discrepancy_tol && (!has_third_cumulants || max_third_cumulant <= third_tol);
    }
};

// |C_sse - C_closure|_ab / sqrt(C_closure,aa C_closure,bb): relative error on
// the diagonal, correlation-coefficient error off it.
inline std::array<double, 6> covariance_discrepancy(const Eigen::Matrix3d& sse, const Eigen::Matrix3d& closure) {
    static constexpr std::array<std::array<int, 2>, 6> idx{{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};
    std::array<double, 6> d{};
    for (std::size_t e = 0; e < 6; ++e) {
        const int a = idx[e][0];
        const int b = idx[e][1];
        const double scale = std::sqrt(std::max(closure(a, a), 0.0) * std::max(closure(b, b), 0.0));
        const double diff = std::abs(sse(a, b) - closure(a, b));
        d[e] = scale > 0.0 ? diff / scale : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    }
    return d;
}

inline Eigen::Matrix3d record_covariance(const TrajectoryRecord& r, std::size_t i) {
    Eigen::Matrix3d C;
    C << r.czz[i], r.czp[i], r.czjz[i],
        r.czp[i], r.cpp[i], r.cpjz[i],
        r.czjz[i], r.cpjz[i], r.cjzjz[i];
    return C;
}

// Closure-vs-SSE table over the completed records. The third-cumulant column
// uses floors of z_g^2, p_g^2 and hbar^2/4 on the variances.
inline ConvergenceReport convergence_report(const std::vector<TrajectoryRecord>& records, const CumulantSeries& closure,
                                            const ModelParams& params) {
    std::vector<const TrajectoryRecord*> ok;
    for (const auto& r : records) {
        if (r.ok()) ok.push_back(&r);
    }
    if (ok.empty()) throw ConfigError("convergence_report: no completed trajectories");
    const std::size_t len = ok.front()->size();
    if (closure.size() != len) throw ConfigError("convergence_report: closure and SSE sample counts differ");
    if (std::abs(closure.z_g - params.z_g()) > 1e-12 * params.z_g() || std::abs(closure.hbar - params.hbar) > 0.0) {
        throw ConfigError("convergence_report: closure was run with different parameters");
    }
    ConvergenceReport rep;
    rep.has_third_cumulants = !ok.front()->third.empty();
    const std::array<double, 3> floor{params.z_g() * params.z_g(), params.p_g() * params.p_g(),
                                      0.25 * params.hbar * params.hbar};
    for (std::size_t i = 0; i < len; ++i) {
        if (std::abs(closure.t[i] - ok.front()->t[i]) > 1e-9 * std::max(1.0, closure.t[i])) {
            throw ConfigError("convergence_report: time grids differ");
        }
        Eigen::Matrix3d mean = Eigen::Matrix3d::Zero();
        double third = 0.0;
        for (const auto* r : ok) {
            mean += record_covariance(*r, i);
            if (rep.has_third_cumulants) {
                third += diag::max_normalized_third_cumulant(r->third[i], {r->czz[i], r->cpp[i], r->cjzjz[i]}, floor);
            }
        }
        mean /= static_cast<double>(ok.size());
        ConvergenceRow row;
        row.t = closure.t[i];
        row.discrepancy = covariance_discrepancy(mean, closure.C[i]);
        row.third_cumulant = third / static_cast<double>(ok.size());
        for (double d : row.discrepancy) rep.max_discrepancy = std::max(rep.max_discrepancy, d);
        rep.max_third_cumulant = std::max(rep.max_third_cumulant, row.third_cumulant);
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace spinosc
