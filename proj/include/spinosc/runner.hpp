// Executes a resolved RunConfig and writes its outputs.
//
// Every run starts from a motional coherent state displaced by the orbit
// amplitude sqrt(2 I hbar / m omega) at rest, with the spin polarized along +x.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spinosc/classical.hpp"
#include "spinosc/config.hpp"
#include "spinosc/csv.hpp"
#include "spinosc/cumulant.hpp"
#include "spinosc/diagnostics.hpp"
#include "spinosc/ensemble.hpp"
#include "spinosc/errors.hpp"
#include "spinosc/sse.hpp"
#include "spinosc/svg.hpp"

namespace spinosc {

inline constexpr std::array<double, 3> kInitialSpinDirection{1.0, 0.0, 0.0};

struct RunOutcome {
    std::vector<std::filesystem::path> files;
    std::size_t failed_trajectories{0};
    std::optional<std::string> failure;  // first numerical failure, if any
};

inline std::string j_label(double J) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "J%g", J);
    return buf;
}

inline EnsembleSpec ensemble_spec_for(const RunConfig& c, double J) {
    EnsembleSpec s;
    s.n_traj = c.n_traj;
    s.base_seed = c.seed;
    s.params = c.params_for(J);
    s.cfg = c.sse_config();
    s.t_final = c.t_final();
    s.n_max = c.n_max_for(s.params);
    s.sample_stride = c.sample_stride;
    s.z0 = s.params.orbit_amplitude();
    s.p0 = 0.0;
    s.spin_direction = kInitialSpinDirection;
    s.workers = c.threads;
    s.entropy_norm = c.entropy_norm;
    return s;
}

inline ClassicalRecord classical_for(const RunConfig& c, const ModelParams& p) {
    const ClassicalState s0 = classical_initial(p, p.orbit_amplitude(), 0.0, kInitialSpinDirection);
    return run_classical(s0, p, c.dt, c.t_final(), c.sample_stride);
}

inline CumulantSeries cumulant_for(const RunConfig& c, const ModelParams& p, std::uint64_t trajectory_id = 0) {
    const MomentState m0 = coherent_moments(p, p.orbit_amplitude(), 0.0, kInitialSpinDirection);
    return run_cumulant(m0, p, c.dt, c.t_final(), NoiseStream{c.seed, trajectory_id}, c.sample_stride);
}

class Runner {
public:
    explicit Runner(RunConfig cfg) : cfg_(std::move(cfg)), dir_(cfg_.output_dir) {}

    RunOutcome run() {
        io::ensure_directory(dir_);
        emit_text(cfg_.output_prefix + "_config.txt", to_text(cfg_));
        nlohmann::json summary;
        summary["mode"] = to_string(cfg_.mode);
        summary["preset"] = cfg_.preset;
        summary["seed"] = cfg_.seed;
        summary["runs"] = nlohmann::json::array();
        for (double J : cfg_.J) {
            switch (cfg_.mode) {
            case Mode::sse: summary["runs"].push_back(run_trajectories(J, false)); break;
            case Mode::compare: summary["runs"].push_back(run_trajectories(J, true)); break;
            case Mode::classical: summary["runs"].push_back(run_classical_mode(J)); break;
            case Mode::cumulant: summary["runs"].push_back(run_cumulant_mode(J)); break;
            case Mode::ensemble: summary["runs"].push_back(run_ensemble_mode(J)); break;
            }
        }
        if (cfg_.mode == Mode::ensemble && cfg_.J.size() >= 2) {
            std::vector<double> js, es;
            for (const auto& r : summary["runs"]) {
                if (r["emax_normalized_mean"].is_number() && r["emax_normalized_mean"].get<double>() > 0.0) {
                    js.push_back(r["J"].get<double>());
                    es.push_back(r["emax_normalized_mean"].get<double>());
                }
            }
            if (js.size() >= 2) summary["emax_loglog_slope"] = loglog_slope(js, es);
        }
        summary["failed_trajectories"] = out_.failed_trajectories;
        emit_text(cfg_.output_prefix + "_summary.json", summary.dump(2) + "\n");
        return out_;
    }

private:
    RunConfig cfg_;
    std::filesystem::path dir_;
    RunOutcome out_;

    void emit_text(const std::string& name, const std::string& text) {
        io::write_text(dir_ / name, text);
        out_.files.push_back(dir_ / name);
    }
    void emit_csv(const std::string& name, const io::Table& t) { emit_text(name, io::to_csv(t)); }
    void emit_svg(const std::string& name, const std::string& title, const io::Table& t,
                  const std::vector<std::string>& cols) {
        if (!cfg_.svg) return;
        io::write_svg(dir_ / name, title, t, cols);
        out_.files.push_back(dir_ / name);
    }
    void note_failure(const TrajectoryRecord& r) {
        if (r.ok()) return;
        ++out_.failed_trajectories;
        if (!out_.failure) out_.failure = *r.error;
    }
    std::string stem(double J) const { return cfg_.output_prefix + "_" + to_string(cfg_.mode) + "_" + j_label(J); }

    nlohmann::json run_trajectories(double J, bool with_classical) {
        const EnsembleSpec spec = ensemble_spec_for(cfg_, J);
        const EnsembleResult res = run_ensemble(spec);
        std::optional<ClassicalRecord> cl;
        if (with_classical) cl = classical_for(cfg_, spec.params);
        nlohmann::json js;
        js["J"] = J;
        js["n_max"] = spec.n_max;
        js["dimension"] = (spec.n_max + 1) * static_cast<std::size_t>(spec.params.spin_dim());
        std::vector<double> rms, czz;
        for (const auto& r : res.records) {
            note_failure(r);
            char id[16];
            std::snprintf(id, sizeof id, "_traj%03llu", static_cast<unsigned long long>(r.trajectory_id));
            const bool grid_ok = cl && r.ok();
            const io::Table t = io::series_table(r, spec.params, grid_ok ? &*cl : nullptr);
            emit_csv(stem(J) + id + ".csv", t);
            if (!r.histograms.empty()) emit_csv(stem(J) + id + "_histogram.csv", io::histogram_table(r, spec.params));
            if (r.trajectory_id == 0) {
                std::vector<std::string> cols{"z_mean"};
                if (grid_ok) cols.push_back("z_classical");
                emit_svg(stem(J) + id + ".svg", "mean position, " + j_label(J), t, cols);
            }
            if (grid_ok) {
                const auto m = diag::classicality_metrics(r.t, r.z, r.czz, cl->t, cl->z);
                rms.push_back(m.rms_deviation_over_amplitude);
                czz.push_back(m.max_Czz_over_phasespace);
            }
        }
        js["up_fraction"] = res.aggregates.up_fraction;
        js["emax_normalized_mean"] = res.aggregates.emax_normalized_mean;
        js["failed"] = res.aggregates.n_failed;
        if (!rms.empty()) {
            js["rms_deviation_over_amplitude_median"] = median(rms);
            js["max_Czz_over_amplitude2_median"] = median(czz);
        }
        return js;
    }

    nlohmann::json run_classical_mode(double J) {
        const ModelParams p = cfg_.params_for(J);
        const ClassicalRecord cl = classical_for(cfg_, p);
        const io::Table t = io::classical_table(cl, p);
        emit_csv(stem(J) + ".csv", t);
        emit_svg(stem(J) + ".svg", "classical orbit, " + j_label(J), t, {"z_classical", "Sz"});
        nlohmann::json js;
        js["J"] = J;
        js["energy_initial"] = classical_energy(classical_initial(p, p.orbit_amplitude(), 0.0, kInitialSpinDirection), p);
        return js;
    }

    nlohmann::json run_cumulant_mode(double J) {
        const ModelParams p = cfg_.params_for(J);
        const CumulantSeries s = cumulant_for(cfg_, p);
        const io::Table t = io::cumulant_table(s, p);
        emit_csv(stem(J) + ".csv", t);
        emit_svg(stem(J) + ".svg", "closure covariances, " + j_label(J), t, {"Czz", "Cpp", "CJzJz", "Czp"});
        double cmax = 0.0;
        for (const auto& C : s.C) cmax = std::max(cmax, C(0, 0));
        nlohmann::json js;
        js["J"] = J;
        js["max_Czz_over_zg2"] = cmax / (p.z_g() * p.z_g());
        js["psd_clips"] = s.psd_clips;
        return js;
    }

    nlohmann::json run_ensemble_mode(double J) {
        const EnsembleSpec spec = ensemble_spec_for(cfg_, J);
        const EnsembleResult res = run_ensemble(spec);
        for (const auto& r : res.records) note_failure(r);
        const Aggregates& a = res.aggregates;
        nlohmann::json js;
        js["J"] = J;
        js["n_traj"] = spec.n_traj;
        js["n_used"] = a.n_used;
        js["failed"] = a.n_failed;
        js["partial"] = a.partial;
        js["up_fraction"] = a.up_fraction;
        js["emax_normalized"] = a.emax_normalized;
        js["emax_normalized_mean"] = a.emax_normalized_mean;
        js["emax_normalized_sem"] = a.emax_normalized_sem;
        if (a.n_used == 0) return js;
        const io::Table t = io::aggregate_table(a, spec.params);
        emit_csv(stem(J) + "_aggregate.csv", t);
        emit_svg(stem(J) + "_aggregate.svg", "ensemble means, " + j_label(J), t, {"z_mean", "jz_mean"});
        const CumulantSeries closure = cumulant_for(cfg_, spec.params);
        const ConvergenceReport rep = convergence_report(res.records, closure, spec.params);
        emit_csv(stem(J) + "_convergence.csv", io::convergence_table(rep, spec.params));
        js["closure_max_discrepancy"] = rep.max_discrepancy;
        if (rep.has_third_cumulants) js["max_third_cumulant"] = rep.max_third_cumulant;
        return js;
    }

    static double median(std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
};

// Runs the configuration; numerical failures still leave all outputs written
// and are reported through the returned outcome.
inline RunOutcome run(const RunConfig& cfg) { return Runner(cfg).run(); }

} // namespace spinosc
