// Spin-motion entanglement, spinor branches, J_z histograms,
// higher cumulants and classicality metrics

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinosc/errors.hpp"
#include "spinosc/hilbert.hpp"

namespace spinosc::diag {

// Eigenvalues below this contribute nothing (0 ln 0 = 0).
constexpr double kEntropyFloor = 1e-14;

// Columns are the unnormalized motional wave functions phi_M, ascending in M.
inline Eigen::MatrixXcd spinor_components(const QuantumState& s) {
    return s.as_matrix() / std::sqrt(s.norm_sq());
}

// G_{MM'} = <phi_M | phi_M'>.
inline Eigen::MatrixXcd branch_gram(const QuantumState& s) {
    const Eigen::MatrixXcd phi = spinor_components(s);
    return phi.adjoint() * phi;
}

// rho_spin = Tr_motion |psi><psi|, accumulated level by level.
inline Eigen::MatrixXcd reduced_spin_density(const QuantumState& s) {
    const auto mat = s.as_matrix();
    const auto ns = mat.cols();
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(ns, ns);
    for (Eigen::Index n = 0; n < mat.rows(); ++n) {
        for (Eigen::Index a = 0; a < ns; ++a) {
            for (Eigen::Index b = 0; b < ns; ++b) rho(a, b) += mat(n, a) * std::conj(mat(n, b));
        }
    }
    return rho / s.norm_sq();
}

inline double entropy_of_spectrum(const Eigen::VectorXd& eig) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        const double l = eig[i];
        if (l > kEntropyFloor) e -= l * std::log(l);
    }
    return e;
}

inline double entropy_of(const Eigen::MatrixXcd& hermitian) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed in entropy");
    return entropy_of_spectrum(es.eigenvalues());
}

inline void require_normalized(const QuantumState& s) {
    if (std::abs(s.norm_sq() - 1.0) > 1e-8) {
        throw ConfigError("entropy requires a normalized state, norm^2 = " + std::to_string(s.norm_sq()));
    }
}

// Natural-log von Neumann entropy of the spin marginal, from the branch Gram
// matrix (same nonzero spectrum as rho_spin, and only (2J+1)^2 in size).
inline double von_neumann_entropy(const QuantumState& s) {
    require_normalized(s);
    return entropy_of(branch_gram(s));
}

// Entropy of the motional marginal; O(n_max^3), for cross-checks on small systems.
inline double motional_entropy(const QuantumState& s) {
    require_normalized(s);
    const Eigen::MatrixXcd phi = spinor_components(s);
    return entropy_of(phi * phi.adjoint());
}

// Maximum entropy along a trajectory over E_0 (default ln(2J+1)).
inline double normalized_max_entropy(std::span<const double> entropy, double J, std::optional<double> e0 = std::nullopt) {
    if (entropy.empty()) throw ConfigError("normalized_max_entropy: empty entropy series");
    const double norm = e0.value_or(std::log(2.0 * J + 1.0));
    if (!(norm > 0.0)) throw ConfigError("normalized_max_entropy: E_0 must be positive");
    double peak = 0.0;
    for (double e : entropy) {
        if (std::isfinite(e)) peak = std::max(peak, e);
    }
    return peak / norm;
}

// Population of each M_J, ascending in M.
inline std::vector<double> jz_histogram(const QuantumState& s) {
    const auto mat = s.as_matrix();
    std::vector<double> h(static_cast<std::size_t>(mat.cols()));
    for (Eigen::Index c = 0; c < mat.cols(); ++c) h[static_cast<std::size_t>(c)] = mat.col(c).squaredNorm() / s.norm_sq();
    return h;
}

// Symmetrized third cumulants k_abc of (z, p, J_z), indexed [a][b][c] with
// 0 = z, 1 = p, 2 = J_z. Operator orderings are averaged over permutations.
using ThirdCumulants = std::array<std::array<std::array<double, 3>, 3>, 3>;

inline ThirdCumulants third_cumulants(const QuantumState& s, const Operators& ops) {
    const std::array<const Operator*, 3> op{&ops.z, &ops.p, &ops.jz};
    const Eigen::VectorXcd psi = s.amplitudes() / std::sqrt(s.norm_sq());
    std::array<Eigen::VectorXcd, 3> d;  // (a - <a>) psi
    for (int a = 0; a < 3; ++a) {
        const Eigen::VectorXcd v = op[a]->mat * psi;
        const double mean = psi.dot(v).real();
        d[a] = v - mean * psi;
    }
    // raw[a][b][c] = <psi| da db dc |psi> = <da psi| db |dc psi> (da Hermitian)
    std::array<std::array<std::array<cd, 3>, 3>, 3> raw{};
    for (int b = 0; b < 3; ++b) {
        const double mean_b = psi.dot(op[b]->mat * psi).real();
        for (int c = 0; c < 3; ++c) {
            const Eigen::VectorXcd bc = op[b]->mat * d[c] - mean_b * d[c];
            for (int a = 0; a < 3; ++a) raw[a][b][c] = d[a].dot(bc);
        }
    }
    ThirdCumulants out{};
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            for (int c = 0; c < 3; ++c) {
                const cd sum = raw[a][b][c] + raw[a][c][b] + raw[b][a][c] + raw[b][c][a] + raw[c][a][b] + raw[c][b][a];
                out[a][b][c] = sum.real() / 6.0;
            }
        }
    }
    return out;
}

// Largest |k_abc| / sqrt(C_aa C_bb C_cc) over the ten distinct index sets, with
// the Gaussian scale of each variable floored at `var_floor` (same units as C).
inline double max_normalized_third_cumulant(const ThirdCumulants& k, const std::array<double, 3>& variances,
                                            const std::array<double, 3>& var_floor) {
    double worst = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            for (int c = b; c < 3; ++c) {
                const double va = std::max(variances[a], var_floor[a]);
                const double vb = std::max(variances[b], var_floor[b]);
                const double vc = std::max(variances[c], var_floor[c]);
                worst = std::max(worst, std::abs(k[a][b][c]) / std::sqrt(va * vb * vc));
            }
        }
    }
    return worst;
}

struct ClassicalityMetrics {
    double rms_deviation_over_amplitude{0.0};
    double max_Czz_over_phasespace{0.0};
};

// Time-RMS of <z> - z_cl over the classical orbit amplitude max|z_cl|, and the
// largest C_zz over amplitude^2.
inline ClassicalityMetrics classicality_metrics(std::span<const double> t_quantum, std::span<const double> z_quantum,
                                                std::span<const double> czz, std::span<const double> t_classical,
                                                std::span<const double> z_classical) {
    const std::size_t n = t_quantum.size();
    if (n == 0 || z_quantum.size() != n || czz.size() != n || t_classical.size() != n || z_classical.size() != n) {
        throw ConfigError("classicality_metrics: series lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(t_quantum[i] - t_classical[i]) > 1e-9 * std::max(1.0, std::abs(t_quantum[i]))) {
            throw ConfigError("classicality_metrics: time grids differ at sample " + std::to_string(i));
        }
    }
    double amp = 0.0;
    for (double z : z_classical) amp = std::max(amp, std::abs(z));
    if (!(amp > 0.0)) throw ConfigError("classicality_metrics: classical orbit has zero amplitude");
    double sq = 0.0;
    double cmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = z_quantum[i] - z_classical[i];
        sq += d * d;
        cmax = std::max(cmax, czz[i]);
    }
    return {std::sqrt(sq / static_cast<double>(n)) / amp, cmax / (amp * amp)};
}

} // namespace spinosc::diag
