// Truncated Fock⊗spin space: operators, coherent states, moments

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "spinosc/errors.hpp"
#include "spinosc/params.hpp"

namespace spinosc {

using cd = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cd, Eigen::RowMajor>;

struct Operator {
    SparseOp mat;
    bool hermitian{false};

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mat.rows()); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const {
        if (v.size() != mat.cols()) throw ConfigError("operator/state dimension mismatch");
        return mat * v;
    }

    // Largest elementwise |A - A^dagger|.
    double hermiticity_defect() const {
        SparseOp diff = SparseOp(mat.adjoint()) - mat;
        double worst = 0.0;
        for (int r = 0; r < diff.outerSize(); ++r) {
            for (SparseOp::InnerIterator it(diff, r); it; ++it) worst = std::max(worst, std::abs(it.value()));
        }
        return worst;
    }
};

struct Operators {
    BasisSpec basis;
    Operator z, p, jz, jx, jy, h;
};

// Amplitude vector on a BasisSpec with a cached squared norm. Anyone writing
// through mutable_amplitudes() must call refresh_norm() afterwards.
class QuantumState {
public:
    QuantumState() = default;
    QuantumState(BasisSpec basis, Eigen::VectorXcd amps)
        : basis_(basis), amps_(std::move(amps)) {
        if (static_cast<std::size_t>(amps_.size()) != basis_.dim()) {
            throw ConfigError("amplitude vector length does not match basis dimension");
        }
        refresh_norm();
    }

    const BasisSpec& basis() const noexcept { return basis_; }
    std::size_t dim() const noexcept { return basis_.dim(); }
    const Eigen::VectorXcd& amplitudes() const noexcept { return amps_; }
    Eigen::VectorXcd& mutable_amplitudes() noexcept { return amps_; }

    cd at(std::size_t fock, std::size_t spin) const { return amps_[static_cast<Eigen::Index>(basis_.index(fock, spin))]; }

    double norm_sq() const noexcept { return norm_sq_; }
    double refresh_norm() {
        norm_sq_ = amps_.squaredNorm();
        return norm_sq_;
    }
    void normalize() {
        refresh_norm();
        if (!(norm_sq_ > 0.0) || !std::isfinite(norm_sq_)) throw NumericalError("cannot normalize state with norm^2 = " + std::to_string(norm_sq_));
        amps_ /= std::sqrt(norm_sq_);
        norm_sq_ = 1.0;
    }

    // Row-major (fock x spin) view: column s is the motional wave function of M_s.
    Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> as_matrix() const {
        return {amps_.data(), static_cast<Eigen::Index>(basis_.fock_dim()), static_cast<Eigen::Index>(basis_.spin_dim)};
    }

private:
    BasisSpec basis_{};
    Eigen::VectorXcd amps_;
    double norm_sq_{0.0};
};

// ----------------------------------------------------------- operators ------

namespace detail {

inline SparseOp from_triplets(std::size_t dim, const std::vector<Eigen::Triplet<cd>>& t) {
    SparseOp m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

// J_+ matrix element <M+1|J_+|M> in units of hbar.
inline double raising(double J, double M) { return std::sqrt(J * (J + 1.0) - M * (M + 1.0)); }

} // namespace detail

// z = z_g (a + a^dag), p = i p_g (a^dag - a), spin matrices in units of hbar,
// H = hbar omega (a^dag a + 1/2) + b z J_z. The oscillator part is built
// diagonally; it matches p^2/2m + m omega^2 z^2/2 on every level except the
// top one, where the truncated products are wrong anyway.
inline Operators build_operators(const ModelParams& params, const BasisSpec& basis) {
    params.validate();
    basis.validate();
    if (basis.n_max < 1) throw ConfigError("n_max must be at least 1");
    if (basis.spin_dim != static_cast<std::size_t>(params.spin_dim())) {
        throw ConfigError("basis spin_dim " + std::to_string(basis.spin_dim) + " does not match 2J+1 = " +
                          std::to_string(params.spin_dim()));
    }
    const std::size_t nf = basis.fock_dim();
    const std::size_t ns = basis.spin_dim;
    const std::size_t dim = basis.dim();
    const double zg = params.z_g();
    const double pg = params.p_g();
    const double hb = params.hbar;
    const double J = params.J();

    std::vector<Eigen::Triplet<cd>> tz, tp, tjz, tjx, tjy, th;
    for (std::size_t n = 0; n < nf; ++n) {
        for (std::size_t s = 0; s < ns; ++s) {
            const auto i = static_cast<int>(basis.index(n, s));
            const double M = basis.m_value(s);
            th.emplace_back(i, i, hb * params.omega * (static_cast<double>(n) + 0.5));
            tjz.emplace_back(i, i, hb * M);
            if (n + 1 < nf) {
                const auto up = static_cast<int>(basis.index(n + 1, s));
                const double sq = std::sqrt(static_cast<double>(n + 1));
                // <n+1|a^dag|n> = sqrt(n+1)
                tz.emplace_back(up, i, zg * sq);
                tz.emplace_back(i, up, zg * sq);
                tp.emplace_back(up, i, cd(0.0, pg * sq));
                tp.emplace_back(i, up, cd(0.0, -pg * sq));
                th.emplace_back(up, i, params.b * zg * sq * hb * M);
                th.emplace_back(i, up, params.b * zg * sq * hb * M);
            }
            if (s + 1 < ns) {
                const auto sp = static_cast<int>(basis.index(n, s + 1));
                const double r = hb * detail::raising(J, M);
                tjx.emplace_back(sp, i, 0.5 * r);
                tjx.emplace_back(i, sp, 0.5 * r);
                tjy.emplace_back(sp, i, cd(0.0, -0.5 * r));
                tjy.emplace_back(i, sp, cd(0.0, 0.5 * r));
            }
        }
    }
    Operators ops;
    ops.basis = basis;
    ops.z = {detail::from_triplets(dim, tz), true};
    ops.p = {detail::from_triplets(dim, tp), true};
    ops.jz = {detail::from_triplets(dim, tjz), true};
    ops.jx = {detail::from_triplets(dim, tjx), true};
    ops.jy = {detail::from_triplets(dim, tjy), true};
    ops.h = {detail::from_triplets(dim, th), true};
    return ops;
}

// ------------------------------------------------------- initial states -----

// Population of the top 5% of Fock levels, relative to the total norm.
inline double tail_population(const QuantumState& s) {
    const auto mat = s.as_matrix();
    const auto begin = static_cast<Eigen::Index>(s.basis().tail_begin());
    const double tail = mat.bottomRows(mat.rows() - begin).squaredNorm();
    return tail / s.norm_sq();
}

constexpr double kTailTolerance = 1e-8;

// Fock-factor coherent state |alpha> with alpha = (z0/z_g + i p0/p_g)/2.
inline QuantumState motional_coherent_state(const ModelParams& params, std::size_t n_max, double z0, double p0) {
    if (n_max < 1) throw ConfigError("n_max must be at least 1");
    const cd alpha(0.5 * z0 / params.z_g(), 0.5 * p0 / params.p_g());
    const BasisSpec basis{n_max, 1};
    Eigen::VectorXcd amps(static_cast<Eigen::Index>(basis.dim()));
    // c_n = c_{n-1} alpha / sqrt(n), started at exp(-|alpha|^2/2)
    amps[0] = std::exp(-0.5 * std::norm(alpha));
    for (std::size_t n = 1; n <= n_max; ++n) {
        amps[static_cast<Eigen::Index>(n)] = amps[static_cast<Eigen::Index>(n - 1)] * alpha / std::sqrt(static_cast<double>(n));
    }
    QuantumState s(basis, std::move(amps));
    if (tail_population(s) > kTailTolerance) {
        throw CutoffError("coherent state with |alpha| = " + std::to_string(std::abs(alpha)) + " does not fit in n_max = " +
                              std::to_string(n_max),
                          recommended_n_max(std::abs(alpha)));
    }
    s.normalize();
    return s;
}

// Spin coherent state: |J,J> rotated to point along `direction`.
// Amplitudes are d^J_{M,J}(theta) e^{-i M phi}, spin index ascending in M.
inline QuantumState spin_coherent_state(double J, std::array<double, 3> direction) {
    const int two_j = two_j_from(J);
    const double len = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
    if (!(len > 0.0)) throw ConfigError("spin direction must be a nonzero vector");
    const double theta = std::acos(std::clamp(direction[2] / len, -1.0, 1.0));
    const double phi = std::atan2(direction[1], direction[0]);
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    const BasisSpec basis{0, static_cast<std::size_t>(two_j + 1)};
    Eigen::VectorXcd amps(two_j + 1);
    for (int up = 0; up <= two_j; ++up) {
        // up = J + M
        const double M = up - 0.5 * two_j;
        const double log_binom = std::lgamma(two_j + 1.0) - std::lgamma(up + 1.0) - std::lgamma(two_j - up + 1.0);
        const double mag = std::exp(0.5 * log_binom) * std::pow(c, up) * std::pow(s, two_j - up);
        amps[up] = std::polar(mag, -M * phi);
    }
    QuantumState out(basis, std::move(amps));
    out.normalize();
    return out;
}

// |phi> (Fock factor) ⊗ |chi> (spin factor).
inline QuantumState product_state(const QuantumState& motion, const QuantumState& spin) {
    if (motion.basis().spin_dim != 1 || spin.basis().fock_dim() != 1) {
        throw ConfigError("product_state expects a Fock-only and a spin-only factor");
    }
    const BasisSpec basis{motion.basis().n_max, spin.basis().spin_dim};
    Eigen::VectorXcd amps(static_cast<Eigen::Index>(basis.dim()));
    for (std::size_t n = 0; n < basis.fock_dim(); ++n) {
        for (std::size_t s = 0; s < basis.spin_dim; ++s) {
            amps[static_cast<Eigen::Index>(basis.index(n, s))] =
                motion.amplitudes()[static_cast<Eigen::Index>(n)] * spin.amplitudes()[static_cast<Eigen::Index>(s)];
        }
    }
    return QuantumState(basis, std::move(amps));
}

// Motional coherent state at (z0, p0) times the spin coherent state along `direction`.
inline QuantumState initial_product_state(const ModelParams& params, std::size_t n_max, double z0, double p0,
                                          std::array<double, 3> direction) {
    return product_state(motional_coherent_state(params, n_max, z0, p0), spin_coherent_state(params.J(), direction));
}

// ------------------------------------------------------------- moments ------

inline void check_dims(const QuantumState& s, const Operator& op) {
    if (s.dim() != op.dim()) {
        throw ConfigError("dimension mismatch: state " + std::to_string(s.dim()) + " vs operator " + std::to_string(op.dim()));
    }
}

inline cd expectation_complex(const QuantumState& s, const Operator& op) {
    check_dims(s, op);
    return s.amplitudes().dot(op.mat * s.amplitudes()) / s.norm_sq();
}

// <op> for Hermitian op, normalized by the state's norm. The imaginary part is
// rounding noise and is checked before being discarded.
inline double expectation(const QuantumState& s, const Operator& op) {
    check_dims(s, op);
    const Eigen::VectorXcd v = op.mat * s.amplitudes();
    const cd val = s.amplitudes().dot(v) / s.norm_sq();
    const double scale = std::sqrt(v.squaredNorm() / s.norm_sq());
    if (std::abs(val.imag()) > 1e-10 * std::max(1.0, scale)) {
        throw NumericalError("expectation of a Hermitian operator has imaginary part " + std::to_string(val.imag()));
    }
    return val.real();
}

// Symmetrized covariance (<ab> + <ba>)/2 - <a><b>; for Hermitian a, b the first
// term is Re <a psi | b psi>.
inline double covariance(const QuantumState& s, const Operator& a, const Operator& b) {
    check_dims(s, a);
    check_dims(s, b);
    const Eigen::VectorXcd av = a.mat * s.amplitudes();
    const Eigen::VectorXcd bv = b.mat * s.amplitudes();
    const double n = s.norm_sq();
    const double sym = av.dot(bv).real() / n;
    const double ea = s.amplitudes().dot(av).real() / n;
    const double eb = s.amplitudes().dot(bv).real() / n;
    return sym - ea * eb;
}

} // namespace spinosc
