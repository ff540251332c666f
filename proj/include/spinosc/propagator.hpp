// Sector-structured kernels for the Hamiltonian and the
// Gaussian position measurement, plus a Chebyshev propagator.
//
// H and z both commute with J_z, so on the flat (fock * spin_dim + spin) layout
// each is tridiagonal in the Fock index with a per-sector coupling. The kernels
// here apply them without a general sparse matrix.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#if defined(__SSE2__) || defined(_M_X64)
#include <pmmintrin.h>
#include <xmmintrin.h>
#define SPINOSC_HAVE_MXCSR 1
#endif

#include "spinosc/errors.hpp"
#include "spinosc/hilbert.hpp"
#include "spinosc/params.hpp"

namespace spinosc {

// Flushes subnormal results and operands to zero on the current thread while
// in scope. Far Fock tails decay into the subnormal range during long runs,
// where arithmetic is slower by an order of magnitude or more.
class SubnormalGuard {
public:
    SubnormalGuard() noexcept {
#ifdef SPINOSC_HAVE_MXCSR
        saved_ = _mm_getcsr();
        _mm_setcsr(saved_ | _MM_FLUSH_ZERO_ON | _MM_DENORMALS_ZERO_ON);
#endif
    }
    ~SubnormalGuard() {
#ifdef SPINOSC_HAVE_MXCSR
        _mm_setcsr(saved_);
#endif
    }
    SubnormalGuard(const SubnormalGuard&) = delete;
    SubnormalGuard& operator=(const SubnormalGuard&) = delete;

private:
    unsigned saved_{0};
};

// Scratch storage for the propagator kernels, owned by the caller.
using ScratchVectors = std::array<Eigen::VectorXcd, 4>;

// Trailing Fock levels whose populations are all below this fraction of the
// norm are dropped by the kernels.
constexpr double kSupportFloor = 1e-60;

// Zeroes the trailing Fock levels of psi that hold no amplitude above the
// floor and returns the length of the remaining prefix (whole levels).
inline std::size_t trim_support(Eigen::VectorXcd& psi, std::size_t spin_dim) {
    const double thr = kSupportFloor * psi.squaredNorm();
    std::size_t end = static_cast<std::size_t>(psi.size());
    while (end > spin_dim) {
        const std::size_t begin = end - spin_dim;
        bool significant = false;
        for (std::size_t i = begin; i < end; ++i) {
            if (std::norm(psi[static_cast<Eigen::Index>(i)]) > thr) {
                significant = true;
                break;
            }
        }
        if (significant) break;
        for (std::size_t i = begin; i < end; ++i) psi[static_cast<Eigen::Index>(i)] = 0.0;
        end = begin;
    }
    return end;
}

struct SectorSystem {
    BasisSpec basis;
    double hbar{1.0};
    double k{0.0};
    std::vector<double> level;     // diagonal of H, per Fock level
    std::vector<double> zoff;      // <n+1|z|n>
    std::vector<double> coupling;  // per-sector H off-diagonal scale (b hbar M)

    // Flat per-amplitude coefficients (index fock * spin_dim + spin). Neighbours
    // in the Fock ladder sit spin_dim apart; the edge entries are zero.
    std::vector<double> h_diag, h_up, h_down;  // H: level, coupling * zoff above / below
    std::vector<double> z_up, z_down;          // z
    std::vector<double> z2_diag, z2_up2;       // (truncated z)^2: diagonal and two levels up
    // The same z coefficients repeated for the real and imaginary part of each
    // amplitude, for kernels that run over the interleaved doubles.
    std::vector<double> zu_ri, zd_ri, z2d_ri, z2u_ri, z2l_ri;

    static SectorSystem from_model(const ModelParams& p, const BasisSpec& basis) {
        p.validate();
        if (basis.spin_dim != static_cast<std::size_t>(p.spin_dim())) throw ConfigError("basis does not match 2J+1");
        if (basis.n_max < 1) throw ConfigError("n_max must be at least 1");
        SectorSystem s;
        s.basis = basis;
        s.hbar = p.hbar;
        s.k = p.k;
        const std::size_t nf = basis.fock_dim();
        s.level.resize(nf);
        s.zoff.resize(nf - 1);
        for (std::size_t n = 0; n < nf; ++n) s.level[n] = p.hbar * p.omega * (static_cast<double>(n) + 0.5);
        for (std::size_t n = 0; n + 1 < nf; ++n) s.zoff[n] = p.z_g() * std::sqrt(static_cast<double>(n + 1));
        s.coupling.resize(basis.spin_dim);
        for (std::size_t m = 0; m < basis.spin_dim; ++m) s.coupling[m] = p.b * p.hbar * basis.m_value(m);
        s.build_flat();
        return s;
    }

    std::size_t dim() const noexcept { return basis.dim(); }

    // out = z in
    void apply_z(const cd* in, cd* out) const noexcept {
        const std::size_t d = dim();
        const std::size_t ns = basis.spin_dim;
        for (std::size_t i = 0; i < ns; ++i) out[i] = z_up[i] * in[i + ns];
        for (std::size_t i = ns; i + ns < d; ++i) out[i] = z_down[i] * in[i - ns] + z_up[i] * in[i + ns];
        for (std::size_t i = d - ns; i < d; ++i) out[i] = z_down[i] * in[i - ns];
    }

    // out = (H - shift) in * scale
    void apply_h(const cd* in, cd* out, double shift = 0.0, double scale = 1.0) const noexcept {
        const std::size_t d = dim();
        const std::size_t ns = basis.spin_dim;
        for (std::size_t i = 0; i < d; ++i) {
            cd acc = (h_diag[i] - shift) * in[i];
            if (i >= ns) acc += h_down[i] * in[i - ns];
            if (i + ns < d) acc += h_up[i] * in[i + ns];
            out[i] = scale * acc;
        }
    }

    // Gershgorin bounds on the spectrum of H.
    std::pair<double, double> spectral_bounds() const {
        const std::size_t nf = basis.fock_dim();
        double max_c = 0.0;
        for (double c : coupling) max_c = std::max(max_c, std::abs(c));
        double lo = level.front();
        double hi = level.back();
        double zrow = 0.0;
        for (std::size_t n = 0; n < nf; ++n) {
            const double r = (n > 0 ? zoff[n - 1] : 0.0) + (n + 1 < nf ? zoff[n] : 0.0);
            zrow = std::max(zrow, r);
            lo = std::min(lo, level[n] - max_c * r);
        }
        hi += max_c * zrow;
        return {lo, hi};
    }

private:
    void build_flat() {
        const std::size_t nf = basis.fock_dim();
        const std::size_t ns = basis.spin_dim;
        const std::size_t d = nf * ns;
        h_diag.assign(d, 0.0);
        h_up.assign(d, 0.0);
        h_down.assign(d, 0.0);
        z_up.assign(d, 0.0);
        z_down.assign(d, 0.0);
        z2_diag.assign(d, 0.0);
        z2_up2.assign(d, 0.0);
        for (std::size_t n = 0; n < nf; ++n) {
            const double below = n > 0 ? zoff[n - 1] : 0.0;
            const double above = n + 1 < nf ? zoff[n] : 0.0;
            const double up2 = n + 2 < nf ? zoff[n] * zoff[n + 1] : 0.0;
            for (std::size_t m = 0; m < ns; ++m) {
                const std::size_t i = n * ns + m;
                h_diag[i] = level[n];
                h_up[i] = coupling[m] * above;
                h_down[i] = coupling[m] * below;
                z_up[i] = above;
                z_down[i] = below;
                z2_diag[i] = below * below + above * above;
                z2_up2[i] = up2;
            }
        }
        auto twice = [](const std::vector<double>& v) {
            std::vector<double> out(2 * v.size());
            for (std::size_t i = 0; i < v.size(); ++i) out[2 * i] = out[2 * i + 1] = v[i];
            return out;
        };
        zu_ri = twice(z_up);
        zd_ri = twice(z_down);
        z2d_ri = twice(z2_diag);
        z2u_ri = twice(z2_up2);
        std::vector<double> lower(d, 0.0);
        for (std::size_t i = 2 * ns; i < d; ++i) lower[i] = z2_up2[i - 2 * ns];
        z2l_ri = twice(lower);
    }
};

// exp(-i H tau / hbar) by Chebyshev expansion on the interval bounding H.
class ChebyshevPropagator {
public:
    ChebyshevPropagator() = default;
    ChebyshevPropagator(const SectorSystem& sys, double tau, double tol = 1e-15) : tau_(tau) {
        auto [lo, hi] = sys.spectral_bounds();
        // pad so rounding never puts an eigenvalue outside [-1, 1]
        const double pad = 1e-6 * std::max(1.0, hi - lo);
        lo -= pad;
        hi += pad;
        center_ = 0.5 * (hi + lo);
        half_width_ = 0.5 * (hi - lo);
        const double x = half_width_ * tau / sys.hbar;
        phase_ = std::polar(1.0, -center_ * tau / sys.hbar);
        if (tau == 0.0) {
            coeff_.push_back(cd(1.0, 0.0));
            return;
        }
        const cd minus_i(0.0, -1.0);
        cd ipow(1.0, 0.0);
        for (int k = 0;; ++k) {
            const double jk = std::cyl_bessel_j(static_cast<double>(k), x);
            coeff_.push_back((k == 0 ? 1.0 : 2.0) * ipow * jk);
            ipow *= minus_i;
            if (k > x && std::abs(jk) < tol) break;
            if (k > 100000) throw NumericalError("Chebyshev expansion did not converge");
        }
        const double inv = 1.0 / half_width_;
        const std::size_t d = sys.dim();
        diag_.resize(2 * d);
        up_.resize(2 * d);
        down_.resize(2 * d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t c = 0; c < 2; ++c) {
                diag_[2 * i + c] = (sys.h_diag[i] - center_) * inv;
                up_[2 * i + c] = sys.h_up[i] * inv;
                down_[2 * i + c] = sys.h_down[i] * inv;
            }
        }
    }

    std::size_t terms() const noexcept { return coeff_.size(); }
    double tau() const noexcept { return tau_; }

    // In place; `work` is resized to the state's size as needed.
    // The coefficients 2 (-i)^k J_k are alternately real and imaginary, so the
    // even and odd terms are summed in two real-weighted accumulators over the
    // interleaved (re, im) doubles.
    void apply(const SectorSystem& sys, Eigen::VectorXcd& psi, ScratchVectors& work) const {
        const auto n = psi.size();
        if (static_cast<std::size_t>(2 * n) != diag_.size()) throw ConfigError("state dimension does not match propagator");
        if (coeff_.size() == 1) {
            psi *= phase_ * coeff_[0];
            return;
        }
        for (auto& w : work) {
            if (w.size() != n) w.resize(n);
        }
        const std::size_t s = 2 * sys.basis.spin_dim;
        // each application of H reaches one Fock level further
        const std::size_t m = std::min(2 * static_cast<std::size_t>(n),
                                       2 * trim_support(psi, sys.basis.spin_dim) + (coeff_.size() - 1) * s);
        double* prev = reinterpret_cast<double*>(psi.data());
        double* cur = reinterpret_cast<double*>(work[0].data());
        double* next = reinterpret_cast<double*>(work[1].data());
        double* even = reinterpret_cast<double*>(work[2].data());
        double* odd = reinterpret_cast<double*>(work[3].data());
        const double* dg = diag_.data();
        const double* up = up_.data();
        const double* dn = down_.data();
        const double w0 = coeff_[0].real();
        const double w1 = coeff_[1].imag();
        for (std::size_t j = 0; j < s; ++j) cur[j] = dg[j] * prev[j] + up[j] * prev[j + s];
        for (std::size_t j = s; j + s < m; ++j) cur[j] = dg[j] * prev[j] + dn[j] * prev[j - s] + up[j] * prev[j + s];
        for (std::size_t j = m - s; j < m; ++j) cur[j] = dg[j] * prev[j] + dn[j] * prev[j - s];
        for (std::size_t j = 0; j < m; ++j) {
            even[j] = w0 * prev[j];
            odd[j] = w1 * cur[j];
        }
        for (std::size_t k = 2; k < coeff_.size(); ++k) {
            const bool is_even = k % 2 == 0;
            const double w = is_even ? coeff_[k].real() : coeff_[k].imag();
            double* sum = is_even ? even : odd;
            // next = 2 H' cur - prev
            for (std::size_t j = 0; j < s; ++j) {
                const double v = 2.0 * (dg[j] * cur[j] + up[j] * cur[j + s]) - prev[j];
                next[j] = v;
                sum[j] += w * v;
            }
            for (std::size_t j = s; j + s < m; ++j) {
                const double v = 2.0 * (dg[j] * cur[j] + dn[j] * cur[j - s] + up[j] * cur[j + s]) - prev[j];
                next[j] = v;
                sum[j] += w * v;
            }
            for (std::size_t j = m - s; j < m; ++j) {
                const double v = 2.0 * (dg[j] * cur[j] + dn[j] * cur[j - s]) - prev[j];
                next[j] = v;
                sum[j] += w * v;
            }
            double* t = prev;
            prev = cur;
            cur = next;
            next = t;
        }
        // psi = phase (even + i odd)
        const double fr = phase_.real(), fi = phase_.imag();
        double* out = reinterpret_cast<double*>(psi.data());
        for (std::size_t j = 0; j < m; j += 2) {
            const double ar = even[j] - odd[j + 1];
            const double ai = even[j + 1] + odd[j];
            out[j] = fr * ar - fi * ai;
            out[j + 1] = fr * ai + fi * ar;
        }
    }

private:
    double tau_{0.0};
    double center_{0.0};
    double half_width_{1.0};
    cd phase_{1.0, 0.0};
    std::vector<cd> coeff_;
    std::vector<double> diag_, up_, down_;
};

// psi <- exp(-2 k dt (z - y)^2) psi, by a scaled Taylor series. (z - y)^2 is
// the square of the truncated z, applied as one pentadiagonal pass.
inline void apply_gaussian_measurement(const SectorSystem& sys, Eigen::VectorXcd& psi, double y, double dt,
                                       ScratchVectors& work) {
    const auto n = psi.size();
    for (auto& w : work) {
        if (w.size() != n) w.resize(n);
    }
    const std::size_t d = static_cast<std::size_t>(n);
    const std::size_t ns = sys.basis.spin_dim;
    const double* q0 = sys.z2d_ri.data();
    const double* qu = sys.z2u_ri.data();
    const double* ql = sys.z2l_ri.data();
    const double* zu = sys.zu_ri.data();
    const double* zd = sys.zd_ri.data();
    const std::size_t m = 2 * d;
    const std::size_t s1 = 2 * ns, s2 = 4 * ns;
    // out = scale (z - y)^2 in over the interleaved doubles [0, m_in + s2);
    // `in` is nonzero only below m_in. Returns the new length and |out|^2.
    auto apply_a = [&](cd* in_c, cd* out_c, double scale, std::size_t m_in) {
        double* in = reinterpret_cast<double*>(in_c);
        double* out = reinterpret_cast<double*>(out_c);
        const std::size_t lim = std::min(m, m_in + s2);
        std::fill(in + m_in, in + lim, 0.0);
        const double yy = y * y;
        const double ty = 2.0 * y;
        double norm2 = 0.0;
        auto edge = [&](std::size_t j) {
            double v = (q0[j] + yy) * in[j];
            if (j >= s1) v -= ty * zd[j] * in[j - s1];
            if (j + s1 < lim) v -= ty * zu[j] * in[j + s1];
            if (j >= s2) v += ql[j] * in[j - s2];
            if (j + s2 < lim) v += qu[j] * in[j + s2];
            v *= scale;
            out[j] = v;
            norm2 += v * v;
        };
        const std::size_t lo = std::min(lim, s2);
        const std::size_t hi = lim > s2 ? lim - s2 : lo;
        for (std::size_t j = 0; j < lo; ++j) edge(j);
        for (std::size_t j = lo; j < hi; ++j) {
            const double v = scale * ((q0[j] + yy) * in[j] - ty * (zd[j] * in[j - s1] + zu[j] * in[j + s1]) +
                                      ql[j] * in[j - s2] + qu[j] * in[j + s2]);
            out[j] = v;
            norm2 += v * v;
        }
        for (std::size_t j = std::max(lo, hi); j < lim; ++j) edge(j);
        return std::pair<std::size_t, double>{lim, norm2};
    };
    const double psi_norm = psi.norm();
    if (!(psi_norm > 0.0)) return;
    std::size_t len = 2 * trim_support(psi, ns);
    const double a = -2.0 * sys.k * dt;
    const double first = std::sqrt(apply_a(psi.data(), work[0].data(), a, len).second);
    const int substeps = std::max(1, static_cast<int>(std::ceil(first / psi_norm)));
    const double sa = a / substeps;
    double* x = reinterpret_cast<double*>(psi.data());
    cd* term = work[0].data();
    cd* spare = work[1].data();
    double* acc = reinterpret_cast<double*>(work[2].data());
    for (int sub = 0; sub < substeps; ++sub) {
        double acc_norm2 = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            acc[i] = x[i];
            acc_norm2 += x[i] * x[i];
        }
        std::size_t acc_len = len;
        cd* src = reinterpret_cast<cd*>(x);
        std::size_t src_len = len;
        for (int j = 1;; ++j) {
            const auto [out_len, t2] = apply_a(src, term, sa / j, src_len);
            const double* t = reinterpret_cast<const double*>(term);
            if (out_len > acc_len) {
                std::fill(acc + acc_len, acc + out_len, 0.0);
                acc_len = out_len;
            }
            for (std::size_t i = 0; i < out_len; ++i) acc[i] += t[i];
            if (t2 <= 1e-34 * acc_norm2) break;
            if (j > 200) throw NumericalError("measurement operator series did not converge");
            std::swap(term, spare);
            src = spare;
            src_len = out_len;
        }
        std::copy(acc, acc + acc_len, x);
        len = acc_len;
    }
}

} // namespace spinosc
