#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "spinosc/hilbert.hpp"

namespace spinosc::test {

inline Eigen::MatrixXcd dense(const Operator& op) { return Eigen::MatrixXcd(op.mat); }

// Spin matrices in the |J, M> basis with M ascending, built from the standard
// ladder elements <M+1|J+|M> = sqrt(J(J+1) - M(M+1)).
inline Eigen::MatrixXcd spin_jplus(double J) {
    const int d = static_cast<int>(std::lround(2 * J)) + 1;
    Eigen::MatrixXcd jp = Eigen::MatrixXcd::Zero(d, d);
    for (int i = 0; i + 1 < d; ++i) {
        const double M = i - J;
        jp(i + 1, i) = std::sqrt(J * (J + 1) - M * (M + 1));
    }
    return jp;
}

inline Eigen::MatrixXcd spin_jx(double J) {
    const Eigen::MatrixXcd jp = spin_jplus(J);
    return 0.5 * (jp + jp.adjoint());
}

inline Eigen::MatrixXcd spin_jy(double J) {
    const Eigen::MatrixXcd jp = spin_jplus(J);
    return std::complex<double>(0.0, -0.5) * (jp - jp.adjoint());
}

inline Eigen::MatrixXcd spin_jz(double J) {
    const int d = static_cast<int>(std::lround(2 * J)) + 1;
    Eigen::MatrixXcd jz = Eigen::MatrixXcd::Zero(d, d);
    for (int i = 0; i < d; ++i) jz(i, i) = i - J;
    return jz;
}

inline double binomial(int n, int k) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

} // namespace spinosc::test
