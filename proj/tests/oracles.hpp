#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "isinglab/free_fermion.hpp"
#include "isinglab/grassmann.hpp"
#include "isinglab/lattice_model.hpp"

namespace oracle {

using isl::cplx;
using isl::CMatrix;

/// Pfaffian by expansion along the first row (n <= 10).
inline cplx pfaffian_cofactor(const CMatrix& A)
{
    const int n = static_cast<int>(A.rows());
    if (n == 0)
        return 1.0;
    cplx s = 0.0;
    for (int j = 1; j < n; ++j) {
        if (A(0, j) == 0.0)
            continue;
        std::vector<int> keep;
        for (int k = 1; k < n; ++k)
            if (k != j)
                keep.push_back(k);
        CMatrix sub(n - 2, n - 2);
        for (int r = 0; r < n - 2; ++r)
            for (int c = 0; c < n - 2; ++c)
                sub(r, c) = A(keep[r], keep[c]);
        s += ((j % 2) ? 1.0 : -1.0) * A(0, j) * pfaffian_cofactor(sub);
    }
    return s;
}

/// H by a plain double loop: every bond (x, x + e_j) and every unordered site pair with v looked up
/// on the minimal-image offset.
inline double hamiltonian_direct(const isl::ModelSpec& s, const std::vector<int>& spin)
{
    const int M = s.M;
    auto at = [&](int x1, int x2) { return spin[((x1 % M + M) % M) + M * ((x2 % M + M) % M)]; };
    auto mi = [&](int d) {
        d = ((d % M) + M) % M;
        return d > M / 2 ? d - M : d;
    };
    double H = 0.0;
    for (int x2 = 0; x2 < M; ++x2)
        for (int x1 = 0; x1 < M; ++x1)
            H -= s.J * at(x1, x2) * (at(x1 + 1, x2) + at(x1, x2 + 1));
    const int n = M * M;
    for (int x = 0; x < n; ++x)
        for (int y = x + 1; y < n; ++y) {
            isl::Offset d{mi(y % M - x % M), mi(y / M - x / M)};
            auto it = s.v.find(d);
            if (it != s.v.end())
                H -= s.lambda * spin[x] * it->second * spin[y];
        }
    return H;
}

/// Row-to-row transfer matrix at lambda = 0. Returns sum over configurations of
/// e^{-beta H} prod (a^-1 s_x s_{x+e1}) for horizontal bonds given as (x1, row).
inline double transfer_matrix_moment(const isl::ModelSpec& s, const std::vector<std::pair<int, int>>& hbonds)
{
    const int M = s.M, S = 1 << M;
    const double K = s.beta * s.J;
    auto sp = [](int cfg, int i) { return (cfg >> i & 1) ? 1.0 : -1.0; };
    Eigen::MatrixXd T(S, S);
    for (int u = 0; u < S; ++u)
        for (int w = 0; w < S; ++w) {
            double e = 0.0;
            for (int i = 0; i < M; ++i)
                e += sp(u, i) * sp(w, i) + sp(u, i) * sp(u, (i + 1) % M);
            T(u, w) = std::exp(K * e);
        }
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(S, S);
    for (int r = 0; r < M; ++r) {
        Eigen::VectorXd d = Eigen::VectorXd::Ones(S);
        for (const auto& [x1, row] : hbonds)
            if (row == r)
                for (int u = 0; u < S; ++u)
                    d(u) *= sp(u, x1) * sp(u, (x1 + 1) % M) / s.a;
        P = P * d.asDiagonal() * T;
    }
    return P.trace();
}

/// Continuum propagator from the Schwinger representation 1/(k^2 + m^2) = int ds e^{-s(k^2 + m^2)}:
/// g_{++} = int ds (x1 - i x2)/(4 s^2) e^{-r^2/4s - s m^2}, g_{--} the conjugate direction,
/// g_{+-} = i m int ds e^{...}/(2 s) = -g_{-+}.
inline isl::Mat2 schwinger_propagator(double x1, double x2, double m)
{
    const double r2 = x1 * x1 + x2 * x2;
    boost::math::quadrature::exp_sinh<double> q;
    // the integrands vanish faster than any power at s -> 0
    auto w2 = [&](double s) { return r2 / (4 * s) > 700 ? 0.0 : std::exp(-r2 / (4 * s) - s * m * m) / (4 * s * s); };
    auto w1 = [&](double s) { return r2 / (4 * s) > 700 ? 0.0 : std::exp(-r2 / (4 * s) - s * m * m) / (2 * s); };
    const double i2 = q.integrate(w2, 1e-13), i1 = q.integrate(w1, 1e-13);
    const cplx I(0.0, 1.0);
    isl::Mat2 g;
    g << cplx(x1, -x2) * i2, I * m * i1, -I * m * i1, cplx(x1, x2) * i2;
    return g;
}

/// Two-point function <theta_i theta_j> of the Gaussian e^{1/2 theta^T A theta} by Berezin integration.
inline CMatrix berezin_propagator(const isl::RMatrix& A)
{
    const int n = static_cast<int>(A.rows());
    auto e = isl::exponential(isl::quadratic_form(A.cast<cplx>(), 0.0));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i)
        order[i] = i;
    const cplx Z = isl::berezin_integrate(e, order);
    CMatrix G = CMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j)
                G(i, j) = isl::berezin_integrate(e * isl::GrassmannPolynomial::monomial(n, {i, j}), order) / Z;
    return G;
}

}  // namespace oracle
