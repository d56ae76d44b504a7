#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

namespace isl {

using cplx = std::complex<double>;
using Mask = std::uint64_t;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

/// Hard cap on the number of generators of a polynomial.
inline constexpr int kMaxGenerators = 40;
inline constexpr double kDefaultPrune = 1e-15;

/// Sign of theta_A * theta_B reordered to ascending order (A, B disjoint masks).
int reorder_sign(Mask a, Mask b);

/// Sparse polynomial in anticommuting generators theta_0..theta_{n-1}.
/// A stored coefficient refers to its generators written in ascending order.
class GrassmannPolynomial {
public:
    explicit GrassmannPolynomial(int generators, double prune = kDefaultPrune);

    static GrassmannPolynomial constant(int generators, cplx c);
    static GrassmannPolynomial generator(int generators, int i);
    /// Product theta_{idx[0]} theta_{idx[1]} ... in the given order, times c.
    static GrassmannPolynomial monomial(int generators, const std::vector<int>& idx, cplx c = 1.0);

    int generator_count() const { return n_; }
    double prune_threshold() const { return prune_; }
    const std::map<Mask, cplx>& terms() const { return terms_; }
    cplx coefficient(Mask m) const;
    cplx constant_term() const { return coefficient(0); }
    bool is_zero() const { return terms_.empty(); }
    /// True when every term has even degree.
    bool is_even() const;
    /// Maximum degree among stored terms (-1 for the zero polynomial).
    int degree() const;

    void add_term(Mask m, cplx c);

    GrassmannPolynomial& operator+=(const GrassmannPolynomial& o);
    GrassmannPolynomial& operator-=(const GrassmannPolynomial& o);
    GrassmannPolynomial& operator*=(cplx s);
    friend GrassmannPolynomial operator+(GrassmannPolynomial p, const GrassmannPolynomial& q) { return p += q; }
    friend GrassmannPolynomial operator-(GrassmannPolynomial p, const GrassmannPolynomial& q) { return p -= q; }
    friend GrassmannPolynomial operator*(GrassmannPolynomial p, cplx s) { return p *= s; }
    friend GrassmannPolynomial operator*(cplx s, GrassmannPolynomial p) { return p *= s; }
    friend GrassmannPolynomial operator*(const GrassmannPolynomial& p, const GrassmannPolynomial& q);

private:
    int n_;
    double prune_;
    std::map<Mask, cplx> terms_;
};

GrassmannPolynomial multiply(const GrassmannPolynomial& p, const GrassmannPolynomial& q);

/// exp(p) as a terminating power series; p must have zero constant term.
GrassmannPolynomial exponential(const GrassmannPolynomial& p);

/// log(p) for p with nonzero constant term (principal branch of the constant).
GrassmannPolynomial logarithm(const GrassmannPolynomial& p);

/// Full Berezin integral with measure d theta_{order[0]} ... d theta_{order[n-1]}.
cplx berezin_integrate(const GrassmannPolynomial& p, const std::vector<int>& order);

/// Partial Berezin integral over the listed generators (same measure convention);
/// the result lives on the same generator set and no longer contains them.
GrassmannPolynomial berezin_partial(const GrassmannPolynomial& p, const std::vector<int>& order);

/// Quadratic form 1/2 theta^T A theta as a polynomial.
GrassmannPolynomial quadratic_form(const CMatrix& A, double prune = kDefaultPrune);

/// Pfaffian via Parlett-Reid tridiagonalization with partial pivoting.
cplx pfaffian(const CMatrix& A);
double pfaffian(const RMatrix& A);

/// Pfaffian in log form for large matrices: returns (log|Pf|, phase).
struct LogValue {
    double log_abs = 0.0;
    cplx phase = 1.0;
    cplx value() const;
};
LogValue log_pfaffian(const CMatrix& A);

/// Gaussian moment E(theta_{i1} ... theta_{i2k}) = Pf of the sub-propagator in the given order.
cplx gaussian_moment(const std::vector<int>& idx, const CMatrix& G);

/// Unnormalized Gaussian integral: the top coefficient of e^{1/2 theta^T A theta} theta_{i1} ... theta_{ik},
/// equal to +-Pf(A restricted to the complement of idx). Well defined for singular A.
double gaussian_integral(const RMatrix& A, const std::vector<int>& idx);

/// Gaussian expectation of a polynomial with propagator G[i][j] = E(theta_i theta_j).
cplx gaussian_expectation(const GrassmannPolynomial& p, const CMatrix& G);

/// Truncated expectation E^T(X_1; ...; X_n) via the set-partition cumulant formula.
cplx truncated_expectation(const std::vector<GrassmannPolynomial>& monomials, const CMatrix& G);

/// Throws std::invalid_argument unless A is square, even-dimensional and antisymmetric.
void check_antisymmetric(const CMatrix& A, double rel_tol = 1e-12);

}  // namespace isl
