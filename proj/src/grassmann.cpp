#include "isinglab/grassmann.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "isinglab/combinatorics.hpp"

namespace isl {

namespace {

Mask full_mask(int n)
{
    return n >= 64 ? ~Mask(0) : (Mask(1) << n) - 1;
}

void require_same(const GrassmannPolynomial& p, const GrassmannPolynomial& q)
{
    if (p.generator_count() != q.generator_count())
        throw std::invalid_argument("grassmann: mismatched generator sets (" +
                                    std::to_string(p.generator_count()) + " vs " +
                                    std::to_string(q.generator_count()) + ")");
}

// parity of a permutation given as a list of distinct integers
int permutation_sign(std::vector<int> v)
{
    int sign = 1;
    for (std::size_t i = 0; i < v.size(); ++i)
        while (v[i] != static_cast<int>(i)) {
            std::swap(v[i], v[v[i]]);
            sign = -sign;
        }
    return sign;
}

template <class Mat>
typename Mat::Scalar pfaffian_impl(Mat A)
{
    using S = typename Mat::Scalar;
    const int n = static_cast<int>(A.rows());
    if (n % 2 != 0)
        throw std::invalid_argument("pfaffian: odd dimension");
    S pf = S(1);
    for (int k = 0; k + 1 < n; k += 2) {
        // pivot: largest entry in row k to the right of the diagonal
        int p = k + 1;
        double best = std::abs(A(k, k + 1));
        for (int j = k + 2; j < n; ++j)
            if (std::abs(A(k, j)) > best) {
                best = std::abs(A(k, j));
                p = j;
            }
        if (p != k + 1) {
            A.row(k + 1).swap(A.row(p));
            A.col(k + 1).swap(A.col(p));
            pf = -pf;
        }
        if (A(k, k + 1) == S(0))
            return S(0);
        pf *= A(k, k + 1);
        if (k + 2 < n) {
            const int m = n - k - 2;
            auto tau = (A.row(k).segment(k + 2, m) / A(k, k + 1)).transpose().eval();
            auto col = A.col(k + 1).segment(k + 2, m).eval();
            A.block(k + 2, k + 2, m, m) += tau * col.transpose() - col * tau.transpose();
        }
    }
    return pf;
}

}  // namespace

int reorder_sign(Mask a, Mask b)
{
    int swaps = 0;
    while (b) {
        int j = std::countr_zero(b);
        b &= b - 1;
        swaps += std::popcount(j >= 63 ? Mask(0) : (a >> (j + 1)));
    }
    return (swaps & 1) ? -1 : 1;
}

GrassmannPolynomial::GrassmannPolynomial(int generators, double prune) : n_(generators), prune_(prune)
{
    if (generators < 0 || generators > kMaxGenerators)
        throw std::invalid_argument("grassmann: generator count " + std::to_string(generators) +
                                    " outside [0, " + std::to_string(kMaxGenerators) + "]");
}

GrassmannPolynomial GrassmannPolynomial::constant(int generators, cplx c)
{
    GrassmannPolynomial p(generators);
    p.add_term(0, c);
    return p;
}

GrassmannPolynomial GrassmannPolynomial::generator(int generators, int i)
{
    return monomial(generators, {i});
}

GrassmannPolynomial GrassmannPolynomial::monomial(int generators, const std::vector<int>& idx, cplx c)
{
    GrassmannPolynomial p(generators);
    Mask m = 0;
    int sign = 1;
    for (int i : idx) {
        if (i < 0 || i >= generators)
            throw std::invalid_argument("grassmann: generator index out of range");
        Mask bit = Mask(1) << i;
        if (m & bit)
            return p;  // nilpotent
        sign *= reorder_sign(m, bit);
        m |= bit;
    }
    p.add_term(m, c * double(sign));
    return p;
}

cplx GrassmannPolynomial::coefficient(Mask m) const
{
    auto it = terms_.find(m);
    return it == terms_.end() ? cplx(0.0) : it->second;
}

bool GrassmannPolynomial::is_even() const
{
    return std::all_of(terms_.begin(), terms_.end(),
                       [](const auto& kv) { return std::popcount(kv.first) % 2 == 0; });
}

int GrassmannPolynomial::degree() const
{
    int d = -1;
    for (const auto& [m, c] : terms_)
        d = std::max(d, std::popcount(m));
    return d;
}

void GrassmannPolynomial::add_term(Mask m, cplx c)
{
    if (m & ~full_mask(n_))
        throw std::invalid_argument("grassmann: monomial uses undeclared generators");
    auto it = terms_.find(m);
    if (it == terms_.end()) {
        if (std::abs(c) > prune_)
            terms_.emplace(m, c);
        return;
    }
    it->second += c;
    if (std::abs(it->second) <= prune_)
        terms_.erase(it);
}

GrassmannPolynomial& GrassmannPolynomial::operator+=(const GrassmannPolynomial& o)
{
    require_same(*this, o);
    for (const auto& [m, c] : o.terms_)
        add_term(m, c);
    return *this;
}

GrassmannPolynomial& GrassmannPolynomial::operator-=(const GrassmannPolynomial& o)
{
    require_same(*this, o);
    for (const auto& [m, c] : o.terms_)
        add_term(m, -c);
    return *this;
}

GrassmannPolynomial& GrassmannPolynomial::operator*=(cplx s)
{
    for (auto it = terms_.begin(); it != terms_.end();) {
        it->second *= s;
        if (std::abs(it->second) <= prune_)
            it = terms_.erase(it);
        else
            ++it;
    }
    return *this;
}

GrassmannPolynomial operator*(const GrassmannPolynomial& p, const GrassmannPolynomial& q)
{
    require_same(p, q);
    std::unordered_map<Mask, cplx> acc;
    acc.reserve(p.terms().size() * q.terms().size() / 2 + 1);
    for (const auto& [a, ca] : p.terms())
        for (const auto& [b, cb] : q.terms()) {
            if (a & b)
                continue;
            acc[a | b] += ca * cb * double(reorder_sign(a, b));
        }
    GrassmannPolynomial r(p.generator_count(), p.prune_threshold());
    for (const auto& [m, c] : acc)
        r.add_term(m, c);
    return r;
}

GrassmannPolynomial multiply(const GrassmannPolynomial& p, const GrassmannPolynomial& q)
{
    return p * q;
}

GrassmannPolynomial exponential(const GrassmannPolynomial& p)
{
    if (p.constant_term() != cplx(0.0))
        throw std::invalid_argument("exponential: nonzero constant term");
    GrassmannPolynomial result = GrassmannPolynomial::constant(p.generator_count(), 1.0);
    GrassmannPolynomial power = result;
    for (int k = 1; k <= p.generator_count(); ++k) {
        power = power * p;
        power *= 1.0 / k;
        if (power.is_zero())
            break;
        result += power;
    }
    return result;
}

GrassmannPolynomial logarithm(const GrassmannPolynomial& p)
{
    cplx c = p.constant_term();
    if (c == cplx(0.0))
        throw std::invalid_argument("logarithm: zero constant term");
    GrassmannPolynomial nil = p;
    nil.add_term(0, -c);
    nil *= 1.0 / c;
    GrassmannPolynomial result = GrassmannPolynomial::constant(p.generator_count(), std::log(c));
    GrassmannPolynomial power = GrassmannPolynomial::constant(p.generator_count(), 1.0);
    for (int k = 1; k <= p.generator_count(); ++k) {
        power = power * nil;
        if (power.is_zero())
            break;
        result += power * cplx((k % 2 == 1 ? 1.0 : -1.0) / k);
    }
    return result;
}

cplx berezin_integrate(const GrassmannPolynomial& p, const std::vector<int>& order)
{
    const int n = p.generator_count();
    if (static_cast<int>(order.size()) != n)
        throw std::invalid_argument("berezin_integrate: order is not a permutation of the generators");
    std::vector<int> rev(order.rbegin(), order.rend());
    std::vector<int> check = rev;
    std::sort(check.begin(), check.end());
    for (int i = 0; i < n; ++i)
        if (check[i] != i)
            throw std::invalid_argument("berezin_integrate: order is not a permutation of the generators");
    // d theta_{o1} ... d theta_{on} integrates theta_{on} ... theta_{o1} to one
    return p.coefficient(full_mask(n)) * double(permutation_sign(rev));
}

GrassmannPolynomial berezin_partial(const GrassmannPolynomial& p, const std::vector<int>& order)
{
    Mask seen = 0;
    for (int g : order) {
        if (g < 0 || g >= p.generator_count() || (seen >> g & 1))
            throw std::invalid_argument("berezin_partial: invalid generator list");
        seen |= Mask(1) << g;
    }
    GrassmannPolynomial cur = p;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Mask bit = Mask(1) << *it;
        GrassmannPolynomial next(p.generator_count(), p.prune_threshold());
        for (const auto& [m, c] : cur.terms()) {
            if (!(m & bit))
                continue;
            int before = std::popcount(m & (bit - 1));
            next.add_term(m ^ bit, (before % 2 ? -1.0 : 1.0) * c);
        }
        cur = std::move(next);
    }
    return cur;
}

GrassmannPolynomial quadratic_form(const CMatrix& A, double prune)
{
    const int n = static_cast<int>(A.rows());
    GrassmannPolynomial p(n, prune);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (A(i, j) != cplx(0.0))
                p.add_term((Mask(1) << i) | (Mask(1) << j), A(i, j));
    return p;
}

void check_antisymmetric(const CMatrix& A, double rel_tol)
{
    if (A.rows() != A.cols())
        throw std::invalid_argument("antisymmetric matrix must be square");
    if (A.rows() % 2 != 0)
        throw std::invalid_argument("pfaffian: odd dimension");
    double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    double err = (A + A.transpose()).cwiseAbs().maxCoeff();
    if (err > rel_tol * scale)
        throw std::invalid_argument("pfaffian: input not antisymmetric within tolerance");
}

cplx pfaffian(const CMatrix& A)
{
    check_antisymmetric(A);
    return pfaffian_impl(A);
}

double pfaffian(const RMatrix& A)
{
    check_antisymmetric(A.cast<cplx>());
    return pfaffian_impl(A);
}

cplx LogValue::value() const
{
    return phase * std::exp(log_abs);
}

LogValue log_pfaffian(const CMatrix& Ain)
{
    check_antisymmetric(Ain);
    CMatrix A = Ain;
    const int n = static_cast<int>(A.rows());
    LogValue out;
    for (int k = 0; k + 1 < n; k += 2) {
        int p = k + 1;
        double best = std::abs(A(k, k + 1));
        for (int j = k + 2; j < n; ++j)
            if (std::abs(A(k, j)) > best) {
                best = std::abs(A(k, j));
                p = j;
            }
        if (p != k + 1) {
            A.row(k + 1).swap(A.row(p));
            A.col(k + 1).swap(A.col(p));
            out.phase = -out.phase;
        }
        cplx piv = A(k, k + 1);
        if (piv == cplx(0.0)) {
            out.log_abs = -INFINITY;
            out.phase = 0.0;
            return out;
        }
        out.log_abs += std::log(std::abs(piv));
        out.phase *= piv / std::abs(piv);
        if (k + 2 < n) {
            const int m = n - k - 2;
            Eigen::VectorXcd tau = A.row(k).segment(k + 2, m).transpose() / piv;
            Eigen::VectorXcd col = A.col(k + 1).segment(k + 2, m);
            A.block(k + 2, k + 2, m, m) += tau * col.transpose() - col * tau.transpose();
        }
    }
    return out;
}

cplx gaussian_moment(const std::vector<int>& idx, const CMatrix& G)
{
    const int k = static_cast<int>(idx.size());
    if (k == 0)
        return 1.0;
    if (k % 2)
        return 0.0;
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            if (idx[a] == idx[b])
                return 0.0;
    CMatrix S = CMatrix::Zero(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            S(a, b) = G(idx[a], idx[b]);
            S(b, a) = -S(a, b);
        }
    return pfaffian_impl(S);
}

cplx gaussian_expectation(const GrassmannPolynomial& p, const CMatrix& G)
{
    cplx total = 0.0;
    std::vector<int> idx;
    for (const auto& [m, c] : p.terms()) {
        if (std::popcount(m) % 2)
            continue;
        idx.clear();
        for (Mask r = m; r; r &= r - 1)
            idx.push_back(std::countr_zero(r));
        total += c * gaussian_moment(idx, G);
    }
    return total;
}

double gaussian_integral(const RMatrix& A, const std::vector<int>& idx)
{
    const int n = static_cast<int>(A.rows()), k = static_cast<int>(idx.size());
    if ((n - k) % 2)
        return 0.0;
    std::vector<int> sorted(idx);
    int sign = 1;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            if (idx[i] == idx[j])
                return 0.0;
            if (idx[i] > idx[j])
                sign = -sign;
        }
    std::sort(sorted.begin(), sorted.end());
    std::vector<char> in(n, 0);
    for (int i : sorted) {
        if (i < 0 || i >= n)
            throw std::out_of_range("gaussian_integral: generator index out of range");
        in[i] = 1;
    }
    std::vector<int> comp;
    for (int i = 0; i < n; ++i)
        if (!in[i])
            comp.push_back(i);
    // theta_J theta_I -> ascending: one transposition per pair j in J, i in I with j > i
    long swaps = 0;
    for (int j : comp)
        swaps += std::lower_bound(sorted.begin(), sorted.end(), j) - sorted.begin();
    if (swaps % 2)
        sign = -sign;
    const int m = static_cast<int>(comp.size());
    if (m == 0)
        return sign;
    RMatrix sub(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            sub(a, b) = A(comp[a], comp[b]);
    return sign * pfaffian_impl(sub);
}

cplx truncated_expectation(const std::vector<GrassmannPolynomial>& monomials, const CMatrix& G)
{
    const int n = static_cast<int>(monomials.size());
    if (n == 0)
        throw std::invalid_argument("truncated_expectation: empty argument list");
    if (n > 8)
        throw std::invalid_argument("truncated_expectation: at most 8 arguments");
    // odd total degree: identically zero
    int total = 0;
    bool single = true;
    for (const auto& x : monomials) {
        if (x.terms().size() != 1)
            single = false;
        else
            total += std::popcount(x.terms().begin()->first);
    }
    if (single && total % 2)
        return 0.0;
    for (const auto& x : monomials)
        if (!x.is_even())
            throw std::invalid_argument("truncated_expectation: arguments must be even elements");
    std::vector<cplx> mom(std::size_t(1) << n);
    for (std::uint32_t s = 1; s < (1u << n); ++s) {
        GrassmannPolynomial prod = GrassmannPolynomial::constant(monomials[0].generator_count(), 1.0);
        for (int i = 0; i < n; ++i)
            if (s >> i & 1)
                prod = prod * monomials[i];
        mom[s] = gaussian_expectation(prod, G);
    }
    return cumulant_from_moments<cplx>(n, [&](std::uint32_t b) { return mom[b]; });
}

}  // namespace isl
