#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "isinglab/free_fermion.hpp"

namespace isl {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

struct GaussRule {
    std::vector<double> x, w;  // on [-1, 1]
};

GaussRule gauss_legendre(int n)
{
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        r.x[i] = x;
        r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

// Panels on [-pi, pi], graded geometrically toward 0 and +-pi, none wider than wmax.
std::vector<double> breakpoints(int levels, double wmax)
{
    std::vector<double> b = {-kPi, 0.0, kPi};
    const double c[] = {-kPi, 0.0, kPi};
    for (double ctr : c)
        for (int j = 0; j <= levels; ++j) {
            double d = kPi / 8 * std::ldexp(1.0, -j);
            for (double p : {ctr - d, ctr + d})
                if (p > -kPi && p < kPi)
                    b.push_back(p);
        }
    std::sort(b.begin(), b.end());
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        double lo = b[i], hi = b[i + 1];
        if (hi - lo <= 0.0)
            continue;
        int parts = std::max(1, int(std::ceil((hi - lo) / wmax)));
        for (int p = 0; p < parts; ++p)
            out.push_back(lo + (hi - lo) * p / parts);
    }
    out.push_back(kPi);
    return out;
}

cplx poly_eval(const std::vector<cplx>& c, cplx z)
{
    cplx s = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it)
        s = s * z + *it;
    return s;
}

// Coefficient of z^q in the power series of num / den (den[0] != 0).
cplx series_coefficient(const std::vector<cplx>& num, const std::vector<cplx>& den, int q)
{
    if (q < 0)
        return 0.0;
    std::vector<cplx> s(q + 1);
    for (int k = 0; k <= q; ++k) {
        cplx v = k < int(num.size()) ? num[k] : cplx(0.0);
        for (int j = 1; j <= k && j < int(den.size()); ++j)
            v -= den[j] * s[k - j];
        s[k] = v / den[0];
    }
    return s[q];
}

}  // namespace

std::vector<CMatrix> infinite_volume_inverse_fourier(const ZForm& C, int dim, const std::vector<std::array<int, 2>>& n,
                                                     const QuadOptions& opt)
{
    const int K = opt.samples, H = (K - 1) / 2;
    int nmax1 = 0;
    std::map<int, std::vector<std::size_t>> by_n2;
    for (std::size_t i = 0; i < n.size(); ++i) {
        nmax1 = std::max(nmax1, std::abs(n[i][0]));
        by_n2[n[i][1]].push_back(i);
    }
    const double wmax = std::min(kPi / 8, 4.0 / (1.0 + nmax1));
    const auto bp = breakpoints(opt.grading_levels, wmax);
    const GaussRule gl = gauss_legendre(opt.gl_order);

    std::vector<CMatrix> F(n.size(), CMatrix::Zero(dim, dim));
    std::vector<cplx> zs(K);
    for (int j = 0; j < K; ++j)
        zs[j] = std::exp(2.0 * I * kPi * double(j) / double(K));

    std::vector<cplx> detv(K);
    std::vector<CMatrix> adjv(K);
    for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
        const double lo = bp[p], hi = bp[p + 1], half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (int g = 0; g < opt.gl_order; ++g) {
            const double k1 = mid + half * gl.x[g], w = half * gl.w[g];
            for (int j = 0; j < K; ++j) {
                CMatrix Cj = C(k1, zs[j]);
                Eigen::PartialPivLU<CMatrix> lu(Cj);
                detv[j] = lu.determinant();
                adjv[j] = lu.inverse() * detv[j];
            }
            // Laurent coefficients m = -H..H
            std::vector<cplx> dc(K, 0.0);
            std::vector<CMatrix> ac(K, CMatrix::Zero(dim, dim));
            for (int m = -H; m <= H; ++m)
                for (int j = 0; j < K; ++j) {
                    cplx ph = std::exp(-2.0 * I * kPi * double(m) * double(j) / double(K)) / double(K);
                    dc[m + H] += detv[j] * ph;
                    ac[m + H] += adjv[j] * ph;
                }
            double dmax = 0.0;
            for (auto c : dc)
                dmax = std::max(dmax, std::abs(c));
            int lo_i = 0, hi_i = K - 1;
            while (lo_i < K && std::abs(dc[lo_i]) <= 1e-13 * dmax)
                ++lo_i;
            while (hi_i > lo_i && std::abs(dc[hi_i]) <= 1e-13 * dmax)
                --hi_i;
            const int dlo = lo_i - H;  // lowest power of z in det
            std::vector<cplx> P(dc.begin() + lo_i, dc.begin() + hi_i + 1);
            const int deg = hi_i - lo_i;
            std::vector<cplx> roots;
            if (deg > 0) {
                CMatrix comp = CMatrix::Zero(deg, deg);
                for (int i = 1; i < deg; ++i)
                    comp(i, i - 1) = 1.0;
                for (int i = 0; i < deg; ++i)
                    comp(i, deg - 1) = -P[i] / P[deg];
                Eigen::ComplexEigenSolver<CMatrix> es(comp, false);
                for (int i = 0; i < deg; ++i)
                    roots.push_back(es.eigenvalues()(i));
            }
            std::vector<cplx> dP(std::max(deg, 1), 0.0);
            for (int i = 1; i <= deg; ++i)
                dP[i - 1] = double(i) * P[i];
            std::vector<cplx> Prev(P.rbegin(), P.rend());
            std::vector<cplx> rootD(roots.size());
            for (std::size_t r = 0; r < roots.size(); ++r)
                rootD[r] = poly_eval(dP, roots[r]);

            for (const auto& [n2, idx] : by_n2) {
                // (1/2 pi) int dk2 e^{i k2 n2} N/P = residues of z^e Ntilde(z) / Ptilde(z)
                const int e = n2 - 1 - H - dlo;
                CMatrix Iv = CMatrix::Zero(dim, dim);
                for (int r1 = 0; r1 < dim; ++r1)
                    for (int r2 = 0; r2 < dim; ++r2) {
                        std::vector<cplx> Nt(K);
                        for (int m = 0; m < K; ++m)
                            Nt[m] = ac[m](r1, r2);
                        cplx s = 0.0;
                        if (e >= 0) {
                            for (std::size_t r = 0; r < roots.size(); ++r)
                                if (std::abs(roots[r]) < 1.0)
                                    s += std::pow(roots[r], e) * poly_eval(Nt, roots[r]) / rootD[r];
                        } else {
                            for (std::size_t r = 0; r < roots.size(); ++r)
                                if (std::abs(roots[r]) >= 1.0)
                                    s -= std::pow(roots[r], e) * poly_eval(Nt, roots[r]) / rootD[r];
                            std::vector<cplx> Nrev(Nt.rbegin(), Nt.rend());
                            s += series_coefficient(Nrev, Prev, e + 1 - deg + (K - 1));
                        }
                        Iv(r1, r2) = s;
                    }
                for (auto i : idx)
                    F[i] += (w / (2 * kPi)) * std::exp(I * (k1 * n[i][0])) * Iv;
            }
        }
    }
    return F;
}

std::vector<Mat4> infinite_phi_propagator(const ModelSpec& spec, const std::vector<std::array<int, 2>>& d)
{
    const double t = spec.t();
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("infinite_phi_propagator: t must lie in (0, 1)");
    ZForm C = [t](double k1, cplx z2) {
        const cplx e1 = std::exp(-I * k1);
        CMatrix c(4, 4);
        c << 0.0, 1.0 + t * e1, -1.0, -1.0,
             -1.0 - t / e1, 0.0, 1.0, -1.0,
             1.0, -1.0, 0.0, 1.0 + t / z2,
             1.0, 1.0, -1.0 - t * z2, 0.0;
        return CMatrix(0.5 * c);
    };
    auto F = infinite_volume_inverse_fourier(C, 4, d);
    std::vector<Mat4> P(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        P[i] = -(0.5 / spec.a) * F[i];
    return P;
}

}  // namespace isl
