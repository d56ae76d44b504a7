#include "isinglab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "isinglab/combinatorics.hpp"

namespace isl {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

void check_points(const std::vector<Point>& points, int mmin, int mmax)
{
    const int m = static_cast<int>(points.size());
    if (m < mmin || m > mmax)
        throw std::invalid_argument("number of points must lie in [" + std::to_string(mmin) + ", " +
                                    std::to_string(mmax) + "]");
    point_geometry(points);
}

}  // namespace

void ContinuumParams::validate(double lambda) const
{
    if (!(Zbar > 0.5 && Zbar < 1.5) || !(Zstar > 0.5 && Zstar < 1.5))
        throw std::invalid_argument("ContinuumParams: Zbar and Zstar must lie in (0.5, 1.5)");
    if (lambda == 0.0 && (Zbar != 1.0 || Zstar != 1.0))
        throw std::invalid_argument("ContinuumParams: lambda = 0 requires Zbar = Zstar = 1");
}

Mat2 continuum_propagator(const Point& x, const ContinuumParams& p, bool dressed)
{
    const double r = std::hypot(x[0], x[1]);
    if (r == 0.0)
        throw std::invalid_argument("continuum_propagator: x = 0 (points must not coincide)");
    const double m = dressed ? p.Zstar * p.m_star : p.m_star;
    const double amp = dressed ? p.Zbar : 1.0;
    Mat2 g = Mat2::Zero();
    if (m == 0.0) {
        g(0, 0) = 1.0 / cplx(x[0], x[1]);
        g(1, 1) = 1.0 / cplx(x[0], -x[1]);
        return amp * g;
    }
    const double mu = std::abs(m);
    if (mu * r > 700.0)
        return g;
    const double k0 = std::cyl_bessel_k(0.0, mu * r), k1 = std::cyl_bessel_k(1.0, mu * r);
    g(0, 0) = mu * k1 * cplx(x[0], -x[1]) / r;
    g(1, 1) = mu * k1 * cplx(x[0], x[1]) / r;
    g(0, 1) = I * m * k0;
    g(1, 0) = -I * m * k0;
    return amp * g;
}

std::vector<Mat2> dressed_lattice_propagator(double a, const ContinuumParams& p,
                                             const std::vector<std::array<int, 2>>& n, bool wilson)
{
    const double mass = a * p.Zstar * p.sigma_a;
    if (!wilson && mass == 0.0)
        throw std::invalid_argument("dressed_lattice_propagator: the constant-mass form needs sigma != 0");
    // a C(kappa / a) for the psi form [[-D^-, i s], [-i s, -D^+]]
    ZForm C = [mass, wilson](double k1, cplx z) {
        const cplx s2 = (z - 1.0 / z) / (2.0 * I), c2 = 0.5 * (z + 1.0 / z);
        const cplx s1 = std::sin(k1);
        const cplx Dp = I * s1 + s2, Dm = I * s1 - s2;
        const cplx s = mass + (wilson ? std::cos(k1) + c2 - 2.0 : cplx(0.0));
        CMatrix c(2, 2);
        c << -Dm, I * s, -I * s, -Dp;
        return c;
    };
    std::vector<std::array<int, 2>> neg(n.size());
    for (std::size_t i = 0; i < n.size(); ++i)
        neg[i] = {-n[i][0], -n[i][1]};
    auto F = infinite_volume_inverse_fourier(C, 2, neg);
    std::vector<Mat2> g(n.size());
    for (std::size_t i = 0; i < n.size(); ++i)
        g[i] = p.Zbar * (2.0 * kPi / a) * F[i];
    return g;
}

Mat2 dressed_lattice_propagator(double a, const ContinuumParams& p, int n1, int n2, bool wilson)
{
    return dressed_lattice_propagator(a, p, std::vector<std::array<int, 2>>{{n1, n2}}, wilson)[0];
}

PairTable pair_table(const std::vector<Point>& points, const PropagatorFn& g)
{
    const std::size_t m = points.size();
    PairTable G(m, std::vector<Mat2>(m, Mat2::Zero()));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j)
                G[i][j] = g({points[i][0] - points[j][0], points[i][1] - points[j][1]});
    return G;
}

Bond bond_at(const Point& x, double a, int j)
{
    int n[2];
    for (int c = 0; c < 2; ++c) {
        double v = x[c] / a;
        n[c] = static_cast<int>(std::lround(v));
        if (std::abs(v - n[c]) > 1e-9)
            throw std::invalid_argument("point is not representable on the a-grid");
    }
    return {n[0], n[1], j};
}

PairTable lattice_pair_table(const std::vector<Point>& points, double a, const ContinuumParams& p, bool wilson)
{
    const std::size_t m = points.size();
    std::vector<Bond> sites;
    for (const auto& x : points)
        sites.push_back(bond_at(x, a));
    std::map<std::array<int, 2>, std::size_t> slot;
    std::vector<std::array<int, 2>> offs;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) {
                std::array<int, 2> d = {sites[i].x1 - sites[j].x1, sites[i].x2 - sites[j].x2};
                if (slot.emplace(d, offs.size()).second)
                    offs.push_back(d);
            }
    auto vals = dressed_lattice_propagator(a, p, offs, wilson);
    PairTable G(m, std::vector<Mat2>(m, Mat2::Zero()));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j)
                G[i][j] = vals[slot.at({sites[i].x1 - sites[j].x1, sites[i].x2 - sites[j].x2})];
    return G;
}

cplx loop_formula(const PairTable& G)
{
    const int m = static_cast<int>(G.size());
    if (m < 1 || m > 8)
        throw std::invalid_argument("loop_formula: 1 <= m <= 8");
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    cplx total = 0.0;
    do {
        for (unsigned w = 0; w < (1u << m); ++w) {
            // bit k set: omega_k = -, matrix index 1
            cplx prod = 1.0;
            for (int k = 0; k < m && prod != 0.0; ++k) {
                const int ok = (w >> k) & 1, on = (w >> ((k + 1) % m)) & 1;
                const double sk = ok ? -1.0 : 1.0;
                prod *= sk * G[perm[k]][perm[(k + 1) % m]](ok, 1 - on);
            }
            total += prod;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return -(1.0 / (2.0 * m)) * std::pow(I / kPi, m) * total;
}

cplx wick_form(const PairTable& G)
{
    const int m = static_cast<int>(G.size());
    if (m < 1 || m > 8)
        throw std::invalid_argument("wick_form: 1 <= m <= 8");
    const int n = 2 * m;
    CMatrix P = CMatrix::Zero(n, n);
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
            if (k != l)
                for (int w = 0; w < 2; ++w)
                    for (int w2 = 0; w2 < 2; ++w2)
                        P(2 * k + w, 2 * l + w2) = G[k][l](w, w2);
    std::vector<GrassmannPolynomial> mono;
    for (int k = 0; k < m; ++k)
        mono.push_back(GrassmannPolynomial::monomial(n, {2 * k, 2 * k + 1}));
    return std::pow(-I / kPi, m) * truncated_expectation(mono, P);
}

double mpoint_scaling_correlation(const std::vector<Point>& points, const std::vector<int>& j_labels,
                                  const PropagatorFn& g)
{
    check_points(points, 2, 8);
    if (!j_labels.empty()) {
        if (j_labels.size() != points.size())
            throw std::invalid_argument("j_labels must match the number of points");
        for (int j : j_labels)
            if (j != 1 && j != 2)
                throw std::invalid_argument("j labels must be 1 or 2");
    }
    return loop_formula(pair_table(points, g)).real();
}

double tune_beta(double a, double sigma, double lambda, double tc_lambda, double J)
{
    (void)lambda;
    if (!std::isfinite(sigma) || !(a > 0.0))
        throw std::invalid_argument("tune_beta: a > 0 and finite sigma required");
    if (!(tc_lambda > 0.0 && tc_lambda < 1.0))
        throw std::invalid_argument("tune_beta: tc(lambda) must lie in (0, 1)");
    const double t = tc_lambda * (1.0 + tc_lambda / kTc * a * sigma / 2.0);
    if (!(t > 0.0 && t < 1.0))
        throw std::domain_error("tune_beta: no solution with beta in (0, infinity)");
    return std::atanh(t) / J;
}

std::pair<double, double> point_geometry(const std::vector<Point>& points)
{
    double delta = INFINITY, D = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            double d = std::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
            if (d < 1e-12)
                throw std::invalid_argument("coincident points");
            delta = std::min(delta, d);
            D = std::max(D, d);
        }
    return {delta, D};
}

namespace {

ModelSpec tuned_spec(int N, double m_star)
{
    ModelSpec s;
    s.a = std::ldexp(1.0, -N);
    s.M = 1 << std::min(N + 1, 20);
    s.beta = tune_beta(s.a, m_star, 0.0, kTc);
    return s;
}

double lattice_exact(const std::vector<Point>& points, const ModelSpec& s)
{
    std::vector<Bond> bonds;
    for (const auto& x : points)
        bonds.push_back(bond_at(x, s.a));
    return infinite_free_energy_correlation(s, bonds);
}

}  // namespace

ConvergenceStudy convergence_study(const std::vector<Point>& points, const std::vector<int>& Ns,
                                   const ContinuumParams& params, CorrelationSource source, double lambda)
{
    if (lambda != 0.0)
        throw std::invalid_argument("convergence_study: only lambda = 0 is supported");
    params.validate(lambda);
    if (Ns.size() < 4)
        throw std::invalid_argument("convergence_study: at least 4 scales are required");
    check_points(points, 2, source == CorrelationSource::LatticeExact ? 6 : 8);
    ConvergenceStudy st;
    st.points = points;
    std::tie(st.delta, st.D) = point_geometry(points);
    st.source = source == CorrelationSource::LatticeExact ? "free_fermion infinite-volume energy correlation"
                                                          : "loop formula with the lattice propagator";
    const double cont = loop_formula(pair_table(points, [&](const Point& x) {
                            return continuum_propagator(x, params);
                        })).real();
    std::vector<double> la, lr;
    for (int N : Ns) {
        ModelSpec s = tuned_spec(N, params.m_star);
        for (const auto& x : points)
            bond_at(x, s.a);
        ConvergenceRow row;
        row.N = N;
        row.a = s.a;
        row.continuum = cont;
        if (source == CorrelationSource::LatticeExact) {
            row.lattice = lattice_exact(points, s);
        } else {
            ContinuumParams p = params;
            p.sigma_a = free_mass(s);
            row.lattice = loop_formula(lattice_pair_table(points, s.a, p)).real();
        }
        row.residual = std::abs(row.lattice - row.continuum);
        st.rows.push_back(row);
        la.push_back(std::log(row.a));
        lr.push_back(std::log(std::max(row.residual, 1e-300)));
    }
    std::sort(st.rows.begin(), st.rows.end(), [](const auto& x, const auto& y) { return x.a > y.a; });
    st.monotone = true;
    for (std::size_t i = 1; i < st.rows.size(); ++i)
        if (!(st.rows[i].residual < st.rows[i - 1].residual))
            st.monotone = false;
    st.theta = linear_fit(la, lr).second;
    return st;
}

GeometryCheck geometry_template_check(const std::vector<std::vector<Point>>& geometries, int N, double m_star,
                                      double epsilon)
{
    GeometryCheck gc;
    gc.epsilon = epsilon;
    ModelSpec s = tuned_spec(N, m_star);
    ContinuumParams p;
    p.m_star = m_star;
    p.sigma_a = free_mass(s);
    for (const auto& pts : geometries) {
        check_points(pts, 2, 6);
        GeometryRow r;
        r.points = pts;
        std::tie(r.delta, r.D) = point_geometry(pts);
        r.lattice = lattice_exact(pts, s);
        r.loop = loop_formula(lattice_pair_table(pts, s.a, p)).real();
        r.residual = std::abs(r.lattice - r.loop);
        r.template_factor = std::pow(r.delta / r.D, 2.0 - 2.0 * epsilon);
        gc.rows.push_back(r);
    }
    std::sort(gc.rows.begin(), gc.rows.end(), [](const auto& x, const auto& y) { return x.D < y.D; });
    gc.non_increasing = true;
    for (std::size_t i = 1; i < gc.rows.size(); ++i)
        if (gc.rows[i].residual > gc.rows[i - 1].residual)
            gc.non_increasing = false;
    return gc;
}

}  // namespace isl
