#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "isinglab/combinatorics.hpp"
#include "isinglab/free_fermion.hpp"
#include "isinglab/rg.hpp"
#include "oracles.hpp"

using namespace isl;

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

ModelSpec spec(int M, double a, double beta)
{
    ModelSpec s;
    s.M = M;
    s.a = a;
    s.beta = beta;
    return s;
}

Mat2 sigma2()
{
    Mat2 s;
    s << 0.0, -I, I, 0.0;
    return s;
}

}  // namespace

TEST_SUITE("free_fermion") {

TEST_CASE("quadratic form antisymmetry and critical spectrum")
{
    auto s = spec(8, 0.5, 0.37);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(-6.0, 6.0);
    for (int i = 0; i < 10; ++i) {
        double k1 = U(rng), k2 = U(rng);
        CHECK((phi_quadratic_form(s, k1, k2) + phi_quadratic_form(s, -k1, -k2).transpose()).norm() < 1e-13);
    }
    auto c = spec(8, 0.5, beta_critical());
    Eigen::ComplexEigenSolver<Mat4> es(phi_quadratic_form(c, 0.0, 0.0));
    std::vector<double> im;
    int zeros = 0;
    for (auto e : es.eigenvalues()) {
        if (std::abs(e) < 1e-12)
            ++zeros;
        else {
            CHECK(std::abs(e.real()) < 1e-12);
            im.push_back(e.imag());
        }
    }
    CHECK(zeros == 2);
    REQUIRE(im.size() == 2);
    CHECK(std::abs(std::abs(im[0]) - std::sqrt(2.0) / c.a) < 1e-12);
    CHECK(im[0] + im[1] == doctest::Approx(0.0));
    CHECK_THROWS(phi_quadratic_form(spec(4, 1.0, 0.0), 0.1, 0.2));
}

TEST_CASE("critical mode transform reproduces the closed forms")
{
    Mat4 U = critical_U();
    CHECK((U * U.adjoint() - Mat4::Identity()).norm() < 1e-12);
    auto s = spec(8, 0.25, 0.8 * beta_critical());
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> R(-12.0, 12.0);
    for (int i = 0; i < 10; ++i) {
        double k1 = R(rng), k2 = R(rng);
        auto A = critical_mode_transform(s, k1, k2), B = critical_forms_closed(s, k1, k2);
        CHECK((A.Cpsi - B.Cpsi).cwiseAbs().maxCoeff() < 1e-12 / s.a);
        CHECK((A.Cchi - B.Cchi).cwiseAbs().maxCoeff() < 1e-12 / s.a);
        CHECK((A.Q - B.Q).cwiseAbs().maxCoeff() < 1e-12 / s.a);
    }
    CHECK(sigma_psi(0.5, kTc, 0.0, 0.0) == 0.0);
    // Q at k = (pi / 2a, 0): sin = (1, 0), cos = (0, 1)
    auto c = spec(8, 0.5, beta_critical());
    Mat2 Q;
    Q << -I / c.a, -I / c.a, I / c.a, -I / c.a;
    CHECK((critical_mode_transform(c, kPi / (2 * c.a), 0.0).Q - Q).norm() < 1e-12);
}

TEST_CASE("Phi propagator equals the Berezin inverse on the 2x2 torus")
{
    auto s = spec(2, 1.0, 0.31);
    for (Alpha al : kAlphas) {
        RMatrix A = action_matrix(s, al);
        CMatrix G = oracle::berezin_propagator(A);
        PhiPropagator P(s, al);
        double worst = 0.0;
        for (int x = 0; x < 4; ++x)
            for (int y = 0; y < 4; ++y)
                for (int c = 0; c < 4; ++c)
                    for (int c2 = 0; c2 < 4; ++c2) {
                        int p = phi_index(2, x % 2, x / 2, c), q = phi_index(2, y % 2, y / 2, c2);
                        if (p == q)
                            continue;
                        worst = std::max(worst, std::abs(P(x % 2, x / 2, c, y % 2, y / 2, c2) - G(p, q)));
                    }
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("four boundary conditions and the massless mode")
{
    auto s = spec(4, 1.0, beta_critical());
    auto mm = partition_function_bc(s, Alpha{-1, -1});
    auto pp = partition_function_bc(s, Alpha{1, 1});
    CHECK(std::abs(pp.Z.value()) < 1e-10 * std::abs(mm.Z.value()));
    CHECK(pp.zero_mode_excluded);
    CHECK_THROWS_AS(psi_propagator(s, 1, 0, Alpha{1, 1}, false), MasslessModeError);
    auto d = partition_function(spec(3, 1.0, 0.6), PfMethod::Direct);
    auto m = partition_function(spec(3, 1.0, 0.6), PfMethod::Momentum);
    CHECK(std::abs(d.Z.value() - m.Z.value()) < 1e-10 * std::abs(d.Z.value()));
    // low temperature: every label carries the same sign of tau Z
    auto lo = partition_function(spec(8, 1.0, 0.6));
    for (double w : lo.weight)
        CHECK(w > 0.0);
}

TEST_CASE("propagator antisymmetry and FFT against direct sums")
{
    auto s = spec(16, 1.0 / 8, 0.9 * beta_critical());
    for (PsiKind k : {PsiKind::Psi, PsiKind::PsiCorrected, PsiKind::Chi}) {
        auto f = propagator_field(s, Alpha{-1, -1}, k, true);
        auto g = propagator_field(s, Alpha{-1, -1}, k, false);
        double worst = 0.0;
        for (std::size_t i = 0; i < f.values.size(); ++i)
            worst = std::max(worst, (f.values[i] - g.values[i]).cwiseAbs().maxCoeff());
        CHECK(worst < 1e-10);
        for (auto [x1, x2] : {std::pair{1, 0}, std::pair{3, -5}, std::pair{-2, 7}})
            CHECK((f.at(-x1, -x2) + f.at(x1, x2).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
    Mat2 direct = psi_propagator(s, 3, 2, Alpha{-1, -1}, true);
    CHECK((direct - propagator_field(s, Alpha{-1, -1}, PsiKind::PsiCorrected, true).at(3, 2)).norm() < 1e-10);
}

TEST_CASE("momentum sums are invariant under k -> -k relabelling")
{
    auto s = spec(8, 0.25, 0.9 * beta_critical());
    auto g = momentum_grid(s, Alpha{1, -1});
    std::vector<Mat2> K(g.k.size()), Kr(g.k.size());
    for (std::size_t i = 0; i < g.k.size(); ++i)
        K[i] = corrected_form(s, g.k[i][0], g.k[i][1], free_mass(s)).inverse();
    // the mirror image of each grid point is again on the grid
    for (std::size_t i = 0; i < g.k.size(); ++i) {
        double best = 1e9;
        std::size_t j = 0;
        for (std::size_t l = 0; l < g.k.size(); ++l) {
            double d = std::abs(std::remainder(g.k[i][0] + g.k[l][0], 2 * kPi / s.a)) +
                       std::abs(std::remainder(g.k[i][1] + g.k[l][1], 2 * kPi / s.a));
            if (d < best)
                best = d, j = l;
        }
        REQUIRE(best < 1e-12);
        Kr[j] = corrected_form(s, -g.k[j][0], -g.k[j][1], free_mass(s)).inverse();
    }
    auto f1 = momentum_sum_field(s, Alpha{1, -1}, K);
    auto f2 = momentum_sum_field(s, Alpha{1, -1}, Kr);
    // relabelling k -> -k maps the field at x to the field at -x
    for (auto [x1, x2] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{3, -2}, std::pair{-4, 5}})
        CHECK((f2.at(x1, x2) - f1.at(-x1, -x2)).norm() < 1e-12);
}

TEST_CASE("chi propagator: exponential decay and local integral")
{
    const int N = 5;
    auto s = spec(64, std::pow(2.0, -N), beta_critical());
    auto fit = fit_decay(propagator_field(s, Alpha{-1, -1}, PsiKind::Chi, true), N);
    CHECK(fit.c > 0.0);
    // c_chi = lim a sigma_chi(0)
    CHECK(s.a * sigma_chi(s.a, kTc, 0.0, 0.0) == doctest::Approx(8 + 4 * std::sqrt(2.0)).epsilon(1e-14));
    auto per = propagator_field(s, Alpha{1, 1}, PsiKind::Chi, true);
    Mat2 S = Mat2::Zero();
    for (const auto& v : per.values)
        S += v;
    S *= s.a;  // a^-1 * a^2 sum_x
    Mat2 expect = -(2 * kPi / (8 + 4 * std::sqrt(2.0))) * sigma2();
    CHECK((S - expect).norm() < 1e-12);
    CHECK(chi_propagator(s, 10, 0, Alpha{-1, -1}).norm() < 1e-3 * chi_propagator(s, 0, 0, Alpha{-1, -1}).norm());
}

TEST_CASE("Wilson correction is small at small momenta")
{
    auto s = spec(8, 1.0 / 64, beta_critical());
    std::vector<double> lx, ly;
    for (double r : {0.005, 0.01, 0.02, 0.05, 0.1}) {
        double k = r / s.a;
        auto f = critical_forms_closed(s, 0.6 * k, 0.8 * k);
        double n = (f.Q * f.Cchi.inverse() * f.Q).norm();
        CHECK(n <= 1.0 * s.a * k * k);
        lx.push_back(std::log(k));
        ly.push_back(std::log(n));
    }
    CHECK(linear_fit(lx, ly).second == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("symmetry check on the corrected form and a perturbed kernel")
{
    auto s = spec(8, 0.25, beta_critical());
    auto rep = symmetry_check([&](double k1, double k2) { return corrected_form(s, k1, k2, 0.7); }, s.a);
    CHECK(rep.ok);
    Kernel2 bad = [&](double k1, double k2) {
        Mat2 C = corrected_form(s, k1, k2, 0.7);
        C(0, 0) += 1e-3;
        return C;
    };
    auto rb = symmetry_check(bad, s.a);
    CHECK_FALSE(rb.ok);
    CHECK(rb.violation[3] > 1e-4);
    // nu psi sigma_2 psi is invariant
    auto rn = symmetry_check([&](double, double) { return Mat2(0.3 * sigma2()); }, s.a);
    CHECK(rn.ok);
}

TEST_CASE("free energy correlations against enumeration")
{
    auto s = spec(3, 1.0, 0.41);
    std::vector<Bond> b = {{0, 0, 1}, {1, 2, 2}};
    CHECK(free_mpoint_energy_correlation(s, b, BcMode::Combined) ==
          doctest::Approx(exact_truncated_energy_correlation(s, b)).epsilon(1e-9));
    std::vector<Bond> b3 = {{0, 0, 1}, {1, 2, 2}, {2, 1, 1}};
    std::vector<Bond> b3p = {{2, 1, 1}, {0, 0, 1}, {1, 2, 2}};
    CHECK(free_mpoint_energy_correlation(s, b3, BcMode::Combined) ==
          doctest::Approx(free_mpoint_energy_correlation(s, b3p, BcMode::Combined)).epsilon(1e-13));
    CHECK_THROWS(free_mpoint_energy_correlation(s, {{0, 0, 1}, {0, 0, 1}}));
}

TEST_CASE("critical energy correlation decays as the inverse square distance")
{
    auto s = spec(256, 1.0, beta_critical());
    double c8 = free_mpoint_energy_correlation(s, {{0, 0, 1}, {8, 0, 1}});
    double c16 = free_mpoint_energy_correlation(s, {{0, 0, 1}, {16, 0, 1}});
    CHECK(std::log(std::abs(c8 / c16)) / std::log(2.0) == doctest::Approx(2.0).epsilon(0.05));
}


// Moment route: cumulant of eps_i = t/a + (1 - t^2) E_i from subset moments. Accurate on coarse lattices only.
double infinite_correlation_by_moments(const ModelSpec& s, const std::vector<Bond>& bonds)
{
    const int m = static_cast<int>(bonds.size());
    std::vector<std::array<int, 3>> f;
    for (const auto& b : bonds) {
        f.push_back({b.x1, b.x2, b.j == 1 ? int(kHbar) : int(kVbar)});
        f.push_back(b.j == 1 ? std::array<int, 3>{b.x1 + 1, b.x2, kH} : std::array<int, 3>{b.x1, b.x2 + 1, kV});
    }
    const int nf = 2 * m;
    CMatrix G = CMatrix::Zero(nf, nf);
    for (int u = 0; u < nf; ++u)
        for (int v = u + 1; v < nf; ++v) {
            auto P = infinite_phi_propagator(s, {{f[v][0] - f[u][0], f[v][1] - f[u][1]}});
            G(u, v) = P[0](f[u][2], f[v][2]);
            G(v, u) = -G(u, v);
        }
    const double t = s.t(), c = t / s.a, d = 1.0 - t * t;
    auto moment = [&](std::uint32_t S) {
        cplx acc = 0.0;
        for (std::uint32_t T = S;; T = (T - 1) & S) {
            std::vector<int> idx;
            for (int i = 0; i < m; ++i)
                if (T >> i & 1) {
                    idx.push_back(2 * i);
                    idx.push_back(2 * i + 1);
                }
            acc += std::pow(c, std::popcount(S) - std::popcount(T)) * std::pow(d, std::popcount(T)) *
                   gaussian_moment(idx, G);
            if (T == 0)
                break;
        }
        return acc;
    };
    return cumulant_from_moments<cplx>(m, moment).real();
}

TEST_CASE("infinite-volume correlations agree with the moment route on a coarse lattice")
{
    ModelSpec s;
    s.a = 0.125;
    s.beta = beta_critical();
    const std::vector<Bond> all = {{0, 0, 1}, {3, 1, 2}, {-2, 4, 1}, {5, -3, 2}};
    for (int m = 1; m <= 4; ++m) {
        std::vector<Bond> b(all.begin(), all.begin() + m);
        const double ref = infinite_correlation_by_moments(s, b);
        CHECK(infinite_free_energy_correlation(s, b) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("four-point infinite-volume correlation keeps its precision on fine lattices")
{
    // a^2-convergence to the continuum value: successive residuals shrink by about 4
    ModelSpec s;
    s.beta = beta_critical();
    std::vector<double> vals;
    for (int N : {7, 8, 9, 10}) {
        s.a = std::ldexp(1.0, -N);
        const int u = 1 << N;
        vals.push_back(infinite_free_energy_correlation(s, {{0, 0, 1}, {u, 0, 1}, {0, u, 1}, {2 * u, u + u / 2, 1}}));
    }
    const double r1 = (vals[1] - vals[0]) / (vals[2] - vals[1]);
    const double r2 = (vals[2] - vals[1]) / (vals[3] - vals[2]);
    CHECK(r1 == doctest::Approx(4.0).epsilon(0.1));
    CHECK(r2 == doctest::Approx(4.0).epsilon(0.1));
}

}
