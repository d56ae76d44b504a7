#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "isinglab/combinatorics.hpp"
#include "isinglab/rg.hpp"

using namespace isl;

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

ModelSpec critical(int N, int M)
{
    ModelSpec s;
    s.a = std::ldexp(1.0, -N);
    s.M = M;
    s.beta = beta_critical();
    return s;
}

Mat2 sigma2()
{
    Mat2 s;
    s << 0.0, -I, I, 0.0;
    return s;
}

}  // namespace

TEST_SUITE("rg") {

TEST_CASE("cutoff functions")
{
    ScaleDecomposition d{10, -5};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 4000.0);
    for (int i = 0; i < 20; ++i) {
        double k1 = U(rng), k2 = U(rng);
        CHECK(std::abs(partition_of_unity(d, k1, k2).sum - 1.0) < 1e-12);
    }
    // f_h peaks within a factor 2 of 2^h
    for (int h = -3; h < 10; ++h) {
        double best = 0.0, arg = 0.0;
        for (double lk = h - 4.0; lk < h + 4.0; lk += 0.01) {
            double k = std::exp2(lk), v = d.f(h, k * k);
            if (v > best)
                best = v, arg = lk;
        }
        CHECK(std::abs(arg - h) <= 1.0);
    }
    CHECK(d.chi(10, 1e6) == doctest::Approx(1.0));
    CHECK(h_sigma_of(4.0) == 2);
    CHECK(h_sigma_of(5.9) == 2);
    CHECK_THROWS(h_sigma_of(0.0));
}

TEST_CASE("single-scale propagators telescope and are antisymmetric")
{
    auto s = critical(4, 64);
    auto st = RGState::trivial(4, 4.0);
    auto ref = constant_mass_field(s, 4.0);
    // direct momentum sum of the reference at a few offsets
    auto grid = momentum_grid(s, Alpha{-1, -1});
    for (auto [x1, x2] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{2, 3}}) {
        Mat2 r = Mat2::Zero();
        for (const auto& k : grid.k) {
            cplx Dp = D_plus(s.a, k[0], k[1]), Dm = D_minus(s.a, k[0], k[1]);
            Mat2 K;
            K << Dp, I * 4.0, -I * 4.0, Dm;
            r += std::exp(-I * (k[0] * x1 + k[1] * x2) * s.a) * K / (std::norm(Dp) + 16.0);
        }
        r *= 2 * kPi / (s.L() * s.L());
        CHECK((r - ref.at(x1, x2)).cwiseAbs().maxCoeff() < 1e-12);
    }
    std::vector<Mat2> acc(ref.values.size(), Mat2::Zero());
    for (int h = st.h_sigma; h <= 4; ++h) {
        auto f = single_scale_field(h, st, s);
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += f.values[i];
        for (auto [x1, x2] : {std::pair{1, 0}, std::pair{3, -2}})
            CHECK((f.at(-x1, -x2) + f.at(x1, x2).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
    double err = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i)
        err = std::max(err, (acc[i] - ref.values[i]).cwiseAbs().maxCoeff());
    CHECK(err < 1e-8);
    CHECK_THROWS(single_scale_field(5, st, s));
    CHECK_THROWS(single_scale_field(st.h_sigma - 1, st, s));
}

TEST_CASE("localization recovers a local kernel exactly")
{
    const double a = 1.0 / 64, sg = 4.0;
    const int h = 3;
    const double zeta = 0.3, ss = 0.2, nu = 0.05;
    SigmaKernel W = [&](double k1, double k2, double s) {
        cplx Dm = D_minus(a, k1, k2), Dp = D_plus(a, k1, k2);
        Mat2 m;
        m << zeta * Dm, -I * ss * s / sg, I * ss * s / sg, zeta * Dp;
        m /= 4 * kPi;
        m += std::ldexp(nu, h) * sigma2();
        // irrelevant part, cubic in k
        double kk = std::norm(Dp);
        m(0, 0) += 0.01 * kk * Dm;
        m(1, 1) += 0.01 * kk * Dp;
        return m;
    };
    auto L = localize_quadratic(W, a, sg, h);
    CHECK(L.zeta == doctest::Approx(zeta).epsilon(1e-8));
    CHECK(L.s == doctest::Approx(ss).epsilon(1e-8));
    CHECK(L.nu == doctest::Approx(nu).epsilon(1e-8));
    CHECK(L.form_residual < 1e-8);
    // L is a projection
    SigmaKernel LW = [&](double k1, double k2, double s) { return L.local(k1, k2, s); };
    auto L2 = localize_quadratic(LW, a, sg, h);
    CHECK(std::abs(L2.zeta - L.zeta) < 1e-10);
    CHECK(std::abs(L2.s - L.s) < 1e-10);
    CHECK(std::abs(L2.nu - L.nu) < 1e-10);
    // the remainder is third order in k
    double r1 = localization_remainder(W, L, 1.0, 0.3).cwiseAbs().maxCoeff();
    double r2 = localization_remainder(W, L, 2.0, 0.6).cwiseAbs().maxCoeff();
    CHECK(r2 / r1 == doctest::Approx(8.0).epsilon(0.01));
    // a kernel breaking the lattice symmetries is rejected
    SigmaKernel bad = [&](double k1, double k2, double s) {
        Mat2 m = W(k1, k2, s);
        m(0, 0) += 0.1;
        return m;
    };
    CHECK_THROWS_AS(localize_quadratic(bad, a, sg, h), std::domain_error);
    CHECK(nu_from_kernel(0.1, 0.4 * sigma2(), 3) == doctest::Approx(0.1 + std::ldexp(0.8, -4)));
    CHECK(localize_source([](double) { return Mat2(1.5 / (2 * kPi) * sigma2()); }, 1.0) == doctest::Approx(1.5));
}

TEST_CASE("dimension table and tree counts")
{
    CHECK(scaling_dimension(2, 0) == 1.0);
    CHECK(scaling_dimension(4, 0) == 0.0);
    CHECK(scaling_dimension(2, 1) == 0.0);
    CHECK(z_gain(2, 0) == 2);
    CHECK(z_gain(6, 0) == 0);
    auto t = dimension_table(8, 4);
    CHECK(t.all_negative);
    CHECK(t.renormalized.at({2, 0}) == -1.0);
    CHECK(t.renormalized.at({4, 0}) == -1.0);
    CHECK(t.renormalized.at({6, 0}) == -1.0);
    CHECK(t.renormalized.at({2, 2}) == -1.0);
    // one normal endpoint: a chain of trivial vertices, one tree for every N
    CHECK(enumerate_gn_trees(0, 2, 1, 0).trees.size() == static_cast<std::size_t>(count_gn_trees_bruteforce(0, 2, 1, 0)));
    for (int n = 0; n <= 3; ++n)
        for (int m = 0; n + m <= 3; ++m)
            if (n + m > 0)
                CHECK(static_cast<long>(enumerate_gn_trees(-1, 1, n, m).trees.size()) ==
                      count_gn_trees_bruteforce(-1, 1, n, m));
    GNCaps caps;
    caps.max_trees = 10;
    CHECK_THROWS_AS(enumerate_gn_trees(0, 3, 4, 0, caps), std::length_error);
    auto E = enumerate_gn_trees(0, 2, 2, 0);
    std::set<std::string> sig;
    for (const auto& tr : E.trees)
        sig.insert(tr.signature());
    CHECK(sig.size() == E.trees.size());
}

TEST_CASE("flow of the running couplings")
{
    const int N = 20;
    auto fr = flow_solve(geometric_beta(N, 0.01, 0.01, 0.0, 0.01, 0.5), FlowPoint{N, 1.0, 1.0, 0.0, 1.0}, 2, 0.5);
    CHECK(fr.in_box);
    // Z_{h-1} = Z_h + beta_h summed to the last scale
    double closed = 1.0;
    for (int h = N; h > 2; --h)
        closed += 0.01 * std::exp2(0.5 * (h - N));
    CHECK(fr.trajectory.back().Z == doctest::Approx(closed).epsilon(1e-12));
    CHECK(fr.convergence_rate == doctest::Approx(0.5).epsilon(1e-6));
    auto big = flow_solve(geometric_beta(N, 0.3, 0.0, 0.0, 0.0, 0.5), FlowPoint{N, 1.0, 1.0, 0.0, 1.0}, 2, 0.5);
    CHECK_FALSE(big.in_box);
    CHECK(big.exit_scale < N);
}

TEST_CASE("counterterm fixed point")
{
    const int N = 20, hmin = N - 80;
    auto fp = fixed_point_nu([&](int j, const std::map<int, double>&) { return 0.1 * std::exp2(0.5 * (j - N)); }, N, hmin);
    CHECK(fp.nu_N == doctest::Approx(-0.05 / (1 - std::exp2(-1.5))).epsilon(1e-12));
    // the same fixed point from a different starting sequence
    std::map<int, double> start;
    for (int h = hmin; h <= N; ++h)
        start[h] = 0.3;
    auto fp2 = fixed_point_nu([&](int j, const std::map<int, double>& nu) { return 0.1 * std::exp2(0.5 * (j - N)) + 0.3 * nu.at(j); },
                              N, hmin);
    auto fp3 = fixed_point_nu([&](int j, const std::map<int, double>& nu) { return 0.1 * std::exp2(0.5 * (j - N)) + 0.3 * nu.at(j); },
                              N, hmin, 0.5, start);
    CHECK(fp2.converged);
    CHECK(fp2.contraction < 1.0);
    CHECK(std::abs(fp2.nu_N - fp3.nu_N) < 1e-12);
    CHECK_THROWS_AS(fixed_point_nu([](int j, const std::map<int, double>& nu) { return 3.0 * nu.at(j) + 1e-3; }, N, hmin),
                    std::domain_error);
    CHECK(theta_norm({{N, 1.0}, {N - 2, 0.5}}, N, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("one-loop source beta function")
{
    auto s = critical(5, 64);
    auto r1 = source_beta_one_loop(s, 2.0, 0.1);
    auto r2 = source_beta_one_loop(s, 2.0, 0.2);
    REQUIRE(r1.size() == r2.size());
    REQUIRE(r1.size() == 4);  // h = 5 .. 2
    for (std::size_t i = 0; i < r1.size(); ++i)
        CHECK(r2[i].beta_Z1 == doctest::Approx(2 * r1[i].beta_Z1).epsilon(1e-10));
    auto [C, theta] = source_beta_fit(r1, 5);
    CHECK(theta > 0.0);
    for (const auto& r : r1)
        CHECK(std::abs(r.beta_Z1) <= C * std::exp2(theta * (r.h - 5)) * (1 + 1e-12));
    auto sm = short_memory_profile(critical(6, 128), 2.0, 0.1, 2);
    CHECK(sm.rows.size() == 4);
    CHECK(sm.theta > 0.0);
    CHECK_THROWS(short_memory_profile(critical(6, 128), 2.0, 0.1, 6));
}

TEST_CASE("Gram representation of the chi propagator")
{
    auto g = gram_bound_check(critical(3, 8), 5, 20, 1);
    CHECK(g.reconstruction_error < 1e-12);
    CHECK(g.norm_formula_error < 1e-10);
    CHECK(g.hadamard_violations == 0);
    CHECK(g.hadamard_instances == 20);
    CHECK(g.negative_control_fails);
}

}
