#include <cmath>
#include <numbers>

#include "doctest.h"
#include "isinglab/scaling.hpp"
#include "oracles.hpp"

using namespace isl;

namespace {

constexpr double kPi = std::numbers::pi;

PropagatorFn continuum(const ContinuumParams& p)
{
    return [p](const Point& x) { return continuum_propagator(x, p); };
}

}  // namespace

TEST_SUITE("scaling") {

TEST_CASE("massless continuum propagator")
{
    ContinuumParams p;
    Mat2 g = continuum_propagator({1.0, 0.0}, p);
    CHECK(std::abs(g(0, 0) - 1.0) < 1e-14);
    CHECK(std::abs(g(1, 1) - 1.0) < 1e-14);
    CHECK(std::abs(g(0, 1)) < 1e-14);
    Mat2 h = continuum_propagator({0.3, -0.4}, p);
    CHECK(std::abs(h(0, 0) - 1.0 / cplx(0.3, -0.4)) < 1e-13);
    CHECK_THROWS(continuum_propagator({0.0, 0.0}, p));
}

TEST_CASE("massive continuum propagator against the Schwinger integral")
{
    ContinuumParams p;
    p.m_star = 0.5;
    for (Point x : {Point{2.0, 0.0}, Point{1.2, 1.6}, Point{-0.3, 0.7}}) {
        Mat2 ref = oracle::schwinger_propagator(x[0], x[1], p.m_star);
        Mat2 g = continuum_propagator(x, p);
        CHECK((g - ref).cwiseAbs().maxCoeff() < 1e-9);
        Mat2 gm = continuum_propagator({-x[0], -x[1]}, p);
        CHECK((gm + g.transpose()).cwiseAbs().maxCoeff() < 1e-13);
    }
    // the dressing rescales amplitude and mass
    ContinuumParams d = p;
    d.Zbar = 1.2;
    d.Zstar = 0.9;
    Mat2 ref = 1.2 * oracle::schwinger_propagator(1.0, 0.5, 0.45);
    CHECK((continuum_propagator({1.0, 0.5}, d) - ref).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS(d.validate(0.0));
    CHECK_NOTHROW(d.validate(0.1));
}

TEST_CASE("dressed lattice propagator matches the torus psi propagator")
{
    ModelSpec s;
    s.a = 1.0 / 16;
    s.M = 512;
    s.beta = tune_beta(s.a, 1.0, 0.0, kTc);
    ContinuumParams q;
    q.m_star = 1.0;
    q.sigma_a = free_mass(s);
    for (auto [n1, n2] : {std::pair{3, 2}, std::pair{0, 1}, std::pair{-5, 4}}) {
        Mat2 g = dressed_lattice_propagator(s.a, q, n1, n2);
        Mat2 h = psi_propagator(s, n1, n2, Alpha{-1, -1}, false);
        CHECK((g - h).norm() < 1e-8 * g.norm());
    }
    Mat2 g = dressed_lattice_propagator(s.a, q, 3, 2), gm = dressed_lattice_propagator(s.a, q, -3, -2);
    CHECK((gm + g.transpose()).norm() < 1e-12);
}

TEST_CASE("mass tuning")
{
    // lambda = 0: (t - tc)/tc = a sigma / 2
    double b = tune_beta(0.125, 1.0, 0.0, kTc);
    double t = std::tanh(b);
    CHECK((t - kTc) / kTc == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK(tune_beta(0.125, 0.0, 0.0, kTc) == doctest::Approx(beta_critical()).epsilon(1e-14));
    double tcl = 0.4;
    double bl = tune_beta(0.25, 2.0, 0.05, tcl);
    CHECK((std::tanh(bl) - tcl) / tcl == doctest::Approx(tcl / kTc * 0.25).epsilon(1e-12));
}

TEST_CASE("two-point function and j-label independence")
{
    ContinuumParams p;
    std::vector<Point> pts = {{0.0, 0.0}, {1.0, 0.5}};
    double v = mpoint_scaling_correlation(pts, {1, 1}, continuum(p));
    CHECK(v == doctest::Approx(1.0 / (kPi * kPi * 1.25)).epsilon(1e-13));
    p.m_star = 0.7;
    std::vector<Point> p3 = {{0.0, 0.0}, {1.0, 0.2}, {0.3, 1.1}};
    double a = mpoint_scaling_correlation(p3, {1, 1, 1}, continuum(p));
    double b = mpoint_scaling_correlation(p3, {2, 1, 2}, continuum(p));
    CHECK(a == b);
    // permutation of the points leaves the value unchanged
    std::vector<Point> q3 = {p3[2], p3[0], p3[1]};
    CHECK(mpoint_scaling_correlation(q3, {}, continuum(p)) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("loop formula against Pfaffian Wick contraction")
{
    ContinuumParams p;
    p.m_star = 0.7;
    std::vector<Point> P4 = {{0.0, 0.0}, {1.0, 0.2}, {0.3, 1.1}, {-0.7, 0.4}};
    auto G = pair_table({P4[0], P4[1]}, continuum(p));
    // m = 2 by hand: E^T(psi+ psi-(x); psi+ psi-(y)) = -G++ G-- + G+- G-+ on the pair table
    cplx et = -G[0][1](0, 0) * G[0][1](1, 1) + G[0][1](0, 1) * G[0][1](1, 0);
    CHECK(std::abs(wick_form(G) - std::pow(cplx(0, -1) / kPi, 2) * et) < 1e-12);
    for (int m = 2; m <= 4; ++m) {
        std::vector<Point> q(P4.begin(), P4.begin() + m);
        auto T = pair_table(q, continuum(p));
        CHECK(std::abs(loop_formula(T) - wick_form(T)) < 1e-10);
    }
}

TEST_CASE("geometry helpers")
{
    auto [delta, D] = point_geometry({{0.0, 0.0}, {3.0, 4.0}, {0.0, 1.0}});
    CHECK(delta == doctest::Approx(1.0));
    CHECK(D == doctest::Approx(5.0));
    CHECK_THROWS(point_geometry({{0.5, 0.5}, {0.5, 0.5}}));
    CHECK(bond_at({0.25, 0.5}, 0.125, 2) == Bond{2, 4, 2});
}

}
