#include <bit>
#include <cmath>

#include "doctest.h"
#include "isinglab/polymer.hpp"

using namespace isl;

namespace {

ModelSpec spec(int M, double beta, double lambda, VTable v)
{
    ModelSpec s;
    s.M = M;
    s.a = 1.0;
    s.beta = beta;
    s.lambda = lambda;
    s.v = std::move(v);
    return s;
}

// Sum over string subsets with overlap-connected union gamma of prod w_S t^{|black|}.
double brute_activity(const PolymerInventory& inv, const ModelSpec& s, BondSet gamma)
{
    std::vector<int> inside;
    for (int i = 0; i < static_cast<int>(inv.strings.size()); ++i)
        if ((inv.strings[i].mask & ~gamma) == 0)
            inside.push_back(i);
    REQUIRE(inside.size() < 20);
    double total = 0.0;
    const int n = static_cast<int>(inside.size());
    for (std::uint32_t sub = 1; sub < (1u << n); ++sub) {
        BondSet uni = 0, black = 0;
        double w = 1.0;
        for (int i = 0; i < n; ++i)
            if (sub >> i & 1) {
                const auto& S = inv.strings[inside[i]];
                uni |= S.mask;
                black ^= S.mask;
                w *= std::tanh(s.beta * s.lambda * S.v / 2);
            }
        if (uni != gamma)
            continue;
        // overlap connectivity by flood fill
        std::uint32_t reached = sub & (~sub + 1), frontier = reached;
        while (frontier) {
            std::uint32_t next = 0;
            for (int i = 0; i < n; ++i)
                if (frontier >> i & 1)
                    for (int j = 0; j < n; ++j)
                        if ((sub >> j & 1) && !(reached >> j & 1) &&
                            (inv.strings[inside[i]].mask & inv.strings[inside[j]].mask))
                            next |= 1u << j;
            reached |= next;
            frontier = next;
        }
        if (reached != sub)
            continue;
        total += w * std::pow(inv.t, std::popcount(black));
    }
    return total;
}

}  // namespace

TEST_SUITE("polymer") {

TEST_CASE("string geometry")
{
    auto s = spec(4, 0.3, 0.1, ModelSpec::diagonal_and_axis2_v());
    auto strings = enumerate_strings(s);
    CHECK(strings.size() == 2 * interaction_pairs(s).size());
    for (std::size_t i = 0; i + 1 < strings.size(); i += 2) {
        const auto& U = strings[i];
        const auto& D = strings[i + 1];
        REQUIRE(U.x == D.x);
        REQUIRE(U.y == D.y);
        CHECK(U.bonds.size() == static_cast<std::size_t>(std::abs(U.d.d1) + std::abs(U.d.d2)));
        if (U.d.d1 != 0 && U.d.d2 != 0) {
            CHECK(U.bonds.size() == 2);
            CHECK((U.mask & D.mask) == 0);
        } else {
            CHECK(U.mask == D.mask);
        }
    }
}

TEST_CASE("Mayer coefficients")
{
    BondSet a = 0b0011, b = 0b0110, c = 0b1100, far = BondSet(1) << 20;
    CHECK(mayer_coefficient({a}) == 1.0);
    CHECK(mayer_coefficient({a, far}) == 0.0);
    CHECK(mayer_coefficient({a, b}) == -1.0);
    // path a - b - c: one connected spanning subgraph with two edges
    CHECK(mayer_coefficient({a, b, c}) == doctest::Approx(1.0));
    // triangle: three two-edge trees minus the full graph
    BondSet x = 0b0111, y = 0b1110, z = 0b1011;
    CHECK(mayer_coefficient({x, y, z}) == doctest::Approx(2.0));
    // a repeated polymer carries 1 / multiplicity!
    CHECK(mayer_coefficient({a, a}) == doctest::Approx(-0.5));
    for (const auto& g : std::vector<std::vector<BondSet>>{{a, b, c, x}, {x, x, y, far}, {a, b, b, c, z}})
        CHECK(mayer_coefficient(g) == doctest::Approx(mayer_coefficient_recursive(g)).epsilon(1e-12));
}

TEST_CASE("activities from their defining sums")
{
    auto s = spec(2, 0.4, 0.08, ModelSpec::diagonal_and_axis2_v());
    auto inv = enumerate_polymers(s);
    // a string whose bond set no other string reproduces
    std::size_t pick = inv.strings.size();
    for (std::size_t i = 0; i < inv.strings.size() && pick == inv.strings.size(); ++i) {
        bool unique = true;
        for (std::size_t j = 0; j < inv.strings.size(); ++j)
            unique = unique && (j == i || (inv.strings[j].mask & ~inv.strings[i].mask) != 0);
        if (unique && inv.strings[i].bonds.size() == 2)
            pick = i;
    }
    REQUIRE(pick < inv.strings.size());
    const auto& S = inv.strings[pick];
    DecoratedPolymer d{{S.mask, S.mask}, 0, 0};
    const double single = std::tanh(s.beta * s.lambda * S.v / 2) * std::pow(inv.t, std::popcount(S.mask));
    CHECK(polymer_activity(inv, d) == doctest::Approx(single).epsilon(1e-14));
    CHECK(polymer_activity(inv, d) == doctest::Approx(brute_activity(inv, s, S.mask)).epsilon(1e-14));

    // a gamma made of two overlapping strings
    bool found = false;
    for (std::size_t i = 0; i < inv.strings.size() && !found; ++i)
        for (std::size_t j = i + 1; j < inv.strings.size() && !found; ++j) {
            const auto& A = inv.strings[i];
            const auto& B = inv.strings[j];
            if (!(A.mask & B.mask) || A.mask == B.mask)
                continue;
            BondSet gamma = A.mask | B.mask;
            double sum = 0.0;
            for (const auto& [black, w] : inv.by_gamma.at(gamma))
                sum += w * std::pow(inv.t, std::popcount(black));
            CHECK(sum == doctest::Approx(brute_activity(inv, s, gamma)).epsilon(1e-13));
            found = true;
        }
    CHECK(found);

    // decorations multiply per black bond: E and A on one bond, E alone on the other
    const double t = inv.t;
    auto bonds = bonds_of(S.mask, s.M);
    BondSet b0 = bond_set({bonds[0]}, s.M), b1 = bond_set({bonds[1]}, s.M);
    DecoratedPolymer dec{{S.mask, S.mask}, b0 | b1, b0};
    CHECK(polymer_activity(inv, dec) ==
          doctest::Approx(single * (-2 * t * (1 - t * t)) * (1 - t * t) / (t * t)).epsilon(1e-13));
}

TEST_CASE("activities vanish linearly as lambda -> 0")
{
    std::vector<double> vals;
    for (double lam : {1e-3, 2e-3}) {
        auto inv = enumerate_polymers(spec(2, 0.4, lam, ModelSpec::diagonal_v()));
        const auto& S = inv.strings.front();
        vals.push_back(polymer_activity(inv, {{S.mask, S.mask}, 0, 0}));
    }
    CHECK(vals[1] / vals[0] == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("lambda = 0: trivial hard-core sum and kernel")
{
    auto s = spec(2, 0.4, 0.0, ModelSpec::diagonal_v());
    auto inv = enumerate_polymers(s);
    auto hc = hardcore_polymer_sum(inv, true);
    CHECK(hc.terms().size() == 1);
    CHECK(hc.constant_term() == 1.0);
    auto W = log_kernel(inv, Truncation{}, true);
    for (const auto& [k, c] : W.terms())
        CHECK(c == 0.0);
}

TEST_CASE("hard-core representation reproduces enumeration on 2x2")
{
    auto s = spec(2, 0.35, 0.1, ModelSpec::diagonal_v());
    std::vector<Bond> b = {{0, 0, 1}};
    auto d = polymer_partition_derivatives(s, {{}, b});
    CHECK(d[0] == doctest::Approx(exact_partition_function(s)).epsilon(1e-9));
    CHECK(d[1] == doctest::Approx(exact_source_derivative(s, b)).epsilon(1e-8));
}

TEST_CASE("kernel W is translation invariant and a-independent per site")
{
    // 2 R0 < M keeps the string choice free of site labels, so the expansion is translation covariant
    auto s = spec(5, 0.4, 0.1, {{{2, 0}, 0.25}, {{-2, 0}, 0.25}});
    REQUIRE_FALSE(s.small_torus_flag());
    auto inv = enumerate_polymers(s);
    Truncation tr{2, 64};
    BondSet R = bond_set({{0, 0, 1}, {1, 0, 1}}, 5);
    auto w0 = kernel_W(inv, R, 0, tr);
    CHECK(w0.value != 0.0);
    for (auto [d1, d2] : {std::pair{1, 0}, std::pair{2, 3}, std::pair{4, 4}})
        CHECK(kernel_W(inv, translate(R, d1, d2, 5), 0, tr).value == doctest::Approx(w0.value).epsilon(1e-13));
    double per_site = kernel_W(inv, 0, 0, tr).value / 25;
    for (int N : {2, 3, 4}) {
        auto sa = s;
        sa.a = std::pow(2.0, -N);
        CHECK(kernel_W(enumerate_polymers(sa), 0, 0, tr).value / 25 == doctest::Approx(per_site).epsilon(1e-14));
    }
}

TEST_CASE("convergence diagnostic")
{
    auto s = spec(4, 1.0, 0.01, ModelSpec::diagonal_v());
    auto rep = convergence_diagnostic(s, 3);
    const double x = 0.005;
    CHECK(rep.M0 == 2);
    CHECK(rep.nu0 == doctest::Approx(std::sqrt(4 * std::exp(1 + x) * std::pow(x, 0.25))).epsilon(1e-12));
    CHECK_FALSE(rep.certified);
    s.lambda = 1e-4;
    auto ok = convergence_diagnostic(s, 3);
    CHECK(ok.certified);
    CHECK(ok.bound_ok);
    CHECK(ok.fitted_rate >= ok.kappa0 / 2);
}

}
