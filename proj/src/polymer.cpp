#include "isinglab/polymer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "isinglab/combinatorics.hpp"

namespace isl {

namespace {

void check_bond_capacity(int M)
{
    if (2 * M * M > 64)
        throw std::invalid_argument("polymer: bond sets need 2 M^2 <= 64 (M <= 5)");
}

std::pair<int, int> bond_sites(const Bond& b, int M)
{
    return {site_index(b.x1, b.x2, M), site_index(b.x1 + (b.j == 1), b.x2 + (b.j == 2), M)};
}

// Bonds of the straight segment from (p1, p2) moving n steps along direction j (n may be negative).
void segment(std::vector<Bond>& out, int p1, int p2, int n, int j)
{
    int lo = std::min(0, n), hi = std::max(0, n);
    for (int s = lo; s < hi; ++s)
        out.push_back(j == 1 ? Bond{p1 + s, p2, 1} : Bond{p1, p2 + s, 2});
}

double ln_factorial(int n)
{
    return std::lgamma(n + 1.0);
}

double multiplicity_factorial(const std::vector<BondSet>& g)
{
    std::map<BondSet, int> mult;
    for (auto s : g)
        ++mult[s];
    double f = 1.0;
    for (const auto& [s, k] : mult)
        f *= std::exp(ln_factorial(k));
    return f;
}

}  // namespace

BondSet bond_set(const std::vector<Bond>& bonds, int M)
{
    check_bond_capacity(M);
    BondSet s = 0;
    for (const auto& b : bonds)
        s |= BondSet(1) << bond_index(b, M);
    return s;
}

std::vector<Bond> bonds_of(BondSet s, int M)
{
    std::vector<Bond> out;
    while (s) {
        int i = std::countr_zero(s);
        s &= s - 1;
        out.push_back(bond_from_index(i, M));
    }
    return out;
}

BondSet translate(BondSet s, int d1, int d2, int M)
{
    std::vector<Bond> bs = bonds_of(s, M);
    for (auto& b : bs) {
        b.x1 += d1;
        b.x2 += d2;
    }
    return bond_set(bs, M);
}

bool is_connected(BondSet s, int M)
{
    if (s == 0)
        return false;
    std::vector<Bond> bs = bonds_of(s, M);
    const int n = static_cast<int>(bs.size());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            auto [a1, a2] = bond_sites(bs[i], M);
            auto [b1, b2] = bond_sites(bs[j], M);
            if (a1 == b1 || a1 == b2 || a2 == b1 || a2 == b2)
                parent[find(i)] = find(j);
        }
    for (int i = 1; i < n; ++i)
        if (find(i) != find(0))
            return false;
    return true;
}

std::vector<StringPath> enumerate_strings(const ModelSpec& spec)
{
    const int M = spec.M;
    std::vector<StringPath> out;
    for (const auto& p : interaction_pairs(spec)) {
        int x = p.x, y = p.y;
        Offset d = p.d;
        if (d.d1 < 0 || (d.d1 == 0 && d.d2 < 0)) {
            std::swap(x, y);
            d = {-d.d1, -d.d2};
        }
        const int x1 = x % M, x2 = x / M;
        for (char kind : {'U', 'D'}) {
            StringPath s;
            s.x = x;
            s.y = y;
            s.d = d;
            s.kind = kind;
            s.v = p.v;
            // U turns at the corner with the larger second coordinate
            bool vertical_first = (kind == 'U') == (d.d2 > 0);
            if (d.d1 == 0 || d.d2 == 0)
                vertical_first = false;
            if (vertical_first) {
                segment(s.bonds, x1, x2, d.d2, 2);
                segment(s.bonds, x1, x2 + d.d2, d.d1, 1);
            } else {
                segment(s.bonds, x1, x2, d.d1, 1);
                segment(s.bonds, x1 + d.d1, x2, d.d2, 2);
            }
            for (auto& b : s.bonds)
                b = wrap(b, M);
            if (2 * M * M <= 64)
                s.mask = bond_set(s.bonds, M);
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------- BondPoly

BondPoly BondPoly::constant(double c)
{
    BondPoly p;
    p.add_term(0, 0, c);
    return p;
}

BondPoly BondPoly::monomial(BondSet R, BondSet Y, double c)
{
    BondPoly p;
    p.add_term(R, Y, c);
    return p;
}

double BondPoly::coefficient(BondSet R, BondSet Y) const
{
    auto it = terms_.find({R, Y});
    return it == terms_.end() ? 0.0 : it->second;
}

void BondPoly::add_term(BondSet R, BondSet Y, double c)
{
    if (c == 0.0)
        return;
    auto [it, inserted] = terms_.try_emplace({R, Y}, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0.0)
            terms_.erase(it);
    }
}

BondPoly& BondPoly::operator+=(const BondPoly& o)
{
    for (const auto& [k, c] : o.terms_)
        add_term(k.first, k.second, c);
    return *this;
}

BondPoly& BondPoly::operator*=(double s)
{
    if (s == 0.0) {
        terms_.clear();
        return *this;
    }
    for (auto& [k, c] : terms_)
        c *= s;
    return *this;
}

BondPoly operator*(const BondPoly& p, const BondPoly& q)
{
    BondPoly out;
    for (const auto& [k1, c1] : p.terms_)
        for (const auto& [k2, c2] : q.terms_) {
            if ((k1.first & k2.first) || (k1.second & k2.second))
                continue;
            out.add_term(k1.first | k2.first, k1.second | k2.second, c1 * c2);
        }
    return out;
}

BondPoly BondPoly::at_zero_source() const
{
    BondPoly out;
    for (const auto& [k, c] : terms_)
        if (k.second == 0)
            out.add_term(k.first, 0, c);
    return out;
}

BondPoly BondPoly::log() const
{
    const double c0 = constant_term();
    if (!(c0 > 0.0))
        throw std::domain_error("BondPoly::log: constant term must be positive");
    BondPoly x = *this * (1.0 / c0);
    x.add_term(0, 0, -1.0);  // x nilpotent
    BondPoly out = constant(std::log(c0));
    BondPoly power = x;
    for (int k = 1; !power.terms_.empty(); ++k) {
        out += power * ((k % 2 ? 1.0 : -1.0) / k);
        power = power * x;
    }
    return out;
}

// ---------------------------------------------------------------- polymers

PolymerInventory enumerate_polymers(const ModelSpec& spec, int max_component)
{
    check_bond_capacity(spec.M);
    PolymerInventory inv;
    inv.M = spec.M;
    inv.t = spec.t();
    inv.strings = enumerate_strings(spec);
    const int n = static_cast<int>(inv.strings.size());
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = std::tanh(0.5 * spec.beta * spec.lambda * inv.strings[i].v);
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (inv.strings[i].mask & inv.strings[j].mask) {
                adj[i].push_back(j);
                adj[j].push_back(i);
            }
    // connected components of the overlap graph
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> comps;
    for (int i = 0; i < n; ++i) {
        if (comp[i] >= 0)
            continue;
        comps.emplace_back();
        std::vector<int> stack{i};
        comp[i] = int(comps.size()) - 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            comps.back().push_back(u);
            for (int v : adj[u])
                if (comp[v] < 0) {
                    comp[v] = comp[i];
                    stack.push_back(v);
                }
        }
    }
    for (const auto& c : comps) {
        const int k = static_cast<int>(c.size());
        if (k > max_component)
            throw std::length_error("enumerate_polymers: " + std::to_string(k) + " strings in one connected component (cap " +
                                    std::to_string(max_component) + ")");
        std::vector<std::uint32_t> nb(k, 0);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                if (a != b && (inv.strings[c[a]].mask & inv.strings[c[b]].mask))
                    nb[a] |= 1u << b;
        for (std::uint32_t S = 1; S < (1u << k); ++S) {
            // connectivity by flood fill inside S
            std::uint32_t seen = S & (~S + 1), frontier = seen;
            while (frontier) {
                std::uint32_t next = 0;
                for (std::uint32_t f = frontier; f; f &= f - 1)
                    next |= nb[std::countr_zero(f)];
                next &= S & ~seen;
                seen |= next;
                frontier = next;
            }
            if (seen != S)
                continue;
            BondSet gamma = 0, black = 0;
            double weight = 1.0;
            for (std::uint32_t f = S; f; f &= f - 1) {
                int s = c[std::countr_zero(f)];
                gamma |= inv.strings[s].mask;
                black ^= inv.strings[s].mask;
                weight *= w[s];
            }
            inv.by_gamma[gamma][black] += weight;
            ++inv.string_sets;
        }
    }
    return inv;
}

double polymer_activity(const PolymerInventory& inv, const DecoratedPolymer& d)
{
    const BondSet gamma = d.gamma.bonds;
    if ((d.R & ~gamma) || (d.Y & ~gamma))
        throw std::invalid_argument("polymer_activity: decorations must lie in gamma");
    if (!is_connected(gamma, inv.M))
        throw std::invalid_argument("polymer_activity: gamma is not connected");
    auto it = inv.by_gamma.find(gamma);
    if (it == inv.by_gamma.end())
        return 0.0;
    const double t = inv.t;
    double total = 0.0;
    for (const auto& [black, w] : it->second) {
        if ((d.R | d.Y) & ~black)
            continue;
        double f = w;
        for (BondSet s = black; s; s &= s - 1) {
            BondSet b = s & (~s + 1);
            bool inR = d.R & b, inY = d.Y & b;
            if (inR && inY)
                f *= -2.0 * t * (1.0 - t * t);
            else if (inR || inY)
                f *= 1.0 - t * t;
            else
                f *= t;
        }
        total += f;
    }
    return total;
}

BondPoly polymer_activity_poly(const PolymerInventory& inv, BondSet gamma)
{
    BondPoly out;
    auto it = inv.by_gamma.find(gamma);
    if (it == inv.by_gamma.end())
        return out;
    const double t = inv.t, u = 1.0 - t * t;
    for (const auto& [black, w] : it->second) {
        // prod over black bonds of t + u (r + y) - 2 t u r y
        BondPoly p = BondPoly::constant(w);
        for (BondSet s = black; s; s &= s - 1) {
            BondSet b = s & (~s + 1);
            BondPoly f = BondPoly::constant(t);
            f.add_term(b, 0, u);
            f.add_term(0, b, u);
            f.add_term(b, b, -2.0 * t * u);
            p = p * f;
        }
        out += p;
    }
    return out;
}

GrassmannPolynomial to_grassmann(const BondPoly& p, const ModelSpec& spec, Alpha al)
{
    const int M = spec.M, n = 4 * M * M;
    GrassmannPolynomial g(n);
    for (const auto& [k, c] : p.terms()) {
        if (k.second)
            throw std::invalid_argument("to_grassmann: source variables present");
        std::vector<int> idx;
        double coef = c;
        for (const auto& b : bonds_of(k.first, M)) {
            BondBilinear e = bond_bilinear(b, M, al);
            idx.push_back(e.p);
            idx.push_back(e.q);
            coef *= spec.a * e.sign;
        }
        g += GrassmannPolynomial::monomial(n, idx, coef);
    }
    return g;
}

GrassmannPolynomial polymer_activity_grassmann(const PolymerInventory& inv, BondSet gamma, const ModelSpec& spec,
                                               Alpha al)
{
    return to_grassmann(polymer_activity_poly(inv, gamma).at_zero_source(), spec, al);
}

BondPoly hardcore_polymer_sum(const PolymerInventory& inv, bool with_sources)
{
    std::vector<std::pair<BondSet, BondPoly>> polys;
    BondSet support = 0;
    for (const auto& [gamma, blacks] : inv.by_gamma) {
        BondPoly z = polymer_activity_poly(inv, gamma);
        polys.emplace_back(gamma, with_sources ? z : z.at_zero_source());
        support |= gamma;
    }
    std::unordered_map<BondSet, BondPoly> memo;
    std::function<BondPoly(BondSet)> F = [&](BondSet avail) -> BondPoly {
        if (avail == 0)
            return BondPoly::constant(1.0);
        if (auto it = memo.find(avail); it != memo.end())
            return it->second;
        BondSet low = avail & (~avail + 1);
        BondPoly out = F(avail & ~low);
        for (const auto& [gamma, z] : polys)
            if ((gamma & low) && (gamma & ~avail) == 0)
                out += z * F(avail & ~gamma);
        memo[avail] = out;
        return out;
    };
    return F(support);
}

std::vector<double> polymer_partition_derivatives(const ModelSpec& spec, const std::vector<std::vector<Bond>>& Ys)
{
    spec.validate();
    const int M = spec.M;
    if (M > 3)
        throw std::invalid_argument("polymer_partition_derivatives: M <= 3 (Grassmann oracle scale)");
    PolymerInventory inv = enumerate_polymers(spec);
    BondPoly P = hardcore_polymer_sum(inv, true);
    const double t = spec.t(), u = 1.0 - t * t, a = spec.a;
    // multilinear part of prod_b cosh(beta J + a A_b) e^{S(Phi, A)} relative to A = 0
    BondPoly X = P;
    for (int b = 0; b < 2 * M * M; ++b) {
        BondSet bit = BondSet(1) << b;
        BondPoly f = BondPoly::constant(1.0);
        f.add_term(0, bit, t);
        f.add_term(bit, bit, u);
        X = X * f;
    }
    const double M2 = double(M) * M, K = spec.beta * spec.J;
    double log_pref = M2 * std::log(2.0 / (a * a)) + 2.0 * M2 * std::log(std::cosh(K));
    for (const auto& p : interaction_pairs(spec))
        log_pref += 2.0 * std::log(std::cosh(0.5 * spec.beta * spec.lambda * p.v));
    const double sign_pref = (M * M) % 2 ? -1.0 : 1.0;

    std::vector<double> out;
    std::array<RMatrix, 4> A;
    for (int i = 0; i < 4; ++i)
        A[i] = action_matrix(spec, kAlphas[i]);
    std::map<BondSet, std::array<double, 4>> cache;  // r-monomial -> int e^S prod E_b per alpha
    for (const auto& Yv : Ys) {
        check_distinct(Yv, M);
        BondSet Y = bond_set(Yv, M);
        CompensatedSum acc;
        for (const auto& [k, c] : X.terms()) {
            if (k.second != Y)
                continue;
            auto it = cache.find(k.first);
            if (it == cache.end()) {
                std::array<double, 4> vals{};
                for (int i = 0; i < 4; ++i) {
                    std::vector<int> idx;
                    double s = 1.0;
                    for (const auto& b : bonds_of(k.first, M)) {
                        BondBilinear e = bond_bilinear(b, M, kAlphas[i]);
                        idx.push_back(e.p);
                        idx.push_back(e.q);
                        s *= a * e.sign;
                    }
                    vals[i] = s * gaussian_integral(A[i], idx);
                }
                it = cache.emplace(k.first, vals).first;
            }
            for (int i = 0; i < 4; ++i)
                acc.add(0.5 * tau(kAlphas[i]) * c * it->second[i]);
        }
        // y_b = a A_b
        out.push_back(sign_pref * std::exp(log_pref) * std::pow(a, double(Yv.size())) * acc.value());
    }
    return out;
}

// ---------------------------------------------------------------- Mayer coefficients

namespace {

std::vector<std::pair<int, int>> overlap_edges(const std::vector<BondSet>& g)
{
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < int(g.size()); ++i)
        for (int j = i + 1; j < int(g.size()); ++j)
            if (g[i] & g[j])
                e.push_back({i, j});
    return e;
}

}  // namespace

double mayer_coefficient(const std::vector<BondSet>& gammas)
{
    const int n = static_cast<int>(gammas.size());
    if (n == 0)
        return 0.0;
    if (n == 1)
        return 1.0;
    if (n > 7)
        throw std::invalid_argument("mayer_coefficient: n <= 7");
    const auto edges = overlap_edges(gammas);
    const int ne = static_cast<int>(edges.size());
    long signed_count = 0;
    std::vector<int> parent(n);
    std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
    for (std::uint32_t E = 0; E < (1u << ne); ++E) {
        if (std::popcount(E) < n - 1)
            continue;
        std::iota(parent.begin(), parent.end(), 0);
        int comps = n;
        for (int k = 0; k < ne; ++k)
            if (E >> k & 1) {
                int a = find(edges[k].first), b = find(edges[k].second);
                if (a != b) {
                    parent[a] = b;
                    --comps;
                }
            }
        if (comps == 1)
            signed_count += (std::popcount(E) % 2) ? -1 : 1;
    }
    return double(signed_count) / multiplicity_factorial(gammas);
}

double mayer_coefficient_recursive(const std::vector<BondSet>& gammas)
{
    const int n = static_cast<int>(gammas.size());
    if (n == 0)
        return 0.0;
    if (n > 20)
        throw std::invalid_argument("mayer_coefficient_recursive: n <= 20");
    std::vector<std::uint32_t> nb(n, 0);
    for (auto [i, j] : overlap_edges(gammas)) {
        nb[i] |= 1u << j;
        nb[j] |= 1u << i;
    }
    const std::uint32_t full = (1u << n) - 1;
    // f(V): signed sum over all subgraphs of the induced graph = [no induced edges]
    auto f = [&](std::uint32_t V) {
        for (std::uint32_t s = V; s; s &= s - 1)
            if (nb[std::countr_zero(s)] & V)
                return 0.0;
        return 1.0;
    };
    std::vector<double> c(full + 1, 0.0);
    for (std::uint32_t V = 1; V <= full; ++V) {
        std::uint32_t low = V & (~V + 1), rest = V & ~low;
        double val = f(V);
        // proper subsets B of V containing the lowest vertex
        for (std::uint32_t s = rest;; s = (s - 1) & rest) {
            std::uint32_t B = low | s;
            if (B != V)
                val -= c[B] * f(V & ~B);
            if (s == 0)
                break;
        }
        c[V] = val;
    }
    return c[full] / multiplicity_factorial(gammas);
}

// ---------------------------------------------------------------- kernels

BondPoly log_kernel(const PolymerInventory& inv, const Truncation& tr, bool with_sources)
{
    std::vector<BondSet> gam;
    std::vector<BondPoly> z;
    for (const auto& [gamma, blacks] : inv.by_gamma) {
        if (std::popcount(gamma) > tr.max_polymer_size)
            continue;
        gam.push_back(gamma);
        BondPoly p = polymer_activity_poly(inv, gamma);
        z.push_back(with_sources ? p : p.at_zero_source());
    }
    const int P = static_cast<int>(gam.size());
    // multiset count guard
    double combos = 0.0;
    for (int n = 1; n <= tr.max_polymers; ++n)
        combos += std::exp(std::lgamma(P + n) - std::lgamma(n + 1.0) - std::lgamma(double(P)));
    if (combos > 5e7)
        throw std::length_error("log_kernel: too many polymer multisets; lower the truncation");
    BondPoly out;
    std::vector<int> tuple;
    std::function<void(int, const BondPoly&)> rec = [&](int start, const BondPoly& prod) {
        if (!tuple.empty()) {
            std::vector<BondSet> g;
            for (int i : tuple)
                g.push_back(gam[i]);
            double phi = mayer_coefficient(g);
            if (phi != 0.0)
                out += prod * phi;
        }
        if (int(tuple.size()) == tr.max_polymers)
            return;
        for (int i = start; i < P; ++i) {
            tuple.push_back(i);
            rec(i, tuple.size() == 1 ? z[i] : prod * z[i]);
            tuple.pop_back();
        }
    };
    rec(0, BondPoly::constant(1.0));
    return out;
}

ClusterKernel kernel_W(const PolymerInventory& inv, BondSet R, BondSet Y, const Truncation& tr)
{
    ClusterKernel k;
    k.R = R;
    k.Y = Y;
    k.truncation = tr;
    k.value = log_kernel(inv, tr, Y != 0).coefficient(R, Y);
    return k;
}

// ---------------------------------------------------------------- convergence diagnostic

ConvergenceReport convergence_diagnostic(const ModelSpec& spec, int max_strings)
{
    spec.validate();
    ConvergenceReport rep;
    rep.M0 = spec.M0();
    if (spec.lambda == 0.0 || rep.M0 == 0) {
        rep.message = "lambda = 0: all activities vanish";
        rep.certified = true;
        return rep;
    }
    const double bl = spec.beta * std::abs(spec.lambda) / 2.0;
    const double root = std::pow(bl, 1.0 / (2.0 * rep.M0));
    rep.nu0 = std::sqrt(4.0 * std::exp(1.0 + bl) * root);
    rep.kappa0 = -0.5 * std::log(root);
    rep.certified = rep.nu0 < 1.0;
    rep.message = rep.certified ? "certified" : "expansion not certified (nu0 >= 1)";

    const int M = spec.M;
    const auto strings = enumerate_strings(spec);
    const int n = static_cast<int>(strings.size());
    std::vector<std::vector<int>> sb(n);  // sorted bond indices per string
    for (int i = 0; i < n; ++i) {
        for (const auto& b : strings[i].bonds)
            sb[i].push_back(bond_index(b, M));
        std::sort(sb[i].begin(), sb[i].end());
        sb[i].erase(std::unique(sb[i].begin(), sb[i].end()), sb[i].end());
    }
    auto overlap = [&](int i, int j) {
        std::vector<int> c;
        std::set_intersection(sb[i].begin(), sb[i].end(), sb[j].begin(), sb[j].end(), std::back_inserter(c));
        return !c.empty();
    };
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (overlap(i, j)) {
                adj[i].push_back(j);
                adj[j].push_back(i);
            }
    const int root_bond = bond_index({0, 0, 1}, M);
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> frontier;
    for (int i = 0; i < n; ++i)
        if (std::binary_search(sb[i].begin(), sb[i].end(), root_bond)) {
            frontier.push_back({i});
            seen.insert({i});
        }
    std::vector<std::vector<int>> all = frontier;
    for (int size = 2; size <= max_strings; ++size) {
        std::vector<std::vector<int>> next;
        for (const auto& S : frontier)
            for (int s : S)
                for (int nbh : adj[s]) {
                    if (std::find(S.begin(), S.end(), nbh) != S.end())
                        continue;
                    auto T = S;
                    T.insert(std::upper_bound(T.begin(), T.end(), nbh), nbh);
                    if (seen.insert(T).second)
                        next.push_back(T);
                }
        all.insert(all.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    // f(gamma) upper estimate: 4^|gamma| sum_S |w_S| prod_black max(t, 1 - t^2, 2t(1 - t^2))
    const double t = spec.t();
    const double fmax = std::max({t, 1.0 - t * t, 2.0 * t * (1.0 - t * t)});
    std::map<std::vector<int>, double> fgamma;
    for (const auto& S : all) {
        std::map<int, int> count;
        double w = 1.0;
        for (int s : S) {
            w *= std::abs(std::tanh(0.5 * spec.beta * spec.lambda * strings[s].v));
            for (int b : sb[s])
                ++count[b];
        }
        std::vector<int> gamma;
        int black = 0;
        for (const auto& [b, c] : count) {
            gamma.push_back(b);
            black += c % 2;
        }
        fgamma[gamma] += w * std::pow(fmax, black);
    }
    auto diameter = [&](const std::vector<int>& gamma) {
        std::vector<std::pair<int, int>> sites;
        for (int bi : gamma) {
            Bond b = bond_from_index(bi, M);
            sites.push_back({b.x1, b.x2});
            sites.push_back({b.x1 + (b.j == 1), b.x2 + (b.j == 2)});
        }
        double d = 0.0;
        for (const auto& p : sites)
            for (const auto& q : sites)
                d = std::max(d, std::hypot(double(minimal_image(p.first - q.first, M)),
                                           double(minimal_image(p.second - q.second, M))));
        return d;
    };
    std::vector<std::pair<double, double>> fd;  // (diameter, f)
    for (const auto& [g, f] : fgamma)
        fd.push_back({diameter(g), f * std::pow(4.0, double(g.size()))});
    double dmax = 0.0;
    for (const auto& [d, f] : fd)
        dmax = std::max(dmax, d);
    std::vector<double> xs, ys;
    for (int R = 0; R <= int(std::floor(dmax)); ++R) {
        TailRow row;
        row.R = R;
        for (const auto& [d, f] : fd)
            if (d >= R - 1e-12) {
                row.tail += f;
                ++row.polymers;
            }
        row.envelope = 2.0 * rep.nu0 * std::exp(-0.5 * rep.kappa0 * R);
        if (row.tail > row.envelope)
            rep.bound_ok = false;
        if (row.tail > 0.0) {
            xs.push_back(R);
            ys.push_back(std::log(row.tail));
        }
        rep.tail.push_back(row);
    }
    if (xs.size() >= 2)
        rep.fitted_rate = -linear_fit(xs, ys).second;
    return rep;
}

}  // namespace isl
