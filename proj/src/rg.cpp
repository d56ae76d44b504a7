#include "isinglab/rg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "isinglab/combinatorics.hpp"

namespace isl {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

Mat2 sigma2()
{
    Mat2 s;
    s << 0.0, -I, I, 0.0;
    return s;
}

// representative of k in the Brillouin zone [-pi/a, pi/a); the cutoffs depend on k^2
double bz(double k, double a)
{
    const double period = 2.0 * kPi / a;
    return k - period * std::floor(k / period + 0.5);
}

double max_entry(const Mat2& m)
{
    return m.cwiseAbs().maxCoeff();
}

}  // namespace

double ScaleDecomposition::f(int h, double k2) const
{
    if (h > N || h <= h_min)
        return 0.0;
    if (h == N)
        return -std::expm1(-std::ldexp(k2, -2 * (N - 1)));
    return std::exp(-std::ldexp(k2, -2 * h)) - std::exp(-std::ldexp(k2, -2 * (h - 1)));
}

double ScaleDecomposition::chi(int h, double k2) const
{
    if (h >= N)
        return 1.0;
    return std::exp(-std::ldexp(k2, -2 * h));
}

UnityReport partition_of_unity(const ScaleDecomposition& d, double k1, double k2)
{
    if (d.h_min >= d.N)
        throw std::invalid_argument("partition_of_unity: h_min must be below N");
    const double kk = k1 * k1 + k2 * k2;
    UnityReport r;
    r.infrared = d.chi(d.h_min, kk);
    CompensatedSum s;
    s.add(r.infrared);
    for (int h = d.h_min + 1; h <= d.N; ++h) {
        r.f.push_back(d.f(h, kk));
        s.add(r.f.back());
    }
    r.sum = s.value();
    return r;
}

int h_sigma_of(double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("h_sigma: sigma(a) must be positive and finite");
    return static_cast<int>(std::floor(std::log2(sigma)));
}

RGState RGState::trivial(int N, double sigma_N)
{
    RGState s;
    s.N = N;
    s.h_sigma = h_sigma_of(sigma_N);
    if (s.h_sigma > N)
        throw std::invalid_argument("RGState: h_sigma above N");
    for (int h = s.h_sigma; h <= N; ++h) {
        s.Z[h] = 1.0;
        s.Z1[h] = 1.0;
        s.sigma[h] = sigma_N;
        s.nu[h] = 0.0;
        s.zeta[h] = 0.0;
        s.s[h] = 0.0;
    }
    return s;
}

namespace {

double state_at(const std::map<int, double>& m, int h, const char* name)
{
    auto it = m.find(h);
    if (it == m.end())
        throw std::invalid_argument(std::string("RGState: ") + name + " not defined on scale " + std::to_string(h));
    return it->second;
}

}  // namespace

Propagator2x2Field single_scale_field(int h, const RGState& st, const ModelSpec& spec)
{
    if (h < st.h_sigma || h > st.N)
        throw std::invalid_argument("single_scale_propagator: need h_sigma <= h <= N");
    const Alpha al{-1, -1};
    MomentumGrid g = momentum_grid(spec, al);
    ScaleDecomposition dec{st.N, st.h_sigma - 1};
    const double a = spec.a;
    std::vector<Mat2> K(g.k.size(), Mat2::Zero());
    if (h == st.h_sigma) {
        const double Z = state_at(st.Z, h, "Z"), sg = state_at(st.sigma, h, "sigma");
        for (std::size_t i = 0; i < g.k.size(); ++i) {
            const double k1 = bz(g.k[i][0], a), k2 = bz(g.k[i][1], a);
            const cplx Dp = D_plus(a, k1, k2), Dm = D_minus(a, k1, k2);
            const double c = dec.chi(h, k1 * k1 + k2 * k2) / (Z * (std::norm(Dp) + sg * sg));
            K[i] << c * Dp, c * I * sg, -c * I * sg, c * Dm;
        }
        return momentum_sum_field(spec, al, K);
    }
    const double Zh = state_at(st.Z, h, "Z"), sh = state_at(st.sigma, h, "sigma");
    const double zeta = state_at(st.zeta, h, "zeta"), s = state_at(st.s, h, "s");
    const double Zm = Zh + zeta;                 // Z_{h-1} = Zbar_{h-1}(0)
    const double sm = (Zh * sh + s) / Zm;        // sigma_{h-1}
    for (std::size_t i = 0; i < g.k.size(); ++i) {
        const double k1 = bz(g.k[i][0], a), k2 = bz(g.k[i][1], a), kk = k1 * k1 + k2 * k2;
        const cplx Dp = D_plus(a, k1, k2), Dm = D_minus(a, k1, k2);
        const double D2 = std::norm(Dp);
        const double ch = dec.chi(h, kk), chm = dec.chi(h - 1, kk);
        const double Zb = Zh + zeta * ch;
        const double sb = (Zh * sh + s * ch) / Zb;
        const double F = Zm * (ch / Zb * (D2 + sm * sm) / (D2 + sb * sb) - chm / Zm);
        const double S = (F + chm) * sb - chm * sm;  // F times sigma-tilde
        const double den = F * F * D2 + S * S;
        if (den == 0.0)
            continue;
        const double cd = F * F * F / den / Zm, co = F * F * S / den / Zm;
        K[i] << cd * Dp, co * I, -co * I, cd * Dm;
    }
    return momentum_sum_field(spec, al, K);
}

Mat2 single_scale_propagator(int h, const RGState& state, const ModelSpec& spec, int x1, int x2)
{
    return single_scale_field(h, state, spec).at(x1, x2);
}

Propagator2x2Field constant_mass_field(const ModelSpec& spec, double sigma)
{
    const Alpha al{-1, -1};
    MomentumGrid g = momentum_grid(spec, al);
    std::vector<Mat2> K(g.k.size());
    for (std::size_t i = 0; i < g.k.size(); ++i) {
        const cplx Dp = D_plus(spec.a, g.k[i][0], g.k[i][1]), Dm = D_minus(spec.a, g.k[i][0], g.k[i][1]);
        const double c = 1.0 / (std::norm(Dp) + sigma * sigma);
        K[i] << c * Dp, c * I * sigma, -c * I * sigma, c * Dm;
    }
    return momentum_sum_field(spec, al, K);
}

DecayFit fit_decay(const Propagator2x2Field& g, int h)
{
    const int M = g.M;
    const double scale = std::ldexp(1.0, h);
    double gmax = 0.0;
    for (const auto& v : g.values)
        gmax = std::max(gmax, max_entry(v));
    std::vector<double> X, Y;
    for (int d2 = -(M - 1) / 2; d2 <= M / 2; ++d2)
        for (int d1 = -(M - 1) / 2; d1 <= M / 2; ++d1) {
            const double n = max_entry(g.at(d1, d2));
            if (!(n > 1e-12 * gmax))
                continue;
            X.push_back(scale * g.a * std::hypot(d1, d2));
            Y.push_back(std::log(n / scale));
        }
    DecayFit r;
    r.h = h;
    r.samples = static_cast<int>(X.size());
    if (X.size() < 3)
        return r;
    r.c = -linear_fit(X, Y).second;
    double lc = -INFINITY;
    for (std::size_t i = 0; i < X.size(); ++i)
        lc = std::max(lc, Y[i] + r.c * X[i]);
    r.C = std::exp(lc);
    return r;
}

Mat2 Localization::local(double k1, double k2, double sigma_prime) const
{
    const double ratio = sigma != 0.0 ? sigma_prime / sigma : 0.0;
    Mat2 L;
    L << zeta * D_minus(a, k1, k2), -I * s * ratio, I * s * ratio, zeta * D_plus(a, k1, k2);
    return L / (4.0 * kPi) + std::ldexp(nu, h) * sigma2();
}

Localization localize_quadratic(const SigmaKernel& W, double a, double sigma, int h)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("localize_quadratic: sigma must be positive");
    Localization r;
    r.h = h;
    r.sigma = sigma;
    r.a = a;
    auto ker = [&](double k1, double k2) { return W(k1, k2, sigma); };
    SymmetryReport sym = symmetry_check(ker, a, 1e-8);
    r.symmetry_violation = *std::max_element(sym.violation.begin(), sym.violation.end());
    if (r.symmetry_violation > 1e-8)
        throw std::domain_error("localize_quadratic: kernel violates the lattice symmetries");
    const Mat2 W1 = W(0.0, 0.0, sigma), W2 = W(0.0, 0.0, 2.0 * sigma);
    r.P0 = 2.0 * W1 - W2;
    r.P1 = W2 - W1;
    auto P0W = [&](double k1, double k2) -> Mat2 { return 2.0 * W(k1, k2, sigma) - W(k1, k2, 2.0 * sigma); };
    auto deriv = [&](int dir) {
        auto cd = [&](double eta) {
            const double k = eta / a;
            return Mat2((dir == 1 ? P0W(k, 0.0) - P0W(-k, 0.0) : P0W(0.0, k) - P0W(0.0, -k)) / (2.0 * k));
        };
        const double e = 1e-2;
        Mat2 d0 = cd(e), d1 = cd(e / 2), d2 = cd(e / 4);
        Mat2 r1 = (4.0 * d1 - d0) / 3.0, r2 = (4.0 * d2 - d1) / 3.0;
        return Mat2((16.0 * r2 - r1) / 15.0);
    };
    r.d1 = deriv(1);
    r.d2 = deriv(2);
    const double f4 = 4.0 * kPi;
    cplx z = 0.25 * f4 * (-I * r.d1(0, 0) - r.d2(0, 0) - I * r.d1(1, 1) + r.d2(1, 1));
    cplx s = 0.5 * f4 * (I * r.P1(0, 1) - I * r.P1(1, 0));
    cplx nu = std::ldexp(0.5, -h) * (sigma2() * r.P0).trace();
    r.zeta = z.real();
    r.s = s.real();
    r.nu = nu.real();
    // distance of the raw local data from the two-parameter form
    Mat2 f0 = r.P0 + r.P1 - (r.local(0.0, 0.0, sigma));
    Mat2 fd1, fd2;
    fd1 << I * r.zeta / f4, 0.0, 0.0, I * r.zeta / f4;
    fd2 << -r.zeta / f4, 0.0, 0.0, r.zeta / f4;
    r.form_residual = std::max({max_entry(f0), max_entry(r.d1 - fd1), max_entry(r.d2 - fd2)});
    return r;
}

Mat2 localization_remainder(const SigmaKernel& W, const Localization& loc, double k1, double k2)
{
    return W(k1, k2, loc.sigma) - loc.local(k1, k2, loc.sigma);
}

double nu_from_kernel(double nu_bare, const Mat2& P0W0, int N)
{
    return nu_bare + std::ldexp(0.5, -N) * (sigma2() * P0W0).trace().real();
}

double localize_source(const std::function<Mat2(double sigma)>& W21, double sigma)
{
    const Mat2 P0 = 2.0 * W21(sigma) - W21(2.0 * sigma);
    return kPi * (sigma2() * P0).trace().real();
}

// ---------------------------------------------------------------- trees

int z_gain(int npsi, int nA)
{
    if (npsi == 4 && nA == 0)
        return 1;
    if (npsi == 2 && nA == 0)
        return 2;
    if (npsi == 2 && nA == 1)
        return 1;
    return 0;
}

double scaling_dimension(int npsi, int nA)
{
    return 2.0 - 0.5 * npsi - nA;
}

DimensionReport dimension_table(int psi_max, int A_max)
{
    DimensionReport r;
    for (int p = 0; p <= psi_max; p += 2)
        for (int q = 0; q <= A_max; ++q) {
            if (p + q == 0)
                continue;
            double d = scaling_dimension(p, q) - z_gain(p, q);
            r.renormalized[{p, q}] = d;
            ++r.assignments;
            if (p >= 2 && !(d < 0.0))
                r.all_negative = false;
        }
    return r;
}

std::string GNTree::signature() const
{
    std::ostringstream os;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& v = vertices[i];
        os << (v.endpoint >= 0 ? "e" + std::to_string(v.endpoint) : std::string("b")) << "@" << v.scale << "<"
           << v.parent << ";";
    }
    return os.str();
}

namespace {

using Sub = std::vector<GNVertex>;  // subtree, local root at index 0

std::vector<std::vector<std::uint32_t>> proper_partitions(std::uint32_t block)
{
    std::vector<int> elems;
    for (int i = 0; i < 32; ++i)
        if (block >> i & 1)
            elems.push_back(i);
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& part : set_partitions(static_cast<int>(elems.size()))) {
        if (part.size() < 2)
            continue;
        std::vector<std::uint32_t> blocks;
        for (auto b : part) {
            std::uint32_t m = 0;
            for (std::size_t i = 0; i < elems.size(); ++i)
                if (b >> i & 1)
                    m |= 1u << elems[i];
            blocks.push_back(m);
        }
        out.push_back(blocks);
    }
    return out;
}

struct TreeBuilder {
    int h, N;
    long cap;
    long produced = 0;

    std::vector<Sub> build(std::uint32_t block, int s, bool parent_branching)
    {
        std::vector<Sub> out;
        if (std::popcount(block) == 1) {
            std::set<int> scales;
            if (parent_branching && s + 1 <= N + 1)
                scales.insert(s + 1);
            scales.insert(N + 2);
            for (int e : scales) {
                if (e <= h + 1 || e <= s)
                    continue;
                GNVertex v;
                v.scale = e;
                v.endpoint = std::countr_zero(block);
                out.push_back({v});
            }
            return out;
        }
        for (int u = std::max(s + 1, h + 1); u <= N + 1; ++u)
            for (const auto& part : proper_partitions(block)) {
                std::vector<std::vector<Sub>> options;
                bool empty = false;
                for (auto b : part) {
                    options.push_back(build(b, u, true));
                    if (options.back().empty())
                        empty = true;
                }
                if (empty)
                    continue;
                std::vector<std::size_t> pick(options.size(), 0);
                while (true) {
                    Sub t;
                    GNVertex root;
                    root.scale = u;
                    t.push_back(root);
                    for (std::size_t c = 0; c < options.size(); ++c) {
                        const Sub& child = options[c][pick[c]];
                        const int off = static_cast<int>(t.size());
                        for (std::size_t k = 0; k < child.size(); ++k) {
                            GNVertex v = child[k];
                            v.parent = k == 0 ? 0 : v.parent + off;
                            for (auto& ch : v.children)
                                ch += off;
                            t.push_back(v);
                        }
                        t[0].children.push_back(off);
                    }
                    out.push_back(std::move(t));
                    if (++produced > cap)
                        throw std::length_error("enumerate_gn_trees: tree cap exceeded");
                    std::size_t c = 0;
                    while (c < pick.size() && ++pick[c] == options[c].size())
                        pick[c++] = 0;
                    if (c == pick.size())
                        break;
                }
            }
        return out;
    }
};

}  // namespace

GNEnumeration enumerate_gn_trees(int h, int N, int n, int m, const GNCaps& caps)
{
    if (n < 0 || m < 0 || n + m < 1)
        throw std::invalid_argument("enumerate_gn_trees: n + m >= 1 required");
    if (n + m > caps.max_endpoints)
        throw std::length_error("enumerate_gn_trees: endpoint cap exceeded");
    if (h > N)
        throw std::invalid_argument("enumerate_gn_trees: root scale above N");
    TreeBuilder tb{h, N, caps.max_trees};
    const std::uint32_t all = (n + m) >= 32 ? 0xffffffffu : ((1u << (n + m)) - 1);
    GNEnumeration res;
    for (auto& sub : tb.build(all, h, false)) {
        sub[0].parent = -1;
        GNTree t;
        t.h = h;
        t.N = N;
        t.n = n;
        t.m = m;
        t.vertices = std::move(sub);
        res.trees.push_back(std::move(t));
    }
    // admissible external legs of every branching vertex
    DimensionReport& rep = res.report;
    for (const auto& t : res.trees) {
        const int nv = static_cast<int>(t.vertices.size());
        std::vector<int> psi_max(nv, 0), specials(nv, 0);
        for (int i = nv - 1; i >= 0; --i) {
            const auto& v = t.vertices[i];
            if (v.endpoint >= 0) {
                const bool special = v.endpoint >= n;
                specials[i] = special ? 1 : 0;
                psi_max[i] = special || v.scale <= N + 1 ? 2 : caps.normal_psi_max;
            } else {
                for (int c : v.children) {
                    psi_max[i] += psi_max[c];
                    specials[i] += specials[c];
                }
            }
        }
        for (int i = 0; i < nv; ++i) {
            const auto& v = t.vertices[i];
            if (v.endpoint >= 0)
                continue;
            const int sv = static_cast<int>(v.children.size());
            const int top = psi_max[i] - 2 * (sv - 1);
            for (int p = 0; p <= top; p += 2) {
                if (p + specials[i] == 0)
                    continue;
                const double d = scaling_dimension(p, specials[i]) - z_gain(p, specials[i]);
                rep.renormalized[{p, specials[i]}] = d;
                ++rep.assignments;
                if (p >= 2 && !(d < 0.0))
                    rep.all_negative = false;
            }
        }
    }
    return res;
}

namespace {

struct LineBlock {
    std::uint32_t leaves;
    bool endpoint;
};

long count_lines(int j, int N, const std::vector<LineBlock>& line)
{
    // line j holds the vertices on scale j; extend to j + 1
    std::vector<std::uint32_t> open;
    for (const auto& b : line)
        if (!b.endpoint)
            open.push_back(b.leaves);
    if (open.empty())
        return 1;
    if (j == N + 2)
        return 0;  // non-endpoint vertices cannot sit on the last line
    // every open block chooses a set partition of its leaves; then each singleton child may end here
    std::function<long(std::size_t, std::vector<LineBlock>&)> rec = [&](std::size_t idx,
                                                                       std::vector<LineBlock>& next) -> long {
        if (idx == open.size())
            return count_lines(j + 1, N, next);
        std::vector<int> elems;
        for (int i = 0; i < 32; ++i)
            if (open[idx] >> i & 1)
                elems.push_back(i);
        long total = 0;
        for (const auto& part : set_partitions(static_cast<int>(elems.size()))) {
            std::vector<std::uint32_t> kids;
            for (auto b : part) {
                std::uint32_t mk = 0;
                for (std::size_t i = 0; i < elems.size(); ++i)
                    if (b >> i & 1)
                        mk |= 1u << elems[i];
                kids.push_back(mk);
            }
            const bool branching = kids.size() >= 2;
            // endpoint flags per singleton child
            std::vector<int> single;
            for (std::size_t c = 0; c < kids.size(); ++c)
                if (std::popcount(kids[c]) == 1)
                    single.push_back(static_cast<int>(c));
            for (unsigned fl = 0; fl < (1u << single.size()); ++fl) {
                const int line_next = j + 1;
                bool ok = true;
                std::vector<bool> ends(kids.size(), false);
                for (std::size_t q = 0; q < single.size(); ++q)
                    if (fl >> q & 1)
                        ends[single[q]] = true;
                for (std::size_t c = 0; c < kids.size(); ++c) {
                    if (line_next == N + 2 && !ends[c])
                        ok = false;  // the last line holds endpoints only
                    if (ends[c] && line_next <= N + 1 && !branching)
                        ok = false;  // endpoints below N + 2 follow a branching vertex
                }
                if (!ok)
                    continue;
                const std::size_t mark = next.size();
                for (std::size_t c = 0; c < kids.size(); ++c)
                    next.push_back({kids[c], ends[c]});
                total += rec(idx + 1, next);
                next.resize(mark);
            }
        }
        return total;
    };
    std::vector<LineBlock> next;
    return rec(0, next);
}

}  // namespace

long count_gn_trees_bruteforce(int h, int N, int n, int m)
{
    if (n + m < 1 || h > N)
        throw std::invalid_argument("count_gn_trees_bruteforce: invalid arguments");
    const std::uint32_t all = (1u << (n + m)) - 1;
    // v0 on line h + 1 carries every leaf and is not an endpoint
    return count_lines(h + 1, N, {{all, false}});
}

// ---------------------------------------------------------------- flows

FlowResult flow_solve(const BetaFunction& beta, const FlowPoint& initial, int h_sigma, double eps0)
{
    if (initial.Z != 1.0 || initial.Z1 != 1.0)
        throw std::invalid_argument("flow_solve: initial data need Z_N = Z1_N = 1");
    if (!(initial.sigma > 0.0))
        throw std::invalid_argument("flow_solve: sigma_N must be positive");
    FlowResult r;
    r.eps0 = eps0;
    r.trajectory.push_back(initial);
    const double sN = initial.sigma;
    auto in_box = [&](const FlowPoint& p) {
        return std::abs(p.Z - 1.0) + std::abs(p.Z1 - 1.0) + std::abs(p.nu) + std::abs(p.sigma / sN - 1.0) <= eps0;
    };
    if (!in_box(initial)) {
        r.in_box = false;
        r.exit_scale = initial.h;
        return r;
    }
    for (int h = initial.h; h > h_sigma; --h) {
        const FlowPoint& p = r.trajectory.back();
        BetaValues b = beta(h, r.trajectory);
        FlowPoint q;
        q.h = h - 1;
        q.Z = p.Z + b.Z;
        q.sigma = p.sigma * (1.0 + b.sigma);
        q.nu = 2.0 * p.nu + b.nu;
        q.Z1 = p.Z1 * (1.0 + b.Z1);
        r.trajectory.push_back(q);
        r.max_Z_dev = std::max(r.max_Z_dev, std::abs(q.Z - 1.0));
        r.max_sigma_dev = std::max(r.max_sigma_dev, std::abs(q.sigma / sN - 1.0));
        if (!in_box(q)) {
            r.in_box = false;
            r.exit_scale = q.h;
            break;
        }
    }
    std::vector<double> hs, ld;
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
        double d = std::abs(r.trajectory[i].Z - r.trajectory[i - 1].Z);
        if (d > 0.0) {
            hs.push_back(r.trajectory[i].h);
            ld.push_back(std::log2(d));
        }
    }
    if (hs.size() >= 2)
        r.convergence_rate = linear_fit(hs, ld).second;
    return r;
}

BetaFunction geometric_beta(int N, double cZ, double csigma, double cnu, double cZ1, double theta)
{
    return [=](int h, const std::vector<FlowPoint>&) {
        const double g = std::exp2(theta * (h - N));
        return BetaValues{cZ * g, csigma * g, cnu * g, cZ1 * g};
    };
}

double theta_norm(const std::map<int, double>& nu, int N, double theta)
{
    double m = 0.0;
    for (const auto& [h, v] : nu)
        m = std::max(m, std::abs(v) * std::exp2(-theta * (h - N)));
    return m;
}

FixedPointResult fixed_point_nu(const NuBeta& beta, int N, int h_min, double theta,
                                const std::map<int, double>& initial, double tol, int max_iter)
{
    if (h_min >= N)
        throw std::invalid_argument("fixed_point_nu: h_min must be below N");
    FixedPointResult r;
    r.theta = theta;
    std::map<int, double> nu;
    for (int h = h_min; h <= N; ++h) {
        auto it = initial.find(h);
        nu[h] = it == initial.end() ? 0.0 : it->second;
    }
    double prev_diff = -1.0;
    for (int it = 0; it < max_iter; ++it) {
        std::map<int, double> next;
        double S = 0.0;
        for (int h = h_min; h <= N; ++h) {
            S = 0.5 * S + 0.5 * beta(h, nu);
            next[h] = -S;
        }
        std::map<int, double> delta;
        for (int h = h_min; h <= N; ++h)
            delta[h] = next[h] - nu[h];
        const double diff = theta_norm(delta, N, theta);
        nu = std::move(next);
        r.iterations = it + 1;
        if (prev_diff > 1e3 * tol)
            r.contraction = std::max(r.contraction, diff / prev_diff);
        if (r.contraction >= 1.0)
            throw std::domain_error("fixed_point_nu: contraction factor >= 1");
        prev_diff = diff;
        if (diff <= tol) {
            r.converged = true;
            break;
        }
    }
    r.nu = nu;
    r.nu_N = nu.at(N);
    r.nu_at_h_min = nu.at(h_min);
    return r;
}

// ---------------------------------------------------------------- one-loop source flow

namespace {

int scale_count(const ModelSpec& spec, const char* who)
{
    const int N = static_cast<int>(std::lround(-std::log2(spec.a)));
    if (std::abs(std::ldexp(1.0, -N) - spec.a) > 1e-14)
        throw std::invalid_argument(std::string(who) + ": a must be a power of 2");
    return N;
}

// Source vertex contracted with the point-split quartic vertex; the first internal pair uses g1 and
// the second g2. Returns the antisymmetrized local kernel summed over the source position.
Mat2 one_loop_source(const ModelSpec& spec, const Propagator2x2Field& g1, const Propagator2x2Field& g2,
                     double lambda)
{
    const double a2 = spec.a * spec.a;
    const Mat2 s2 = sigma2();
    // fields: 0,1 = source pair at z; 2..5 = psi_{x+} psi_{x-} psi_{y+} psi_{y-}
    struct Field {
        int omega, pos;  // pos 0: z, 1: x = 0, 2: y = x + a e1
    };
    const cplx vcoef = lambda * std::pow(I / kPi, 2);
    const int match[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
    const double msign[3] = {1.0, -1.0, 1.0};
    auto crosses = [](int i, int j) { return (i < 2) != (j < 2); };
    const int M = spec.M;
    Mat2 W = Mat2::Zero();
    for (int u2 = 0; u2 < M; ++u2)
        for (int u1 = 0; u1 < M; ++u1) {
            const int px[3][2] = {{u1, u2}, {0, 0}, {1, 0}};
            for (int al = 0; al < 2; ++al)
                for (int be = 0; be < 2; ++be) {
                    const cplx lb = s2(al, be) / (2.0 * kPi);
                    if (lb == 0.0)
                        continue;
                    const Field f[6] = {{al, 0}, {be, 0}, {0, 1}, {1, 1}, {0, 2}, {1, 2}};
                    auto E = [&](const Propagator2x2Field& g, int i, int j) {
                        return g.at(px[f[i].pos][0] - px[f[j].pos][0], px[f[i].pos][1] - px[f[j].pos][1])(
                            f[i].omega, f[j].omega);
                    };
                    for (int p = 0; p < 6; ++p)
                        for (int q = p + 1; q < 6; ++q) {
                            int in[4], k = 0;
                            for (int i = 0; i < 6; ++i)
                                if (i != p && i != q)
                                    in[k++] = i;
                            const double sgn_ext = ((p + q - 1) % 2) ? -1.0 : 1.0;
                            for (int mi = 0; mi < 3; ++mi) {
                                const int a0 = in[match[mi][0]], a1 = in[match[mi][1]];
                                const int b0 = in[match[mi][2]], b1 = in[match[mi][3]];
                                if (!crosses(a0, a1) && !crosses(b0, b1))
                                    continue;
                                const cplx val = sgn_ext * msign[mi] * E(g1, a0, a1) * E(g2, b0, b1);
                                W(f[p].omega, f[q].omega) += a2 * lb * vcoef * val;
                            }
                        }
                }
        }
    return Mat2(0.5 * (W - W.transpose()));
}

// pi Tr[sigma_2 P0 W] for the propagator pair on scales (h, k), both orderings when h != k
double source_local(const ModelSpec& spec, const RGState& st, const RGState& st2, int h, int k, double lambda)
{
    auto W = [&](const RGState& state) {
        const Propagator2x2Field gh = single_scale_field(h, state, spec);
        if (h == k)
            return one_loop_source(spec, gh, gh, lambda);
        const Propagator2x2Field gk = single_scale_field(k, state, spec);
        return Mat2(one_loop_source(spec, gh, gk, lambda) + one_loop_source(spec, gk, gh, lambda));
    };
    const Mat2 P0 = 2.0 * W(st) - W(st2);
    return kPi * (sigma2() * P0).trace().real();
}

std::pair<RGState, RGState> source_states(int N, double sigma)
{
    RGState st = RGState::trivial(N, sigma);
    RGState st2 = st;  // same scales, doubled mass, for the sigma-independent part
    for (auto& [h, v] : st2.sigma)
        v *= 2.0;
    return {st, st2};
}

}  // namespace

std::vector<SourceBetaRow> source_beta_one_loop(const ModelSpec& spec, double sigma, double lambda)
{
    const int N = scale_count(spec, "source_beta_one_loop");
    auto [st, st2] = source_states(N, sigma);
    std::vector<SourceBetaRow> rows;
    for (int h = N; h > st.h_sigma; --h)
        rows.push_back({h, source_local(spec, st, st2, h, h, lambda)});
    return rows;
}

std::pair<double, double> source_beta_fit(const std::vector<SourceBetaRow>& rows, int N)
{
    std::vector<double> hs, lv;
    for (const auto& r : rows)
        if (r.h < N && r.beta_Z1 != 0.0) {
            hs.push_back(r.h - N);
            lv.push_back(std::log2(std::abs(r.beta_Z1)));
        }
    if (hs.size() < 2)
        throw std::invalid_argument("source_beta_fit: need two scales below N");
    const double theta = linear_fit(hs, lv).second;
    double C = 0.0;
    for (const auto& r : rows)
        C = std::max(C, std::abs(r.beta_Z1) * std::exp2(-theta * (r.h - N)));
    return {C, theta};
}

ShortMemoryProfile short_memory_profile(const ModelSpec& spec, double sigma, double lambda, int h)
{
    const int N = scale_count(spec, "short_memory_profile");
    auto [st, st2] = source_states(N, sigma);
    if (h <= st.h_sigma || h >= N)
        throw std::invalid_argument("short_memory_profile: need h_sigma < h < N");
    ShortMemoryProfile r;
    r.h = h;
    std::vector<double> ks, lv;
    for (int k = h + 1; k <= N; ++k) {
        const double v = source_local(spec, st, st2, h, k, lambda);
        r.rows.push_back({k, v});
        if (v != 0.0 && k < N) {
            ks.push_back(k - h);
            lv.push_back(std::log2(std::abs(v)));
        }
    }
    if (ks.size() >= 2)
        r.theta = -linear_fit(ks, lv).second;
    return r;
}

// ---------------------------------------------------------------- Gram representation

GramReport gram_bound_check(const ModelSpec& spec, int points, int instances, std::uint64_t seed)
{
    if (points < 1 || points > 10)
        throw std::invalid_argument("gram_bound_check: 1 <= points <= 10");
    const Alpha al{-1, -1};
    const int M = spec.M;
    const double a = spec.a, t = spec.t(), L = spec.L();
    MomentumGrid grid = momentum_grid(spec, al);
    const std::size_t nk = grid.k.size();
    std::vector<double> w(nk);
    std::vector<Mat2> mat(nk);
    CompensatedSum norm_sum;
    for (std::size_t i = 0; i < nk; ++i) {
        const double k1 = grid.k[i][0], k2 = grid.k[i][1];
        const cplx Dp = D_plus(a, k1, k2), Dm = D_minus(a, k1, k2);
        const double sc = sigma_chi(a, t, k1, k2);
        w[i] = std::norm(Dp) + sc * sc;
        mat[i] << Dp, I * sc, -I * sc, Dm;
        norm_sum.add(1.0 / std::sqrt(w[i]));
    }
    GramReport r;
    const double norm_formula = 2.0 * kPi / (L * L) * norm_sum.value();
    const double pref = std::sqrt(2.0 * kPi) / (L * L);
    using Vec = std::vector<cplx>;  // index 2 * (z1 + M z2) + component
    auto make = [&](int x1, int x2, int om, bool isC) {
        Vec v(2 * std::size_t(M) * M, 0.0);
        for (int z2 = 0; z2 < M; ++z2)
            for (int z1 = 0; z1 < M; ++z1)
                for (std::size_t i = 0; i < nk; ++i) {
                    const cplx ph = std::exp(-I * (grid.k[i][0] * a * (z1 - x1) + grid.k[i][1] * a * (z2 - x2)));
                    const std::size_t base = 2 * (std::size_t(z1) + std::size_t(M) * z2);
                    if (!isC) {
                        v[base + om] += pref * ph / std::pow(w[i], 0.25);
                    } else {
                        const double c = 1.0 / std::pow(w[i], 0.75);
                        v[base + 0] += pref * ph * c * mat[i](0, om);
                        v[base + 1] += pref * ph * c * mat[i](1, om);
                    }
                }
        return v;
    };
    auto dot = [&](const Vec& F, const Vec& G) {
        cplx s = 0.0;
        for (std::size_t i = 0; i < F.size(); ++i)
            s += std::conj(F[i]) * G[i];
        return s * a * a;
    };
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, M - 1);
    struct FieldPt {
        int x1, x2, om;
    };
    std::vector<FieldPt> pts;
    std::vector<Vec> B, C;
    for (int i = 0; i < points; ++i) {
        FieldPt f{pick(rng), pick(rng), i % 2};
        pts.push_back(f);
        B.push_back(make(f.x1, f.x2, f.om, false));
        C.push_back(make(f.x1, f.x2, f.om, true));
    }
    for (int i = 0; i < points; ++i) {
        r.normB2 = std::max(r.normB2, dot(B[i], B[i]).real());
        r.norm_formula_error = std::max({r.norm_formula_error, std::abs(dot(B[i], B[i]).real() - norm_formula),
                                         std::abs(dot(C[i], C[i]).real() - norm_formula)});
        for (int j = 0; j < points; ++j) {
            const Mat2 gx = chi_propagator(spec, pts[i].x1 - pts[j].x1, pts[i].x2 - pts[j].x2, al);
            r.reconstruction_error =
                std::max(r.reconstruction_error, std::abs(dot(B[i], C[j]) - gx(pts[i].om, pts[j].om)));
        }
    }
    r.C_fit = r.normB2 * a;  // ||B||^2 / 2^N with a = 2^-N
    // Hadamard bound on random sub-Gram matrices
    std::uniform_int_distribution<int> size_pick(1, points);
    for (int inst = 0; inst < instances; ++inst) {
        const int n = size_pick(rng);
        std::vector<int> rows_i(n), cols_i(n);
        for (int k = 0; k < n; ++k) {
            rows_i[k] = std::uniform_int_distribution<int>(0, points - 1)(rng);
            cols_i[k] = std::uniform_int_distribution<int>(0, points - 1)(rng);
        }
        CMatrix G(n, n);
        double bound = 1.0;
        for (int k = 0; k < n; ++k) {
            bound *= std::sqrt(dot(B[rows_i[k]], B[rows_i[k]]).real() * dot(C[cols_i[k]], C[cols_i[k]]).real());
            for (int l = 0; l < n; ++l)
                G(k, l) = dot(B[rows_i[k]], C[cols_i[l]]);
        }
        ++r.hadamard_instances;
        if (std::abs(G.determinant()) > bound * (1.0 + 1e-10))
            ++r.hadamard_violations;
    }
    // a matrix that is not a Gram matrix of the claimed unit vectors
    CMatrix ctrl = 2.0 * CMatrix::Identity(3, 3);
    r.negative_control_fails = std::abs(ctrl.determinant()) > 1.0;
    return r;
}

}  // namespace isl
