#include "isinglab/lattice_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <thread>

#include "isinglab/combinatorics.hpp"

namespace isl {

double ModelSpec::t() const
{
    return std::tanh(beta * J);
}

int ModelSpec::M0() const
{
    int m = 0;
    for (const auto& [d, val] : v)
        if (val != 0.0)
            m = std::max(m, std::abs(d.d1) + std::abs(d.d2));
    return m;
}

double ModelSpec::R0() const
{
    double r = 0.0;
    for (const auto& [d, val] : v)
        if (val != 0.0)
            r = std::max(r, std::hypot(double(d.d1), double(d.d2)));
    return r;
}

bool ModelSpec::small_torus_flag() const
{
    return 2.0 * R0() >= double(M);
}

void ModelSpec::validate() const
{
    if (!(a > 0.0))
        throw std::invalid_argument("ModelSpec: lattice spacing a must be positive");
    if (M < 2)
        throw std::invalid_argument("ModelSpec: M must be at least 2");
    if (!(beta >= 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("ModelSpec: beta must be finite and non-negative");
    if (lambda != 0.0 && v.empty())
        throw std::invalid_argument("ModelSpec: lambda != 0 needs an interaction table");
    if (v.empty())
        return;
    auto val = [&](int d1, int d2) {
        auto it = v.find({d1, d2});
        return it == v.end() ? 0.0 : it->second;
    };
    double norm = 0.0;
    for (const auto& [d, x] : v) {
        norm += std::abs(x);
        if ((std::abs(d.d1) + std::abs(d.d2) == 1) && x != 0.0)
            throw std::invalid_argument("ModelSpec: v must vanish on nearest-neighbour offsets");
        const double images[] = {val(-d.d1, d.d2), val(d.d1, -d.d2), val(d.d2, d.d1), val(-d.d2, d.d1)};
        for (double y : images)
            if (std::abs(y - x) > 1e-12)
                throw std::invalid_argument("ModelSpec: v is not invariant under lattice rotations and reflections");
    }
    if (std::abs(0.5 * norm - 1.0) > 1e-12)
        throw std::invalid_argument("ModelSpec: v must satisfy (1/2) sum |v| = 1");
}

VTable ModelSpec::diagonal_v()
{
    return {{{1, 1}, 0.5}, {{1, -1}, 0.5}, {{-1, 1}, 0.5}, {{-1, -1}, 0.5}};
}

VTable ModelSpec::diagonal_and_axis2_v()
{
    return {{{1, 1}, 0.25}, {{1, -1}, 0.25}, {{-1, 1}, 0.25}, {{-1, -1}, 0.25},
            {{2, 0}, 0.25}, {{-2, 0}, 0.25}, {{0, 2}, 0.25}, {{0, -2}, 0.25}};
}

double beta_critical(double J)
{
    return std::atanh(kTc) / J;
}

int minimal_image(int d, int M)
{
    d %= M;
    if (d < 0)
        d += M;
    if (2 * d > M)
        d -= M;
    return d;
}

Bond wrap(const Bond& b, int M)
{
    return {((b.x1 % M) + M) % M, ((b.x2 % M) + M) % M, b.j};
}

int site_index(int x1, int x2, int M)
{
    return ((x1 % M) + M) % M + M * (((x2 % M) + M) % M);
}

int bond_index(const Bond& b, int M)
{
    Bond w = wrap(b, M);
    return 2 * (w.x1 + M * w.x2) + (w.j - 1);
}

Bond bond_from_index(int idx, int M)
{
    int s = idx / 2;
    return {s % M, s / M, idx % 2 + 1};
}

std::vector<InteractionPair> interaction_pairs(const ModelSpec& spec)
{
    const int M = spec.M;
    std::set<std::pair<int, int>> seen;
    std::vector<InteractionPair> out;
    for (int x2 = 0; x2 < M; ++x2)
        for (int x1 = 0; x1 < M; ++x1)
            for (const auto& [d, val] : spec.v) {
                if (val == 0.0)
                    continue;
                int x = site_index(x1, x2, M);
                int y = site_index(x1 + d.d1, x2 + d.d2, M);
                if (x == y)
                    continue;
                int lo = std::min(x, y), hi = std::max(x, y);
                if (!seen.insert({lo, hi}).second)
                    continue;
                Offset md{minimal_image(hi % M - lo % M, M), minimal_image(hi / M - lo / M, M)};
                auto it = spec.v.find(md);
                double coupling = it == spec.v.end() ? 0.0 : it->second;
                if (coupling != 0.0)
                    out.push_back({lo, hi, md, coupling});
            }
    return out;
}

namespace {

struct EnumTables {
    std::vector<std::pair<int, int>> nn;  // bond endpoints, one per bond
    std::vector<InteractionPair> pairs;
};

EnumTables tables(const ModelSpec& spec)
{
    EnumTables t;
    const int M = spec.M;
    for (int x2 = 0; x2 < M; ++x2)
        for (int x1 = 0; x1 < M; ++x1) {
            int s = site_index(x1, x2, M);
            t.nn.push_back({s, site_index(x1 + 1, x2, M)});
            t.nn.push_back({s, site_index(x1, x2 + 1, M)});
        }
    t.pairs = interaction_pairs(spec);
    return t;
}

inline int spin_product(SpinConfiguration c, int x, int y)
{
    return ((c >> x ^ c >> y) & 1) ? -1 : 1;
}

double energy(const ModelSpec& spec, const EnumTables& t, SpinConfiguration c)
{
    long nn = 0;
    for (const auto& [x, y] : t.nn)
        nn += spin_product(c, x, y);
    double lr = 0.0;
    for (const auto& p : t.pairs)
        lr += p.v * spin_product(c, p.x, p.y);
    return -spec.J * double(nn) - spec.lambda * lr;
}

// Sum f(cfg, weight, acc) over all configurations with deterministic block reduction.
std::vector<double> enumerate(const ModelSpec& spec, int nvalues, int threads,
                              const std::function<void(SpinConfiguration, double, std::vector<CompensatedSum>&)>& f)
{
    spec.validate();
    if (spec.M > 5)
        throw std::invalid_argument("enumeration requires M <= 5");
    const EnumTables t = tables(spec);
    const std::uint64_t total = std::uint64_t(1) << (spec.M * spec.M);
    const int nblocks = 64;
    std::vector<std::vector<CompensatedSum>> partial(nblocks, std::vector<CompensatedSum>(nvalues));
    auto run_block = [&](int b) {
        std::uint64_t lo = total * b / nblocks, hi = total * (b + 1) / nblocks;
        for (std::uint64_t c = lo; c < hi; ++c)
            f(c, std::exp(-spec.beta * energy(spec, t, c)), partial[b]);
    };
    int nt = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
    nt = std::min(nt, nblocks);
    if (nt == 1 || total < 4096) {
        for (int b = 0; b < nblocks; ++b)
            run_block(b);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (int b = w; b < nblocks; b += nt)
                    run_block(b);
            });
        for (auto& th : pool)
            th.join();
    }
    std::vector<double> out(nvalues);
    for (int k = 0; k < nvalues; ++k) {
        CompensatedSum s;
        for (int b = 0; b < nblocks; ++b)
            s.add(partial[b][k].value());
        out[k] = s.value();
    }
    return out;
}

std::vector<std::pair<int, int>> bond_sites(const std::vector<Bond>& bonds, int M)
{
    std::vector<std::pair<int, int>> out;
    for (const auto& b : bonds) {
        if (b.j != 1 && b.j != 2)
            throw std::invalid_argument("bond direction must be 1 or 2");
        out.push_back({site_index(b.x1, b.x2, M),
                       site_index(b.x1 + (b.j == 1), b.x2 + (b.j == 2), M)});
    }
    return out;
}

}  // namespace

void check_distinct(const std::vector<Bond>& bonds, int M)
{
    std::set<int> seen;
    for (const auto& b : bonds)
        if (!seen.insert(bond_index(b, M)).second)
            throw std::invalid_argument("repeated bonds: the energy correspondence needs distinct bonds");
}

double hamiltonian(const ModelSpec& spec, SpinConfiguration cfg)
{
    return energy(spec, tables(spec), cfg);
}

double hamiltonian(const ModelSpec& spec, const std::vector<std::int8_t>& spins)
{
    if (static_cast<int>(spins.size()) != spec.M * spec.M)
        throw std::invalid_argument("hamiltonian: configuration length must be M^2");
    const EnumTables t = tables(spec);
    double nn = 0.0, lr = 0.0;
    for (const auto& [x, y] : t.nn)
        nn += spins[x] * spins[y];
    for (const auto& p : t.pairs)
        lr += p.v * spins[p.x] * spins[p.y];
    return -spec.J * nn - spec.lambda * lr;
}

double exact_partition_function(const ModelSpec& spec, int threads)
{
    return enumerate(spec, 1, threads, [](SpinConfiguration, double w, std::vector<CompensatedSum>& acc) {
        acc[0].add(w);
    })[0];
}

double exact_source_derivative(const ModelSpec& spec, const std::vector<Bond>& bonds, int threads)
{
    auto sites = bond_sites(bonds, spec.M);
    const double a = spec.a;
    return enumerate(spec, 1, threads, [&](SpinConfiguration c, double w, std::vector<CompensatedSum>& acc) {
        double prod = w;
        for (const auto& [x, y] : sites)
            prod *= a * spin_product(c, x, y);
        acc[0].add(prod);
    })[0];
}

std::vector<double> exact_energy_moments(const ModelSpec& spec, const std::vector<Bond>& bonds, int threads)
{
    check_distinct(bonds, spec.M);
    const int m = static_cast<int>(bonds.size());
    if (m > 6)
        throw std::invalid_argument("energy correlations are limited to m <= 6");
    auto sites = bond_sites(bonds, spec.M);
    const double ainv = 1.0 / spec.a;
    const int nsub = 1 << m;
    auto sums = enumerate(spec, nsub, threads, [&](SpinConfiguration c, double w, std::vector<CompensatedSum>& acc) {
        double e[6];
        for (int i = 0; i < m; ++i)
            e[i] = ainv * spin_product(c, sites[i].first, sites[i].second);
        for (int s = 0; s < nsub; ++s) {
            double prod = w;
            for (int i = 0; i < m; ++i)
                if (s >> i & 1)
                    prod *= e[i];
            acc[s].add(prod);
        }
    });
    std::vector<double> mom(nsub);
    for (int s = 0; s < nsub; ++s)
        mom[s] = sums[s] / sums[0];
    return mom;
}

double exact_truncated_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds, int threads)
{
    auto mom = exact_energy_moments(spec, bonds, threads);
    return cumulant_from_moments<double>(static_cast<int>(bonds.size()),
                                         [&](std::uint32_t s) { return mom[s]; });
}

double exact_spin_moment(const ModelSpec& spec, const std::vector<int>& sites)
{
    auto sums = enumerate(spec, 2, 0, [&](SpinConfiguration c, double w, std::vector<CompensatedSum>& acc) {
        double prod = w;
        for (int x : sites)
            prod *= (c >> x & 1) ? 1.0 : -1.0;
        acc[0].add(w);
        acc[1].add(prod);
    });
    return sums[1] / sums[0];
}

Eigen::MatrixXd metropolis_transition_matrix(const ModelSpec& spec)
{
    spec.validate();
    const int N = spec.M * spec.M;
    if (N > 9)
        throw std::invalid_argument("metropolis_transition_matrix: at most 9 sites");
    const EnumTables t = tables(spec);
    const int S = 1 << N;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s) {
        double Hs = energy(spec, t, s), stay = 1.0;
        for (int i = 0; i < N; ++i) {
            int s2 = s ^ (1 << i);
            double acc = std::min(1.0, std::exp(-spec.beta * (energy(spec, t, s2) - Hs))) / N;
            P(s, s2) = acc;
            stay -= acc;
        }
        P(s, s) = stay;
    }
    return P;
}

}  // namespace isl
