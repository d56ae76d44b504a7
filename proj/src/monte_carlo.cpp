#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include "isinglab/combinatorics.hpp"
#include "isinglab/lattice_model.hpp"

namespace isl {

namespace {

struct Coupling {
    int other;
    double K;  // beta * coupling, H = -sum coupling s s'
};

struct McLattice {
    int N = 0;
    std::vector<std::vector<Coupling>> all;  // every coupling touching a site
    std::vector<std::vector<int>> nn;        // nearest-neighbour endpoints (one per bond)
};

McLattice build(const ModelSpec& spec)
{
    const int M = spec.M;
    McLattice lat;
    lat.N = M * M;
    lat.all.resize(lat.N);
    lat.nn.resize(lat.N);
    for (int x2 = 0; x2 < M; ++x2)
        for (int x1 = 0; x1 < M; ++x1) {
            int s = site_index(x1, x2, M);
            for (int j = 1; j <= 2; ++j) {
                int y = site_index(x1 + (j == 1), x2 + (j == 2), M);
                lat.all[s].push_back({y, spec.beta * spec.J});
                lat.all[y].push_back({s, spec.beta * spec.J});
                lat.nn[s].push_back(y);
                lat.nn[y].push_back(s);
            }
        }
    for (const auto& p : interaction_pairs(spec)) {
        double K = spec.beta * spec.lambda * p.v;
        lat.all[p.x].push_back({p.y, K});
        lat.all[p.y].push_back({p.x, K});
    }
    return lat;
}

void metropolis_sweep(const McLattice& lat, std::vector<std::int8_t>& s, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> site(0, lat.N - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < lat.N; ++n) {
        int i = site(rng);
        double h = 0.0;
        for (const auto& c : lat.all[i])
            h += c.K * s[c.other];
        double dS = 2.0 * s[i] * h;  // beta * Delta H
        if (dS <= 0.0 || u(rng) < std::exp(-dS))
            s[i] = -s[i];
    }
}

// Flips `clusters` Wolff clusters, or (clusters <= 0) keeps flipping until N sites have flipped.
// The second form ends at a state-dependent time, so it is only used during thermalization.
struct WolffCount {
    long flipped = 0;
    int clusters = 0;
};

WolffCount wolff_sweep(const McLattice& lat, double Kj, std::vector<std::int8_t>& s, std::mt19937_64& rng, int clusters)
{
    std::uniform_int_distribution<int> site(0, lat.N - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double padd = 1.0 - std::exp(-2.0 * Kj);
    long flipped = 0;
    int done = 0;
    std::vector<int> stack;
    while (clusters > 0 ? done < clusters : flipped < lat.N) {
        int start = site(rng);
        std::int8_t old = s[start];
        s[start] = -old;
        stack.assign(1, start);
        ++flipped;
        ++done;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            for (int j : lat.nn[i])
                if (s[j] == old && u(rng) < padd) {
                    s[j] = -old;
                    stack.push_back(j);
                    ++flipped;
                }
        }
    }
    return {flipped, done};
}

}  // namespace

McResult mc_estimate_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds, const McOptions& opt)
{
    spec.validate();
    check_distinct(bonds, spec.M);
    if (spec.M > 128)
        throw std::invalid_argument("mc: M must be at most 128");
    if (opt.sweeps < 1000)
        throw std::invalid_argument("mc: at least 1000 sweeps required");
    const int m = static_cast<int>(bonds.size());
    if (m < 1 || m > 6)
        throw std::invalid_argument("mc: 1 <= m <= 6 bonds");
    const int M = spec.M;
    const McLattice lat = build(spec);

    McResult res;
    bool use_wolff = spec.lambda == 0.0 && !opt.force_metropolis;
    if (use_wolff && spec.J < 0.0) {
        use_wolff = false;
        res.fallback_warning = true;
    }
    res.algorithm = use_wolff ? "wolff" : "metropolis";

    const long therm = opt.thermalization >= 0 ? opt.thermalization : opt.sweeps / 10;
    const int nsub = 1 << m;
    const int chains = std::max(1, opt.chains);
    std::vector<std::vector<double>> meas(chains);  // sweeps x nsub per chain

    auto run_chain = [&](int c) {
        std::mt19937_64 rng(hash_seed(opt.seed, c, ~std::uint64_t(0)));
        std::vector<std::int8_t> s(lat.N);
        for (auto& x : s)
            x = (rng() & 1) ? 1 : -1;
        auto& out = meas[c];
        out.assign(std::size_t(opt.sweeps) * nsub, 0.0);
        const double ainv = 1.0 / spec.a;
        // clusters per measured sweep: about N flipped sites, from the thermalization cluster sizes
        long therm_flips = 0, therm_clusters = 0;
        int clusters = 1;
        for (long sw = 0; sw < therm + opt.sweeps; ++sw) {
            rng.seed(hash_seed(opt.seed, c, std::uint64_t(sw)));
            if (use_wolff) {
                if (sw < therm) {
                    auto n = wolff_sweep(lat, spec.beta * spec.J, s, rng, 0);
                    therm_flips += n.flipped;
                    therm_clusters += n.clusters;
                    if (sw + 1 == therm)
                        clusters = std::max<long>(1, std::lround(double(lat.N) * therm_clusters / therm_flips));
                } else {
                    wolff_sweep(lat, spec.beta * spec.J, s, rng, clusters);
                }
            } else {
                metropolis_sweep(lat, s, rng);
            }
            if (sw < therm)
                continue;
            double* row = &out[std::size_t(sw - therm) * nsub];
            double e[6];
            for (int t2 = 0; t2 < M; ++t2)
                for (int t1 = 0; t1 < M; ++t1) {
                    for (int i = 0; i < m; ++i) {
                        const Bond& b = bonds[i];
                        int x = site_index(b.x1 + t1, b.x2 + t2, M);
                        int y = site_index(b.x1 + t1 + (b.j == 1), b.x2 + t2 + (b.j == 2), M);
                        e[i] = ainv * s[x] * s[y];
                    }
                    for (int S = 0; S < nsub; ++S) {
                        double p = 1.0;
                        for (int i = 0; i < m; ++i)
                            if (S >> i & 1)
                                p *= e[i];
                        row[S] += p;
                    }
                }
            for (int S = 0; S < nsub; ++S)
                row[S] /= double(M) * M;
        }
    };

    int nt = opt.threads > 0 ? opt.threads : int(std::max(1u, std::thread::hardware_concurrency()));
    nt = std::min(nt, chains);
    if (nt <= 1) {
        for (int c = 0; c < chains; ++c)
            run_chain(c);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (int c = w; c < chains; c += nt)
                    run_chain(c);
            });
        for (auto& th : pool)
            th.join();
    }

    // jackknife over blocks spread evenly across chains
    const int per_chain = std::max(1, opt.blocks / chains);
    const int B = per_chain * chains;
    std::vector<std::vector<double>> block_sum(B, std::vector<double>(nsub, 0.0));
    std::vector<long> block_n(B, 0);
    for (int c = 0; c < chains; ++c)
        for (long sw = 0; sw < opt.sweeps; ++sw) {
            int b = c * per_chain + int(sw * per_chain / opt.sweeps);
            for (int S = 0; S < nsub; ++S)
                block_sum[b][S] += meas[c][std::size_t(sw) * nsub + S];
            ++block_n[b];
        }
    std::vector<double> tot(nsub, 0.0);
    long ntot = 0;
    for (int b = 0; b < B; ++b) {
        for (int S = 0; S < nsub; ++S)
            tot[S] += block_sum[b][S];
        ntot += block_n[b];
    }
    auto cumulant_of = [&](const std::vector<double>& sum, long n) {
        return cumulant_from_moments<double>(m, [&](std::uint32_t S) { return sum[S] / double(n); });
    };
    res.estimate = cumulant_of(tot, ntot);
    std::vector<double> jk(B);
    double jmean = 0.0;
    for (int b = 0; b < B; ++b) {
        std::vector<double> sub(nsub);
        for (int S = 0; S < nsub; ++S)
            sub[S] = tot[S] - block_sum[b][S];
        jk[b] = cumulant_of(sub, ntot - block_n[b]);
        jmean += jk[b] / B;
    }
    double var = 0.0;
    for (double x : jk)
        var += (x - jmean) * (x - jmean);
    res.standard_error = std::sqrt(var * (B - 1) / B);
    res.measurements = ntot;
    if (opt.keep_trace)
        for (int c = 0; c < chains; ++c)
            for (long sw = 0; sw < opt.sweeps; ++sw)
                res.trace.push_back({double(c), double(sw), meas[c][std::size_t(sw) * nsub + nsub - 1]});
    return res;
}

}  // namespace isl
