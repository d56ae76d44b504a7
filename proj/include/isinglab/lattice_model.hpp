#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace isl {

/// Lattice offset in units of a.
struct Offset {
    int d1 = 0, d2 = 0;
    auto operator<=>(const Offset&) const = default;
};

/// Interaction table v, keyed by lattice offset.
using VTable = std::map<Offset, double>;

/// Single source of truth for the model: H = -J sum_b s s_b - lambda sum_{x,y} s_x v(x-y) s_y.
struct ModelSpec {
    double a = 1.0;  // lattice spacing, a = 2^-N with ell_0 = 1
    int M = 2;       // sites per side
    double J = 1.0;
    double beta = 0.0;
    double lambda = 0.0;
    VTable v;

    double L() const { return a * M; }
    double t() const;
    /// Longest string length max(|d1| + |d2|) over the support of v.
    int M0() const;
    /// Largest Euclidean range of v in lattice units.
    double R0() const;
    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
    /// True when 2 R0 >= M, i.e. the minimal-image convention matters.
    bool small_torus_flag() const;

    /// v(+-1, +-1) = 1/2: the diagonal-neighbour interaction.
    static VTable diagonal_v();
    /// v = 1/4 on (+-1, +-1) and on (+-2, 0), (0, +-2).
    static VTable diagonal_and_axis2_v();
};

/// beta_c(0) = atanh(sqrt 2 - 1) / J.
double beta_critical(double J = 1.0);
inline constexpr double kTc = 0.41421356237309504880;  // sqrt 2 - 1

/// A nearest-neighbour bond (x, x + a e_j), site coordinates in lattice units.
struct Bond {
    int x1 = 0, x2 = 0, j = 1;
    auto operator<=>(const Bond&) const = default;
};

/// Bond wrapped onto the torus.
Bond wrap(const Bond& b, int M);
int bond_index(const Bond& b, int M);
Bond bond_from_index(int idx, int M);
int site_index(int x1, int x2, int M);
/// Reduce an offset component to (-M/2, M/2].
int minimal_image(int d, int M);

/// An unordered interacting pair with its minimal-image offset y - x.
struct InteractionPair {
    int x = 0, y = 0;
    Offset d;
    double v = 0.0;
};
std::vector<InteractionPair> interaction_pairs(const ModelSpec& spec);

/// Spin configuration as a bitmask over M^2 sites (bit set means +1).
using SpinConfiguration = std::uint64_t;

double hamiltonian(const ModelSpec& spec, SpinConfiguration cfg);
double hamiltonian(const ModelSpec& spec, const std::vector<std::int8_t>& spins);

/// Exhaustive partition function; requires M <= 5.
double exact_partition_function(const ModelSpec& spec, int threads = 0);

/// Sum over configurations of e^{-beta H} prod_{b in bonds} (a s_x s_{x+e_j}),
/// i.e. the mixed source derivative of Z(A) at A = 0.
double exact_source_derivative(const ModelSpec& spec, const std::vector<Bond>& bonds, int threads = 0);

/// Subset moments <prod_{i in S} eps_{b_i}> for every S (bitmask), eps_b = a^-1 s s_b.
std::vector<double> exact_energy_moments(const ModelSpec& spec, const std::vector<Bond>& bonds,
                                         int threads = 0);

/// Joint cumulant of the energy densities of distinct bonds; m <= 6.
double exact_truncated_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds,
                                          int threads = 0);

/// Odd-order spin correlation <prod s_x> (vanishes at zero field).
double exact_spin_moment(const ModelSpec& spec, const std::vector<int>& sites);

/// Single-site Metropolis transition matrix (random site choice) for M^2 <= 9.
Eigen::MatrixXd metropolis_transition_matrix(const ModelSpec& spec);

struct McOptions {
    long sweeps = 10000;
    long thermalization = -1;  // default: sweeps / 10
    std::uint64_t seed = 1;
    int chains = 4;
    int threads = 0;
    int blocks = 40;  // jackknife blocks per run
    bool force_metropolis = false;
    bool keep_trace = false;
};

struct McResult {
    double estimate = 0.0;
    double standard_error = 0.0;
    std::string algorithm;
    bool fallback_warning = false;
    long measurements = 0;
    std::vector<std::vector<double>> trace;  // per sweep: chain, sweep, product of all bonds
};

/// Connected correlation of the bond energies by Wolff (lambda = 0) or Metropolis.
McResult mc_estimate_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds,
                                        const McOptions& opt);

void check_distinct(const std::vector<Bond>& bonds, int M);

}  // namespace isl
