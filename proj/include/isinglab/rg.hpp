#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "isinglab/free_fermion.hpp"

namespace isl {

/// Gaussian cutoffs f_N = 1 - e^{-2^{-2(N-1)} k^2}, f_h = e^{-2^{-2h} k^2} - e^{-2^{-2(h-1)} k^2}.
struct ScaleDecomposition {
    int N = 0;
    int h_min = 0;
    double f(int h, double k2) const;
    /// chi_h = sum_{j <= h} f_j.
    double chi(int h, double k2) const;
};

struct UnityReport {
    std::vector<double> f;  // f_h for h = h_min + 1 .. N
    double infrared = 0.0;  // chi_{h_min}
    double sum = 0.0;
};
UnityReport partition_of_unity(const ScaleDecomposition& d, double k1, double k2);

/// h_sigma = floor(log2 sigma); throws for sigma <= 0.
int h_sigma_of(double sigma);

/// Running couplings per scale plus the local coefficients (zeta_h, s_h) entering the dressed measure.
struct RGState {
    int N = 0;
    int h_sigma = 0;
    std::map<int, double> Z, sigma, nu, Z1, zeta, s;
    /// Z = Z1 = 1, sigma = sigma_N, nu = zeta = s = 0 on every scale h_sigma..N.
    static RGState trivial(int N, double sigma_N);
};

/// g^(h) on the torus (antiperiodic grid) for every offset, from the dressed measure of the state.
/// h = h_sigma gives the infrared propagator with cutoff chi_{h_sigma}. Throws unless
/// h_sigma <= h <= N and the state is defined on h (and h - 1 when needed).
Propagator2x2Field single_scale_field(int h, const RGState& state, const ModelSpec& spec);
Mat2 single_scale_propagator(int h, const RGState& state, const ModelSpec& spec, int x1, int x2);
/// Reference (2 pi / L^2) sum_k e^{-ikx} [[D+, i sigma], [-i sigma, D-]] / (|D|^2 + sigma^2).
Propagator2x2Field constant_mass_field(const ModelSpec& spec, double sigma);

struct DecayFit {
    int h = 0;
    double C = 0.0, c = 0.0;  // ||g(x)|| <= C 2^h e^{-c 2^h |x|}
    int samples = 0;
};
/// Fit of log(||g||/2^h) against 2^h |x| over the minimal-image offsets (max-entry norm).
DecayFit fit_decay(const Propagator2x2Field& g, int h);

/// 2x2 momentum kernel with explicit sigma dependence.
using SigmaKernel = std::function<Mat2(double k1, double k2, double sigma)>;

struct Localization {
    double zeta = 0.0, s = 0.0, nu = 0.0;
    Mat2 P0 = Mat2::Zero(), P1 = Mat2::Zero();  // constant parts, sigma-independent and sigma-linear
    Mat2 d1 = Mat2::Zero(), d2 = Mat2::Zero();  // first derivatives of P0 W along k1, k2
    double form_residual = 0.0;                 // distance of the local part from the two-parameter form
    double symmetry_violation = 0.0;
    int h = 0;
    double sigma = 0.0, a = 1.0;
    /// Local part L W(k; sigma') = (1/4 pi)[[zeta D^-, -i s sigma'/sigma], [i s sigma'/sigma, zeta D^+]]
    /// + 2^h nu sigma_2.
    Mat2 local(double k1, double k2, double sigma_prime) const;
};
/// L on a quadratic kernel: value at k = 0 split by P0/P1 (sigma and 2 sigma), first lattice derivative
/// along d_a(k) by Richardson-extrapolated differences. Throws std::domain_error when the kernel
/// violates the lattice symmetries by more than 1e-8.
Localization localize_quadratic(const SigmaKernel& W, double a, double sigma, int h);
/// W - L W sampled at (k1, k2).
Mat2 localization_remainder(const SigmaKernel& W, const Localization& loc, double k1, double k2);
/// nu_N = nu + 2^{-N-1} Tr[sigma_2 P0 W(0)].
double nu_from_kernel(double nu_bare, const Mat2& P0W0, int N);

/// Z1 contribution: P0 W21(0) = (Z1 / 2 pi) sigma_2, read off as pi Tr[sigma_2 P0 W21(0)].
double localize_source(const std::function<Mat2(double sigma)>& W21, double sigma);

// Gallavotti-Nicolo trees.
struct GNVertex {
    int scale = 0;
    int parent = -1;           // -1: attached to the root
    std::vector<int> children;
    int endpoint = -1;         // endpoint label (0..n+m-1) or -1 for a branching vertex
};
struct GNTree {
    int h = 0, N = 0, n = 0, m = 0;
    std::vector<GNVertex> vertices;  // branching vertices and endpoints (trivial vertices implicit)
    std::string signature() const;
};
struct GNCaps {
    int max_trees = 200000;
    int max_endpoints = 6;
    int normal_psi_max = 4;  // psi legs of a normal endpoint on scale N + 2
};
/// z(P) gain: (4,0) -> 1, (2,0) -> 2, (2,1) -> 1, else 0.
int z_gain(int npsi, int nA);
/// d_v = 2 - |P^psi| / 2 - |P^A|.
double scaling_dimension(int npsi, int nA);

struct DimensionReport {
    std::map<std::pair<int, int>, double> renormalized;  // (|P^psi|, |P^A|) -> d_v - z
    bool all_negative = true;                             // over assignments with |P^psi| >= 2
    long assignments = 0;
};
/// Exhaustive table over even |P^psi| <= psi_max, |P^A| <= A_max.
DimensionReport dimension_table(int psi_max = 8, int A_max = 4);

struct GNEnumeration {
    std::vector<GNTree> trees;
    DimensionReport report;  // admissible external-field assignments of the branching vertices
};
/// Trees with root on scale h, endpoints labelled 0..n-1 (normal) and n..n+m-1 (special).
GNEnumeration enumerate_gn_trees(int h, int N, int n, int m, const GNCaps& caps = {});
/// Independent count: sequences of nested set partitions on the scale lines h+1..N+2.
long count_gn_trees_bruteforce(int h, int N, int n, int m);

// Flow of the running couplings.
struct BetaValues {
    double Z = 0.0, sigma = 0.0, nu = 0.0, Z1 = 0.0;
};
struct FlowPoint {
    int h = 0;
    double Z = 1.0, sigma = 0.0, nu = 0.0, Z1 = 1.0;
};
/// beta_h from the trajectory computed so far (points on scales h..N, last entry = scale h).
using BetaFunction = std::function<BetaValues(int h, const std::vector<FlowPoint>& traj)>;

struct FlowResult {
    std::vector<FlowPoint> trajectory;  // scales N, N-1, ..., h_sigma
    bool in_box = true;
    int exit_scale = 0;                 // first scale leaving the box (valid when !in_box)
    double eps0 = 0.0;
    double max_Z_dev = 0.0, max_sigma_dev = 0.0;
    double convergence_rate = 0.0;      // fitted decay rate (per scale, base 2) of |Z_h - Z_{h-1}|
};
FlowResult flow_solve(const BetaFunction& beta, const FlowPoint& initial, int h_sigma, double eps0 = 0.5);

/// Model family beta^#_h = c_# 2^{theta (h - N)}.
BetaFunction geometric_beta(int N, double cZ, double csigma, double cnu, double cZ1, double theta);

// Counterterm fixed point.
/// beta^nu_j as a functional of the nu sequence (indexed by scale, h_min..N).
using NuBeta = std::function<double(int j, const std::map<int, double>& nu)>;
struct FixedPointResult {
    double nu_N = 0.0;
    std::map<int, double> nu;
    double contraction = 0.0;  // measured ratio of successive update norms
    int iterations = 0;
    bool converged = false;
    double nu_at_h_min = 0.0;
    double theta = 0.5;
};
/// Iterates (T nu)_h = -sum_{h_min <= j <= h} 2^{j-h-1} beta^nu_j(nu). Throws std::domain_error when
/// the measured contraction factor is >= 1.
FixedPointResult fixed_point_nu(const NuBeta& beta, int N, int h_min, double theta = 0.5,
                                const std::map<int, double>& initial = {}, double tol = 1e-14,
                                int max_iter = 500);
/// ||nu||_theta = sup_h |nu_h| 2^{-theta (h - N)}.
double theta_norm(const std::map<int, double>& nu, int N, double theta);

// One-loop source renormalization.
struct SourceBetaRow {
    int h = 0;
    double beta_Z1 = 0.0;
};
/// First-order beta^{Z,1}_h: the source vertex (1/2 pi) A psi sigma_2 psi contracted with the quartic
/// vertex lambda (i/pi)^2 (psi+ psi-)_x (psi+ psi-)_{x + a e_1} through two single-scale propagators,
/// localized at the external point through P0 = 2 W(sigma) - W(2 sigma). Scales h_sigma+1..N of a trivial state.
std::vector<SourceBetaRow> source_beta_one_loop(const ModelSpec& spec, double sigma, double lambda);

/// Fit |beta_h| <= C 2^{theta (h - N)}: theta from scales below N (g^(N) carries the lattice doublers
/// at the zone corners), C the smallest constant covering every row including h = N.
std::pair<double, double> source_beta_fit(const std::vector<SourceBetaRow>& rows, int N);

/// Same diagram with one propagator on scale h and the other on k = h+1..N; theta is the fitted
/// decay rate of |value| in k - h (base 2), over k < N.
struct ShortMemoryRow {
    int k = 0;
    double value = 0.0;
};
struct ShortMemoryProfile {
    int h = 0;
    std::vector<ShortMemoryRow> rows;
    double theta = 0.0;
};
ShortMemoryProfile short_memory_profile(const ModelSpec& spec, double sigma, double lambda, int h);

// Gram representation of the chi propagator.
struct GramReport {
    double reconstruction_error = 0.0;  // max |<B_x, C_y> - g^chi(x - y)|
    double norm_formula_error = 0.0;    // ||B||^2 and ||C||^2 against the closed momentum sum
    double normB2 = 0.0;
    double C_fit = 0.0;                 // ||B||^2 / 2^N
    int hadamard_instances = 0;
    int hadamard_violations = 0;
    bool negative_control_fails = false;  // the bound fails for a non-Gram matrix, as it may
};
GramReport gram_bound_check(const ModelSpec& spec, int points = 5, int instances = 20, std::uint64_t seed = 1);

}  // namespace isl
