#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "isinglab/free_fermion.hpp"

namespace isl {

/// Parameters of the scaling limit: effective mass, amplitude and mass renormalizations, sigma(a).
struct ContinuumParams {
    double m_star = 0.0;
    double Zbar = 1.0;
    double Zstar = 1.0;
    double sigma_a = 0.0;
    /// Throws unless Zbar, Zstar lie in (0.5, 1.5), and Zbar = Zstar = 1 when lambda = 0.
    void validate(double lambda) const;
};

using Point = std::array<double, 2>;
using PropagatorFn = std::function<Mat2(const Point& x)>;

/// Dirac propagator in the continuum from the K0/K1 closed forms; with dressed, mass Zstar m*
/// and amplitude Zbar. Throws for x = 0.
Mat2 continuum_propagator(const Point& x, const ContinuumParams& p, bool dressed = true);

/// g^(a)(x) = Zbar int_{BZ} dk/(2 pi) e^{-ikx} [..]^-1 on the infinite lattice, at lattice offsets n.
/// The mass term is Zstar sigma_a, plus the Wilson term a^-1(cos ak1 + cos ak2 - 2) when wilson.
std::vector<Mat2> dressed_lattice_propagator(double a, const ContinuumParams& p,
                                             const std::vector<std::array<int, 2>>& n, bool wilson = true);
Mat2 dressed_lattice_propagator(double a, const ContinuumParams& p, int n1, int n2, bool wilson = true);

/// Pairwise propagator table G[i][j] = g(x_i - x_j), i != j.
using PairTable = std::vector<std::vector<Mat2>>;
PairTable pair_table(const std::vector<Point>& points, const PropagatorFn& g);
/// Table built from the dressed lattice propagator; points must lie on the a-grid.
PairTable lattice_pair_table(const std::vector<Point>& points, double a, const ContinuumParams& p, bool wilson = true);

/// -(1/2m)(i/pi)^m sum over permutations and omega of prod omega_k g_{omega_k, -omega_{k+1}}.
cplx loop_formula(const PairTable& G);
/// (-i/pi)^m E^T(psi_+ psi_-(x_1); ...; psi_+ psi_-(x_m)) from the cumulant oracle.
cplx wick_form(const PairTable& G);

/// Real m-point value of the loop formula; j labels are accepted and do not enter.
double mpoint_scaling_correlation(const std::vector<Point>& points, const std::vector<int>& j_labels,
                                  const PropagatorFn& g);

/// (t - tc(lambda)) / tc(lambda) = (tc(lambda) / tc(0)) a sigma / 2, beta = atanh(t) / J.
double tune_beta(double a, double sigma, double lambda, double tc_lambda, double J = 1.0);

/// Minimal pairwise distance and diameter; throws on coincident points.
std::pair<double, double> point_geometry(const std::vector<Point>& points);

enum class CorrelationSource { LatticeExact, LatticeLoop };

struct ConvergenceRow {
    int N = 0;
    double a = 0.0, lattice = 0.0, continuum = 0.0, residual = 0.0;
};
struct ConvergenceStudy {
    std::vector<Point> points;
    double delta = 0.0, D = 0.0;
    double theta = 0.0;     // fitted slope of log|residual| against log a
    double epsilon = 0.25;  // used in the (delta/D)^{2 - 2 epsilon} template
    bool monotone = false;  // residual strictly decreasing as a decreases
    std::vector<ConvergenceRow> rows;
    std::string source;
};

/// Lattice values (exact free energy correlation or loop formula with g^(a)) against the continuum
/// loop formula along a = 2^-N. Only lambda = 0 is supported.
ConvergenceStudy convergence_study(const std::vector<Point>& points, const std::vector<int>& Ns,
                                   const ContinuumParams& params, CorrelationSource source, double lambda = 0.0);

/// R^(a) = lattice exact value minus the loop formula with g^(a), per geometry at fixed a.
struct GeometryRow {
    std::vector<Point> points;
    double delta = 0.0, D = 0.0, lattice = 0.0, loop = 0.0, residual = 0.0, template_factor = 0.0;
};
struct GeometryCheck {
    std::vector<GeometryRow> rows;
    bool non_increasing = false;  // residuals ordered by D
    double epsilon = 0.25;
};
GeometryCheck geometry_template_check(const std::vector<std::vector<Point>>& geometries, int N, double m_star,
                                      double epsilon = 0.25);

/// Bond for a point on the a-grid (site round(x / a), direction j).
Bond bond_at(const Point& x, double a, int j = 1);

}  // namespace isl
