#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "isinglab/free_fermion.hpp"
#include "isinglab/grassmann.hpp"
#include "isinglab/lattice_model.hpp"

namespace isl {

/// Bond subset as a bitmask over bond_index (requires 2 M^2 <= 64).
using BondSet = std::uint64_t;

BondSet bond_set(const std::vector<Bond>& bonds, int M);
std::vector<Bond> bonds_of(BondSet s, int M);
/// Translate every bond of s by (d1, d2).
BondSet translate(BondSet s, int d1, int d2, int M);
/// Connectivity of a bond set, bonds being adjacent when they share a site.
bool is_connected(BondSet s, int M);

/// The L-shaped path carrying sigma_x sigma_y as a product of bond energies.
struct StringPath {
    int x = 0, y = 0;   // site indices, y - x has first component >= 0 in the minimal image
    Offset d;           // minimal-image offset y - x
    char kind = 'U';    // U: corner with the larger second coordinate; D: the other corner
    std::vector<Bond> bonds;
    BondSet mask = 0;
    double v = 0.0;     // v_S = v(x - y)
};

/// Both strings for every interacting pair (axis pairs give two identical strings, both kept).
std::vector<StringPath> enumerate_strings(const ModelSpec& spec);

/// A connected bond set gamma and the bonds covered an odd number of times by a string set.
struct Polymer {
    BondSet bonds = 0;
    BondSet black = 0;
    auto operator<=>(const Polymer&) const = default;
};

/// R: energy decorations, Y: source decorations, both subsets of gamma.
struct DecoratedPolymer {
    Polymer gamma;
    BondSet R = 0, Y = 0;
};

/// Polynomial in the commuting nilpotent variables r_b = a E_b and y_b = a A_b
/// (distinct bond bilinears use disjoint generator pairs, so they commute and square to zero).
class BondPoly {
public:
    using Key = std::pair<BondSet, BondSet>;  // (R, Y)
    static BondPoly constant(double c);
    static BondPoly monomial(BondSet R, BondSet Y, double c = 1.0);

    const std::map<Key, double>& terms() const { return terms_; }
    double coefficient(BondSet R, BondSet Y) const;
    double constant_term() const { return coefficient(0, 0); }
    void add_term(BondSet R, BondSet Y, double c);

    BondPoly& operator+=(const BondPoly& o);
    BondPoly& operator*=(double s);
    friend BondPoly operator+(BondPoly p, const BondPoly& q) { return p += q; }
    friend BondPoly operator*(BondPoly p, double s) { return p *= s; }
    friend BondPoly operator*(const BondPoly& p, const BondPoly& q);

    /// Drop every term carrying a y variable.
    BondPoly at_zero_source() const;
    /// log p for p with positive constant term (terminating series).
    BondPoly log() const;

private:
    std::map<Key, double> terms_;
};

/// Connected string subsets grouped by polymer: for every gamma, weight per black set
/// (weight = product of tanh(beta lambda v_S / 2)).
struct PolymerInventory {
    int M = 0;
    double t = 0.0;
    std::vector<StringPath> strings;
    std::map<BondSet, std::map<BondSet, double>> by_gamma;  // gamma -> (black -> summed weight)
    std::size_t string_sets = 0;
};

/// Exhaustive enumeration of connected string sets (connected = sharing a bond); each connected
/// component of the string overlap graph may hold at most max_component strings.
PolymerInventory enumerate_polymers(const ModelSpec& spec, int max_component = 22);

/// zeta(R, Y; gamma) from its defining sum with the per-bond factors t, 1 - t^2, -2t(1 - t^2).
double polymer_activity(const PolymerInventory& inv, const DecoratedPolymer& d);
/// zeta_G(gamma) = sum_{R,Y} zeta(R, Y; gamma) r^R y^Y as a bond polynomial.
BondPoly polymer_activity_poly(const PolymerInventory& inv, BondSet gamma);
/// zeta_G restricted to y = 0 as a Grassmann polynomial in Phi (boundary label al).
GrassmannPolynomial polymer_activity_grassmann(const PolymerInventory& inv, BondSet gamma, const ModelSpec& spec,
                                               Alpha al);
/// Replace r_b by a E_b in a y-free bond polynomial.
GrassmannPolynomial to_grassmann(const BondPoly& p, const ModelSpec& spec, Alpha al);

/// sum over hard-core polymer collections of prod zeta_G (exact, no exponentiation). With
/// with_sources the y variables are kept (multilinear in A), otherwise y = 0.
BondPoly hardcore_polymer_sum(const PolymerInventory& inv, bool with_sources);

/// Z(A) and its mixed derivatives at A = 0 from the hard-core representation, one Grassmann
/// Gaussian integral per boundary label and monomial. Returns d^|Y| Z / prod dA_b for every
/// listed Y (distinct bonds).
std::vector<double> polymer_partition_derivatives(const ModelSpec& spec, const std::vector<std::vector<Bond>>& Ys);

/// Mayer coefficient phi^T of a multiset of polymers (bond sets), n <= 7.
double mayer_coefficient(const std::vector<BondSet>& gammas);
/// Independent oracle: connected-subgraph signed count by vertex-subset recursion, divided by Gamma!.
double mayer_coefficient_recursive(const std::vector<BondSet>& gammas);

struct Truncation {
    int max_polymers = 3;
    int max_polymer_size = 64;
};

/// sum over connected multisets Gamma (|Gamma| <= max_polymers) of phi^T(Gamma) prod zeta_G(gamma),
/// i.e. sum_{R,Y} W(R, Y) r^R y^Y truncated.
BondPoly log_kernel(const PolymerInventory& inv, const Truncation& tr, bool with_sources = true);

struct ClusterKernel {
    BondSet R = 0, Y = 0;
    double value = 0.0;
    Truncation truncation;
};
ClusterKernel kernel_W(const PolymerInventory& inv, BondSet R, BondSet Y, const Truncation& tr);

struct TailRow {
    double R = 0.0;       // minimal polymer diameter (lattice units)
    double tail = 0.0;    // sum of f(gamma) over polymers through the root bond with diameter >= R
    double envelope = 0.0;
    long polymers = 0;
};
struct ConvergenceReport {
    double nu0 = 0.0, kappa0 = 0.0;
    bool certified = false;
    int M0 = 0;
    std::vector<TailRow> tail;
    double fitted_rate = 0.0;  // decay rate of the tail per lattice unit
    bool bound_ok = true;
    std::string message;
};
/// nu0^2 = 4 e^{1 + beta|lambda|/2} (beta|lambda|/2)^{1/(2 M0)}, e^{-2 kappa0} = (beta|lambda|/2)^{1/(2 M0)},
/// and the pinned tail sums over polymers through bond (0,0,1) with up to max_strings strings.
ConvergenceReport convergence_diagnostic(const ModelSpec& spec, int max_strings = 4);

}  // namespace isl
