#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isinglab/grassmann.hpp"
#include "isinglab/lattice_model.hpp"

namespace isl {

using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;

/// Boundary label: +1 periodic, -1 antiperiodic, per direction.
struct Alpha {
    int a1 = -1, a2 = -1;
    auto operator<=>(const Alpha&) const = default;
};
inline constexpr std::array<Alpha, 4> kAlphas = {Alpha{1, 1}, Alpha{1, -1}, Alpha{-1, 1}, Alpha{-1, -1}};
/// tau_{++} = -1, all others +1.
int tau(Alpha al);
std::string to_string(Alpha al);

/// Raised when the (+,+) form is singular at t = sqrt 2 - 1, k = 0.
class MasslessModeError : public std::runtime_error {
public:
    MasslessModeError() : std::runtime_error("massless (+,+) mode: the k = 0 form is singular at t = sqrt(2) - 1") {}
};

enum PhiComponent { kHbar = 0, kH = 1, kVbar = 2, kV = 3 };

/// Generator index 4 (x1 + M x2) + c of the Phi field on the torus.
int phi_index(int M, int x1, int x2, int c);

/// Real-space antisymmetric matrix A_alpha with S(Phi) = 1/2 Phi^T A Phi. Optional per-bond
/// tanh values (indexed by bond_index) replace t = tanh(beta J).
RMatrix action_matrix(const ModelSpec& spec, Alpha al, const std::vector<double>* bond_t = nullptr);

/// The bilinear E_b as generator pair (p, q), E_b = Phi_p Phi_q (with the wrap sign alpha).
struct BondBilinear {
    int p = 0, q = 0;
    double sign = 1.0;
};
BondBilinear bond_bilinear(const Bond& b, int M, Alpha al);

/// D_M^alpha: k = (2 pi / L)(n + shift), shift 1/2 for antiperiodic directions.
struct MomentumGrid {
    int M = 0;
    Alpha alpha;
    double L = 0.0;
    std::vector<std::array<double, 2>> k;
};
MomentumGrid momentum_grid(const ModelSpec& spec, Alpha al);

/// C_k in the Phi basis, prefactor a^-1 / 2.
Mat4 phi_quadratic_form(const ModelSpec& spec, double k1, double k2, double t);
Mat4 phi_quadratic_form(const ModelSpec& spec, double k1, double k2);

/// Unitary U of the critical eigenmodes.
Mat4 critical_U();

cplx D_plus(double a, double k1, double k2);
cplx D_minus(double a, double k1, double k2);
double sigma_psi(double a, double t, double k1, double k2);
double sigma_chi(double a, double t, double k1, double k2);

struct CriticalForms {
    Mat2 Cpsi, Cchi, Q;
};
/// C_psi, C_chi, Q extracted from C(k) via U and the i omega / sqrt(pi t) rescaling.
CriticalForms critical_mode_transform(const ModelSpec& spec, double k1, double k2);
/// The same matrices from their closed forms.
CriticalForms critical_forms_closed(const ModelSpec& spec, double k1, double k2);

/// Mass sigma = (2/a)(t - t_c)/t at lambda = 0.
double free_mass(const ModelSpec& spec);

/// Corrected form C_sigma(k) = [[-D^-, i s(k)], [-i s(k), -D^+]] - Q C_chi^-1 Q,
/// s(k) = a^-1 (cos ak1 + cos ak2 - 2) + sigma.
Mat2 corrected_form(const ModelSpec& spec, double k1, double k2, double sigma);

/// Position-indexed 2x2 field on the torus, values at offsets 0 <= d_i < M.
struct Propagator2x2Field {
    int M = 0;
    double a = 1.0;
    Alpha alpha;
    std::vector<Mat2> values;
    /// Value at an arbitrary integer offset, using the boundary signs.
    Mat2 at(int d1, int d2) const;
};

enum class PsiKind { Psi, PsiCorrected, Chi };

/// g(x) = (2 pi / L^2) sum_k e^{-ikx} C(k)^-1 at lattice offset x, direct momentum sum.
Mat2 psi_propagator(const ModelSpec& spec, int x1, int x2, Alpha al, bool use_correction);
Mat2 chi_propagator(const ModelSpec& spec, int x1, int x2, Alpha al);
/// Whole field; FFT over the shifted grid when use_fft, else direct sums.
Propagator2x2Field propagator_field(const ModelSpec& spec, Alpha al, PsiKind kind, bool use_fft);
/// (2 pi / L^2) sum_k e^{-ikx} K(k) for every offset by FFT; K is listed in momentum_grid order.
Propagator2x2Field momentum_sum_field(const ModelSpec& spec, Alpha al, const std::vector<Mat2>& K);

/// Phi two-point function <Phi_x,c Phi_y,c'> from the momentum sum (unwrapped coordinates).
class PhiPropagator {
public:
    PhiPropagator(const ModelSpec& spec, Alpha al);
    /// <Phi_{x,c} Phi_{y,c'}> for unwrapped lattice coordinates.
    cplx operator()(int x1, int x2, int c, int y1, int y2, int c2) const;
    Mat4 block(int d1, int d2) const;

private:
    ModelSpec spec_;
    Alpha al_;
    MomentumGrid grid_;
    std::vector<Mat4> inv_;
};

/// Partition function for one boundary condition.
struct BcPartition {
    Alpha alpha;
    LogValue Z;
    double condition = 0.0;        // condition number of the k = 0 form when it is examined
    bool zero_mode_excluded = false;
};

enum class PfMethod { Auto, Direct, Momentum };

BcPartition partition_function_bc(const ModelSpec& spec, Alpha al, PfMethod method = PfMethod::Auto);

struct CombinedPartition {
    std::array<BcPartition, 4> bc;
    LogValue Z;                     // 1/2 sum tau Z_alpha
    std::array<double, 4> weight;   // tau_alpha Z_alpha / (2 Z)
};
CombinedPartition partition_function(const ModelSpec& spec, PfMethod method = PfMethod::Auto);

enum class BcMode { MinusMinus, Combined };

/// Truncated energy correlation at lambda = 0 from Wick contractions of E_b.
double free_mpoint_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds,
                                      BcMode mode = BcMode::MinusMinus);

/// Symmetry report for a 2x2 momentum kernel.
using Kernel2 = std::function<Mat2(double k1, double k2)>;
struct SymmetryReport {
    std::array<double, 4> violation{};  // max entrywise deviation per transformation
    bool ok = true;
    double Z = 0.0, sigma = 0.0;        // first-order form Z [[D^-, -i s], [i s, D^+]]
    double linear_residual = 0.0;
};
/// Applies the four substitutions (parity, diagonal reflection, orthogonal reflection,
/// complex conjugation) to C(k) at sample momenta and fits the first-order form.
SymmetryReport symmetry_check(const Kernel2& C, double a, double tol = 1e-12);
Mat2 symmetry_transform(const Kernel2& C, int id, double k1, double k2);

// Infinite-volume Fourier integrals (lattice units): F(n) = (2 pi)^-2 int d^2 kappa e^{i kappa n} C(kappa)^-1,
// C analytic in z2 = e^{i kappa2}, computed by residues in kappa2 and graded Gauss-Legendre in kappa1.
using ZForm = std::function<CMatrix(double kappa1, cplx z2)>;
struct QuadOptions {
    int gl_order = 16;
    int grading_levels = 36;
    int samples = 13;  // z2 samples used to recover the Laurent coefficients
};
std::vector<CMatrix> infinite_volume_inverse_fourier(const ZForm& C, int dim,
                                                     const std::vector<std::array<int, 2>>& n,
                                                     const QuadOptions& opt = {});

/// <Phi_x Phi_y^T> on the infinite lattice for offset d = y - x (lattice units).
std::vector<Mat4> infinite_phi_propagator(const ModelSpec& spec, const std::vector<std::array<int, 2>>& d);

/// Energy correlation on the infinite lattice (lambda = 0, single Gaussian measure).
double infinite_free_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds);

}  // namespace isl
