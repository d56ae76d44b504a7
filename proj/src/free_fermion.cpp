#include "isinglab/free_fermion.hpp"

#include <bit>
#include <cmath>
#include <set>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "isinglab/combinatorics.hpp"

namespace isl {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I(0.0, 1.0);

double grid_shift(int alpha)
{
    return alpha < 0 ? 0.5 : 0.0;
}

std::mutex fftw_mutex;

// Numerically singular 2x2 or 4x4 form (massless mode on the grid). The 2x2 forms vanish entirely at
// a massless k = 0, so they are measured against their natural scale 1/a instead of their own entries.
template <class Mat>
bool near_singular(const Mat& C, double scale = -1.0)
{
    if (scale < 0.0)
        scale = C.cwiseAbs().maxCoeff();
    return std::abs(C.determinant()) <= 1e-12 * std::pow(std::max(scale, 1e-300), double(C.rows()));
}

cplx pf4(const Mat4& A)
{
    return A(0, 1) * A(2, 3) - A(0, 2) * A(1, 3) + A(0, 3) * A(1, 2);
}

double condition_number(const CMatrix& A)
{
    Eigen::JacobiSVD<CMatrix> svd(A);
    const auto& s = svd.singularValues();
    double smin = s(s.size() - 1);
    return smin == 0.0 ? INFINITY : s(0) / smin;
}

void accumulate_log(LogValue& acc, cplx f)
{
    if (f == cplx(0.0)) {
        acc.log_abs = -INFINITY;
        acc.phase = 0.0;
        return;
    }
    acc.log_abs += std::log(std::abs(f));
    acc.phase *= f / std::abs(f);
}

}  // namespace

int tau(Alpha al)
{
    return (al.a1 > 0 && al.a2 > 0) ? -1 : 1;
}

std::string to_string(Alpha al)
{
    return std::string(al.a1 > 0 ? "+" : "-") + "," + (al.a2 > 0 ? "+" : "-");
}

int phi_index(int M, int x1, int x2, int c)
{
    return 4 * site_index(x1, x2, M) + c;
}

RMatrix action_matrix(const ModelSpec& spec, Alpha al, const std::vector<double>* bond_t)
{
    const int M = spec.M;
    const double a = spec.a, t = spec.t();
    RMatrix A = RMatrix::Zero(4 * M * M, 4 * M * M);
    auto add = [&](int i, int j, double c) {
        A(i, j) += c;
        A(j, i) -= c;
    };
    for (int x2 = 0; x2 < M; ++x2)
        for (int x1 = 0; x1 < M; ++x1) {
            int Hb = phi_index(M, x1, x2, kHbar), H = phi_index(M, x1, x2, kH);
            int Vb = phi_index(M, x1, x2, kVbar), V = phi_index(M, x1, x2, kV);
            double t1 = bond_t ? (*bond_t)[bond_index({x1, x2, 1}, M)] : t;
            double t2 = bond_t ? (*bond_t)[bond_index({x1, x2, 2}, M)] : t;
            double s1 = x1 == M - 1 ? al.a1 : 1.0;
            double s2 = x2 == M - 1 ? al.a2 : 1.0;
            add(Hb, phi_index(M, x1 + 1, x2, kH), a * t1 * s1);
            add(Vb, phi_index(M, x1, x2 + 1, kV), a * t2 * s2);
            add(Hb, H, a);
            add(Vb, V, a);
            add(Vb, Hb, a);
            add(V, Hb, a);
            add(H, Vb, a);
            add(V, H, a);
        }
    return A;
}

BondBilinear bond_bilinear(const Bond& b, int M, Alpha al)
{
    Bond w = wrap(b, M);
    BondBilinear e;
    if (w.j == 1) {
        e.p = phi_index(M, w.x1, w.x2, kHbar);
        e.q = phi_index(M, w.x1 + 1, w.x2, kH);
        e.sign = w.x1 == M - 1 ? al.a1 : 1.0;
    } else {
        e.p = phi_index(M, w.x1, w.x2, kVbar);
        e.q = phi_index(M, w.x1, w.x2 + 1, kV);
        e.sign = w.x2 == M - 1 ? al.a2 : 1.0;
    }
    return e;
}

MomentumGrid momentum_grid(const ModelSpec& spec, Alpha al)
{
    MomentumGrid g;
    g.M = spec.M;
    g.alpha = al;
    g.L = spec.L();
    const double s1 = grid_shift(al.a1), s2 = grid_shift(al.a2);
    for (int n2 = 0; n2 < spec.M; ++n2)
        for (int n1 = 0; n1 < spec.M; ++n1)
            g.k.push_back({2 * kPi / g.L * (n1 + s1), 2 * kPi / g.L * (n2 + s2)});
    return g;
}

Mat4 phi_quadratic_form(const ModelSpec& spec, double k1, double k2, double t)
{
    const double a = spec.a;
    const cplx e1 = std::exp(-I * (a * k1)), e2 = std::exp(-I * (a * k2));
    Mat4 C;
    C << 0.0, 1.0 + t * e1, -1.0, -1.0,
         -1.0 - t / e1, 0.0, 1.0, -1.0,
         1.0, -1.0, 0.0, 1.0 + t * e2,
         1.0, 1.0, -1.0 - t / e2, 0.0;
    return C * (0.5 / a);
}

Mat4 phi_quadratic_form(const ModelSpec& spec, double k1, double k2)
{
    double t = spec.t();
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("quadratic_form: t = tanh(beta J) must lie in (0, 1)");
    return phi_quadratic_form(spec, k1, k2, t);
}

Mat4 critical_U()
{
    const cplx w = std::exp(I * (kPi / 4)), wb = std::conj(w);
    Mat4 U;
    U << w, wb, 1.0, -I,
         wb, w, 1.0, I,
         -w, -wb, 1.0, -I,
         -wb, -w, 1.0, I;
    return 0.5 * U;
}

cplx D_plus(double a, double k1, double k2)
{
    return (I * std::sin(a * k1) + std::sin(a * k2)) / a;
}

cplx D_minus(double a, double k1, double k2)
{
    return (I * std::sin(a * k1) - std::sin(a * k2)) / a;
}

double sigma_psi(double a, double t, double k1, double k2)
{
    return (std::cos(a * k1) + std::cos(a * k2) - 2.0 * kTc / t) / a;
}

double sigma_chi(double a, double t, double k1, double k2)
{
    return (std::cos(a * k1) + std::cos(a * k2) + 2.0 * (std::numbers::sqrt2 + 1.0) / t) / a;
}

CriticalForms critical_mode_transform(const ModelSpec& spec, double k1, double k2)
{
    const double t = spec.t();
    Mat4 Dg = Mat4::Zero();
    Dg.diagonal() << I, -I, I, -I;
    Mat4 V = critical_U().adjoint() * Dg / std::sqrt(kPi * t);
    Mat4 Np = V.transpose() * phi_quadratic_form(spec, k1, k2) * V;
    Mat4 Nm = V.transpose() * phi_quadratic_form(spec, -k1, -k2) * V;
    Mat4 T = -4.0 * kPi * 0.5 * (Np - Nm.transpose());
    CriticalForms f;
    f.Cpsi = T.block<2, 2>(0, 0);
    f.Cchi = T.block<2, 2>(2, 2);
    f.Q = -T.block<2, 2>(0, 2);
    return f;
}

CriticalForms critical_forms_closed(const ModelSpec& spec, double k1, double k2)
{
    const double a = spec.a, t = spec.t();
    const double s1 = std::sin(a * k1), s2 = std::sin(a * k2), c1 = std::cos(a * k1), c2 = std::cos(a * k2);
    const double sp = sigma_psi(a, t, k1, k2), sc = sigma_chi(a, t, k1, k2);
    CriticalForms f;
    f.Cpsi << (-I * s1 + s2) / a, I * sp, -I * sp, (-I * s1 - s2) / a;
    f.Cchi << (-I * s1 + s2) / a, I * sc, -I * sc, (-I * s1 - s2) / a;
    f.Q << (-I * s1 - s2) / a, I * (c1 - c2) / a, -I * (c1 - c2) / a, (-I * s1 + s2) / a;
    return f;
}

double free_mass(const ModelSpec& spec)
{
    const double t = spec.t();
    return 2.0 / spec.a * (t - kTc) / t;
}

Mat2 corrected_form(const ModelSpec& spec, double k1, double k2, double sigma)
{
    const double a = spec.a;
    const double s = (std::cos(a * k1) + std::cos(a * k2) - 2.0) / a + sigma;
    Mat2 C;
    C << -D_minus(a, k1, k2), I * s, -I * s, -D_plus(a, k1, k2);
    CriticalForms f = critical_forms_closed(spec, k1, k2);
    return C - f.Q * f.Cchi.inverse() * f.Q;
}

namespace {

Mat2 kind_form(const ModelSpec& spec, PsiKind kind, double k1, double k2)
{
    CriticalForms f = critical_forms_closed(spec, k1, k2);
    switch (kind) {
    case PsiKind::Psi:
        return f.Cpsi;
    case PsiKind::Chi:
        return f.Cchi;
    case PsiKind::PsiCorrected:
        return corrected_form(spec, k1, k2, free_mass(spec));
    }
    return f.Cpsi;
}

std::vector<Mat2> inverse_forms(const ModelSpec& spec, const MomentumGrid& g, PsiKind kind)
{
    std::vector<Mat2> inv(g.k.size());
    for (std::size_t i = 0; i < g.k.size(); ++i) {
        Mat2 C = kind_form(spec, kind, g.k[i][0], g.k[i][1]);
        if (near_singular(C, 1.0 / spec.a))
            throw MasslessModeError();
        inv[i] = C.inverse();
    }
    return inv;
}

Mat2 direct_sum(const ModelSpec& spec, const MomentumGrid& g, const std::vector<Mat2>& inv, int x1, int x2)
{
    Mat2 s = Mat2::Zero();
    for (std::size_t i = 0; i < g.k.size(); ++i)
        s += std::exp(-I * spec.a * (g.k[i][0] * x1 + g.k[i][1] * x2)) * inv[i];
    return s * (2 * kPi / (g.L * g.L));
}

}  // namespace

Mat2 Propagator2x2Field::at(int d1, int d2) const
{
    int n1 = (d1 >= 0) ? d1 / M : -((-d1 + M - 1) / M);
    int n2 = (d2 >= 0) ? d2 / M : -((-d2 + M - 1) / M);
    double sign = 1.0;
    if (alpha.a1 < 0 && (n1 % 2))
        sign = -sign;
    if (alpha.a2 < 0 && (n2 % 2))
        sign = -sign;
    return sign * values[(d1 - n1 * M) + M * (d2 - n2 * M)];
}

Mat2 psi_propagator(const ModelSpec& spec, int x1, int x2, Alpha al, bool use_correction)
{
    MomentumGrid g = momentum_grid(spec, al);
    auto inv = inverse_forms(spec, g, use_correction ? PsiKind::PsiCorrected : PsiKind::Psi);
    return direct_sum(spec, g, inv, x1, x2);
}

Mat2 chi_propagator(const ModelSpec& spec, int x1, int x2, Alpha al)
{
    MomentumGrid g = momentum_grid(spec, al);
    auto inv = inverse_forms(spec, g, PsiKind::Chi);
    return direct_sum(spec, g, inv, x1, x2);
}

Propagator2x2Field momentum_sum_field(const ModelSpec& spec, Alpha al, const std::vector<Mat2>& inv)
{
    const int M = spec.M;
    MomentumGrid g = momentum_grid(spec, al);
    if (inv.size() != g.k.size())
        throw std::invalid_argument("momentum_sum_field: kernel size does not match the grid");
    Propagator2x2Field f;
    f.M = M;
    f.a = spec.a;
    f.alpha = al;
    f.values.assign(std::size_t(M) * M, Mat2::Zero());
    const double s1 = grid_shift(al.a1), s2 = grid_shift(al.a2);
    const std::size_t n = std::size_t(M) * M;
    fftw_complex* buf = fftw_alloc_complex(n);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        plan = fftw_plan_dft_2d(M, M, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    const double pref = 2 * kPi / (g.L * g.L);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                buf[i][0] = inv[i](r, c).real();
                buf[i][1] = inv[i](r, c).imag();
            }
            fftw_execute(plan);
            for (int d2 = 0; d2 < M; ++d2)
                for (int d1 = 0; d1 < M; ++d1) {
                    std::size_t i = d1 + std::size_t(M) * d2;
                    cplx ph = std::exp(-2.0 * I * kPi * (s1 * d1 + s2 * d2) / double(M));
                    f.values[i](r, c) = pref * ph * cplx(buf[i][0], buf[i][1]);
                }
        }
    {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return f;
}

Propagator2x2Field propagator_field(const ModelSpec& spec, Alpha al, PsiKind kind, bool use_fft)
{
    const int M = spec.M;
    MomentumGrid g = momentum_grid(spec, al);
    auto inv = inverse_forms(spec, g, kind);
    Propagator2x2Field f;
    f.M = M;
    f.a = spec.a;
    f.alpha = al;
    f.values.assign(std::size_t(M) * M, Mat2::Zero());
    if (!use_fft) {
        for (int d2 = 0; d2 < M; ++d2)
            for (int d1 = 0; d1 < M; ++d1)
                f.values[d1 + M * d2] = direct_sum(spec, g, inv, d1, d2);
        return f;
    }
    return momentum_sum_field(spec, al, inv);
}

PhiPropagator::PhiPropagator(const ModelSpec& spec, Alpha al)
    : spec_(spec), al_(al), grid_(momentum_grid(spec, al))
{
    const double t = spec.t();
    inv_.resize(grid_.k.size());
    for (std::size_t i = 0; i < grid_.k.size(); ++i) {
        Mat4 C = phi_quadratic_form(spec, grid_.k[i][0], grid_.k[i][1], t);
        if (near_singular(C))
            throw MasslessModeError();
        inv_[i] = C.inverse();
    }
}

Mat4 PhiPropagator::block(int d1, int d2) const
{
    Mat4 s = Mat4::Zero();
    CompensatedSum re[16], im[16];
    for (std::size_t i = 0; i < grid_.k.size(); ++i) {
        cplx ph = std::exp(I * spec_.a * (grid_.k[i][0] * d1 + grid_.k[i][1] * d2));
        Mat4 term = ph * inv_[i];
        for (int e = 0; e < 16; ++e) {
            re[e].add(term(e / 4, e % 4).real());
            im[e].add(term(e / 4, e % 4).imag());
        }
    }
    for (int e = 0; e < 16; ++e)
        s(e / 4, e % 4) = cplx(re[e].value(), im[e].value());
    return s * (-0.5 / (grid_.L * grid_.L));
}

cplx PhiPropagator::operator()(int x1, int x2, int c, int y1, int y2, int c2) const
{
    return block(y1 - x1, y2 - x2)(c, c2);
}

BcPartition partition_function_bc(const ModelSpec& spec, Alpha al, PfMethod method)
{
    spec.validate();
    const int M = spec.M;
    const double K = spec.beta * spec.J, t = spec.t();
    const double M2 = double(M) * M;
    BcPartition out;
    out.alpha = al;
    if (method == PfMethod::Auto)
        method = M <= 6 ? PfMethod::Direct : PfMethod::Momentum;
    if (method == PfMethod::Direct) {
        LogValue pf = log_pfaffian(action_matrix(spec, al).cast<cplx>());
        out.Z.log_abs = M2 * std::log(2.0 / (spec.a * spec.a)) + 2.0 * M2 * std::log(std::cosh(K)) + pf.log_abs;
        out.Z.phase = ((M * M) % 2 ? -1.0 : 1.0) * pf.phase;
        if (al.a1 > 0 && al.a2 > 0) {
            Mat4 C0 = phi_quadratic_form(spec, 0.0, 0.0, t);
            out.condition = condition_number(C0);
            // the exact Pfaffian vanishes with the k = 0 mode; drop the roundoff residue
            if (near_singular(C0)) {
                out.zero_mode_excluded = true;
                out.Z.log_abs = -INFINITY;
                out.Z.phase = 0.0;
            }
        }
        return out;
    }
    // Z_alpha = 2^{M^2} cosh^{2M^2}(K) R(t) / R(0), R = prod_self Pf4(C_k) prod_pairs det(C_k)
    LogValue Z;
    Z.log_abs = M2 * std::log(2.0) + 2.0 * M2 * std::log(std::cosh(K));
    const double s[2] = {grid_shift(al.a1), grid_shift(al.a2)};
    MomentumGrid g = momentum_grid(spec, al);
    std::vector<char> done(g.k.size(), 0);
    for (int n2 = 0; n2 < M; ++n2)
        for (int n1 = 0; n1 < M; ++n1) {
            int i = n1 + M * n2;
            if (done[i])
                continue;
            // partner of n: n' + s = -(n + s) mod M
            int p1 = ((-n1 - int(2 * s[0])) % M + M) % M;
            int p2 = ((-n2 - int(2 * s[1])) % M + M) % M;
            int j = p1 + M * p2;
            done[i] = done[j] = 1;
            Mat4 Ct = phi_quadratic_form(spec, g.k[i][0], g.k[i][1], t);
            Mat4 C0 = phi_quadratic_form(spec, g.k[i][0], g.k[i][1], 0.0);
            if (i == j) {
                cplx ft = pf4(Ct), f0 = pf4(C0);
                if (std::abs(ft) <= 1e-12 * Ct.cwiseAbs().maxCoeff() * Ct.cwiseAbs().maxCoeff()) {
                    out.zero_mode_excluded = true;
                    out.condition = condition_number(Ct);
                    ft = 0.0;
                }
                accumulate_log(Z, ft / f0);
            } else {
                accumulate_log(Z, Ct.determinant() / C0.determinant());
            }
            if (Z.phase == cplx(0.0)) {
                out.Z = Z;
                return out;
            }
        }
    if (al.a1 > 0 && al.a2 > 0 && !out.zero_mode_excluded)
        out.condition = condition_number(phi_quadratic_form(spec, 0.0, 0.0, t));
    out.Z = Z;
    return out;
}

CombinedPartition partition_function(const ModelSpec& spec, PfMethod method)
{
    CombinedPartition c;
    double lmax = -INFINITY;
    for (int i = 0; i < 4; ++i) {
        c.bc[i] = partition_function_bc(spec, kAlphas[i], method);
        lmax = std::max(lmax, c.bc[i].Z.log_abs);
    }
    cplx sum = 0.0;
    std::array<cplx, 4> scaled{};
    for (int i = 0; i < 4; ++i) {
        scaled[i] = c.bc[i].Z.phase == cplx(0.0) ? cplx(0.0)
                                                : double(tau(kAlphas[i])) * c.bc[i].Z.phase * std::exp(c.bc[i].Z.log_abs - lmax);
        sum += 0.5 * scaled[i];
    }
    c.Z.log_abs = lmax + std::log(std::abs(sum));
    c.Z.phase = sum / std::abs(sum);
    for (int i = 0; i < 4; ++i)
        c.weight[i] = (0.5 * scaled[i] / sum).real();
    return c;
}

namespace {

struct FieldPoint {
    int x1, x2, c;
};

std::vector<FieldPoint> bond_fields(const std::vector<Bond>& bonds)
{
    std::vector<FieldPoint> f;
    for (const auto& b : bonds) {
        if (b.j == 1) {
            f.push_back({b.x1, b.x2, kHbar});
            f.push_back({b.x1 + 1, b.x2, kH});
        } else {
            f.push_back({b.x1, b.x2, kVbar});
            f.push_back({b.x1, b.x2 + 1, kV});
        }
    }
    return f;
}

// Subset moments of a^-1 t + (1 - t^2) E_b under one Gaussian measure with field propagator G.
std::vector<cplx> eps_moments(const CMatrix& G, int m, double a, double t)
{
    const int nsub = 1 << m;
    std::vector<cplx> eE(nsub);
    for (int T = 0; T < nsub; ++T) {
        std::vector<int> idx;
        for (int i = 0; i < m; ++i)
            if (T >> i & 1) {
                idx.push_back(2 * i);
                idx.push_back(2 * i + 1);
            }
        eE[T] = gaussian_moment(idx, G);
    }
    std::vector<cplx> mom(nsub);
    for (int S = 0; S < nsub; ++S) {
        cplx acc = 0.0;
        for (int T = S;; T = (T - 1) & S) {
            int nT = std::popcount(unsigned(T)), nR = std::popcount(unsigned(S)) - nT;
            acc += std::pow(t / a, nR) * std::pow(1.0 - t * t, nT) * eE[T];
            if (T == 0)
                break;
        }
        mom[S] = acc;
    }
    return mom;
}

// Joint cumulant of the bilinears E_i = <f_2i f_2i+1> under one Gaussian measure: the sum over perfect
// matchings of the fields whose bond graph is connected, with Pfaffian signs. Avoids the cancellation of
// the moment route, where every moment carries the large constant a^-1 t.
double connected_bilinear_cumulant(const CMatrix& G, int m)
{
    std::vector<int> rest(2 * m);
    for (int i = 0; i < 2 * m; ++i)
        rest[i] = i;
    std::vector<std::pair<int, int>> edges;
    cplx total = 0.0;
    auto connected = [&] {
        std::vector<int> root(m);
        for (int i = 0; i < m; ++i)
            root[i] = i;
        std::function<int(int)> find = [&](int i) { return root[i] == i ? i : root[i] = find(root[i]); };
        for (auto [u, v] : edges)
            root[find(u / 2)] = find(v / 2);
        for (int i = 1; i < m; ++i)
            if (find(i) != find(0))
                return false;
        return true;
    };
    std::function<void(std::vector<int>&, cplx)> expand = [&](std::vector<int>& r, cplx w) {
        if (r.empty()) {
            if (connected())
                total += w;
            return;
        }
        const int f = r[0];
        for (std::size_t j = 1; j < r.size(); ++j) {
            const int g = r[j];
            if (g / 2 == f / 2)
                continue;  // contraction inside one bilinear belongs to a disconnected piece
            std::vector<int> sub;
            for (std::size_t k = 1; k < r.size(); ++k)
                if (k != j)
                    sub.push_back(r[k]);
            edges.push_back({f, g});
            expand(sub, (j % 2 ? 1.0 : -1.0) * w * G(f, g));
            edges.pop_back();
        }
    };
    expand(rest, 1.0);
    return total.real();
}

// Real-space route used when a sector carries a zero mode: Z_alpha(S) = int e^S prod_{i in S}(c + d E_i)
// = c^|S| int e^{S + (d/c) sum E_i}, one Pfaffian per subset and sector, no propagator needed.
double sourced_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds, const LogValue& Z)
{
    const int M = spec.M, m = static_cast<int>(bonds.size());
    if (M > 32)
        throw std::invalid_argument("sourced energy correlation: M must be at most 32");
    const double t = spec.t(), c = t / spec.a, d = 1.0 - t * t, M2 = double(M) * M;
    const double pref_log = M2 * std::log(2.0 / (spec.a * spec.a)) + 2.0 * M2 * std::log(std::cosh(spec.beta * spec.J));
    const double pref_sign = (M * M) % 2 ? -1.0 : 1.0;
    std::vector<cplx> mom(std::size_t(1) << m, 0.0);
    for (Alpha al : kAlphas) {
        const RMatrix A = action_matrix(spec, al);
        for (std::uint32_t S = 0; S < mom.size(); ++S) {
            RMatrix As = A;
            for (int i = 0; i < m; ++i)
                if (S >> i & 1) {
                    BondBilinear e = bond_bilinear(bonds[i], M, al);
                    As(e.p, e.q) += d / c * e.sign;
                    As(e.q, e.p) -= d / c * e.sign;
                }
            LogValue pf = log_pfaffian(As.cast<cplx>());
            if (pf.phase == cplx(0.0))
                continue;
            double lg = pref_log + pf.log_abs - Z.log_abs + std::popcount(S) * std::log(c);
            mom[S] += 0.5 * tau(al) * pref_sign * pf.phase / Z.phase * std::exp(lg);
        }
    }
    return cumulant_from_moments<cplx>(m, [&](std::uint32_t S) { return mom[S]; }).real();
}

}  // namespace

double free_mpoint_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds, BcMode mode)
{
    spec.validate();
    if (spec.lambda != 0.0)
        throw std::invalid_argument("free_mpoint_energy_correlation: lambda must be 0");
    check_distinct(bonds, spec.M);
    const int m = static_cast<int>(bonds.size());
    if (m < 1 || m > 6)
        throw std::invalid_argument("free_mpoint_energy_correlation: 1 <= m <= 6");
    const auto fields = bond_fields(bonds);
    const int nf = 2 * m;
    const double t = spec.t();

    std::vector<std::pair<Alpha, double>> measures;
    if (mode == BcMode::MinusMinus) {
        measures.push_back({Alpha{-1, -1}, 1.0});
    } else {
        CombinedPartition cp = partition_function(spec);
        bool zero_mode = false;
        for (const auto& bc : cp.bc)
            zero_mode = zero_mode || bc.zero_mode_excluded;
        if (zero_mode)
            return sourced_energy_correlation(spec, bonds, cp.Z);
        for (int i = 0; i < 4; ++i)
            if (cp.weight[i] != 0.0 && !cp.bc[i].zero_mode_excluded)
                measures.push_back({kAlphas[i], cp.weight[i]});
    }
    std::vector<cplx> mom(std::size_t(1) << m, 0.0);
    for (const auto& [al, w] : measures) {
        PhiPropagator P(spec, al);
        CMatrix G = CMatrix::Zero(nf, nf);
        for (int u = 0; u < nf; ++u)
            for (int v = u + 1; v < nf; ++v) {
                G(u, v) = P(fields[u].x1, fields[u].x2, fields[u].c, fields[v].x1, fields[v].x2, fields[v].c);
                G(v, u) = -G(u, v);
            }
        auto mal = eps_moments(G, m, spec.a, t);
        for (std::size_t S = 0; S < mom.size(); ++S)
            mom[S] += w * mal[S];
    }
    return cumulant_from_moments<cplx>(m, [&](std::uint32_t S) { return mom[S]; }).real();
}

double infinite_free_energy_correlation(const ModelSpec& spec, const std::vector<Bond>& bonds)
{
    const int m = static_cast<int>(bonds.size());
    if (m < 1 || m > 6)
        throw std::invalid_argument("infinite_free_energy_correlation: 1 <= m <= 6");
    std::set<Bond> distinct(bonds.begin(), bonds.end());
    if (distinct.size() != bonds.size())
        throw std::invalid_argument("repeated bonds: the energy correspondence needs distinct bonds");
    const auto fields = bond_fields(bonds);
    const int nf = 2 * m;
    std::vector<std::array<int, 2>> offs;
    for (int u = 0; u < nf; ++u)
        for (int v = u + 1; v < nf; ++v)
            offs.push_back({fields[v].x1 - fields[u].x1, fields[v].x2 - fields[u].x2});
    auto P = infinite_phi_propagator(spec, offs);
    CMatrix G = CMatrix::Zero(nf, nf);
    int q = 0;
    for (int u = 0; u < nf; ++u)
        for (int v = u + 1; v < nf; ++v) {
            G(u, v) = P[q++](fields[u].c, fields[v].c);
            G(v, u) = -G(u, v);
        }
    const double t = spec.t();
    if (m == 1)
        return t / spec.a + (1.0 - t * t) * G(0, 1).real();
    // constants drop out of joint cumulants of order >= 2
    return std::pow(1.0 - t * t, m) * connected_bilinear_cumulant(G, m);
}

Mat2 symmetry_transform(const Kernel2& C, int id, double k1, double k2)
{
    Mat2 out;
    switch (id) {
    case 1: {
        Mat2 c = C(k1, k2);
        out << c(0, 0), -c(1, 0), -c(0, 1), c(1, 1);
        break;
    }
    case 2: {
        Mat2 c = C(-k2, -k1);
        out << -I * c(1, 1), -c(1, 0), -c(0, 1), I * c(0, 0);
        break;
    }
    case 3: {
        Mat2 c = C(-k1, k2);
        out << -c(1, 1), -c(1, 0), -c(0, 1), -c(0, 0);
        break;
    }
    case 4: {
        Mat2 c = C(-k1, -k2);
        out << std::conj(c(1, 1)), std::conj(c(1, 0)), std::conj(c(0, 1)), std::conj(c(0, 0));
        break;
    }
    default:
        throw std::invalid_argument("symmetry_transform: id must be 1..4");
    }
    return out;
}

SymmetryReport symmetry_check(const Kernel2& C, double a, double tol)
{
    SymmetryReport r;
    const double ks[][2] = {{0.3, -1.1}, {2.2, 0.7}, {-0.9, -2.6}, {1.4, 1.4}, {-3.0, 0.2}, {0.05, 0.11}};
    double scale = 0.0;
    for (const auto& k : ks)
        scale = std::max(scale, C(k[0] / a, k[1] / a).cwiseAbs().maxCoeff());
    for (int id = 1; id <= 4; ++id) {
        double v = 0.0;
        for (const auto& k : ks) {
            double k1 = k[0] / a, k2 = k[1] / a;
            v = std::max(v, (symmetry_transform(C, id, k1, k2) - C(k1, k2)).cwiseAbs().maxCoeff());
        }
        r.violation[id - 1] = v / std::max(scale, 1e-300);
        if (r.violation[id - 1] > tol)
            r.ok = false;
    }
    // first-order form Z [[D^-, -i s], [i s, D^+]]
    const double h = 1e-4 / a;
    Mat2 C0 = C(0.0, 0.0);
    Mat2 d1 = (C(h, 0.0) - C(-h, 0.0)) / (2 * h);
    Mat2 d2 = (C(0.0, h) - C(0.0, -h)) / (2 * h);
    cplx Zc = 0.25 * (-I * d1(0, 0) - I * d1(1, 1) - d2(0, 0) + d2(1, 1));
    r.Z = Zc.real();
    cplx zs = I * C0(0, 1);
    r.sigma = r.Z != 0.0 ? zs.real() / r.Z : 0.0;
    Mat2 f0, f1, f2;
    f0 << 0.0, -I * r.Z * r.sigma, I * r.Z * r.sigma, 0.0;
    f1 << I * r.Z, 0.0, 0.0, I * r.Z;
    f2 << -r.Z, 0.0, 0.0, r.Z;
    double s = std::max({C0.cwiseAbs().maxCoeff(), d1.cwiseAbs().maxCoeff(), d2.cwiseAbs().maxCoeff(), 1e-300});
    r.linear_residual = std::max({(C0 - f0).cwiseAbs().maxCoeff(), (d1 - f1).cwiseAbs().maxCoeff(),
                                  (d2 - f2).cwiseAbs().maxCoeff(), std::abs(Zc.imag()), std::abs(zs.imag())}) / s;
    return r;
}

}  // namespace isl
