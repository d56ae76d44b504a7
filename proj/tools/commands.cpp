#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "isinglab/combinatorics.hpp"
#include "isinglab/free_fermion.hpp"
#include "isinglab/lattice_model.hpp"
#include "isinglab/polymer.hpp"
#include "isinglab/rg.hpp"
#include "isinglab/scaling.hpp"

namespace isl::cli {

bool Report::all_pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

namespace {

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string num(long x) { return std::to_string(x); }
std::string num(int x) { return std::to_string(x); }

std::string short_num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

// Parameter access with dotted-path error messages.
struct Params {
    const json& j;
    std::string prefix;

    std::string path(const std::string& k) const { return prefix.empty() ? k : prefix + "." + k; }
    const json& at(const std::string& k) const
    {
        if (!j.contains(k))
            throw ConfigError(path(k), "missing key '" + path(k) + "'");
        return j.at(k);
    }
    double num(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_number())
            throw ConfigError(path(k), "'" + path(k) + "' must be a number");
        return v.get<double>();
    }
    long integer(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_number_integer())
            throw ConfigError(path(k), "'" + path(k) + "' must be an integer");
        return v.get<long>();
    }
    bool flag(const std::string& k) const { return at(k).get<bool>(); }
    std::string str(const std::string& k) const { return at(k).get<std::string>(); }
    bool is_null(const std::string& k) const { return at(k).is_null(); }
    Params sub(const std::string& k) const { return {at(k), path(k)}; }
};

void require(bool ok, const std::string& key, const std::string& msg)
{
    if (!ok)
        throw ConfigError(key, msg);
}

std::vector<Bond> parse_bonds(const Params& p, const std::string& k, int M)
{
    std::vector<Bond> out;
    for (const auto& b : p.at(k)) {
        require(b.is_array() && b.size() == 3, p.path(k), "'" + p.path(k) + "' entries must be [x1, x2, j]");
        Bond bond{b[0].get<int>(), b[1].get<int>(), b[2].get<int>()};
        require(bond.j == 1 || bond.j == 2, p.path(k), "bond direction must be 1 or 2");
        out.push_back(wrap(bond, M));
    }
    try {
        check_distinct(out, M);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(p.path(k), p.path(k) + ": " + e.what());
    }
    return out;
}

VTable parse_v(const Params& p, const std::string& k)
{
    const json& v = p.at(k);
    if (v.is_string()) {
        const std::string name = v.get<std::string>();
        if (name == "none")
            return {};
        if (name == "diagonal")
            return ModelSpec::diagonal_v();
        if (name == "diagonal_axis2")
            return ModelSpec::diagonal_and_axis2_v();
        throw ConfigError(p.path(k), "'" + p.path(k) + "' must be none, diagonal, diagonal_axis2 or a list");
    }
    VTable out;
    for (const auto& e : v) {
        require(e.is_array() && e.size() == 3, p.path(k), "'" + p.path(k) + "' entries must be [d1, d2, v]");
        out[Offset{e[0].get<int>(), e[1].get<int>()}] = e[2].get<double>();
    }
    return out;
}

ModelSpec make_spec(const Params& p)
{
    ModelSpec s;
    s.M = static_cast<int>(p.integer("M"));
    s.a = p.j.contains("a") ? p.num("a") : 1.0;
    s.J = p.j.contains("J") ? p.num("J") : 1.0;
    if (p.j.contains("beta") && !p.is_null("beta"))
        s.beta = p.num("beta");
    else
        s.beta = p.num("beta_factor") * beta_critical(s.J);
    s.lambda = p.j.contains("lambda") ? p.num("lambda") : 0.0;
    if (p.j.contains("v"))
        s.v = parse_v(p, "v");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(p.prefix, std::string("model: ") + e.what());
    }
    return s;
}

// "+-" style label without the separator used by to_string
std::string alpha_label(Alpha al)
{
    std::string s = to_string(al);
    s.erase(std::remove(s.begin(), s.end(), ','), s.end());
    return s;
}

Alpha parse_alpha(const Params& p, const std::string& k)
{
    const std::string s = p.str(k);
    for (Alpha al : kAlphas)
        if (alpha_label(al) == s)
            return al;
    throw ConfigError(p.path(k), "'" + p.path(k) + "' must be one of ++, +-, -+, --");
}

std::string bond_label(const std::vector<Bond>& bonds)
{
    if (bonds.empty())
        return "Z";
    std::string s;
    for (const auto& b : bonds) {
        if (!s.empty())
            s += ";";
        s += "(" + num(b.x1) + " " + num(b.x2) + " " + num(b.j) + ")";
    }
    return s;
}

double rel_err(double x, double ref, double floor_scale = 0.0)
{
    return std::abs(x - ref) / std::max(std::abs(ref), floor_scale);
}

// Energy-density cumulant from source-derivative moments D(S) = sum e^{-beta H} prod_{b in S} a s s_b.
double cumulant_from_derivatives(const std::vector<double>& D, int m, double a)
{
    double k = cumulant_from_moments<double>(m, [&](std::uint32_t S) { return D[S] / D[0]; });
    return k / std::pow(a, 2.0 * m);
}

// exact: enumeration against the four-Pfaffian formula over a beta grid.
Report run_exact(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    const int M = static_cast<int>(p.integer("M"));
    require(M >= 2 && M <= 5, "M", "exact: M must lie in [2, 5]");
    const int n = static_cast<int>(p.integer("beta_points"));
    require(n >= 1, "beta_points", "exact: beta_points must be positive");
    const double b0 = p.num("beta_min"), b1 = p.num("beta_max"), tol = p.num("tol");
    auto bonds = parse_bonds(p, "bonds", M);
    Table t{"exact", {"beta", "Z_enumeration", "Z_pfaffian", "rel_err_Z", "corr_enumeration", "corr_free", "abs_err_corr"}, {}};
    double worst_Z = 0.0, worst_c = 0.0, zero_row = 0.0;
    for (int i = 0; i < n; ++i) {
        ModelSpec s;
        s.M = M;
        s.J = p.num("J");
        s.beta = n == 1 ? b0 : b0 + (b1 - b0) * i / (n - 1);
        const double Ze = exact_partition_function(s, ctx.threads);
        const double Zp = partition_function(s).Z.value().real();
        const double ce = exact_truncated_energy_correlation(s, bonds, ctx.threads);
        const double cf = free_mpoint_energy_correlation(s, bonds, BcMode::Combined);
        worst_Z = std::max(worst_Z, rel_err(Zp, Ze));
        worst_c = std::max(worst_c, std::abs(cf - ce) / std::max(1.0, std::abs(ce)));
        if (s.beta == 0.0)
            zero_row = std::max({zero_row, std::abs(ce), std::abs(cf)});
        t.rows.push_back({num(s.beta), num(Ze), num(Zp), num(rel_err(Zp, Ze)), num(ce), num(cf), num(std::abs(cf - ce))});
    }
    r.tables.push_back(t);
    r.checks.push_back({"four-Pfaffian partition function", worst_Z <= tol, "max rel err " + short_num(worst_Z)});
    r.checks.push_back({"free correlation vs enumeration", worst_c <= tol, "max err " + short_num(worst_c)});
    if (b0 == 0.0 || (n > 1 && b1 == 0.0))
        r.checks.push_back({"beta = 0 correlations vanish", zero_row < 1e-12, "max |corr| " + short_num(zero_row)});
    r.summary = {{"max_rel_err_Z", worst_Z}, {"max_err_corr", worst_c}};
    r.provenance = {{"Z_enumeration", "lattice_model exhaustive enumeration"},
                    {"Z_pfaffian", "free_fermion four-Pfaffian combination"},
                    {"corr_enumeration", "lattice_model enumeration cumulant"},
                    {"corr_free", "free_fermion Wick contraction, tau-weighted boundary conditions"}};
    return r;
}

// mc: Monte Carlo estimate against the best available reference.
Report run_mc(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    ModelSpec s = make_spec(p);
    auto bonds = parse_bonds(p, "bonds", s.M);
    McOptions o;
    o.sweeps = p.integer("sweeps");
    o.thermalization = p.integer("thermalization");
    o.chains = static_cast<int>(p.integer("chains"));
    o.blocks = static_cast<int>(p.integer("blocks"));
    o.force_metropolis = p.flag("force_metropolis");
    o.keep_trace = p.flag("trace");
    o.seed = ctx.seed;
    o.threads = ctx.threads;
    auto res = mc_estimate_energy_correlation(s, bonds, o);
    double ref = NAN;
    std::string ref_source = "none";
    if (s.M <= 5) {
        ref = exact_truncated_energy_correlation(s, bonds, ctx.threads);
        ref_source = "lattice_model exhaustive enumeration";
    } else if (s.lambda == 0.0) {
        ref = free_mpoint_energy_correlation(s, bonds, BcMode::Combined);
        ref_source = "free_fermion Wick contraction, tau-weighted boundary conditions";
    }
    const double z = std::isnan(ref) ? 0.0 : std::abs(res.estimate - ref) / res.standard_error;
    r.tables.push_back({"mc",
                        {"M", "beta", "lambda", "bonds", "algorithm", "estimate", "standard_error", "reference", "z_score"},
                        {{num(s.M), num(s.beta), num(s.lambda), bond_label(bonds), res.algorithm, num(res.estimate),
                          num(res.standard_error), std::isnan(ref) ? "" : num(ref), num(z)}}});
    if (o.keep_trace) {
        Table tr{"mc_trace", {"chain", "sweep", "bond_product"}, {}};
        for (const auto& row : res.trace)
            tr.rows.push_back({num(long(row[0])), num(long(row[1])), num(row[2])});
        r.tables.push_back(tr);
    }
    const double nsigma = p.num("nsigma");
    r.checks.push_back({"finite estimate", std::isfinite(res.estimate) && res.standard_error > 0.0, res.algorithm});
    if (!std::isnan(ref))
        r.checks.push_back({"estimate within nsigma of reference", z < nsigma,
                            short_num(z) + " standard errors (limit " + short_num(nsigma) + ")"});
    if (res.fallback_warning)
        r.summary["warning"] = "Wolff unavailable for J < 0; Metropolis used";
    r.summary["estimate"] = res.estimate;
    r.summary["standard_error"] = res.standard_error;
    r.summary["algorithm"] = res.algorithm;
    r.provenance = {{"reference_value", ref_source}, {"estimate", res.algorithm + " Monte Carlo, jackknife errors"}};
    return r;
}

// free: propagator field export and boundary-condition bookkeeping.
Report run_free(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    ModelSpec s = make_spec(p);
    require(s.lambda == 0.0, "lambda", "free: lambda must be 0");
    const Alpha al = parse_alpha(p, "alpha");
    const std::string kind_name = p.str("kind");
    PsiKind kind;
    if (kind_name == "psi")
        kind = PsiKind::Psi;
    else if (kind_name == "psi_corrected")
        kind = PsiKind::PsiCorrected;
    else if (kind_name == "chi")
        kind = PsiKind::Chi;
    else
        throw ConfigError("kind", "'kind' must be psi, psi_corrected or chi");
    const double tol = p.num("tol");
    auto field = propagator_field(s, al, kind, p.flag("fft"));
    Table tf{"propagator", {"x1", "x2", "re_pp", "im_pp", "re_pm", "im_pm", "re_mp", "im_mp", "re_mm", "im_mm"}, {}};
    double anti = 0.0;
    for (int x2 = 0; x2 < s.M; ++x2)
        for (int x1 = 0; x1 < s.M; ++x1) {
            Mat2 g = field.at(x1, x2);
            tf.rows.push_back({num(x1), num(x2), num(g(0, 0).real()), num(g(0, 0).imag()), num(g(0, 1).real()),
                               num(g(0, 1).imag()), num(g(1, 0).real()), num(g(1, 0).imag()), num(g(1, 1).real()),
                               num(g(1, 1).imag())});
            anti = std::max(anti, (field.at(-x1, -x2) + g.transpose()).cwiseAbs().maxCoeff());
        }
    r.tables.push_back(tf);
    if (s.M <= 32) {
        auto direct = propagator_field(s, al, kind, !p.flag("fft"));
        double d = 0.0;
        for (std::size_t i = 0; i < direct.values.size(); ++i)
            d = std::max(d, (direct.values[i] - field.values[i]).cwiseAbs().maxCoeff());
        r.checks.push_back({"FFT vs direct momentum sum", d <= tol, "max deviation " + short_num(d)});
    }
    const double scale = std::max(1.0, field.at(1, 0).cwiseAbs().maxCoeff());
    r.checks.push_back({"antisymmetry g(-x) = -g(x)^T", anti <= tol * scale, "max deviation " + short_num(anti)});

    auto cp = partition_function(s);
    Table tz{"boundary_conditions", {"alpha", "tau", "log_abs_Z", "phase_re", "zero_mode_excluded", "weight"}, {}};
    for (int i = 0; i < 4; ++i) {
        const auto& b = cp.bc[i];
        tz.rows.push_back({alpha_label(b.alpha), num(tau(b.alpha)), num(b.Z.log_abs), num(b.Z.phase.real()),
                           b.zero_mode_excluded ? "1" : "0", num(cp.weight[i])});
    }
    r.tables.push_back(tz);
    r.summary["log_Z"] = cp.Z.log_abs;
    if (s.M <= 4) {
        const double Ze = exact_partition_function(s, ctx.threads);
        const double e = rel_err(cp.Z.value().real(), Ze);
        r.checks.push_back({"four-Pfaffian vs enumeration", e <= 1e-9, "rel err " + short_num(e)});
        r.provenance["Z"] = "lattice_model exhaustive enumeration";
    }
    auto bonds = parse_bonds(p, "bonds", s.M);
    const BcMode mode = p.str("mode") == "combined" ? BcMode::Combined : BcMode::MinusMinus;
    const double c = free_mpoint_energy_correlation(s, bonds, mode);
    r.summary["energy_correlation"] = c;
    r.summary["bonds"] = bond_label(bonds);
    if (s.M <= 4 && mode == BcMode::Combined) {
        const double ce = exact_truncated_energy_correlation(s, bonds, ctx.threads);
        const double e = std::abs(c - ce) / std::max(1.0, std::abs(ce));
        r.checks.push_back({"energy correlation vs enumeration", e <= 1e-9, "err " + short_num(e)});
        r.provenance["energy_correlation"] = "lattice_model enumeration cumulant";
    }
    return r;
}

// polymer: hard-core polymer representation against enumeration, and the truncated log-kernel.
Report run_polymer(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    const int M = static_cast<int>(p.integer("M"));
    const double beta = p.num("beta"), tol = p.num("tol");
    const VTable v = parse_v(p, "v");
    Table t{"polymer_vs_enumeration", {"lambda", "derivative", "polymer", "enumeration", "rel_err"}, {}};
    const int nb = 2 * M * M;
    require(nb <= 64, "M", "polymer: 2 M^2 must not exceed 64");
    std::vector<std::vector<Bond>> Ys = {{}};
    for (int i = 0; i < nb; ++i) {
        Ys.push_back({bond_from_index(i, M)});
        for (int j = i + 1; j < nb; ++j)
            Ys.push_back({bond_from_index(i, M), bond_from_index(j, M)});
    }
    auto spec_at = [&](double lam, const VTable& vt) {
        ModelSpec s;
        s.M = M;
        s.beta = beta;
        s.lambda = lam;
        s.v = vt;
        s.validate();
        return s;
    };
    bool all_ok = true, zero_ok = true;
    for (const auto& lj : p.at("lambdas")) {
        const double lam = lj.get<double>();
        ModelSpec s = spec_at(lam, v);
        auto d = polymer_partition_derivatives(s, Ys);
        const double Z = exact_partition_function(s, ctx.threads);
        double worst = 0.0;
        for (std::size_t k = 0; k < Ys.size(); ++k) {
            const double ref = Ys[k].empty() ? Z : exact_source_derivative(s, Ys[k], ctx.threads);
            const double e = rel_err(d[k], ref, 1e-12 * Z);
            worst = std::max(worst, e);
            t.rows.push_back({num(lam), bond_label(Ys[k]), num(d[k]), num(ref), num(e)});
        }
        all_ok = all_ok && worst <= tol;
        if (lam == 0.0)
            zero_ok = worst <= 1e-12;
        r.summary["max_rel_err"][num(lam)] = worst;
    }
    r.tables.push_back(t);
    r.checks.push_back({"hard-core sum matches enumeration", all_ok, "tolerance " + short_num(tol)});
    r.checks.push_back({"lambda = 0 row", zero_ok, "free Pfaffian value"});

    // relabelling: (lambda, v) and (-lambda, -v) describe the same model
    const double lam0 = p.at("lambdas").back().get<double>();
    VTable nv = v;
    for (auto& [k, x] : nv)
        x = -x;
    const double z1 = polymer_partition_derivatives(spec_at(lam0, v), {{}})[0];
    const double z2 = polymer_partition_derivatives(spec_at(-lam0, nv), {{}})[0];
    r.checks.push_back({"Z(lambda, v) = Z(-lambda, -v)", rel_err(z2, z1) <= 1e-13, "rel diff " + short_num(rel_err(z2, z1))});

    // truncated log-kernel against the exact log of the hard-core sum
    Table tk{"log_kernel", {"n_max", "lambda", "max_abs_diff"}, {}};
    const double slope_tol = p.num("slope_tol");
    for (const auto& nj : p.at("kernel_orders")) {
        const int n = nj.get<int>();
        std::vector<double> lx, ly;
        for (const auto& lj : p.at("kernel_lambdas")) {
            const double lam = lj.get<double>();
            auto inv = enumerate_polymers(spec_at(lam, v));
            BondPoly diff = hardcore_polymer_sum(inv, true).log();
            diff += log_kernel(inv, Truncation{n, 64}, true) * -1.0;
            double mx = 0.0;
            for (const auto& [key, c] : diff.terms())
                mx = std::max(mx, std::abs(c));
            tk.rows.push_back({num(n), num(lam), num(mx)});
            lx.push_back(std::log(std::abs(lam)));
            ly.push_back(std::log(mx));
        }
        if (lx.size() >= 2) {
            const double slope = linear_fit(lx, ly).second;
            r.checks.push_back({"log-kernel error order n_max = " + num(n),
                                std::abs(slope - (n + 1)) < slope_tol, "slope " + short_num(slope)});
            r.summary["kernel_slope"][num(n)] = slope;
        }
    }
    r.tables.push_back(tk);
    r.provenance = {{"enumeration", "lattice_model exhaustive enumeration"},
                    {"polymer", "hard-core polymer sum, Grassmann Gaussian integrals"},
                    {"log_kernel", "exact log of the finite hard-core sum"}};
    return r;
}

std::vector<Point> parse_points(const json& g, const std::string& key)
{
    std::vector<Point> pts;
    for (const auto& x : g) {
        require(x.is_array() && x.size() == 2, key, "'" + key + "' points must be [x1, x2]");
        pts.push_back({x[0].get<double>(), x[1].get<double>()});
    }
    return pts;
}

void check_geometry(const std::vector<Point>& pts, double a, const std::string& key)
{
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            require(std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]) >= a, key,
                    "'" + key + "': points closer than the coarsest lattice spacing " + short_num(a) +
                        " (degenerate geometry)");
    for (const auto& x : pts)
        for (double c : x)
            require(std::abs(c / a - std::round(c / a)) < 1e-9, key,
                    "'" + key + "': point coordinate " + short_num(c) + " is not on the a = " + short_num(a) + " grid");
}

// scaling: lattice correlations against the continuum loop formula.
Report run_scaling(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    std::vector<int> Ns;
    for (const auto& n : p.at("Ns"))
        Ns.push_back(n.get<int>());
    require(Ns.size() >= 4, "Ns", "'Ns' needs at least 4 scales");
    const int Nmin = *std::min_element(Ns.begin(), Ns.end());
    ContinuumParams cp;
    cp.m_star = p.num("m_star");
    const std::string src = p.str("source");
    require(src == "exact" || src == "loop", "source", "'source' must be exact or loop");
    const auto source = src == "exact" ? CorrelationSource::LatticeExact : CorrelationSource::LatticeLoop;
    const double min_theta = p.num("min_theta");
    Table t{"scaling", {"geometry", "m", "N", "a", "lattice", "continuum", "residual"}, {}};
    int gi = 0;
    for (const auto& g : p.at("geometries")) {
        const std::string key = "geometries[" + num(gi) + "]";
        auto pts = parse_points(g, key);
        check_geometry(pts, std::ldexp(1.0, -Nmin), key);
        auto st = convergence_study(pts, Ns, cp, source);
        for (const auto& row : st.rows)
            t.rows.push_back({num(gi), num(int(pts.size())), num(row.N), num(row.a), num(row.lattice), num(row.continuum),
                              num(row.residual)});
        r.checks.push_back({key + " residual monotone", st.monotone, "theta " + short_num(st.theta)});
        if (pts.size() == 2)
            r.checks.push_back({key + " fitted exponent", st.theta >= min_theta,
                                "theta " + short_num(st.theta) + " (min " + short_num(min_theta) + ")"});
        r.summary["theta"].push_back(st.theta);
        ++gi;
    }
    r.tables.push_back(t);

    const auto& tg = p.at("template_geometries");
    if (!tg.empty()) {
        std::vector<std::vector<Point>> geos;
        int k = 0;
        for (const auto& g : tg) {
            const std::string key = "template_geometries[" + num(k++) + "]";
            geos.push_back(parse_points(g, key));
            check_geometry(geos.back(), std::ldexp(1.0, -static_cast<int>(p.integer("template_N"))), key);
        }
        auto gc = geometry_template_check(geos, static_cast<int>(p.integer("template_N")), p.num("template_m_star"));
        Table tt{"template", {"geometry", "delta", "D", "lattice", "loop", "residual", "template_factor"}, {}};
        for (std::size_t i = 0; i < gc.rows.size(); ++i) {
            const auto& row = gc.rows[i];
            tt.rows.push_back({num(int(i)), num(row.delta), num(row.D), num(row.lattice), num(row.loop), num(row.residual),
                               num(row.template_factor)});
        }
        r.tables.push_back(tt);
        r.checks.push_back({"residuals non-increasing in D", gc.non_increasing, num(int(gc.rows.size())) + " geometries"});
    }
    r.provenance = {{"continuum", "loop formula with the K0/K1 continuum propagator"},
                    {"lattice", src == "exact" ? "free_fermion infinite-volume energy correlation"
                                               : "loop formula with the dressed lattice propagator"}};
    return r;
}

// rg: flow of the model beta family, counterterm fixed point, single-scale decay.
Report run_rg(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    const int N = static_cast<int>(p.integer("N")), hs = static_cast<int>(p.integer("h_sigma"));
    require(hs < N, "h_sigma", "'h_sigma' must be below N");
    Params b = p.sub("beta");
    const double cZ = b.num("cZ"), cs = b.num("csigma"), cn = b.num("cnu"), cZ1 = b.num("cZ1"), th = b.num("theta");
    FlowPoint init{N, 1.0, p.num("sigma_N"), p.num("nu_N"), 1.0};
    auto fr = flow_solve(geometric_beta(N, cZ, cs, cn, cZ1, th), init, hs, p.num("eps0"));
    Table t{"flow", {"h", "Z", "sigma", "nu", "Z1", "Z_closed", "sigma_closed", "nu_closed", "Z1_closed"}, {}};
    // the recursion written out independently of flow_solve
    double Zc = 1.0, sc = init.sigma, nc = init.nu, Z1c = 1.0, dev = 0.0;
    for (std::size_t i = 0; i < fr.trajectory.size(); ++i) {
        const auto& q = fr.trajectory[i];
        if (i > 0) {
            const double g = std::exp2(th * (q.h + 1 - N));
            Zc += cZ * g;
            sc *= 1.0 + cs * g;
            nc = 2.0 * nc + cn * g;
            Z1c *= 1.0 + cZ1 * g;
        }
        dev = std::max({dev, std::abs(q.Z - Zc), std::abs(q.sigma - sc), std::abs(q.nu - nc), std::abs(q.Z1 - Z1c)});
        t.rows.push_back({num(q.h), num(q.Z), num(q.sigma), num(q.nu), num(q.Z1), num(Zc), num(sc), num(nc), num(Z1c)});
    }
    r.tables.push_back(t);
    r.checks.push_back({"flow matches the closed recursion", dev < 1e-12, "max deviation " + short_num(dev)});
    const bool expect = p.flag("expect_in_box");
    r.checks.push_back({expect ? "flow stays in the box" : "flow leaves the box (negative control)", fr.in_box == expect,
                        fr.in_box ? "in box" : "exit at h = " + num(fr.exit_scale)});
    auto flat = flow_solve(geometric_beta(N, 0.0, 0.0, 0.0, 0.0, th), init, hs, p.num("eps0"));
    bool constant = true;
    for (const auto& q : flat.trajectory)
        constant = constant && q.Z == 1.0 && q.sigma == init.sigma && q.Z1 == 1.0 && q.nu == init.nu * std::exp2(N - q.h);
    r.checks.push_back({"zero beta gives a constant flow", constant, num(int(flat.trajectory.size())) + " scales"});
    r.summary["in_box"] = fr.in_box;
    r.summary["convergence_rate"] = fr.convergence_rate;

    Params f = p.sub("fixed_point");
    const double c = f.num("c"), ft = f.num("theta"), lin = f.num("linear");
    const int hmin = N - static_cast<int>(f.integer("depth"));
    auto fp = fixed_point_nu(
        [&](int j, const std::map<int, double>& nu) {
            auto it = nu.find(j);
            return c * std::exp2(ft * (j - N)) + lin * (it == nu.end() ? 0.0 : it->second);
        }, N, hmin, ft);
    Table tf{"fixed_point", {"h", "nu"}, {}};
    for (const auto& [h, v] : fp.nu)
        tf.rows.push_back({num(h), num(v)});
    r.tables.push_back(tf);
    r.checks.push_back({"fixed point converged", fp.converged && fp.contraction < 1.0,
                        "contraction " + short_num(fp.contraction) + ", " + num(fp.iterations) + " iterations"});
    r.checks.push_back({"nu vanishes deep in the infrared", std::abs(fp.nu_at_h_min) < 1e-10,
                        "nu(h_min) " + short_num(fp.nu_at_h_min)});
    if (lin == 0.0) {
        double closed = 0.0;
        for (int j = hmin; j <= N; ++j)
            closed -= std::exp2(j - N - 1) * c * std::exp2(ft * (j - N));
        r.checks.push_back({"nu_N matches the geometric series", std::abs(fp.nu_N - closed) < 1e-10,
                            "nu_N " + num(fp.nu_N) + ", closed " + num(closed)});
    }
    r.summary["nu_N"] = fp.nu_N;

    Params d = p.sub("decay");
    if (d.integer("scales") > 0) {
        const int Nd = static_cast<int>(d.integer("N"));
        ModelSpec s;
        s.a = std::ldexp(1.0, -Nd);
        s.M = static_cast<int>(d.integer("M"));
        s.beta = beta_critical();
        auto st = RGState::trivial(Nd, d.num("sigma"));
        Table td{"decay", {"h", "C", "c", "samples"}, {}};
        bool ok = true;
        const int top = Nd - 1, bottom = top - static_cast<int>(d.integer("scales")) + 1;
        require(bottom >= st.h_sigma, "decay.scales", "'decay.scales' reaches below h_sigma");
        for (int h = top; h >= bottom; --h) {
            auto fit = fit_decay(single_scale_field(h, st, s), h);
            ok = ok && fit.c > 0.0;
            td.rows.push_back({num(h), num(fit.C), num(fit.c), num(fit.samples)});
        }
        r.tables.push_back(td);
        r.checks.push_back({"single-scale decay rates positive", ok, num(top - bottom + 1) + " scales"});
    }
    auto dt = dimension_table(8, 4);
    r.checks.push_back({"renormalized dimensions negative", dt.all_negative, num(dt.assignments) + " assignments"});
    r.provenance = {{"*_closed", "recursion evaluated directly from the beta family"}};
    return r;
}

// compare: one observable from every module that can produce it.
Report run_compare(const Context& ctx)
{
    Params p{ctx.params, ""};
    Report r;
    ModelSpec s = make_spec(p);
    require(s.M <= 5, "M", "compare: M must be at most 5 (enumeration reference)");
    auto bonds = parse_bonds(p, "bonds", s.M);
    const double tol = p.num("tol"), nsigma = p.num("nsigma");
    const int m = static_cast<int>(bonds.size());
    const double ref = exact_truncated_energy_correlation(s, bonds, ctx.threads);
    Table t{"compare", {"source", "value", "standard_error", "abs_diff", "pass"}, {}};
    t.rows.push_back({"enumeration", num(ref), "", "0", "1"});
    auto add = [&](const std::string& name, double v, double se, bool pass, const std::string& detail) {
        t.rows.push_back({name, num(v), se > 0 ? num(se) : "", num(std::abs(v - ref)), pass ? "1" : "0"});
        r.checks.push_back({name + " vs enumeration", pass, detail});
    };
    if (s.lambda == 0.0) {
        const double f = free_mpoint_energy_correlation(s, bonds, BcMode::Combined);
        const double e = std::abs(f - ref) / std::max(1.0, std::abs(ref));
        add("free_fermion", f, 0.0, e <= tol, "err " + short_num(e));
    }
    if (s.M == 2) {  // the Grassmann integrals are only tractable on the 2x2 torus
        std::vector<std::vector<Bond>> Ys;
        for (int S = 0; S < (1 << m); ++S) {
            std::vector<Bond> y;
            for (int i = 0; i < m; ++i)
                if (S >> i & 1)
                    y.push_back(bonds[i]);
            Ys.push_back(y);
        }
        const double c = cumulant_from_derivatives(polymer_partition_derivatives(s, Ys), m, s.a);
        const double e = std::abs(c - ref) / std::max(1.0, std::abs(ref));
        add("polymer", c, 0.0, e <= 1e-8, "err " + short_num(e));
    }
    McOptions o;
    o.sweeps = p.integer("sweeps");
    o.seed = ctx.seed;
    o.threads = ctx.threads;
    for (bool metro : {false, true}) {
        if (!metro && s.lambda != 0.0)
            continue;
        o.force_metropolis = metro;
        auto res = mc_estimate_energy_correlation(s, bonds, o);
        const double z = std::abs(res.estimate - ref) / res.standard_error;
        add("mc_" + res.algorithm, res.estimate, res.standard_error, z < nsigma, short_num(z) + " standard errors");
    }
    r.tables.push_back(t);
    r.summary["reference"] = ref;
    static const std::map<std::string, std::string> origin = {
        {"enumeration", "lattice_model exhaustive enumeration"},
        {"free_fermion", "Wick contraction, tau-weighted boundary conditions"},
        {"polymer", "hard-core polymer sum, cumulant of source derivatives"},
        {"mc_wolff", "Wolff cluster Monte Carlo, jackknife errors"},
        {"mc_metropolis", "Metropolis Monte Carlo, jackknife errors"}};
    for (const auto& row : t.rows)
        r.provenance[row[0]] = origin.at(row[0]);
    return r;
}

}  // namespace

const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names = {"exact", "mc", "free", "polymer", "scaling", "rg", "compare"};
    return names;
}

json default_params(const std::string& command)
{
    if (command == "exact")
        return {{"M", 3}, {"J", 1.0}, {"beta_min", 0.0}, {"beta_max", 0.6}, {"beta_points", 5},
                {"bonds", {{0, 0, 1}, {1, 1, 2}}}, {"tol", 1e-9}};
    if (command == "mc")
        return {{"M", 32}, {"beta", nullptr}, {"beta_factor", 0.9}, {"lambda", 0.0}, {"v", "none"},
                {"bonds", {{0, 0, 1}, {1, 0, 1}}}, {"sweeps", 20000}, {"thermalization", -1}, {"chains", 4},
                {"blocks", 40}, {"force_metropolis", false}, {"trace", false}, {"nsigma", 3.0}};
    if (command == "free")
        return {{"M", 16}, {"a", 1.0}, {"beta", nullptr}, {"beta_factor", 0.9}, {"alpha", "--"},
                {"kind", "psi_corrected"}, {"fft", true}, {"bonds", {{0, 0, 1}, {2, 0, 1}}}, {"mode", "combined"},
                {"tol", 1e-10}};
    if (command == "polymer")
        return {{"M", 2}, {"beta", 0.4}, {"v", "diagonal"}, {"lambdas", {0.0, 0.02, -0.02, 0.05, -0.05, 0.1, -0.1}},
                {"tol", 1e-9}, {"kernel_orders", {2, 3, 4}}, {"kernel_lambdas", {0.01, 0.02, 0.04}}, {"slope_tol", 0.3}};
    if (command == "scaling")
        return {{"Ns", {4, 5, 6, 7, 8, 9}}, {"m_star", 0.0}, {"source", "exact"},
                {"geometries", json::array({json::array({{0.0, 0.0}, {1.0, 0.0}}),
                                             json::array({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {2.0, 1.5}})})}, {"min_theta", 0.8},
                {"template_N", 6}, {"template_m_star", 1.0},
                {"template_geometries", json::array({json::array({{0.0, 0.0}, {0.25, 0.0}, {0.125, 0.5}}),
                                                     json::array({{0.0, 0.0}, {0.25, 0.0}, {0.125, 1.0}}),
                                                     json::array({{0.0, 0.0}, {0.25, 0.0}, {0.125, 2.0}})})}};
    if (command == "rg")
        return {{"N", 20}, {"h_sigma", 2}, {"sigma_N", 1.0}, {"nu_N", 0.0}, {"eps0", 0.5}, {"expect_in_box", true},
                {"beta", {{"cZ", 0.01}, {"csigma", 0.01}, {"cnu", 0.0}, {"cZ1", 0.01}, {"theta", 0.5}}},
                {"fixed_point", {{"c", 0.1}, {"theta", 0.5}, {"depth", 80}, {"linear", 0.0}}},
                {"decay", {{"N", 8}, {"M", 512}, {"sigma", 2.0}, {"scales", 6}}}};
    if (command == "compare")
        return {{"M", 4}, {"beta", nullptr}, {"beta_factor", 0.9}, {"lambda", 0.0}, {"v", "none"},
                {"bonds", {{0, 0, 1}, {1, 2, 2}}}, {"sweeps", 20000}, {"nsigma", 3.0}, {"tol", 1e-9}};
    throw std::invalid_argument("unknown command '" + command + "'");
}

namespace {

bool compatible(const json& def, const json& val)
{
    if (def.is_null())
        return val.is_null() || val.is_number();
    if (def.is_number_integer())
        return val.is_number_integer();
    if (def.is_number())
        return val.is_number();
    if (def.is_string() && !val.is_string())
        return val.is_array() && def.get<std::string>() == "none";  // v accepts a preset or a table
    return def.type() == val.type();
}

void overlay(json& target, const json& user, const std::string& prefix)
{
    for (const auto& [k, v] : user.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (!target.contains(k))
            throw ConfigError(path, "unknown key '" + path + "'");
        json& slot = target[k];
        if (slot.is_object() && v.is_object()) {
            overlay(slot, v, path);
            continue;
        }
        if (!compatible(slot, v))
            throw ConfigError(path, "'" + path + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
        slot = v;
    }
}

}  // namespace

json resolve_params(const std::string& command, const json& user)
{
    json out = default_params(command);
    if (!user.is_null()) {
        if (!user.is_object())
            throw ConfigError(command, "'" + command + "' block must be an object");
        overlay(out, user, "");
    }
    return out;
}

Report run_command(const Context& ctx)
{
    const std::string& c = ctx.command;
    if (c == "exact")
        return run_exact(ctx);
    if (c == "mc")
        return run_mc(ctx);
    if (c == "free")
        return run_free(ctx);
    if (c == "polymer")
        return run_polymer(ctx);
    if (c == "scaling")
        return run_scaling(ctx);
    if (c == "rg")
        return run_rg(ctx);
    if (c == "compare")
        return run_compare(ctx);
    throw std::invalid_argument("unknown command '" + c + "'");
}

}  // namespace isl::cli
