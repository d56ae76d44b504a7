#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "isinglab/polymer.hpp"
#include "isinglab/rg.hpp"
#include "isinglab/scaling.hpp"

namespace py = pybind11;
using namespace isl;

namespace {

std::vector<Bond> to_bonds(const std::vector<std::tuple<int, int, int>>& t)
{
    std::vector<Bond> out;
    for (const auto& [x1, x2, j] : t)
        out.push_back({x1, x2, j});
    return out;
}

Alpha to_alpha(const std::string& s)
{
    for (Alpha al : kAlphas) {
        std::string lab = to_string(al);
        lab.erase(std::remove(lab.begin(), lab.end(), ','), lab.end());
        if (lab == s)
            return al;
    }
    throw py::value_error("alpha must be one of '++', '+-', '-+', '--'");
}

}  // namespace

PYBIND11_MODULE(_isinglab, m)
{
    m.doc() = "Two-dimensional Ising lattice toolkit";

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init([](int M, double beta, double a, double J, double lambda_) {
                 ModelSpec s;
                 s.M = M;
                 s.beta = beta;
                 s.a = a;
                 s.J = J;
                 s.lambda = lambda_;
                 return s;
             }),
             py::arg("M") = 2, py::arg("beta") = 0.0, py::arg("a") = 1.0, py::arg("J") = 1.0, py::arg("lam") = 0.0)
        .def_readwrite("M", &ModelSpec::M)
        .def_readwrite("beta", &ModelSpec::beta)
        .def_readwrite("a", &ModelSpec::a)
        .def_readwrite("J", &ModelSpec::J)
        .def_readwrite("lam", &ModelSpec::lambda)
        .def_property(
            "v",
            [](const ModelSpec& s) {
                std::map<std::pair<int, int>, double> out;
                for (const auto& [o, x] : s.v)
                    out[{o.d1, o.d2}] = x;
                return out;
            },
            [](ModelSpec& s, const std::map<std::pair<int, int>, double>& v) {
                s.v.clear();
                for (const auto& [o, x] : v)
                    s.v[Offset{o.first, o.second}] = x;
            },
            "interaction table {(d1, d2): v}")
        .def("validate", &ModelSpec::validate)
        .def_static("diagonal_v",
                    [] {
                        std::map<std::pair<int, int>, double> out;
                        for (const auto& [o, x] : ModelSpec::diagonal_v())
                            out[{o.d1, o.d2}] = x;
                        return out;
                    })
        .def("__repr__", [](const ModelSpec& s) {
            return "ModelSpec(M=" + std::to_string(s.M) + ", beta=" + std::to_string(s.beta) +
                   ", lam=" + std::to_string(s.lambda) + ")";
        });

    py::register_exception<MasslessModeError>(m, "MasslessModeError", PyExc_ArithmeticError);

    m.def("beta_critical", &beta_critical, py::arg("J") = 1.0);

    m.def("exact_partition_function", &exact_partition_function, py::arg("spec"), py::arg("threads") = 0,
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "exact_energy_correlation",
        [](const ModelSpec& s, const std::vector<std::tuple<int, int, int>>& b, int threads) {
            return exact_truncated_energy_correlation(s, to_bonds(b), threads);
        },
        py::arg("spec"), py::arg("bonds"), py::arg("threads") = 0);

    m.def(
        "log_partition_function",
        [](const ModelSpec& s) {
            auto cp = partition_function(s);
            return py::make_tuple(cp.Z.log_abs, cp.Z.phase);
        },
        py::arg("spec"), "(log|Z|, phase) from the four-Pfaffian combination");
    m.def(
        "free_energy_correlation",
        [](const ModelSpec& s, const std::vector<std::tuple<int, int, int>>& b, bool combined) {
            return free_mpoint_energy_correlation(s, to_bonds(b), combined ? BcMode::Combined : BcMode::MinusMinus);
        },
        py::arg("spec"), py::arg("bonds"), py::arg("combined") = true);
    m.def(
        "psi_propagator",
        [](const ModelSpec& s, int x1, int x2, const std::string& alpha, bool corrected) {
            return Mat2(psi_propagator(s, x1, x2, to_alpha(alpha), corrected));
        },
        py::arg("spec"), py::arg("x1"), py::arg("x2"), py::arg("alpha") = "--", py::arg("corrected") = true);

    m.def(
        "mc_energy_correlation",
        [](const ModelSpec& s, const std::vector<std::tuple<int, int, int>>& b, long sweeps, std::uint64_t seed,
           int chains, int threads, bool force_metropolis) {
            McOptions o;
            o.sweeps = sweeps;
            o.seed = seed;
            o.chains = chains;
            o.threads = threads;
            o.force_metropolis = force_metropolis;
            McResult r;
            {
                py::gil_scoped_release release;
                r = mc_estimate_energy_correlation(s, to_bonds(b), o);
            }
            return py::dict(py::arg("estimate") = r.estimate, py::arg("standard_error") = r.standard_error,
                            py::arg("algorithm") = r.algorithm);
        },
        py::arg("spec"), py::arg("bonds"), py::arg("sweeps") = 10000, py::arg("seed") = 1, py::arg("chains") = 4,
        py::arg("threads") = 0, py::arg("force_metropolis") = false);

    m.def(
        "polymer_derivatives",
        [](const ModelSpec& s, const std::vector<std::vector<std::tuple<int, int, int>>>& Ys) {
            std::vector<std::vector<Bond>> ys;
            for (const auto& y : Ys)
                ys.push_back(to_bonds(y));
            return polymer_partition_derivatives(s, ys);
        },
        py::arg("spec"), py::arg("subsets"), "d^|Y| Z / prod dA_b at A = 0 from the polymer representation");

    py::class_<ContinuumParams>(m, "ContinuumParams")
        .def(py::init([](double m_star, double Zbar, double Zstar) {
                 ContinuumParams p;
                 p.m_star = m_star;
                 p.Zbar = Zbar;
                 p.Zstar = Zstar;
                 return p;
             }),
             py::arg("m_star") = 0.0, py::arg("Zbar") = 1.0, py::arg("Zstar") = 1.0)
        .def_readwrite("m_star", &ContinuumParams::m_star)
        .def_readwrite("Zbar", &ContinuumParams::Zbar)
        .def_readwrite("Zstar", &ContinuumParams::Zstar);
    m.def(
        "continuum_propagator",
        [](const Point& x, const ContinuumParams& p) { return Mat2(continuum_propagator(x, p)); }, py::arg("x"),
        py::arg("params") = ContinuumParams{});
    m.def(
        "convergence_study",
        [](const std::vector<Point>& pts, const std::vector<int>& Ns, const ContinuumParams& p, bool loop) {
            auto st = convergence_study(pts, Ns, p, loop ? CorrelationSource::LatticeLoop : CorrelationSource::LatticeExact);
            py::list rows;
            for (const auto& r : st.rows)
                rows.append(py::dict(py::arg("N") = r.N, py::arg("a") = r.a, py::arg("lattice") = r.lattice,
                                     py::arg("continuum") = r.continuum, py::arg("residual") = r.residual));
            return py::dict(py::arg("theta") = st.theta, py::arg("monotone") = st.monotone, py::arg("rows") = rows);
        },
        py::arg("points"), py::arg("Ns"), py::arg("params") = ContinuumParams{}, py::arg("loop") = false);

    m.def(
        "flow_geometric",
        [](int N, int h_sigma, double sigma_N, double cZ, double csigma, double cnu, double cZ1, double theta,
           double eps0) {
            auto fr = flow_solve(geometric_beta(N, cZ, csigma, cnu, cZ1, theta), FlowPoint{N, 1.0, sigma_N, 0.0, 1.0},
                                 h_sigma, eps0);
            py::list traj;
            for (const auto& q : fr.trajectory)
                traj.append(py::make_tuple(q.h, q.Z, q.sigma, q.nu, q.Z1));
            return py::dict(py::arg("in_box") = fr.in_box, py::arg("exit_scale") = fr.exit_scale,
                            py::arg("trajectory") = traj);
        },
        py::arg("N"), py::arg("h_sigma"), py::arg("sigma_N"), py::arg("cZ"), py::arg("csigma"), py::arg("cnu"),
        py::arg("cZ1"), py::arg("theta") = 0.5, py::arg("eps0") = 0.5,
        "flow of (Z, sigma, nu, Z1) under beta_h = c 2^{theta (h - N)}; trajectory rows (h, Z, sigma, nu, Z1)");
    m.def(
        "fixed_point_nu",
        [](const std::function<double(int)>& beta, int N, int h_min, double theta) {
            auto fp = fixed_point_nu([&](int j, const std::map<int, double>&) { return beta(j); }, N, h_min, theta);
            return py::dict(py::arg("nu_N") = fp.nu_N, py::arg("nu") = fp.nu, py::arg("converged") = fp.converged);
        },
        py::arg("beta"), py::arg("N"), py::arg("h_min"), py::arg("theta") = 0.5,
        "counterterm fixed point for a nu-independent beta_j");
}
