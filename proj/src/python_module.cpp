// Python bindings: config-driven commands plus a few point-law primitives.
// Configs and reports cross the boundary as JSON text; the package wrapper
// converts them to and from dicts.
#include "opstable/cli.hpp"
#include "opstable/levy_cf.hpp"
#include "opstable/polar.hpp"
#include "opstable/sampler.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace opstable;

namespace {

cli::ModelConfig config_of(const std::string& text) {
    cli::json doc;
    try {
        doc = cli::json::parse(text);
    } catch (const cli::json::parse_error& e) {
        throw cli::ConfigError(std::string("config: ") + e.what());
    }
    return cli::parse_config(doc);
}

py::tuple result(const cli::CommandResult& r) { return py::make_tuple(r.code, r.report.dump()); }

SpectralMeasure measure(const Mat& thetas, const std::vector<double>& weights, bool symmetrize) {
    if (static_cast<std::size_t>(thetas.rows()) != weights.size())
        throw DomainError("one weight per atom row required");
    std::vector<Atom> atoms;
    for (Eigen::Index i = 0; i < thetas.rows(); ++i) atoms.push_back({thetas.row(i).transpose(), weights[i]});
    return SpectralMeasure(std::move(atoms), symmetrize);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "operator-stable random fields";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("tau", [](const Mat& D, const Vec& x) { return tau(SymMatrix(D), x); }, py::arg("D"), py::arg("x"));
    m.def("stable_K", &stable_K, py::arg("alpha"));
    m.def("log_cf",
          [](const Mat& B, const Mat& thetas, const std::vector<double>& weights, const Vec& u, bool symmetrize) {
              return log_cf(PointLaw(SymMatrix(B), measure(thetas, weights, symmetrize)), u);
          },
          py::arg("B"), py::arg("thetas"), py::arg("weights"), py::arg("u"), py::arg("symmetrize") = true);
    m.def("sample_standard",
          [](const Mat& B, const Mat& thetas, const std::vector<double>& weights, int n, std::uint64_t seed,
             int threads) {
              PointLaw law(SymMatrix(B), measure(thetas, weights, true));
              py::gil_scoped_release nogil;
              return sample_standard_many(law, n, {}, SeedSpec{seed}, threads);
          },
          py::arg("B"), py::arg("thetas"), py::arg("weights"), py::arg("n"), py::arg("seed") = 0,
          py::arg("threads") = 1);

    m.def("validate", [](const std::string& cfg) { config_of(cfg); }, py::arg("config"));
    m.def("check", [](const std::string& cfg) { return result(cli::cmd_check(config_of(cfg))); }, py::arg("config"));
    m.def("norm",
          [](const std::string& cfg, std::optional<double> t) {
              cli::Overrides ov;
              ov.t = t;
              return result(cli::cmd_norm(config_of(cfg), ov));
          },
          py::arg("config"), py::arg("t") = py::none());
    m.def("cf", [](const std::string& cfg) { return result(cli::cmd_cf(config_of(cfg))); }, py::arg("config"));
    m.def("tangent",
          [](const std::string& cfg, std::optional<int> k_max, std::optional<double> u) {
              cli::Overrides ov;
              ov.k_max = k_max;
              ov.u = u;
              cli::ModelConfig c = config_of(cfg);
              cli::CommandResult r;
              {
                  py::gil_scoped_release nogil;
                  r = cli::cmd_tangent(c, ov);
              }
              return result(r);
          },
          py::arg("config"), py::arg("k_max") = py::none(), py::arg("u") = py::none());
    // (values[n_paths, n_t, m], sidecar JSON)
    m.def("sample",
          [](const std::string& cfg, std::optional<int> n_paths, std::optional<std::uint64_t> seed) {
              cli::ModelConfig c = config_of(cfg);
              cli::Overrides ov;
              ov.paths = n_paths;
              ov.seed = seed;
              FieldSample s;
              {
                  py::gil_scoped_release nogil;
                  s = cli::run_sample(c, ov);
              }
              py::array_t<double> a({static_cast<py::ssize_t>(s.n_paths), static_cast<py::ssize_t>(s.grid.size()),
                                     static_cast<py::ssize_t>(s.m)});
              std::copy(s.values.begin(), s.values.end(), a.mutable_data());
              return py::make_tuple(a, cli::sample_sidecar(s, c).dump());
          },
          py::arg("config"), py::arg("n_paths") = py::none(), py::arg("seed") = py::none());
}
