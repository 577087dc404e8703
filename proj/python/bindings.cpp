#include "everett/branch_stats.hpp"
#include "everett/experiment.hpp"
#include "everett/measurement.hpp"
#include "everett/wavepacket.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace everett;

namespace {

py::dict distribution_dict(const stats::FrequencyDistribution& d) {
  py::dict out;
  out["kind"] = stats::to_string(d.kind);
  out["support"] = d.support;
  out["density"] = d.density;
  out["trials"] = d.trials;
  out["rho_u"] = d.rho_u;
  out["delta_z"] = d.delta_z ? py::cast(*d.delta_z) : py::none();
  out["validity_warning"] = d.validity_warning;
  return out;
}

StateVector system_state(const std::vector<cplx>& c) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) v[static_cast<Eigen::Index>(i)] = c[i];
  return StateVector::normalized({c.size()}, v);
}

// measure, optional observer copy and dephasing bath, then branch extraction.
py::dict measure_chain(const std::vector<cplx>& amplitudes, std::size_t env_qubits, double coupling, double t) {
  const auto n = amplitudes.size();
  const auto setup = build_position_detector(n, 1);
  auto state = measure(prepare_measurement(setup, system_state(amplitudes)), setup);
  state = observe(combine(state, CompositeState({observer_factor(setup)}, ready_state(n + 1))));
  if (env_qubits > 0) {
    state = combine(state, CompositeState({Factor{"environment", Role::environment, std::size_t{1} << env_qubits, {}}},
                                          plus_environment(env_qubits)));
    state = decohere(state, env_qubits, coupling, t);
  }
  const auto ens = extract_branches(state);
  std::vector<int> outcomes;
  std::vector<double> weights;
  for (const auto& br : ens.branches()) {
    outcomes.push_back(br.outcomes.front());
    weights.push_back(br.weight);
  }
  py::dict out;
  out["outcomes"] = outcomes;
  out["weights"] = weights;
  out["interference"] = ens.interference();
  out["decohered"] = ens.decohered();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Measurement chains, branch statistics and grid wavepackets";

  static py::exception<CapacityError> capacity(m, "CapacityError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const CapacityError& e) {
      py::set_error(capacity, e.what());
    }
  });

  m.def("binomial_term", &stats::binomial_term, py::arg("m"), py::arg("n"), py::arg("p"));
  m.def("exact_count_density", [](std::size_t n, double rho) { return distribution_dict(stats::exact_count_density(n, rho)); },
        py::arg("n"), py::arg("rho_u"));
  m.def("gaussian_count_density",
        [](std::size_t n, double rho) { return distribution_dict(stats::gaussian_count_density(n, rho)); },
        py::arg("n"), py::arg("rho_u"));
  m.def("relative_frequency_density",
        [](std::size_t n, double rho, std::size_t points) {
          return distribution_dict(stats::relative_frequency_density(n, rho, points));
        },
        py::arg("n"), py::arg("rho_u"), py::arg("points") = 4001);
  m.def("relative_frequency_peak", &stats::relative_frequency_peak, py::arg("n"), py::arg("rho_u"));
  m.def("coarse_histogram",
        [](std::size_t n, double rho, double dz) {
          const auto h = stats::coarse_histogram(n, rho, dz);
          py::dict out;
          out["bar_graph"] = distribution_dict(h.bar_graph);
          out["histogram"] = distribution_dict(h.histogram);
          out["lower"] = h.histogram.lower;
          out["upper"] = h.histogram.upper;
          out["central_mass"] = h.central_mass();
          return out;
        },
        py::arg("n"), py::arg("rho_u"), py::arg("delta_z"));
  m.def("chebyshev_bound_check",
        [](std::size_t n, double rho, double dz) {
          const auto r = stats::chebyshev_bound_check(n, rho, dz);
          return py::dict(py::arg("tail_mass") = r.tail_mass, py::arg("bound") = r.bound, py::arg("holds") = r.holds);
        },
        py::arg("n"), py::arg("rho_u"), py::arg("delta_z"));
  m.def("frequency_operator_density",
        [](const std::vector<cplx>& a, std::size_t n, std::size_t u, bool explicit_tensor) {
          return distribution_dict(stats::frequency_operator_density(
              a, n, u, explicit_tensor ? stats::Path::explicit_tensor : stats::Path::combinatorial));
        },
        py::arg("amplitudes"), py::arg("n"), py::arg("u_index"), py::arg("explicit_tensor") = false);
  m.def("hartle_variance",
        [](const std::vector<cplx>& a, std::size_t n, std::size_t u, bool explicit_tensor) {
          return stats::hartle_variance(a, n, u, explicit_tensor ? stats::Path::explicit_tensor : stats::Path::combinatorial);
        },
        py::arg("amplitudes"), py::arg("n"), py::arg("u_index"), py::arg("explicit_tensor") = false);
  m.def("estimator_distribution",
        [](std::size_t n, double rho, std::size_t grid) {
          return distribution_dict(stats::estimator_distribution(n, rho, stats::Prior::uniform, grid));
        },
        py::arg("n"), py::arg("rho_u"), py::arg("grid_points") = 2048);

  m.def("measure_chain", &measure_chain, py::arg("amplitudes"), py::arg("env_qubits") = 0, py::arg("coupling") = 0.0,
        py::arg("t") = 0.0);
  m.def("dephasing_overlap", &dephasing_overlap, py::arg("label_a"), py::arg("label_b"), py::arg("env_qubits"),
        py::arg("coupling"), py::arg("t"));
  m.def("envariance_distance",
        [](cplx c1, cplx c2, const Eigen::VectorXcd& e1, const Eigen::VectorXcd& e2) {
          return envariance_check(make_envariance_setup(c1, c2, e1, e2));
        },
        py::arg("c1"), py::arg("c2"), py::arg("eps1"), py::arg("eps2"));

  m.def("propagate_gaussian",
        [](double x_min, double x_max, std::size_t n, double x0, double sigma, double k0, double omega, double dt,
           std::size_t steps) {
          const wave::Grid g{x_min, x_max, n};
          const auto v = omega > 0.0 ? wave::harmonic_potential(g, omega) : std::vector<double>(n, 0.0);
          const auto out = wave::propagate(wave::gaussian_packet(g, x0, sigma, k0, v), dt, steps);
          py::dict d;
          d["x"] = g.points();
          d["psi"] = out.amplitudes();
          d["norm"] = out.norm_squared();
          d["mean"] = out.mean_position();
          d["width"] = out.width();
          return d;
        },
        py::arg("x_min"), py::arg("x_max"), py::arg("n_points"), py::arg("x0"), py::arg("sigma"), py::arg("k0"),
        py::arg("omega"), py::arg("dt"), py::arg("steps"));
  m.def("free_packet_width", [](double s, double t) { return wave::free_packet_width(s, t); }, py::arg("sigma0"),
        py::arg("t"));

  m.def("run_experiment",
        [](const std::string& config_json) {
          const auto report = lab::run(lab::parse_config(nlohmann::json::parse(config_json)));
          return report.to_json().dump();
        },
        py::arg("config_json"), "Runs one experiment; returns report.json as a string.");
}
