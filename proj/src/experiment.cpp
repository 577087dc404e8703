#include "everett/experiment.hpp"

#include "everett/branch_stats.hpp"
#include "everett/measurement.hpp"
#include "everett/wavepacket.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

namespace everett::lab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::measure_chain: return "measure_chain";
    case ExperimentKind::repeated: return "repeated";
    case ExperimentKind::frequency: return "frequency";
    case ExperimentKind::chebyshev: return "chebyshev";
    case ExperimentKind::estimator: return "estimator";
    case ExperimentKind::envariance: return "envariance";
    case ExperimentKind::wavepacket: return "wavepacket";
  }
  return "unknown";
}

namespace {

enum class ParamType { integer, real, complex, complex_array };

struct ParamSpec {
  std::string name;
  ParamType type;
  bool required = false;
  json fallback = nullptr;  // default when absent; null means "leave unset"
  double min = -INFINITY;
  double max = INFINITY;
  bool exclusive_min = false;
  bool exclusive_max = false;
};

ParamSpec req(std::string name, ParamType t, double lo, double hi, bool ex_lo = false, bool ex_hi = false) {
  return ParamSpec{std::move(name), t, true, nullptr, lo, hi, ex_lo, ex_hi};
}

ParamSpec opt(std::string name, ParamType t, json fallback, double lo = -INFINITY, double hi = INFINITY,
              bool ex_lo = false, bool ex_hi = false) {
  return ParamSpec{std::move(name), t, false, std::move(fallback), lo, hi, ex_lo, ex_hi};
}

const std::map<ExperimentKind, std::vector<ParamSpec>>& schemas() {
  using T = ParamType;
  static const std::map<ExperimentKind, std::vector<ParamSpec>> s{
      {ExperimentKind::measure_chain,
       {opt("amplitudes", T::complex_array, nullptr), opt("outcomes", T::integer, 3, 2, 16),
        opt("states_per_recorder", T::integer, 1, 1, 16), opt("env_qubits", T::integer, 10, 0, 62),
        opt("coupling", T::real, 0.25), opt("time", T::real, 1.0, 0.0),
        opt("interference_tol", T::real, 1e-3, 0.0, 1.0, true)}},
      {ExperimentKind::repeated,
       {opt("amplitudes", T::complex_array, nullptr), opt("outcomes", T::integer, 2, 2, 6),
        opt("N", T::integer, 4, 1, 64)}},
      {ExperimentKind::frequency,
       {req("N", T::integer, 1, INFINITY), req("rho_u", T::real, 0.0, 1.0, true, true),
        opt("delta_z", T::real, nullptr, 0.0, 1.0, true, true), opt("points", T::integer, 4001, 3, 1e6)}},
      {ExperimentKind::chebyshev,
       {req("N", T::integer, 1, INFINITY), req("rho_u", T::real, 0.0, 1.0, true, true),
        req("delta_z", T::real, 0.0, INFINITY, true)}},
      {ExperimentKind::estimator,
       {req("N", T::integer, 1, INFINITY), req("rho_u", T::real, 0.0, 1.0, true, true),
        opt("grid_points", T::integer, 2048, 2, 65536), opt("window", T::real, 0.05, 0.0, 0.5, true),
        opt("min_window_mass", T::real, nullptr, 0.0, 1.0)}},
      {ExperimentKind::envariance,
       {opt("c1", T::complex, nullptr), opt("c2", T::complex, nullptr), opt("phase", T::real, 0.0),
        opt("env_dim", T::integer, 4, 2, 64), opt("trials", T::integer, 10, 1, 10000)}},
      {ExperimentKind::wavepacket,
       {opt("n_points", T::integer, 512, 16, 2048), opt("x_min", T::real, -20.0), opt("x_max", T::real, 20.0),
        opt("sigma", T::real, 1.0, 0.0, INFINITY, true), opt("x0", T::real, 0.0), opt("k0", T::real, 0.0),
        opt("omega", T::real, 0.0, 0.0), opt("force", T::real, 0.0), opt("dt", T::real, 0.01, 0.0, INFINITY, true),
        opt("steps", T::integer, 1000, 1, 1e6)}},
  };
  return s;
}

std::optional<cplx> as_complex(const json& v) {
  if (v.is_number()) return cplx{v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return cplx{v[0].get<double>(), v[1].get<double>()};
  return std::nullopt;
}

void check_range(const ParamSpec& spec, double x) {
  const bool low_bad = spec.exclusive_min ? !(x > spec.min) : !(x >= spec.min);
  const bool high_bad = spec.exclusive_max ? !(x < spec.max) : !(x <= spec.max);
  if (low_bad || high_bad || !std::isfinite(x)) {
    std::ostringstream msg;
    msg << "parameter '" << spec.name << "' = " << x << " is out of range " << (spec.exclusive_min ? "(" : "[")
        << spec.min << ", " << spec.max << (spec.exclusive_max ? ")" : "]");
    throw UsageError(msg.str());
  }
}

json validate_param(const ParamSpec& spec, const json& v) {
  switch (spec.type) {
    case ParamType::integer: {
      if (!v.is_number_integer()) throw UsageError("parameter '" + spec.name + "' must be an integer");
      check_range(spec, v.get<double>());
      return v;
    }
    case ParamType::real: {
      if (!v.is_number()) throw UsageError("parameter '" + spec.name + "' must be a number");
      check_range(spec, v.get<double>());
      return v.get<double>();
    }
    case ParamType::complex:
      if (!as_complex(v)) throw UsageError("parameter '" + spec.name + "' must be a number or [re, im]");
      return v;
    case ParamType::complex_array: {
      if (!v.is_array() || v.empty()) throw UsageError("parameter '" + spec.name + "' must be a non-empty array");
      double total = 0.0;
      for (const auto& e : v) {
        const auto c = as_complex(e);
        if (!c) throw UsageError("parameter '" + spec.name + "' entries must be numbers or [re, im]");
        total += std::norm(*c);
      }
      if (!(total > 0.0)) throw UsageError("parameter '" + spec.name + "' has zero norm");
      return v;
    }
  }
  return v;
}

// Cross-parameter rules checked after individual validation.
void validate_relations(ExperimentKind kind, const json& p) {
  if (kind == ExperimentKind::measure_chain && p.contains("amplitudes") && p["amplitudes"].size() < 2)
    throw UsageError("parameter 'amplitudes' needs at least two entries");
  if (kind == ExperimentKind::repeated && p.contains("amplitudes") &&
      (p["amplitudes"].size() < 2 || p["amplitudes"].size() > 6))
    throw UsageError("parameter 'amplitudes' needs between two and six entries");
  if (kind == ExperimentKind::wavepacket) {
    if (!(p["x_max"].get<double>() > p["x_min"].get<double>())) throw UsageError("parameter 'x_max' must exceed 'x_min'");
    if (p["omega"].get<double>() != 0.0 && p["force"].get<double>() != 0.0)
      throw UsageError("parameters 'omega' and 'force' are mutually exclusive");
  }
  if (kind == ExperimentKind::envariance && p.contains("c1") != p.contains("c2"))
    throw UsageError("parameters 'c1' and 'c2' must be given together");
}

std::vector<cplx> complex_array(const json& v) {
  std::vector<cplx> out;
  for (const auto& e : v) out.push_back(*as_complex(e));
  return out;
}

std::vector<cplx> random_amplitudes(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<cplx> a(n);
  double total = 0.0;
  for (auto& x : a) {
    x = {g(rng), g(rng)};
    total += std::norm(x);
  }
  for (auto& x : a) x /= std::sqrt(total);
  return a;
}

Eigen::VectorXcd to_vector(const std::vector<cplx>& a) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  return v;
}

std::vector<cplx> amplitudes_or_random(const json& p, std::mt19937_64& rng) {
  if (p.contains("amplitudes")) {
    auto a = complex_array(p["amplitudes"]);
    double total = 0.0;
    for (auto x : a) total += std::norm(x);
    for (auto& x : a) x /= std::sqrt(total);
    return a;
  }
  return random_amplitudes(p["outcomes"].get<std::size_t>(), rng);
}

using stats::format_number;

CheckResult at_most(std::string name, double value, double threshold, std::string detail = {}) {
  return CheckResult{std::move(name), value <= threshold, value, threshold, std::move(detail)};
}

CheckResult at_least(std::string name, double value, double threshold, std::string detail = {}) {
  return CheckResult{std::move(name), value >= threshold, value, threshold, std::move(detail)};
}

class OutputSink {
 public:
  explicit OutputSink(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    write_atomic(dir_ / name, content);
    files_.push_back(OutputFile{name, sha256_hex(content), content.size()});
  }
  const std::vector<OutputFile>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<OutputFile> files_;
};

void run_measure_chain(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  std::mt19937_64 rng(cfg.seed);
  const auto c = amplitudes_or_random(p, rng);
  const auto n = c.size();
  const auto env_qubits = p["env_qubits"].get<std::size_t>();
  const double coupling = p["coupling"].get<double>();
  const double t = p["time"].get<double>();

  const auto setup = build_position_detector(n, p["states_per_recorder"].get<std::size_t>());
  const auto psi = StateVector::normalized({n}, to_vector(c));

  const auto moved = transport_state(setup, psi);
  const auto recorders = recorder_weights(setup, moved);

  auto state = measure(prepare_measurement(setup, psi), setup);
  state = combine(state, CompositeState({observer_factor(setup)}, ready_state(n + 1)));
  const auto det = state.find(Role::detector);
  const Eigen::MatrixXcd det_before = reduced_density(state.state(), det);
  state = observe(state);
  const Eigen::MatrixXcd det_after = reduced_density(state.state(), det);
  const auto before_env = extract_branches(state, p["interference_tol"].get<double>());
  state = combine(state, CompositeState({Factor{"environment", Role::environment, std::size_t{1} << env_qubits, {}}},
                                        plus_environment(env_qubits)));
  state = decohere(state, env_qubits, coupling, t);
  const auto ens = extract_branches(state, p["interference_tol"].get<double>());

  double born_dev = 0.0;
  double recorder_dev = 0.0;
  double weight_change = 0.0;
  double closed_form_dev = 0.0;
  std::ostringstream csv;
  csv << "outcome,label,weight,born_weight,recorder_weight,max_interference\n";
  for (std::size_t b = 0; b < ens.branches().size(); ++b) {
    const auto& br = ens.branches()[b];
    const auto k = static_cast<std::size_t>(br.outcomes.front());
    born_dev = std::max(born_dev, std::abs(br.weight - std::norm(c[k])));
    recorder_dev = std::max(recorder_dev, std::abs(recorders[k] - std::norm(c[k])));
    weight_change = std::max(weight_change, std::abs(br.weight - before_env.branches()[b].weight));
    for (std::size_t b2 = 0; b2 < ens.branches().size(); ++b2) {
      if (b2 == b) continue;
      const auto k2 = static_cast<std::size_t>(ens.branches()[b2].outcomes.front());
      const double expected = dephasing_overlap(k + 1, k2 + 1, env_qubits, coupling, t);
      closed_form_dev = std::max(closed_form_dev, std::abs(ens.interference()(static_cast<Eigen::Index>(b),
                                                                               static_cast<Eigen::Index>(b2)) - expected));
    }
    csv << k << ',' << format_number(br.labels.front()) << ',' << format_number(br.weight) << ','
        << format_number(std::norm(c[k])) << ',' << format_number(recorders[k]) << ','
        << format_number(br.max_interference) << '\n';
  }
  sink.write("branches.csv", csv.str());

  report.checks.push_back(at_most("weights_sum_to_one", std::abs(ens.total_weight() - 1.0), 1e-10));
  report.checks.push_back(at_most("born_weight_identity", born_dev, 1e-10));
  report.checks.push_back(at_most("recorder_weights", recorder_dev, 1e-12));
  report.checks.push_back(at_most("detector_unchanged_by_observe", (det_after - det_before).cwiseAbs().maxCoeff(), 1e-10));
  report.checks.push_back(at_most("weights_conserved_by_decoherence", weight_change, 1e-10));
  report.checks.push_back(at_most("interference_closed_form", closed_form_dev, 1e-8));
  report.summary["decohered"] = ens.decohered();
  report.summary["branch_count"] = ens.branches().size();
}

void run_repeated(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  std::mt19937_64 rng(cfg.seed);
  const auto c = amplitudes_or_random(p, rng);
  const auto n = c.size();
  const auto trials = p["N"].get<std::size_t>();
  const auto setup = build_position_detector(n, 1);
  const auto psi = StateVector::normalized({n}, to_vector(c));

  auto state = measure(prepare_measurement(setup, psi, "_1"), setup);
  for (std::size_t i = 2; i <= trials; ++i) {
    const auto suffix = "_" + std::to_string(i);
    state = combine(state, prepare_measurement(setup, psi, suffix));
    state = measure(state, setup, "system" + suffix, "detector" + suffix);
  }
  const auto ens = extract_branches(state);

  double worst = 0.0;
  std::ostringstream csv;
  csv << "sequence,weight,product_weight\n";
  for (const auto& br : ens.branches()) {
    double expected = 1.0;
    std::string seq;
    for (auto o : br.outcomes) {
      expected *= std::norm(c[static_cast<std::size_t>(o)]);
      seq += std::to_string(o);
    }
    worst = std::max(worst, std::abs(br.weight - expected));
    csv << seq << ',' << format_number(br.weight) << ',' << format_number(expected) << '\n';
  }
  sink.write("sequences.csv", csv.str());
  report.checks.push_back(at_most("product_weights", worst, 1e-10));
  report.checks.push_back(at_most("weights_sum_to_one", std::abs(ens.total_weight() - 1.0), 1e-10));
  report.summary["branch_count"] = ens.branches().size();
}

std::string distribution_csv(const stats::FrequencyDistribution& d) {
  std::ostringstream out;
  stats::write_csv(out, d);
  return out.str();
}

struct FigureTable {
  std::string csv;
  std::vector<double> z;
  std::vector<double> curve;
  stats::CoarseHistogram hist;
};

FigureTable figure_table(const json& p) {
  const auto n = p["N"].get<std::size_t>();
  const double rho = p["rho_u"].get<double>();
  const double dz = p.contains("delta_z") ? p["delta_z"].get<double>() : 1.0 / std::sqrt(static_cast<double>(n));
  const auto curve = stats::relative_frequency_density(n, rho, p["points"].get<std::size_t>());
  auto hist = stats::coarse_histogram(n, rho, dz);
  std::ostringstream csv;
  csv << "z,rho_z_u,rho_dz_z_u\n";
  for (std::size_t i = 0; i < curve.support.size(); ++i) {
    const double z = curve.support[i];
    csv << format_number(z) << ',' << format_number(curve.density[i]) << ','
        << format_number(hist.histogram.density[hist.spec.locate(z)]) << '\n';
  }
  return FigureTable{csv.str(), curve.support, curve.density, std::move(hist)};
}

void run_frequency(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  const auto n = p["N"].get<std::size_t>();
  const double rho = p["rho_u"].get<double>();
  const auto table = figure_table(p);
  sink.write("figure.csv", table.csv);

  const auto exact = stats::exact_count_density(n, rho);
  sink.write("exact_count.csv", distribution_csv(exact));
  sink.write("histogram.csv", distribution_csv(table.hist.histogram));
  sink.write("bar_graph.csv", distribution_csv(table.hist.bar_graph));

  std::size_t imax = 0;
  double trapezoid = 0.0;
  for (std::size_t i = 0; i < table.z.size(); ++i) {
    if (table.curve[i] > table.curve[imax]) imax = i;
    if (i > 0) trapezoid += 0.5 * (table.curve[i] + table.curve[i - 1]) * (table.z[i] - table.z[i - 1]);
  }
  const double spacing = table.z[1] - table.z[0];
  const double peak = stats::relative_frequency_peak(n, rho);
  const auto dev = stats::histogram_gaussian_deviation(table.hist);
  report.checks.push_back(at_most("curve_peak_location", std::abs(table.z[imax] - rho), 0.5 * spacing));
  report.checks.push_back(at_most("curve_peak_value", std::abs(table.curve[imax] - peak) / peak, 5e-3));
  report.checks.push_back(at_most("curve_trapezoid_integral", std::abs(trapezoid - 1.0), 1e-6));
  report.checks.push_back(at_most("exact_count_normalized", std::abs(exact.total() - 1.0), 1e-10));
  report.checks.push_back(at_most("histogram_normalized", std::abs(table.hist.histogram.total() - 1.0), 1e-9));
  report.checks.push_back(at_most("histogram_vs_gaussian", dev.relative(), 2e-2, "relative to peak height"));
  report.summary["peak"] = peak;
  report.summary["central_mass"] = table.hist.central_mass();
}

void run_chebyshev(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  const auto n = p["N"].get<std::size_t>();
  const double rho = p["rho_u"].get<double>();
  const double dz = p["delta_z"].get<double>();
  const auto r = stats::chebyshev_bound_check(n, rho, dz);
  std::ostringstream csv;
  csv << "N,rho_u,delta_z,tail_mass,bound,holds\n"
      << n << ',' << format_number(rho) << ',' << format_number(dz) << ',' << format_number(r.tail_mass) << ','
      << format_number(r.bound) << ',' << (r.holds ? "true" : "false") << '\n';
  sink.write("chebyshev.csv", csv.str());
  report.checks.push_back(CheckResult{"chebyshev_bound", r.holds, r.tail_mass, r.bound, "tail_mass <= bound"});
  report.summary["tail_mass"] = r.tail_mass;
  report.summary["bound"] = r.bound;
  report.summary["holds"] = r.holds;
}

void run_estimator(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  const auto n = p["N"].get<std::size_t>();
  const double rho = p["rho_u"].get<double>();
  const double window = p["window"].get<double>();
  const auto d = stats::estimator_distribution(n, rho, stats::Prior::uniform, p["grid_points"].get<std::size_t>());
  sink.write("estimator.csv", distribution_csv(d));
  const double mass = stats::grid_mass(d, rho - window, rho + window);
  const double mean = stats::grid_mean(d);
  const double nn = static_cast<double>(n);
  // Mixed Beta(m+1, N-m+1) posteriors have mean (N rho + 1) / (N + 2).
  const double closed_mean = (nn * rho + 1.0) / (nn + 2.0);
  report.checks.push_back(at_most("estimator_normalized", std::abs(stats::grid_mass(d, 0.0, 1.0) - 1.0), 1e-6));
  report.checks.push_back(at_most("estimator_mean", std::abs(mean - closed_mean), 1e-6));
  if (p.contains("min_window_mass"))
    report.checks.push_back(at_least("window_mass", mass, p["min_window_mass"].get<double>()));
  report.summary["window_mass"] = mass;
  report.summary["mean"] = mean;
}

void run_envariance(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  std::mt19937_64 rng(cfg.seed);
  cplx c1{1.0 / std::numbers::sqrt2, 0.0};
  cplx c2 = std::polar(1.0 / std::numbers::sqrt2, p["phase"].get<double>());
  if (p.contains("c1")) {
    c1 = *as_complex(p["c1"]);
    c2 = *as_complex(p["c2"]);
  }
  const auto e = p["env_dim"].get<std::size_t>();
  const auto trials = p["trials"].get<std::size_t>();
  const bool equal = std::abs(std::abs(c1) - std::abs(c2)) <= 1e-12;

  std::ostringstream csv;
  csv << "trial,distance\n";
  double worst = 0.0;
  double least = INFINITY;
  std::normal_distribution<double> g;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Eigen::MatrixXcd m(static_cast<Eigen::Index>(e), 2);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {g(rng), g(rng)};
    const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
    const Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(e), 2);
    const auto setup = make_envariance_setup(c1, c2, q.col(0), q.col(1));
    const double dist = envariance_check(setup);
    worst = std::max(worst, dist);
    least = std::min(least, dist);
    csv << trial << ',' << format_number(dist) << '\n';
  }
  sink.write("envariance.csv", csv.str());
  if (equal)
    report.checks.push_back(at_most("swap_invariance", worst, 1e-10, "|c1| = |c2|"));
  else
    report.checks.push_back(
        CheckResult{"swap_detects_unequal_weights", least > 1e-10, least, 1e-10, "|c1| != |c2|: distance must be > 0"});
  report.summary["max_distance"] = worst;
  report.summary["equal_magnitudes"] = equal;
}

void run_wavepacket(const ExperimentConfig& cfg, RunReport& report, OutputSink& sink) {
  const auto& p = cfg.parameters;
  const wave::Grid grid{p["x_min"].get<double>(), p["x_max"].get<double>(), p["n_points"].get<std::size_t>()};
  const double omega = p["omega"].get<double>();
  const double force = p["force"].get<double>();
  const double dt = p["dt"].get<double>();
  const auto steps = p["steps"].get<std::size_t>();
  const double sigma = p["sigma"].get<double>();
  std::vector<double> potential = omega > 0.0 ? wave::harmonic_potential(grid, omega)
                                  : force != 0.0 ? wave::linear_potential(grid, force)
                                                 : std::vector<double>(grid.n_points, 0.0);
  const auto initial = wave::gaussian_packet(grid, p["x0"].get<double>(), sigma, p["k0"].get<double>(), potential);

  std::ostringstream obs;
  obs << "step,t,norm,mean_x,width\n";
  auto record = [&](std::size_t step, const wave::GridState& s) {
    obs << step << ',' << format_number(dt * static_cast<double>(step)) << ',' << format_number(s.norm_squared()) << ','
        << format_number(s.mean_position()) << ',' << format_number(s.width()) << '\n';
  };
  record(0, initial);
  double max_drift = 0.0;
  std::optional<wave::GridState> previous;
  const auto final_state = wave::propagate(initial, dt, steps, [&](std::size_t step, const wave::GridState& s) {
    max_drift = std::max(max_drift, std::abs(s.amplitudes().squaredNorm() * grid.dx() - 1.0));
    if (step == steps - 1) previous = s;
    record(step, s);
  });
  if (!previous) previous = initial;

  std::ostringstream a, b;
  wave::write_snapshot_csv(a, initial);
  wave::write_snapshot_csv(b, final_state);
  sink.write("initial.csv", a.str());
  sink.write("final.csv", b.str());
  sink.write("observables.csv", obs.str());

  report.checks.push_back(at_most("norm_drift", max_drift, 1e-8));
  const double dx = grid.dx();
  report.checks.push_back(at_most("continuity_residual", wave::continuity_residual(*previous, final_state, dt),
                                  wave::kContinuityConstant * (dx * dx + dt * dt)));
  if (omega == 0.0 && force == 0.0) {
    const double expected = wave::free_packet_width(sigma, dt * static_cast<double>(steps));
    report.checks.push_back(at_most("free_spreading", std::abs(final_state.width() - expected) / expected, 1e-4));
  }
  if (force != 0.0) {
    const auto e = wave::ehrenfest_check(initial.with_potential({}), force, dt * static_cast<double>(steps));
    report.checks.push_back(at_most("ehrenfest", e.max_deviation, 1e-5));
  }
  report.summary["final_mean_x"] = final_state.mean_position();
  report.summary["final_width"] = final_state.width();
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "experiment" && key != "parameters" && key != "seed" && key != "output_dir")
      throw UsageError("unknown config key '" + key + "'");
  if (!doc.contains("experiment") || !doc["experiment"].is_string())
    throw UsageError("config key 'experiment' is required and must be a string");

  ExperimentConfig cfg;
  const auto name = doc["experiment"].get<std::string>();
  bool found = false;
  for (const auto& [kind, _] : schemas())
    if (to_string(kind) == name) {
      cfg.experiment = kind;
      found = true;
    }
  if (!found) throw UsageError("unknown experiment '" + name + "'");

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<std::int64_t>() >= 0))
      throw UsageError("config key 'seed' must be a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw UsageError("config key 'output_dir' must be a string");
    cfg.output_dir = doc["output_dir"].get<std::string>();
  }

  const json params = doc.value("parameters", json::object());
  if (!params.is_object()) throw UsageError("config key 'parameters' must be an object");
  const auto& schema = schemas().at(cfg.experiment);
  for (const auto& [key, _] : params.items()) {
    const bool known = std::any_of(schema.begin(), schema.end(), [&](const ParamSpec& s) { return s.name == key; });
    if (!known) throw UsageError("unknown parameter '" + key + "' for experiment '" + name + "'");
  }
  for (const auto& spec : schema) {
    if (params.contains(spec.name)) {
      cfg.parameters[spec.name] = validate_param(spec, params[spec.name]);
    } else if (spec.required) {
      throw UsageError("missing required parameter '" + spec.name + "' for experiment '" + name + "'");
    } else if (!spec.fallback.is_null()) {
      cfg.parameters[spec.name] = spec.fallback;
    }
  }
  validate_relations(cfg.experiment, cfg.parameters);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

bool RunReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

json RunReport::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["config"] = config;
  j["wall_seconds"] = wall_seconds;
  j["passed"] = passed();
  j["checks"] = json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold},
                           {"detail", c.detail}});
  j["outputs"] = json::array();
  for (const auto& f : outputs) j["outputs"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["summary"] = summary;
  return j;
}

RunReport run(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.experiment = to_string(config.experiment);
  report.config = {{"experiment", report.experiment}, {"parameters", config.parameters}, {"seed", config.seed},
                   {"output_dir", config.output_dir.string()}};
  OutputSink sink(config.output_dir);

  static const std::map<ExperimentKind, std::function<void(const ExperimentConfig&, RunReport&, OutputSink&)>> runners{
      {ExperimentKind::measure_chain, run_measure_chain}, {ExperimentKind::repeated, run_repeated},
      {ExperimentKind::frequency, run_frequency},         {ExperimentKind::chebyshev, run_chebyshev},
      {ExperimentKind::estimator, run_estimator},         {ExperimentKind::envariance, run_envariance},
      {ExperimentKind::wavepacket, run_wavepacket}};
  runners.at(config.experiment)(config, report, sink);

  report.outputs = sink.files();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_atomic(config.output_dir / "report.json", report.to_json().dump(2) + "\n");
  return report;
}

fs::path emit_figure_table(const ExperimentConfig& config) {
  if (config.experiment != ExperimentKind::frequency)
    throw UsageError("emit_figure_table() requires experiment=frequency");
  const auto table = figure_table(config.parameters);
  fs::create_directories(config.output_dir);
  const auto path = config.output_dir / "figure.csv";
  write_atomic(path, table.csv);
  return path;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

void write_atomic(const fs::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace everett::lab
