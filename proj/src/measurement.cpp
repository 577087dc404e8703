#include "everett/measurement.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>

namespace everett {

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::detector: return "detector";
    case Role::observer: return "observer";
    case Role::environment: return "environment";
  }
  return "unknown";
}

CompositeState::CompositeState(std::vector<Factor> factors, StateVector state)
    : factors_(std::move(factors)), state_(std::move(state)) {
  if (factors_.size() != state_.dims().size())
    throw ContractError("CompositeState: factor count does not match state rank");
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].dim != state_.dims()[i])
      throw ContractError("CompositeState: factor '" + factors_[i].name + "' dimension mismatch");
}

std::size_t CompositeState::find(Role role, const std::string& name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.role == role && (name.empty() || f.name == name)) return i;
  }
  throw ContractError("no " + to_string(role) + " factor" + (name.empty() ? "" : " named '" + name + "'"));
}

std::vector<std::size_t> CompositeState::all(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].role == role) out.push_back(i);
  return out;
}

CompositeState combine(const CompositeState& a, const CompositeState& b, const Tolerances& tol) {
  auto factors = a.factors();
  factors.insert(factors.end(), b.factors().begin(), b.factors().end());
  return CompositeState(std::move(factors), tensor(a.state(), b.state(), tol));
}

std::vector<double> MeasurementSetup::b_values() const {
  std::vector<double> out;
  for (const auto& block : recorder_map)
    if (block.recorder) out.push_back(block.b_value);
  return out;
}

Eigen::VectorXcd MeasurementSetup::a_state(std::size_t outcome) const {
  const auto& block = recorder_map.at(outcome);
  if (!block.recorder) throw ContractError("a_state(): outside region has no outcome");
  const auto p = static_cast<Eigen::Index>(position_dim());
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(p);
  y[static_cast<Eigen::Index>(block.y_indices.front())] = 1.0;
  return transport.entries().adjoint() * y;
}

MeasurementSetup build_position_detector(std::size_t recorder_count, std::size_t states_per_recorder,
                                         const PositionDetectorOptions& options, const Tolerances& tol) {
  if (recorder_count == 0) throw ContractError("recorder_count must be at least 1");
  if (states_per_recorder == 0) throw ContractError("states_per_recorder must be at least 1");
  std::vector<double> b_values = options.b_values;
  if (b_values.empty())
    for (std::size_t r = 0; r < recorder_count; ++r) b_values.push_back(static_cast<double>(r));
  if (b_values.size() != recorder_count) throw ContractError("one B-eigenvalue per recorder is required");
  {
    auto sorted = b_values;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ContractError("B-eigenvalues must be distinct");
  }

  const std::size_t dims[] = {recorder_count, states_per_recorder};
  const auto p = checked_product(dims, 1, tol.max_dimension) + 1;
  const auto pi = static_cast<Eigen::Index>(p);

  std::vector<RecorderBlock> map;
  std::vector<double> y_diag(p, 0.0);
  for (std::size_t r = 0; r < recorder_count; ++r) {
    RecorderBlock block{r, static_cast<double>(r + 1), b_values[r], {}};
    for (std::size_t s = 0; s < states_per_recorder; ++s) {
      const auto idx = r * states_per_recorder + s;
      y_diag[idx] = block.y_value;
      block.y_indices.push_back(idx);
    }
    map.push_back(std::move(block));
  }
  map.push_back(RecorderBlock{std::nullopt, 0.0, 0.0, {p - 1}});

  Eigen::MatrixXcd he = Eigen::MatrixXcd::Zero(pi, pi);
  for (Eigen::Index i = 0; i + 1 < pi; ++i) he(i, i + 1) = he(i + 1, i) = -options.hopping;
  auto u = unitary_from_generator(OperatorMatrix(he, tol), options.transport_time, tol);
  if (!u.is_unitary()) throw ContractError("transport is not unitary");
  auto y = OperatorMatrix::diagonal(y_diag);
  Eigen::MatrixXcd a = u.entries().adjoint() * y.entries() * u.entries();
  a = 0.5 * (a + a.adjoint()).eval();

  return MeasurementSetup{OperatorMatrix::diagonal(b_values), std::move(u), std::move(y),
                          OperatorMatrix(std::move(a), tol), std::move(map), std::nullopt};
}

SetupDiagnostics diagnose(const MeasurementSetup& setup) {
  SetupDiagnostics d;
  const Eigen::MatrixXcd a = setup.transport.entries().adjoint() * setup.y_op.entries() * setup.transport.entries();
  d.a_hermiticity = (a - a.adjoint()).cwiseAbs().maxCoeff();
  const auto sa = spectral(setup.a_op, 1e-9);
  const auto sy = spectral(setup.y_op, 1e-9);
  d.spectrum_mismatch = (sa.eigenvalues - sy.eigenvalues).cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < sa.eigenvalues.size(); ++i) {
    const Eigen::VectorXcd moved = setup.transport.entries() * sa.eigenvectors.col(i);
    const Eigen::VectorXcd resid = setup.y_op.entries() * moved - sa.eigenvalues[i] * moved;
    d.eigenstate_transport = std::max(d.eigenstate_transport, resid.norm());
  }
  return d;
}

StateVector transport_state(const MeasurementSetup& setup, const StateVector& psi, const Tolerances& tol) {
  const auto n = setup.outcome_count();
  const auto p = static_cast<Eigen::Index>(setup.position_dim());
  Eigen::VectorXcd position = Eigen::VectorXcd::Zero(p);
  if (psi.size() == n) {
    for (std::size_t b = 0; b < n; ++b) position += psi[b] * setup.a_state(b);
  } else if (psi.size() == setup.position_dim()) {
    Eigen::VectorXcd projected = Eigen::VectorXcd::Zero(p);
    for (std::size_t b = 0; b < n; ++b) {
      const auto ab = setup.a_state(b);
      projected += ab.dot(psi.amplitudes()) * ab;
    }
    if ((psi.amplitudes() - projected).norm() > tol.unitarity)
      throw ContractError("transport_state(): state lies outside the span of the measured eigenstates");
    position = psi.amplitudes();
  } else {
    throw ContractError("transport_state(): state dimension matches neither outcomes nor position space");
  }
  Eigen::VectorXcd out = setup.transport.entries() * position;
  return StateVector::normalized({setup.position_dim()}, std::move(out), 1, tol);
}

std::vector<double> recorder_weights(const MeasurementSetup& setup, const StateVector& position_state) {
  if (position_state.size() != setup.position_dim())
    throw ContractError("recorder_weights(): not a position-space state");
  std::vector<double> out;
  for (const auto& block : setup.recorder_map) {
    double w = 0.0;
    for (auto i : block.y_indices) w += std::norm(position_state[i]);
    out.push_back(w);
  }
  return out;
}

StateVector ready_state(std::size_t dim) { return StateVector::basis({dim}, 0); }

StateVector plus_environment(std::size_t env_qubits) {
  if (env_qubits >= 8 * sizeof(std::size_t) - 1) throw CapacityError("too many environment qubits");
  const std::size_t dim = std::size_t{1} << env_qubits;
  const std::size_t dims[] = {dim};
  checked_product(dims, 1, Tolerances{}.max_dimension);
  Eigen::VectorXcd amps = Eigen::VectorXcd::Constant(static_cast<Eigen::Index>(dim), 1.0);
  return StateVector::normalized({dim}, std::move(amps));
}

CompositeState prepare_measurement(const MeasurementSetup& setup, const StateVector& psi,
                                   const std::string& suffix, const Tolerances& tol) {
  const auto n = setup.outcome_count();
  if (psi.size() != n || psi.dims().size() != 1)
    throw ContractError("prepare_measurement(): psi must be given in the B-eigenbasis");
  std::vector<Factor> factors{Factor{"system" + suffix, Role::system, n, {}},
                              Factor{"detector" + suffix, Role::detector, n + 1, setup.b_values()}};
  return CompositeState(std::move(factors), tensor(psi, ready_state(n + 1), tol));
}

Factor observer_factor(const MeasurementSetup& setup, const std::string& name) {
  return Factor{name, Role::observer, setup.outcome_count() + 1, setup.b_values()};
}

OperatorMatrix measurement_unitary(const MeasurementSetup& setup) {
  const auto n = setup.outcome_count();
  const auto dim = static_cast<Eigen::Index>(n * (n + 1));
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k <= n; ++k) {
      const auto to = (k + b + 1) % (n + 1);
      u(static_cast<Eigen::Index>(b * (n + 1) + to), static_cast<Eigen::Index>(b * (n + 1) + k)) = 1.0;
    }
  return OperatorMatrix(std::move(u));
}

namespace {

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> strides(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) strides[i - 1] = strides[i] * dims[i];
  return strides;
}

std::size_t digit(std::size_t flat, std::size_t stride, std::size_t dim) { return (flat / stride) % dim; }

// Mass carried by basis states where `factor` is not in its ready state.
double non_ready_weight(const StateVector& s, std::size_t factor) {
  const auto strides = strides_of(s.dims());
  double w = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (digit(i, strides[factor], s.dims()[factor]) != 0) w += std::norm(s[i]);
  return w;
}

// new[.., c, .., (t + shift(c)) mod dim_t, ..] = old[.., c, .., t, ..]
template <class Shift>
Eigen::VectorXcd controlled_shift(const StateVector& s, std::size_t control, std::size_t target, Shift shift) {
  const auto& dims = s.dims();
  const auto strides = strides_of(dims);
  const auto dt = dims[target];
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(s.amplitudes().size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const cplx a = s[i];
    if (a == cplx{}) continue;
    const auto c = digit(i, strides[control], dims[control]);
    const auto t = digit(i, strides[target], dt);
    const auto t2 = (t + shift(c)) % dt;
    const auto j = i + t2 * strides[target] - t * strides[target];
    out[static_cast<Eigen::Index>(j)] = a;
  }
  return out;
}

}  // namespace

CompositeState measure(const CompositeState& state, const MeasurementSetup& setup, const std::string& system,
                       const std::string& detector, const Tolerances& tol) {
  const auto sys = state.find(Role::system, system);
  const auto det = state.find(Role::detector, detector);
  const auto n = setup.outcome_count();
  const auto& s = state.state();
  if (s.dims()[sys] != n) throw ContractError("measure(): system dimension does not match setup");
  if (s.dims()[det] != n + 1) throw ContractError("measure(): detector dimension does not match setup");
  if (non_ready_weight(s, det) > tol.equality) throw ContractError("measure(): detector is not in its ready state");

  auto shifted = controlled_shift(s, sys, det, [](std::size_t b) { return b + 1; });
  auto out = StateVector::normalized(s.dims(), std::move(shifted), s.component_count(), tol);
  if (setup.kick) out = apply_local(out, *setup.kick, sys, tol);

  auto factors = state.factors();
  factors[det].record_values = setup.b_values();
  return CompositeState(std::move(factors), std::move(out));
}

CompositeState observe(const CompositeState& state, const std::string& detector, const std::string& observer,
                       const Tolerances& tol) {
  const auto det = state.find(Role::detector, detector);
  const auto obs = state.find(Role::observer, observer);
  const auto& s = state.state();
  if (s.dims()[det] != s.dims()[obs]) throw ContractError("observe(): observer and detector dimensions differ");
  if (non_ready_weight(s, obs) > tol.equality) throw ContractError("observe(): observer is not in its ready state");
  auto copied = controlled_shift(s, det, obs, [](std::size_t k) { return k; });
  auto factors = state.factors();
  factors[obs].record_values = factors[det].record_values;
  return CompositeState(std::move(factors),
                        StateVector::normalized(s.dims(), std::move(copied), s.component_count(), tol));
}

CompositeState decohere(const CompositeState& state, std::size_t env_qubits, double coupling, double t,
                        const std::string& detector, const Tolerances& tol) {
  if (env_qubits == 0) return state;
  const auto det = state.find(Role::detector, detector);
  const auto env = state.find(Role::environment);
  const auto& s = state.state();
  const auto& dims = s.dims();
  if (env_qubits >= 8 * sizeof(std::size_t) - 1 || dims[env] != (std::size_t{1} << env_qubits))
    throw ContractError("decohere(): environment factor must have dimension 2^env_qubits");
  const auto strides = strides_of(dims);
  const auto nq = static_cast<int>(env_qubits);

  Eigen::VectorXcd out = s.amplitudes();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto label = static_cast<double>(digit(i, strides[det], dims[det]));
    const auto e = digit(i, strides[env], dims[env]);
    // sum_k sigma_z^(k): +1 per zero bit, -1 per set bit.
    const double z = static_cast<double>(nq - 2 * std::popcount(e));
    out[static_cast<Eigen::Index>(i)] *= std::polar(1.0, -coupling * label * z * t);
  }
  return state.with_state(StateVector::normalized(dims, std::move(out), s.component_count(), tol));
}

double dephasing_overlap(std::size_t label_a, std::size_t label_b, std::size_t env_qubits, double coupling,
                         double t) {
  const auto plus = plus_environment(1);
  auto qubit_state = [&](std::size_t label) {
    const double g = coupling * static_cast<double>(label);
    const double diag[] = {g, -g};
    return evolve(plus, OperatorMatrix::diagonal(diag), t);
  };
  const double single = std::abs(inner(qubit_state(label_a), qubit_state(label_b)));
  return std::pow(single, static_cast<double>(env_qubits));
}

BranchEnsemble::BranchEnsemble(std::shared_ptr<const CompositeState> source, std::vector<BranchRecord> branches,
                               Eigen::MatrixXd interference, double interference_tol)
    : source_(std::move(source)),
      branches_(std::move(branches)),
      interference_(std::move(interference)),
      interference_tol_(interference_tol) {
  decohered_ = true;
  for (Eigen::Index i = 0; i < interference_.rows(); ++i)
    for (Eigen::Index j = 0; j < interference_.cols(); ++j)
      if (i != j && interference_(i, j) > interference_tol_) decohered_ = false;
}

double BranchEnsemble::total_weight() const {
  double w = 0.0;
  for (const auto& b : branches_) w += b.weight;
  return w;
}

CompositeState BranchEnsemble::branch_state(std::size_t i) const {
  const auto& record = branches_.at(i);
  const auto& s = source_->state();
  const auto dets = source_->all(Role::detector);
  const auto strides = strides_of(s.dims());
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(s.amplitudes().size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    bool match = true;
    for (std::size_t d = 0; d < dets.size() && match; ++d)
      match = static_cast<int>(digit(k, strides[dets[d]], s.dims()[dets[d]])) - 1 == record.outcomes[d];
    if (match) out[static_cast<Eigen::Index>(k)] = s[k];
  }
  return source_->with_state(StateVector::normalized(s.dims(), std::move(out), s.component_count()));
}

BranchEnsemble extract_branches(const CompositeState& state, double interference_tol) {
  const auto& s = state.state();
  const auto& dims = s.dims();
  const auto dets = state.all(Role::detector);
  if (dets.empty()) throw ContractError("extract_branches(): no detector factor carries record labels");
  const auto envs = state.all(Role::environment);
  const auto strides = strides_of(dims);

  const std::size_t env_dim = envs.empty() ? 1 : dims[envs.front()];
  const std::size_t env_stride = envs.empty() ? 1 : strides[envs.front()];

  auto key_of = [&](std::size_t flat) {
    std::size_t key = 0;
    for (auto d : dets) key = key * dims[d] + digit(flat, strides[d], dims[d]);
    return key;
  };
  auto row_of = [&](std::size_t flat) {
    return (flat / (env_stride * env_dim)) * env_stride + flat % env_stride;
  };
  auto col_of = [&](std::size_t flat) { return envs.empty() ? std::size_t{0} : digit(flat, env_stride, env_dim); };

  // Per branch: nonzero rows of the (rest x environment) amplitude matrix.
  struct Accum {
    double weight = 0.0;
    std::map<std::size_t, std::size_t> rows;
  };
  std::map<std::size_t, Accum> acc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const cplx a = s[i];
    if (a == cplx{}) continue;
    auto& slot = acc[key_of(i)];
    slot.weight += std::norm(a);
    slot.rows.emplace(row_of(i), slot.rows.size());
  }

  std::vector<std::size_t> keys;
  std::vector<Eigen::MatrixXcd> blocks;
  for (auto& [key, slot] : acc) {
    keys.push_back(key);
    blocks.emplace_back(Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(slot.rows.size()),
                                               static_cast<Eigen::Index>(env_dim)));
  }
  {
    std::map<std::size_t, std::size_t> slot_of;
    for (std::size_t b = 0; b < keys.size(); ++b) slot_of[keys[b]] = b;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const cplx a = s[i];
      if (a == cplx{}) continue;
      const auto b = slot_of[key_of(i)];
      const auto r = acc[keys[b]].rows.at(row_of(i));
      blocks[b](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_of(i))) = a;
    }
  }

  const auto nb = keys.size();
  std::vector<BranchRecord> records(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    auto& rec = records[b];
    rec.weight = acc[keys[b]].weight;
    auto key = keys[b];
    rec.outcomes.assign(dets.size(), -1);
    rec.labels.assign(dets.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t d = dets.size(); d-- > 0;) {
      const auto k = key % dims[dets[d]];
      key /= dims[dets[d]];
      if (k == 0) continue;
      rec.outcomes[d] = static_cast<int>(k - 1);
      const auto& values = state.factors()[dets[d]].record_values;
      if (k - 1 < values.size()) rec.labels[d] = values[k - 1];
    }
  }

  // ||M_b M_c^dagger||_F / sqrt(w_b w_c), via whichever Gram form is smaller.
  std::vector<Eigen::MatrixXcd> grams(nb);
  const auto ed = static_cast<Eigen::Index>(env_dim);
  Eigen::MatrixXd interference = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t c = b + 1; c < nb; ++c) {
      double frob = 0.0;
      if (blocks[b].rows() * blocks[c].rows() <= ed * ed) {
        frob = (blocks[b] * blocks[c].adjoint()).norm();
      } else {
        if (grams[b].size() == 0) grams[b] = blocks[b].adjoint() * blocks[b];
        if (grams[c].size() == 0) grams[c] = blocks[c].adjoint() * blocks[c];
        frob = std::sqrt(std::max(0.0, grams[b].cwiseProduct(grams[c].transpose()).sum().real()));
      }
      const double v = frob / std::sqrt(records[b].weight * records[c].weight);
      interference(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) = v;
      interference(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b)) = v;
      records[b].max_interference = std::max(records[b].max_interference, v);
      records[c].max_interference = std::max(records[c].max_interference, v);
    }

  return BranchEnsemble(std::make_shared<const CompositeState>(state), std::move(records), std::move(interference),
                        interference_tol);
}

EnvarianceSetup make_envariance_setup(cplx c1, cplx c2, Eigen::VectorXcd eps1, Eigen::VectorXcd eps2,
                                      const Tolerances& tol) {
  const auto e = eps1.size();
  if (e < 2 || eps2.size() != e) throw ContractError("environment states must share a dimension >= 2");
  if (std::abs(eps1.squaredNorm() - 1.0) > tol.unitarity || std::abs(eps2.squaredNorm() - 1.0) > tol.unitarity ||
      std::abs(eps1.dot(eps2)) > tol.unitarity)
    throw ContractError("environment states must be orthonormal");

  const double phase = std::arg(c2) - std::arg(c1);
  const Eigen::MatrixXcd proj = eps1 * eps1.adjoint() + eps2 * eps2.adjoint();
  const Eigen::MatrixXcd env_u = Eigen::MatrixXcd::Identity(e, e) - proj +
                                 std::polar(1.0, phase) * eps2 * eps1.adjoint() +
                                 std::polar(1.0, -phase) * eps1 * eps2.adjoint();
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(2 * e, 2 * e);
  // System swap |1> <-> |2> tensored with the environment swap-and-phase.
  u.block(e, 0, e, e) = env_u;
  u.block(0, e, e, e) = env_u;
  OperatorMatrix swap(std::move(u), tol);
  if (!swap.is_unitary()) throw ContractError("envariance swap is not unitary");

  Eigen::VectorXcd psi(2 * e);
  psi.head(e) = c1 * eps1;
  psi.tail(e) = c2 * eps2;
  auto state = StateVector::normalized({2, static_cast<std::size_t>(e)}, std::move(psi), 1, tol);
  return EnvarianceSetup{c1, c2, phase, std::move(eps1), std::move(eps2), std::move(swap), std::move(state)};
}

double envariance_check(const EnvarianceSetup& setup) {
  const Eigen::VectorXcd moved = setup.swap_unitary.entries() * setup.state.amplitudes();
  return (moved - setup.state.amplitudes()).norm();
}

}  // namespace everett
