#pragma once

// Measurement chain: transport to particle recorders, detector record,
// observer copy, dephasing environment and branch decomposition.
//
// Detector and observer factors of an n-outcome measurement have dimension
// n + 1. Basis index 0 is the ready state (nothing registered); index k >= 1
// records outcome k - 1.

#include "everett/hilbert.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace everett {

enum class Role { system, detector, observer, environment };

std::string to_string(Role role);

struct Factor {
  std::string name;
  Role role = Role::system;
  std::size_t dim = 1;
  /// For detector/observer factors: B-eigenvalue recorded by basis index k + 1.
  std::vector<double> record_values;
};

class CompositeState {
 public:
  CompositeState(std::vector<Factor> factors, StateVector state);

  const std::vector<Factor>& factors() const { return factors_; }
  const StateVector& state() const { return state_; }

  /// Index of the factor with this name; empty name selects the first with the role.
  std::size_t find(Role role, const std::string& name = {}) const;
  std::vector<std::size_t> all(Role role) const;

  CompositeState with_state(StateVector state) const { return CompositeState(factors_, std::move(state)); }

 private:
  std::vector<Factor> factors_;
  StateVector state_;
};

/// Appends the factors (and tensor product) of `b` after those of `a`.
CompositeState combine(const CompositeState& a, const CompositeState& b, const Tolerances& tol = {});

struct RecorderBlock {
  /// Recorder index, or empty for the outside region.
  std::optional<std::size_t> recorder;
  double y_value = 0.0;
  /// B-eigenvalue assigned to this recorder (unused for outside).
  double b_value = 0.0;
  std::vector<std::size_t> y_indices;
};

struct MeasurementSetup {
  OperatorMatrix b_op;       // on the measured system, diagonal in its basis
  OperatorMatrix transport;  // U on the position space
  OperatorMatrix y_op;       // position detector
  OperatorMatrix a_op;       // U^dagger Y U
  std::vector<RecorderBlock> recorder_map;  // recorders first, outside last
  std::optional<OperatorMatrix> kick;       // |b>' = kick |b>; identity when empty

  std::size_t outcome_count() const { return b_op.dim(); }
  std::size_t position_dim() const { return y_op.dim(); }
  std::vector<double> b_values() const;
  /// |a_b> = U^dagger |y_b>, the A-eigenstate entering recorder b.
  Eigen::VectorXcd a_state(std::size_t outcome) const;
};

struct PositionDetectorOptions {
  /// Defaults to 0, 1, ..., recorder_count - 1.
  std::vector<double> b_values;
  /// U = exp(-i H_e t) with H_e a nearest-neighbour hopping chain.
  double transport_time = 0.7;
  double hopping = 1.0;
};

MeasurementSetup build_position_detector(std::size_t recorder_count, std::size_t states_per_recorder,
                                         const PositionDetectorOptions& options = {},
                                         const Tolerances& tol = {});

struct SetupDiagnostics {
  double a_hermiticity = 0.0;        // max |A - A^dagger|
  double eigenstate_transport = 0.0; // max ||Y U a - lambda U a|| over A-eigenvectors
  double spectrum_mismatch = 0.0;    // max |spec(A) - spec(Y)| sorted
};

SetupDiagnostics diagnose(const MeasurementSetup& setup);

/// sum_b c_b U|a_b>. Accepts B-basis coefficients (size = outcome count) or a
/// position-space state lying in the span of the |a_b>.
StateVector transport_state(const MeasurementSetup& setup, const StateVector& psi, const Tolerances& tol = {});

/// Squared norm in each recorder block, outside region last.
std::vector<double> recorder_weights(const MeasurementSetup& setup, const StateVector& position_state);

/// Fresh factors: system (prepared in psi) and a ready detector.
CompositeState prepare_measurement(const MeasurementSetup& setup, const StateVector& psi,
                                   const std::string& suffix = {}, const Tolerances& tol = {});
Factor observer_factor(const MeasurementSetup& setup, const std::string& name = "observer");
StateVector ready_state(std::size_t dim);
StateVector plus_environment(std::size_t env_qubits);

/// Dense form of the record unitary |b>|M_k> -> |b>|M_{(k+b+1) mod (n+1)}>.
OperatorMatrix measurement_unitary(const MeasurementSetup& setup);

CompositeState measure(const CompositeState& state, const MeasurementSetup& setup,
                       const std::string& system = {}, const std::string& detector = {},
                       const Tolerances& tol = {});

CompositeState observe(const CompositeState& state, const std::string& detector = {},
                       const std::string& observer = {}, const Tolerances& tol = {});

/// Dephasing bath: H = coupling * L_record (x) sum_k sigma_z^(k), where L_record
/// takes the detector basis index as its value.
CompositeState decohere(const CompositeState& state, std::size_t env_qubits, double coupling, double t,
                        const std::string& detector = {}, const Tolerances& tol = {});

/// |<eps_a|eps_b>| for two record labels after dephasing, from single-qubit
/// evolution raised to the number of environment qubits.
double dephasing_overlap(std::size_t label_a, std::size_t label_b, std::size_t env_qubits, double coupling,
                         double t);

struct BranchRecord {
  std::vector<int> outcomes;      // per detector factor; -1 when still ready
  std::vector<double> labels;     // B-eigenvalues, NaN when still ready
  double weight = 0.0;
  double max_interference = 0.0;  // largest overlap with any other branch
};

class BranchEnsemble {
 public:
  BranchEnsemble(std::shared_ptr<const CompositeState> source, std::vector<BranchRecord> branches,
                 Eigen::MatrixXd interference, double interference_tol);

  const std::vector<BranchRecord>& branches() const { return branches_; }
  const Eigen::MatrixXd& interference() const { return interference_; }
  bool decohered() const { return decohered_; }
  double interference_tol() const { return interference_tol_; }
  double total_weight() const;

  /// Renormalized projection of the source state onto branch i.
  CompositeState branch_state(std::size_t i) const;

 private:
  std::shared_ptr<const CompositeState> source_;
  std::vector<BranchRecord> branches_;
  Eigen::MatrixXd interference_;
  double interference_tol_;
  bool decohered_ = false;
};

BranchEnsemble extract_branches(const CompositeState& state, double interference_tol = 1e-3);

struct EnvarianceSetup {
  cplx c1;
  cplx c2;
  double phase = 0.0;
  Eigen::VectorXcd env1;
  Eigen::VectorXcd env2;
  OperatorMatrix swap_unitary;  // on system (2) (x) environment
  StateVector state;            // c1|1>|eps1> + c2|2>|eps2>, normalized
};

/// eps1, eps2 must be orthonormal vectors of equal dimension >= 2.
EnvarianceSetup make_envariance_setup(cplx c1, cplx c2, Eigen::VectorXcd eps1, Eigen::VectorXcd eps2,
                                      const Tolerances& tol = {});

/// ||U_e|Psi> - |Psi>||. Zero when |c1| = |c2|.
double envariance_check(const EnvarianceSetup& setup);

}  // namespace everett
