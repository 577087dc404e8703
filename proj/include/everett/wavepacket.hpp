#pragma once

// One-dimensional grid wavefunctions between hard walls.
//
// The grid has n interior points x_i = x_min + (i + 1) dx with
// dx = (x_max - x_min) / (n + 1); the wavefunction vanishes on both walls.
// Kinetic energy is represented exactly in the Dirichlet sine basis and the
// potential is diagonal in position, so H is a real symmetric matrix and
// time steps are exp(-i H dt / hbar) built from its eigendecomposition.

#include "everett/hilbert.hpp"

#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace everett::wave {

class NormDriftError : public std::runtime_error {
 public:
  NormDriftError(const std::string& what, std::size_t step, double drift)
      : std::runtime_error(what), step_(step), drift_(drift) {}
  std::size_t step() const { return step_; }
  double drift() const { return drift_; }

 private:
  std::size_t step_;
  double drift_;
};

struct Grid {
  double x_min = -1.0;
  double x_max = 1.0;
  std::size_t n_points = 0;

  double dx() const { return (x_max - x_min) / static_cast<double>(n_points + 1); }
  double x(std::size_t i) const { return x_min + static_cast<double>(i + 1) * dx(); }
  std::vector<double> points() const;
  void validate() const;
};

struct Units {
  double hbar = 1.0;
  double mass = 1.0;
};

class GridState {
 public:
  /// Rescales so that sum |psi_i|^2 dx = 1.
  GridState(Grid grid, Eigen::VectorXcd amplitudes, std::vector<double> potential = {}, Units units = {});

  const Grid& grid() const { return grid_; }
  const Eigen::VectorXcd& amplitudes() const { return amps_; }
  const std::vector<double>& potential() const { return potential_; }
  const Units& units() const { return units_; }
  double mass() const { return units_.mass; }

  GridState with_amplitudes(Eigen::VectorXcd amplitudes) const;
  GridState with_potential(std::vector<double> potential) const;

  std::vector<double> density() const;
  double norm_squared() const;  // sum |psi|^2 dx
  double mean_position() const;
  double width() const;         // standard deviation of rho

 private:
  Grid grid_;
  Eigen::VectorXcd amps_;
  std::vector<double> potential_;
  Units units_;
};

std::vector<double> harmonic_potential(const Grid& grid, double omega, double mass = 1.0);
std::vector<double> linear_potential(const Grid& grid, double force);

/// psi ~ exp(-(x - x0)^2 / (4 sigma^2) + i k0 x); sigma is the width of rho.
GridState gaussian_packet(const Grid& grid, double x0, double sigma, double k0, std::vector<double> potential = {},
                          Units units = {});

/// Width of a free Gaussian packet after time t.
double free_packet_width(double sigma0, double t, Units units = {});

class GridPropagator {
 public:
  GridPropagator(const Grid& grid, std::span<const double> potential, Units units = {});

  const Eigen::VectorXd& energies() const { return energies_; }
  const Eigen::MatrixXd& eigenvectors() const { return basis_; }
  const Eigen::MatrixXd& kinetic() const { return kinetic_; }
  /// exp(-i H dt / hbar) in the position basis.
  Eigen::MatrixXcd step_matrix(double dt) const;

 private:
  Grid grid_;
  Units units_;
  Eigen::MatrixXd kinetic_;
  Eigen::VectorXd energies_;
  Eigen::MatrixXd basis_;
};

/// Stationary state `level` (0 = ground) of the grid Hamiltonian.
GridState eigenstate(const Grid& grid, std::vector<double> potential, std::size_t level, Units units = {});
double eigenvalue(const Grid& grid, std::span<const double> potential, std::size_t level, Units units = {});

struct PropagationLimits {
  double per_step_drift = 1e-12;
  double cumulative_drift = 1e-8;
  bool require_edge_margin = true;  // mean +/- 5 sigma inside the walls
};

using StepObserver = std::function<void(std::size_t step, const GridState&)>;

/// Advances `steps` steps of size dt. Throws NormDriftError past the limits.
GridState propagate(const GridState& state, double dt, std::size_t steps, const StepObserver& observer = {},
                    const PropagationLimits& limits = {});

/// max_i |d rho/dt + d j/dx| at the midpoint time, using central differences.
double continuity_residual(const GridState& before, const GridState& after, double dt);

/// C in residual <= C (dx^2 + dt^2). Measured worst case 2.19 over Gaussian
/// packets with sigma >= 0.7, |k0| <= 2, omega <= 1 (hbar = m = 1).
inline constexpr double kContinuityConstant = 4.0;

/// integral rho U dx.
double perturbation_energy(const GridState& state, std::span<const double> perturbation);

struct EhrenfestResult {
  double max_deviation = 0.0;
  double x0 = 0.0;
  double v0 = 0.0;
  std::vector<double> times;
  std::vector<double> mean_positions;
};

/// Evolves under V = -F x and compares <x>(t) with x0 + v0 t + F t^2 / (2m).
EhrenfestResult ehrenfest_check(const GridState& state, double force, double t_max, std::size_t samples = 200);

/// Mass in cells where rho < threshold.
double nodal_exclusion(const GridState& state, double threshold);
/// Mass in cells whose centre lies within `radius` of x0.
double mass_near(const GridState& state, double x0, double radius);

inline constexpr std::size_t kMaxTwoParticlePoints = 256;

class TwoParticleGridState {
 public:
  /// amplitudes(i, j) = Psi(x_i, x_j); rescaled so sum |Psi|^2 dx^2 = 1.
  TwoParticleGridState(Grid grid, Eigen::MatrixXcd amplitudes);
  static TwoParticleGridState product(const GridState& a, const GridState& b);
  static TwoParticleGridState symmetrized(const GridState& a, const GridState& b);

  const Grid& grid() const { return grid_; }
  const Eigen::MatrixXcd& amplitudes() const { return amps_; }
  double norm_squared() const;
  TwoParticleGridState exchanged() const;

 private:
  Grid grid_;
  Eigen::MatrixXcd amps_;
};

/// rho(x) = 2 sum_{x2} |Psi(x, x2)|^2 dx; integrates to the particle number 2.
std::vector<double> single_particle_marginal(const TwoParticleGridState& state);
double integrate(const Grid& grid, std::span<const double> values);

/// Snapshot rows x,re,im,rho.
void write_snapshot_csv(std::ostream& out, const GridState& state);

}  // namespace everett::wave
