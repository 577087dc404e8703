#include "everett/wavepacket.hpp"

#include "everett/branch_stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace everett::wave {

std::vector<double> Grid::points() const {
  std::vector<double> xs(n_points);
  for (std::size_t i = 0; i < n_points; ++i) xs[i] = x(i);
  return xs;
}

void Grid::validate() const {
  if (n_points < 3) throw ContractError("grid needs at least three interior points");
  if (!(x_max > x_min)) throw ContractError("grid requires x_max > x_min");
}

namespace {

std::vector<double> zero_potential_if_empty(const Grid& grid, std::vector<double> v) {
  if (v.empty()) v.assign(grid.n_points, 0.0);
  if (v.size() != grid.n_points) throw ContractError("potential length differs from grid size");
  return v;
}

bool all_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Orthonormal Dirichlet sine vectors: column n-1 samples sin(n pi (x - x_min) / L).
Eigen::MatrixXd sine_basis(std::size_t n) {
  const auto ni = static_cast<Eigen::Index>(n);
  const double scale = std::sqrt(2.0 / static_cast<double>(n + 1));
  Eigen::MatrixXd s(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index k = 0; k < ni; ++k)
      s(i, k) = scale * std::sin(std::numbers::pi * static_cast<double>((i + 1) * (k + 1)) / static_cast<double>(n + 1));
  return s;
}

Eigen::VectorXd sine_energies(const Grid& grid, Units units) {
  const auto ni = static_cast<Eigen::Index>(grid.n_points);
  const double length = grid.x_max - grid.x_min;
  Eigen::VectorXd e(ni);
  for (Eigen::Index k = 0; k < ni; ++k) {
    const double wave = std::numbers::pi * static_cast<double>(k + 1) / length;
    e[k] = units.hbar * units.hbar * wave * wave / (2.0 * units.mass);
  }
  return e;
}

// D psi with psi = 0 on the walls.
Eigen::VectorXcd central_difference(const Eigen::VectorXcd& f, double dx) {
  const auto n = f.size();
  Eigen::VectorXcd d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const cplx right = i + 1 < n ? f[i + 1] : cplx{};
    const cplx left = i > 0 ? f[i - 1] : cplx{};
    d[i] = (right - left) / (2.0 * dx);
  }
  return d;
}

Eigen::VectorXd current(const GridState& s) {
  const auto& psi = s.amplitudes();
  const auto dpsi = central_difference(psi, s.grid().dx());
  Eigen::VectorXd j(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i)
    j[i] = s.units().hbar / s.units().mass * (std::conj(psi[i]) * dpsi[i]).imag();
  return j;
}

}  // namespace

GridState::GridState(Grid grid, Eigen::VectorXcd amplitudes, std::vector<double> potential, Units units)
    : grid_(grid), amps_(std::move(amplitudes)), units_(units) {
  grid_.validate();
  if (static_cast<std::size_t>(amps_.size()) != grid_.n_points)
    throw ContractError("amplitude count differs from grid size");
  if (!(units_.mass > 0.0) || !(units_.hbar > 0.0)) throw ContractError("mass and hbar must be positive");
  potential_ = zero_potential_if_empty(grid_, std::move(potential));
  const double n2 = amps_.squaredNorm() * grid_.dx();
  if (!(n2 > 0.0) || !std::isfinite(n2)) throw ContractError("cannot normalize a zero grid state");
  amps_ /= std::sqrt(n2);
}

GridState GridState::with_amplitudes(Eigen::VectorXcd amplitudes) const {
  return GridState(grid_, std::move(amplitudes), potential_, units_);
}

GridState GridState::with_potential(std::vector<double> potential) const {
  return GridState(grid_, amps_, std::move(potential), units_);
}

std::vector<double> GridState::density() const {
  std::vector<double> rho(static_cast<std::size_t>(amps_.size()));
  for (Eigen::Index i = 0; i < amps_.size(); ++i) rho[static_cast<std::size_t>(i)] = std::norm(amps_[i]);
  return rho;
}

double GridState::norm_squared() const { return amps_.squaredNorm() * grid_.dx(); }

double GridState::mean_position() const {
  const auto rho = density();
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += grid_.x(i) * rho[i];
  return s * grid_.dx();
}

double GridState::width() const {
  const auto rho = density();
  const double mean = mean_position();
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += (grid_.x(i) - mean) * (grid_.x(i) - mean) * rho[i];
  return std::sqrt(s * grid_.dx());
}

std::vector<double> harmonic_potential(const Grid& grid, double omega, double mass) {
  std::vector<double> v(grid.n_points);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * mass * omega * omega * grid.x(i) * grid.x(i);
  return v;
}

std::vector<double> linear_potential(const Grid& grid, double force) {
  std::vector<double> v(grid.n_points);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -force * grid.x(i);
  return v;
}

GridState gaussian_packet(const Grid& grid, double x0, double sigma, double k0, std::vector<double> potential,
                          Units units) {
  if (!(sigma > 0.0)) throw ContractError("packet width must be positive");
  grid.validate();
  Eigen::VectorXcd psi(static_cast<Eigen::Index>(grid.n_points));
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    const double x = grid.x(i);
    psi[static_cast<Eigen::Index>(i)] = std::exp(-(x - x0) * (x - x0) / (4.0 * sigma * sigma)) * std::polar(1.0, k0 * x);
  }
  return GridState(grid, std::move(psi), std::move(potential), units);
}

double free_packet_width(double sigma0, double t, Units units) {
  const double r = units.hbar * t / (2.0 * units.mass * sigma0 * sigma0);
  return sigma0 * std::sqrt(1.0 + r * r);
}

GridPropagator::GridPropagator(const Grid& grid, std::span<const double> potential, Units units)
    : grid_(grid), units_(units) {
  grid_.validate();
  if (potential.size() != grid_.n_points) throw ContractError("potential length differs from grid size");
  const auto s = sine_basis(grid_.n_points);
  const auto e = sine_energies(grid_, units_);
  kinetic_ = s * e.asDiagonal() * s.transpose();
  if (all_zero(potential)) {
    energies_ = e;
    basis_ = s;
    return;
  }
  Eigen::MatrixXd h = kinetic_;
  for (std::size_t i = 0; i < potential.size(); ++i) h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += potential[i];
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw ContractError("grid hamiltonian diagonalization failed");
  energies_ = solver.eigenvalues();
  basis_ = solver.eigenvectors();
}

Eigen::MatrixXcd GridPropagator::step_matrix(double dt) const {
  Eigen::VectorXcd phases(energies_.size());
  for (Eigen::Index k = 0; k < phases.size(); ++k) phases[k] = std::polar(1.0, -energies_[k] * dt / units_.hbar);
  const Eigen::MatrixXcd b = basis_.cast<cplx>();
  return b * phases.asDiagonal() * b.transpose();
}

GridState eigenstate(const Grid& grid, std::vector<double> potential, std::size_t level, Units units) {
  potential = zero_potential_if_empty(grid, std::move(potential));
  GridPropagator prop(grid, potential, units);
  if (level >= grid.n_points) throw ContractError("eigenstate level out of range");
  Eigen::VectorXd v = prop.eigenvectors().col(static_cast<Eigen::Index>(level));
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0) v = -v;
  return GridState(grid, v.cast<cplx>(), std::move(potential), units);
}

double eigenvalue(const Grid& grid, std::span<const double> potential, std::size_t level, Units units) {
  GridPropagator prop(grid, potential, units);
  if (level >= grid.n_points) throw ContractError("eigenvalue level out of range");
  return prop.energies()[static_cast<Eigen::Index>(level)];
}

GridState propagate(const GridState& state, double dt, std::size_t steps, const StepObserver& observer,
                    const PropagationLimits& limits) {
  if (limits.require_edge_margin) {
    const double mean = state.mean_position();
    const double w = state.width();
    if (mean - 5.0 * w <= state.grid().x_min || mean + 5.0 * w >= state.grid().x_max)
      throw ContractError("packet must stay at least 5 widths from the walls");
  }
  const GridPropagator prop(state.grid(), state.potential(), state.units());
  const auto u = prop.step_matrix(dt);
  const double dx = state.grid().dx();

  Eigen::VectorXcd psi = state.amplitudes();
  const double initial = psi.squaredNorm() * dx;
  double previous = initial;
  Eigen::VectorXcd next(psi.size());
  for (std::size_t step = 1; step <= steps; ++step) {
    next.noalias() = u * psi;
    psi.swap(next);
    const double now = psi.squaredNorm() * dx;
    if (std::abs(now - previous) > limits.per_step_drift)
      throw NormDriftError("norm drift per step exceeded at step " + std::to_string(step), step, now - previous);
    if (std::abs(now - initial) > limits.cumulative_drift)
      throw NormDriftError("cumulative norm drift exceeded at step " + std::to_string(step), step, now - initial);
    previous = now;
    if (observer) {
      // Observers see the raw evolved amplitudes; the state constructor's
      // renormalization is a no-op at this drift level.
      observer(step, state.with_amplitudes(psi));
    }
  }
  return state.with_amplitudes(std::move(psi));
}

double continuity_residual(const GridState& before, const GridState& after, double dt) {
  const auto& g = before.grid();
  if (g.n_points != after.grid().n_points || g.x_min != after.grid().x_min || g.x_max != after.grid().x_max)
    throw ContractError("continuity_residual(): snapshots live on different grids");
  if (!(dt > 0.0)) throw ContractError("continuity_residual(): dt must be positive");
  const double dx = g.dx();
  const auto rho0 = before.density();
  const auto rho1 = after.density();
  const Eigen::VectorXcd j0 = current(before).cast<cplx>();
  const Eigen::VectorXcd j1 = current(after).cast<cplx>();
  const auto dj0 = central_difference(j0, dx);
  const auto dj1 = central_difference(j1, dx);
  double worst = 0.0;
  for (std::size_t i = 0; i < rho0.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double r = (rho1[i] - rho0[i]) / dt + 0.5 * (dj0[k].real() + dj1[k].real());
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double perturbation_energy(const GridState& state, std::span<const double> perturbation) {
  if (perturbation.size() != state.grid().n_points) throw ContractError("perturbation length differs from grid size");
  const auto rho = state.density();
  std::vector<double> terms(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) terms[i] = rho[i] * perturbation[i];
  return stats::sum_descending(std::move(terms)) * state.grid().dx();
}

EhrenfestResult ehrenfest_check(const GridState& state, double force, double t_max, std::size_t samples) {
  if (!(t_max > 0.0) || samples == 0) throw ContractError("ehrenfest_check(): need t_max > 0 and samples > 0");
  const auto& g = state.grid();
  const auto driven = state.with_potential(linear_potential(g, force));
  const GridPropagator prop(g, driven.potential(), driven.units());

  // v0 = (i/hbar) <[H, X]> = -(2/hbar) Im <T psi | X psi>, X diagonal on the grid.
  const auto& psi = driven.amplitudes();
  Eigen::VectorXcd x_psi(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i) x_psi[i] = g.x(static_cast<std::size_t>(i)) * psi[i];
  const Eigen::VectorXcd t_psi = prop.kinetic().cast<cplx>() * psi;
  EhrenfestResult out;
  out.x0 = driven.mean_position();
  out.v0 = -2.0 / driven.units().hbar * t_psi.dot(x_psi).imag() * g.dx();

  const double dt = t_max / static_cast<double>(samples);
  const double accel = force / driven.mass();
  propagate(driven, dt, samples, [&](std::size_t step, const GridState& s) {
    const double t = dt * static_cast<double>(step);
    const double mean = s.mean_position();
    out.times.push_back(t);
    out.mean_positions.push_back(mean);
    out.max_deviation = std::max(out.max_deviation, std::abs(mean - (out.x0 + out.v0 * t + 0.5 * accel * t * t)));
  });
  return out;
}

double nodal_exclusion(const GridState& state, double threshold) {
  const auto rho = state.density();
  double m = 0.0;
  for (double r : rho)
    if (r < threshold) m += r;
  return m * state.grid().dx();
}

double mass_near(const GridState& state, double x0, double radius) {
  const auto rho = state.density();
  double m = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (std::abs(state.grid().x(i) - x0) <= radius) m += rho[i];
  return m * state.grid().dx();
}

TwoParticleGridState::TwoParticleGridState(Grid grid, Eigen::MatrixXcd amplitudes)
    : grid_(grid), amps_(std::move(amplitudes)) {
  grid_.validate();
  if (grid_.n_points > kMaxTwoParticlePoints) throw CapacityError("two-particle grids are capped at 256 x 256");
  const auto n = static_cast<Eigen::Index>(grid_.n_points);
  if (amps_.rows() != n || amps_.cols() != n) throw ContractError("two-particle amplitudes must be n x n");
  const double n2 = amps_.squaredNorm() * grid_.dx() * grid_.dx();
  if (!(n2 > 0.0)) throw ContractError("cannot normalize a zero two-particle state");
  amps_ /= std::sqrt(n2);
}

TwoParticleGridState TwoParticleGridState::product(const GridState& a, const GridState& b) {
  return TwoParticleGridState(a.grid(), a.amplitudes() * b.amplitudes().transpose());
}

TwoParticleGridState TwoParticleGridState::symmetrized(const GridState& a, const GridState& b) {
  const Eigen::MatrixXcd ab = a.amplitudes() * b.amplitudes().transpose();
  return TwoParticleGridState(a.grid(), ab + ab.transpose());
}

double TwoParticleGridState::norm_squared() const { return amps_.squaredNorm() * grid_.dx() * grid_.dx(); }

TwoParticleGridState TwoParticleGridState::exchanged() const { return TwoParticleGridState(grid_, amps_.transpose()); }

std::vector<double> single_particle_marginal(const TwoParticleGridState& state) {
  const auto& a = state.amplitudes();
  const double dx = state.grid().dx();
  std::vector<double> rho(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) rho[static_cast<std::size_t>(i)] = 2.0 * a.row(i).squaredNorm() * dx;
  return rho;
}

double integrate(const Grid& grid, std::span<const double> values) {
  return stats::sum_descending({values.begin(), values.end()}) * grid.dx();
}

void write_snapshot_csv(std::ostream& out, const GridState& state) {
  out << "x,re,im,rho\n";
  const auto& psi = state.amplitudes();
  for (std::size_t i = 0; i < state.grid().n_points; ++i) {
    const auto v = psi[static_cast<Eigen::Index>(i)];
    out << stats::format_number(state.grid().x(i)) << ',' << stats::format_number(v.real()) << ','
        << stats::format_number(v.imag()) << ',' << stats::format_number(std::norm(v)) << '\n';
  }
}

}  // namespace everett::wave
