#pragma once

// Finite-dimensional state vectors and operators.
//
// Index convention: the discrete component index j is slowest, followed by the
// tensor factors in declared order (first factor slowest, last factor
// fastest). tensor() and every reindexing helper honor this order.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace everett {

using cplx = std::complex<double>;

/// Violated precondition or shape mismatch.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested total dimension exceeds the configured cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

struct Tolerances {
  double equality = 1e-12;
  double unitarity = 1e-10;
  double reconstruction = 1e-10;
  std::size_t max_dimension = std::size_t{1} << 22;
};

/// Product of dims, throwing CapacityError past the cap.
std::size_t checked_product(std::span<const std::size_t> dims, std::size_t components,
                            std::size_t cap);

class StateVector {
 public:
  /// Takes amplitudes that must already be unit norm (within tol.equality).
  StateVector(std::vector<std::size_t> dims, Eigen::VectorXcd amplitudes,
              std::size_t component_count = 1, const Tolerances& tol = {});

  /// Rescales to unit norm. Zero vectors are rejected.
  static StateVector normalized(std::vector<std::size_t> dims, Eigen::VectorXcd amplitudes,
                                std::size_t component_count = 1, const Tolerances& tol = {});

  static StateVector basis(std::vector<std::size_t> dims, std::size_t index,
                           std::size_t component_count = 1);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t component_count() const { return components_; }
  /// Dimension per component (product of dims).
  std::size_t factor_size() const;
  std::size_t size() const { return static_cast<std::size_t>(amps_.size()); }
  const Eigen::VectorXcd& amplitudes() const { return amps_; }
  cplx operator[](std::size_t i) const { return amps_[static_cast<Eigen::Index>(i)]; }

  double norm() const { return amps_.norm(); }

  /// rho_j summed over j: density at each factor index.
  std::vector<double> density() const;

  /// Equal when the norm distance is below `tol` (same equivalence class).
  bool equivalent(const StateVector& other, double tol = 1e-12) const;
  bool operator==(const StateVector& other) const { return equivalent(other); }

 private:
  StateVector() = default;
  std::vector<std::size_t> dims_;
  std::size_t components_ = 1;
  Eigen::VectorXcd amps_;
};

class OperatorMatrix {
 public:
  explicit OperatorMatrix(Eigen::MatrixXcd entries, const Tolerances& tol = {});

  static OperatorMatrix identity(std::size_t dim);
  static OperatorMatrix diagonal(std::span<const double> values);

  std::size_t dim() const { return static_cast<std::size_t>(entries_.rows()); }
  const Eigen::MatrixXcd& entries() const { return entries_; }
  bool is_hermitian() const { return hermitian_; }
  bool is_unitary() const { return unitary_; }

  OperatorMatrix adjoint() const;
  OperatorMatrix operator*(const OperatorMatrix& rhs) const;
  StateVector apply(const StateVector& state, const Tolerances& tol = {}) const;

 private:
  Eigen::MatrixXcd entries_;
  bool hermitian_ = false;
  bool unitary_ = false;
};

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXcd eigenvectors; // columns, orthonormal
  std::vector<std::vector<std::size_t>> degeneracy_blocks;

  Eigen::MatrixXcd reconstruct() const;
  /// Orthogonal projector onto the span of one degeneracy block.
  Eigen::MatrixXcd block_projector(std::size_t block) const;
};

/// Outer product. dims concatenate, component counts multiply (j_a slowest).
StateVector tensor(const StateVector& a, const StateVector& b, const Tolerances& tol = {});

/// <a|b>, conjugate-linear in a.
cplx inner(const StateVector& a, const StateVector& b);

/// exp(-i h t) state with hbar = 1.
StateVector evolve(const StateVector& state, const OperatorMatrix& h, double t,
                   const Tolerances& tol = {});

/// exp(-i h t) as a dense matrix, via the spectral decomposition.
OperatorMatrix unitary_from_generator(const OperatorMatrix& h, double t, const Tolerances& tol = {});

SpectralDecomposition spectral(const OperatorMatrix& a, double degeneracy_tol,
                               const Tolerances& tol = {});

/// Lifts a single-factor operator onto the full product space.
OperatorMatrix embed(const OperatorMatrix& local, std::span<const std::size_t> dims,
                     std::size_t factor, const Tolerances& tol = {});

/// Applies a unitary to one factor without forming the full operator.
StateVector apply_local(const StateVector& state, const OperatorMatrix& u, std::size_t factor,
                        const Tolerances& tol = {});

/// Reduced density matrix of one factor (components traced out too).
Eigen::MatrixXcd reduced_density(const StateVector& state, std::size_t factor);

/// Multi-index <-> flat index under the documented order.
std::vector<std::size_t> unravel(std::size_t flat, std::span<const std::size_t> dims);
std::size_t ravel(std::span<const std::size_t> index, std::span<const std::size_t> dims);

}  // namespace everett
