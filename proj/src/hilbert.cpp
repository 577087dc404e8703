#include "everett/hilbert.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

namespace everett {

std::size_t checked_product(std::span<const std::size_t> dims, std::size_t components,
                            std::size_t cap) {
  if (components == 0) throw ContractError("component count must be positive");
  std::size_t total = components;
  for (auto d : dims) {
    if (d == 0) throw ContractError("factor dimensions must be positive");
    if (total > cap / d) {
      std::ostringstream msg;
      msg << "total dimension exceeds cap " << cap;
      throw CapacityError(msg.str());
    }
    total *= d;
  }
  if (total > cap) throw CapacityError("total dimension exceeds cap " + std::to_string(cap));
  return total;
}

namespace {

// Extended-precision accumulation keeps large product states within tolerance.
double accurate_squared_norm(const Eigen::VectorXcd& v) {
  long double sq = 0.0L;
  for (const auto& a : v) sq += static_cast<long double>(std::norm(a));
  return static_cast<double>(sq);
}

}  // namespace

StateVector::StateVector(std::vector<std::size_t> dims, Eigen::VectorXcd amplitudes,
                         std::size_t component_count, const Tolerances& tol)
    : dims_(std::move(dims)), components_(component_count), amps_(std::move(amplitudes)) {
  const auto total = checked_product(dims_, components_, tol.max_dimension);
  if (static_cast<std::size_t>(amps_.size()) != total)
    throw ContractError("amplitude count does not match dims x components");
  if (std::abs(accurate_squared_norm(amps_) - 1.0) > tol.equality)
    throw ContractError("state is not normalized");
}

StateVector StateVector::normalized(std::vector<std::size_t> dims, Eigen::VectorXcd amplitudes,
                                    std::size_t component_count, const Tolerances& tol) {
  const double n = std::sqrt(accurate_squared_norm(amplitudes));
  if (!(n > 0.0) || !std::isfinite(n)) throw ContractError("cannot normalize a zero-norm state");
  amplitudes /= n;
  return StateVector(std::move(dims), std::move(amplitudes), component_count, tol);
}

StateVector StateVector::basis(std::vector<std::size_t> dims, std::size_t index,
                               std::size_t component_count) {
  const auto total = checked_product(dims, component_count, Tolerances{}.max_dimension);
  if (index >= total) throw ContractError("basis index out of range");
  Eigen::VectorXcd amps = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(total));
  amps[static_cast<Eigen::Index>(index)] = 1.0;
  return StateVector(std::move(dims), std::move(amps), component_count);
}

std::size_t StateVector::factor_size() const { return size() / components_; }

std::vector<double> StateVector::density() const {
  const auto f = factor_size();
  std::vector<double> rho(f, 0.0);
  for (std::size_t j = 0; j < components_; ++j)
    for (std::size_t i = 0; i < f; ++i) rho[i] += std::norm(amps_[static_cast<Eigen::Index>(j * f + i)]);
  return rho;
}

bool StateVector::equivalent(const StateVector& other, double tol) const {
  if (dims_ != other.dims_ || components_ != other.components_) return false;
  return (amps_ - other.amps_).norm() <= tol;
}

namespace {

double max_abs(const Eigen::MatrixXcd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace

OperatorMatrix::OperatorMatrix(Eigen::MatrixXcd entries, const Tolerances& tol)
    : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0)
    throw ContractError("operator must be square and non-empty");
  if (static_cast<std::size_t>(entries_.rows()) > tol.max_dimension)
    throw CapacityError("operator dimension exceeds cap");
  hermitian_ = max_abs(entries_ - entries_.adjoint()) <= tol.equality;
  const auto n = entries_.rows();
  unitary_ = max_abs(entries_ * entries_.adjoint() - Eigen::MatrixXcd::Identity(n, n)) <= tol.unitarity;
}

OperatorMatrix OperatorMatrix::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return OperatorMatrix(Eigen::MatrixXcd::Identity(n, n));
}

OperatorMatrix OperatorMatrix::diagonal(std::span<const double> values) {
  Eigen::VectorXcd d(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) d[static_cast<Eigen::Index>(i)] = values[i];
  return OperatorMatrix(d.asDiagonal().toDenseMatrix());
}

OperatorMatrix OperatorMatrix::adjoint() const { return OperatorMatrix(entries_.adjoint()); }

OperatorMatrix OperatorMatrix::operator*(const OperatorMatrix& rhs) const {
  if (dim() != rhs.dim()) throw ContractError("operator dimension mismatch");
  return OperatorMatrix(entries_ * rhs.entries_);
}

StateVector OperatorMatrix::apply(const StateVector& state, const Tolerances& tol) const {
  if (state.size() != dim()) throw ContractError("operator and state dimension mismatch");
  if (!unitary_) throw ContractError("apply() requires a unitary operator");
  Eigen::VectorXcd out = entries_ * state.amplitudes();
  return StateVector::normalized(state.dims(), std::move(out), state.component_count(), tol);
}

Eigen::MatrixXcd SpectralDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.cast<cplx>().asDiagonal() * eigenvectors.adjoint();
}

Eigen::MatrixXcd SpectralDecomposition::block_projector(std::size_t block) const {
  const auto n = eigenvectors.rows();
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
  for (auto i : degeneracy_blocks.at(block)) {
    const auto v = eigenvectors.col(static_cast<Eigen::Index>(i));
    p += v * v.adjoint();
  }
  return p;
}

StateVector tensor(const StateVector& a, const StateVector& b, const Tolerances& tol) {
  std::vector<std::size_t> dims = a.dims();
  dims.insert(dims.end(), b.dims().begin(), b.dims().end());
  const auto ca = a.component_count();
  const auto cb = b.component_count();
  const auto total = checked_product(dims, ca * cb, tol.max_dimension);

  const auto fa = a.factor_size();
  const auto fb = b.factor_size();
  Eigen::VectorXcd out(static_cast<Eigen::Index>(total));
  std::size_t k = 0;
  for (std::size_t ja = 0; ja < ca; ++ja)
    for (std::size_t jb = 0; jb < cb; ++jb)
      for (std::size_t ia = 0; ia < fa; ++ia) {
        const cplx x = a[ja * fa + ia];
        for (std::size_t ib = 0; ib < fb; ++ib) out[static_cast<Eigen::Index>(k++)] = x * b[jb * fb + ib];
      }
  return StateVector::normalized(std::move(dims), std::move(out), ca * cb, tol);
}

cplx inner(const StateVector& a, const StateVector& b) {
  if (a.dims() != b.dims() || a.component_count() != b.component_count())
    throw ContractError("inner(): shape mismatch");
  return a.amplitudes().dot(b.amplitudes());
}

SpectralDecomposition spectral(const OperatorMatrix& a, double degeneracy_tol, const Tolerances&) {
  if (!a.is_hermitian()) throw ContractError("spectral(): operator is not hermitian");
  // Symmetrize away rounding so the solver sees an exactly hermitian input.
  const Eigen::MatrixXcd h = 0.5 * (a.entries() + a.entries().adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
  if (solver.info() != Eigen::Success) throw ContractError("spectral(): eigensolver failed");

  SpectralDecomposition out{solver.eigenvalues(), solver.eigenvectors(), {}};
  const auto n = static_cast<std::size_t>(out.eigenvalues.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || out.eigenvalues[static_cast<Eigen::Index>(i)] -
                          out.eigenvalues[static_cast<Eigen::Index>(i - 1)] >= degeneracy_tol)
      out.degeneracy_blocks.emplace_back();
    out.degeneracy_blocks.back().push_back(i);
  }
  return out;
}

OperatorMatrix unitary_from_generator(const OperatorMatrix& h, double t, const Tolerances& tol) {
  if (!h.is_hermitian()) throw ContractError("generator is not hermitian");
  const auto sd = spectral(h, 0.0, tol);
  Eigen::VectorXcd phases(sd.eigenvalues.size());
  for (Eigen::Index i = 0; i < phases.size(); ++i) phases[i] = std::polar(1.0, -sd.eigenvalues[i] * t);
  return OperatorMatrix(sd.eigenvectors * phases.asDiagonal() * sd.eigenvectors.adjoint(), tol);
}

StateVector evolve(const StateVector& state, const OperatorMatrix& h, double t, const Tolerances& tol) {
  if (!h.is_hermitian()) throw ContractError("evolve(): hamiltonian is not hermitian");
  if (h.dim() != state.size()) throw ContractError("evolve(): dimension mismatch");
  const auto sd = spectral(h, 0.0, tol);
  Eigen::VectorXcd coeffs = sd.eigenvectors.adjoint() * state.amplitudes();
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] *= std::polar(1.0, -sd.eigenvalues[i] * t);
  Eigen::VectorXcd out = sd.eigenvectors * coeffs;
  return StateVector::normalized(state.dims(), std::move(out), state.component_count(), tol);
}

OperatorMatrix embed(const OperatorMatrix& local, std::span<const std::size_t> dims, std::size_t factor,
                     const Tolerances& tol) {
  if (factor >= dims.size() || dims[factor] != local.dim())
    throw ContractError("embed(): local operator does not match factor dimension");
  std::size_t before = 1;
  std::size_t after = 1;
  for (std::size_t i = 0; i < factor; ++i) before *= dims[i];
  for (std::size_t i = factor + 1; i < dims.size(); ++i) after *= dims[i];
  const auto total = checked_product(dims, 1, tol.max_dimension);
  const auto d = local.dim();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  for (std::size_t o = 0; o < before; ++o)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const cplx v = local.entries()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        if (v == cplx{}) continue;
        for (std::size_t i = 0; i < after; ++i)
          m(static_cast<Eigen::Index>((o * d + r) * after + i), static_cast<Eigen::Index>((o * d + c) * after + i)) = v;
      }
  return OperatorMatrix(std::move(m), tol);
}

Eigen::MatrixXcd reduced_density(const StateVector& state, std::size_t factor) {
  const auto& dims = state.dims();
  if (factor >= dims.size()) throw ContractError("reduced_density(): no such factor");
  std::size_t outer = state.component_count();
  std::size_t inner_size = 1;
  for (std::size_t i = 0; i < factor; ++i) outer *= dims[i];
  for (std::size_t i = factor + 1; i < dims.size(); ++i) inner_size *= dims[i];
  const auto d = static_cast<Eigen::Index>(dims[factor]);
  const auto in = static_cast<Eigen::Index>(inner_size);
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(d, d);
  for (std::size_t o = 0; o < outer; ++o) {
    // Row-major (d x inner) block of amplitudes for this outer index.
    Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block(
        state.amplitudes().data() + o * dims[factor] * inner_size, d, in);
    rho.noalias() += block * block.adjoint();
  }
  return rho;
}

std::vector<std::size_t> unravel(std::size_t flat, std::span<const std::size_t> dims) {
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  if (flat >= total) throw ContractError("unravel(): flat index out of range");
  std::vector<std::size_t> idx(dims.size());
  for (std::size_t i = dims.size(); i-- > 0;) {
    idx[i] = flat % dims[i];
    flat /= dims[i];
  }
  return idx;
}

std::size_t ravel(std::span<const std::size_t> index, std::span<const std::size_t> dims) {
  if (index.size() != dims.size()) throw ContractError("ravel(): rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (index[i] >= dims[i]) throw ContractError("ravel(): index out of range");
    flat = flat * dims[i] + index[i];
  }
  return flat;
}

}  // namespace everett

namespace everett {

StateVector apply_local(const StateVector& state, const OperatorMatrix& u, std::size_t factor,
                        const Tolerances& tol) {
  const auto& dims = state.dims();
  if (factor >= dims.size() || dims[factor] != u.dim())
    throw ContractError("apply_local(): operator does not match factor dimension");
  if (!u.is_unitary()) throw ContractError("apply_local(): operator is not unitary");
  std::size_t outer = state.component_count();
  std::size_t inner_size = 1;
  for (std::size_t i = 0; i < factor; ++i) outer *= dims[i];
  for (std::size_t i = factor + 1; i < dims.size(); ++i) inner_size *= dims[i];
  const auto d = static_cast<Eigen::Index>(dims[factor]);
  const auto in = static_cast<Eigen::Index>(inner_size);
  using RowBlock = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::VectorXcd out(state.amplitudes().size());
  for (std::size_t o = 0; o < outer; ++o) {
    const auto offset = static_cast<Eigen::Index>(o * dims[factor] * inner_size);
    Eigen::Map<const RowBlock> src(state.amplitudes().data() + offset, d, in);
    Eigen::Map<RowBlock> dst(out.data() + offset, d, in);
    dst.noalias() = u.entries() * src;
  }
  return StateVector::normalized(dims, std::move(out), state.component_count(), tol);
}

}  // namespace everett
