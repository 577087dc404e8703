#include "everett/hilbert.hpp"

#include <doctest.h>

#include <random>

using namespace everett;

namespace {

Eigen::VectorXcd random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = {g(rng), g(rng)};
  return v.normalized();
}

Eigen::MatrixXcd random_hermitian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {g(rng), g(rng)};
  return 0.5 * (m + m.adjoint());
}

// Naive Kronecker product with the first factor slowest.
Eigen::VectorXcd kron(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  Eigen::VectorXcd out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) out[i * b.size() + j] = a[i] * b[j];
  return out;
}

}  // namespace

TEST_SUITE("hilbert") {

TEST_CASE("state vector requires unit norm") {
  Eigen::VectorXcd v(2);
  v << 1.0, 1.0;
  CHECK_THROWS_AS(StateVector({2}, v), ContractError);
  const auto s = StateVector::normalized({2}, v);
  CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(StateVector::normalized({2}, Eigen::VectorXcd::Zero(2)), ContractError);
}

TEST_CASE("shape mismatch is a contract error") {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(5);
  v[0] = 1.0;
  CHECK_THROWS_AS(StateVector({2, 2}, v), ContractError);
  CHECK_THROWS_AS(StateVector::basis({2, 3}, 6), ContractError);
}

TEST_CASE("dimension cap throws capacity error") {
  CHECK_THROWS_AS(StateVector::basis({1u << 12, 1u << 11}, 0), CapacityError);
  CHECK_NOTHROW(StateVector::basis({1u << 11, 1u << 11}, 0));
}

TEST_CASE("tensor matches naive Kronecker product") {
  std::mt19937_64 rng(1);
  const auto a = random_vector(3, rng);
  const auto b = random_vector(4, rng);
  const auto t = tensor(StateVector({3}, a), StateVector({4}, b));
  CHECK(t.dims() == std::vector<std::size_t>{3, 4});
  CHECK((t.amplitudes() - kron(a, b)).norm() < 1e-14);
}

TEST_CASE("component counts multiply with the a-component slowest") {
  Eigen::VectorXcd a(4), b(2);
  a << 1.0, 0.0, 0.0, 0.0;  // j_a = 0
  b << 0.0, 1.0;            // j_b = 1
  const auto t = tensor(StateVector({2}, a, 2), StateVector({1}, b, 2));
  CHECK(t.component_count() == 4);
  // flat index of (j=(0,1), x=(0,0)) is j-major: j_flat = 1, factor size 2.
  CHECK(std::abs(t[2] - cplx(1.0)) < 1e-15);
}

TEST_CASE("global phase leaves states equivalent only up to tolerance rule") {
  const auto s = StateVector::basis({2}, 0);
  Eigen::VectorXcd v(2);
  v << cplx(0.0, 1.0), 0.0;
  CHECK_FALSE(s.equivalent(StateVector({2}, v)));
  CHECK(s == StateVector::basis({2}, 0));
}

TEST_CASE("ravel and unravel are inverse, last factor fastest") {
  const std::vector<std::size_t> dims{2, 3, 4};
  CHECK(ravel(std::vector<std::size_t>{1, 0, 0}, dims) == 12);
  CHECK(ravel(std::vector<std::size_t>{0, 0, 1}, dims) == 1);
  for (std::size_t f = 0; f < 24; ++f) CHECK(ravel(unravel(f, dims), dims) == f);
  CHECK_THROWS_AS(unravel(24, dims), ContractError);
}

TEST_CASE("operator flags and apply precondition") {
  std::mt19937_64 rng(2);
  const OperatorMatrix h(random_hermitian(4, rng));
  CHECK(h.is_hermitian());
  CHECK_FALSE(h.is_unitary());
  CHECK_THROWS_AS(h.apply(StateVector::basis({4}, 0)), ContractError);
  const auto u = unitary_from_generator(h, 0.3);
  CHECK(u.is_unitary());
  CHECK((u.entries() * u.entries().adjoint() - Eigen::MatrixXcd::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("evolve agrees with a Taylor-series exponential") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXcd h = random_hermitian(5, rng);
  const double t = 0.4;
  Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(5, 5);
  Eigen::MatrixXcd sum = term;
  for (int k = 1; k < 60; ++k) {
    term = term * (cplx(0.0, -t) * h) / static_cast<double>(k);
    sum += term;
  }
  const auto psi = StateVector({5}, random_vector(5, rng));
  const auto out = evolve(psi, OperatorMatrix(h), t);
  CHECK((out.amplitudes() - sum * psi.amplitudes()).norm() < 1e-12);
  CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectral decomposition reconstructs and groups degeneracies") {
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(4, 4);
  a.diagonal() << 1.0, 2.0, 1.0, 3.0;
  const auto sd = spectral(OperatorMatrix(a), 1e-9);
  CHECK((sd.reconstruct() - a).norm() < 1e-10);
  REQUIRE(sd.degeneracy_blocks.size() == 3);
  CHECK(sd.degeneracy_blocks[0].size() == 2);
  const Eigen::MatrixXcd p = sd.block_projector(0);
  CHECK((p * p - p).norm() < 1e-12);
  CHECK(std::abs(p.trace() - cplx(2.0)) < 1e-12);
}

TEST_CASE("spectral rejects non-hermitian input") {
  Eigen::MatrixXcd a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(spectral(OperatorMatrix(a), 1e-9), ContractError);
}

TEST_CASE("embed and apply_local agree") {
  std::mt19937_64 rng(4);
  const auto u = unitary_from_generator(OperatorMatrix(random_hermitian(3, rng)), 1.1);
  const std::vector<std::size_t> dims{2, 3, 2};
  const auto psi = StateVector(dims, random_vector(12, rng));
  const auto full = embed(u, dims, 1);
  CHECK(full.is_unitary());
  const auto a = full.apply(psi);
  const auto b = apply_local(psi, u, 1);
  CHECK((a.amplitudes() - b.amplitudes()).norm() < 1e-13);
  CHECK_THROWS_AS(embed(u, dims, 0), ContractError);
}

TEST_CASE("reduced density of a product state is the local projector") {
  std::mt19937_64 rng(5);
  const auto a = random_vector(2, rng);
  const auto b = random_vector(3, rng);
  const auto t = tensor(StateVector({2}, a), StateVector({3}, b));
  const Eigen::MatrixXcd rho = reduced_density(t, 1);
  CHECK((rho - b * b.adjoint()).norm() < 1e-14);
  CHECK(std::abs(rho.trace() - cplx(1.0)) < 1e-14);
}

TEST_CASE("reduced density of a Bell pair is maximally mixed") {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
  v[0] = v[3] = 1.0 / std::sqrt(2.0);
  const Eigen::MatrixXcd rho = reduced_density(StateVector({2, 2}, v), 0);
  CHECK((rho - 0.5 * Eigen::MatrixXcd::Identity(2, 2)).norm() < 1e-15);
}

TEST_CASE("density sums over components") {
  Eigen::VectorXcd v(4);
  v << 0.5, 0.5, 0.5, 0.5;
  const auto d = StateVector({2}, v, 2).density();
  REQUIRE(d.size() == 2);
  CHECK(d[0] == doctest::Approx(0.5));
  CHECK(d[1] == doctest::Approx(0.5));
}

}
