#include "everett/measurement.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace everett;

namespace {

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

StateVector system_state(const std::vector<cplx>& c) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) v[static_cast<Eigen::Index>(i)] = c[i];
  return StateVector({c.size()}, v);
}

// Explicit tensor construction of sum_b c_b |b>|M_b> with M_b = basis index b + 1.
Eigen::VectorXcd ideal_record(const std::vector<cplx>& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n * (n + 1));
  for (Eigen::Index b = 0; b < n; ++b) v[b * (n + 1) + b + 1] = c[static_cast<std::size_t>(b)];
  return v;
}

}  // namespace

TEST_SUITE("measurement") {

TEST_CASE("position detector diagnostics") {
  const auto setup = build_position_detector(3, 2);
  const auto d = diagnose(setup);
  CHECK(d.a_hermiticity < 1e-12);
  CHECK(d.eigenstate_transport < 1e-10);
  CHECK(d.spectrum_mismatch < 1e-10);
  CHECK(setup.outcome_count() == 3);
  CHECK(setup.position_dim() == 7);
  CHECK(setup.transport.is_unitary());
  CHECK_FALSE(setup.recorder_map.back().recorder.has_value());
}

TEST_CASE("recorder weights reproduce |c_b|^2 with an empty outside region") {
  std::mt19937_64 rng(11);
  const auto setup = build_position_detector(4, 1);
  const auto c = random_amplitudes(4, rng);
  const auto w = recorder_weights(setup, transport_state(setup, system_state(c)));
  REQUIRE(w.size() == 5);
  for (std::size_t b = 0; b < 4; ++b) CHECK(std::abs(w[b] - std::norm(c[b])) < 1e-12);
  CHECK(w[4] < 1e-24);
}

TEST_CASE("position state outside the recorder span is rejected") {
  const auto setup = build_position_detector(2, 1);
  const auto outside = StateVector::basis({setup.position_dim()}, setup.position_dim() - 1);
  const auto back = setup.transport.adjoint().apply(outside);
  CHECK_THROWS_AS(transport_state(setup, back), ContractError);
}

TEST_CASE("measure matches the explicit tensor record") {
  std::mt19937_64 rng(12);
  for (std::size_t n = 2; n <= 5; ++n) {
    const auto setup = build_position_detector(n, 1);
    const auto c = random_amplitudes(n, rng);
    const auto out = measure(prepare_measurement(setup, system_state(c)), setup);
    CHECK((out.state().amplitudes() - ideal_record(c)).norm() < 1e-12);
  }
}

TEST_CASE("record unitary is a permutation") {
  const auto setup = build_position_detector(3, 1);
  const auto u = measurement_unitary(setup);
  CHECK(u.is_unitary());
  for (Eigen::Index i = 0; i < u.entries().rows(); ++i)
    CHECK(std::abs(u.entries().row(i).cwiseAbs().sum() - 1.0) < 1e-15);
}

TEST_CASE("measure requires a ready detector") {
  const auto setup = build_position_detector(2, 1);
  std::vector<cplx> c{1.0, 0.0};
  const auto once = measure(prepare_measurement(setup, system_state(c)), setup);
  CHECK_THROWS_AS(measure(once, setup), ContractError);
}

TEST_CASE("observe copies the record and leaves detector marginal unchanged") {
  std::mt19937_64 rng(13);
  const auto setup = build_position_detector(3, 1);
  const auto c = random_amplitudes(3, rng);
  auto s = measure(prepare_measurement(setup, system_state(c)), setup);
  s = combine(s, CompositeState({observer_factor(setup)}, ready_state(4)));
  const auto det = s.find(Role::detector);
  const Eigen::MatrixXcd before = reduced_density(s.state(), det);
  const auto after = observe(s);
  CHECK((reduced_density(after.state(), det) - before).norm() < 1e-14);
  const Eigen::MatrixXcd obs = reduced_density(after.state(), after.find(Role::observer));
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(obs(k + 1, k + 1).real() - std::norm(c[static_cast<std::size_t>(k)])) < 1e-12);
}

TEST_CASE("branch weights follow |c_b|^2 before decoherence") {
  std::mt19937_64 rng(14);
  const auto setup = build_position_detector(3, 1);
  const auto c = random_amplitudes(3, rng);
  auto s = measure(prepare_measurement(setup, system_state(c)), setup);
  const auto ens = extract_branches(s);
  REQUIRE(ens.branches().size() == 3);
  for (const auto& br : ens.branches())
    CHECK(std::abs(br.weight - std::norm(c[static_cast<std::size_t>(br.outcomes[0])])) < 1e-12);
  // Without an environment the records are still one coherent superposition.
  CHECK_FALSE(ens.decohered());
  CHECK(ens.interference()(0, 1) == doctest::Approx(1.0));
  CHECK(std::abs(ens.total_weight() - 1.0) < 1e-12);
  const auto proj = ens.branch_state(1);
  CHECK(proj.state().norm() == doctest::Approx(1.0));
}

TEST_CASE("ready branch when the detector has not fired") {
  const auto setup = build_position_detector(2, 1);
  const auto s = prepare_measurement(setup, system_state({std::sqrt(0.5), std::sqrt(0.5)}));
  const auto ens = extract_branches(s);
  REQUIRE(ens.branches().size() == 1);
  CHECK(ens.branches()[0].outcomes[0] == -1);
  CHECK(std::isnan(ens.branches()[0].labels[0]));
}

TEST_CASE("dephasing overlap follows the cosine power law") {
  for (std::size_t n : {1u, 5u, 24u, 60u}) {
    CHECK(std::abs(dephasing_overlap(1, 2, n, 0.5, 1.0) - std::pow(std::cos(0.5), static_cast<double>(n))) < 1e-12);
    CHECK(std::abs(dephasing_overlap(1, 3, n, 0.25, 1.0) - std::pow(std::cos(0.5), static_cast<double>(n))) < 1e-12);
  }
  CHECK(dephasing_overlap(2, 2, 10, 0.7, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("explicit environment interference matches the closed form") {
  std::mt19937_64 rng(15);
  const auto setup = build_position_detector(2, 1);
  const auto c = random_amplitudes(2, rng);
  for (std::size_t n_env : {2u, 6u, 12u}) {
    auto s = measure(prepare_measurement(setup, system_state(c)), setup);
    s = combine(s, CompositeState({Factor{"env", Role::environment, std::size_t{1} << n_env, {}}},
                                  plus_environment(n_env)));
    s = decohere(s, n_env, 0.5, 1.0);
    const auto ens = extract_branches(s, 1e-3);
    CHECK(std::abs(ens.interference()(0, 1) - std::pow(std::cos(0.5), static_cast<double>(n_env))) < 1e-12);
    CHECK(std::abs(ens.branches()[0].weight - std::norm(c[0])) < 1e-12);
  }
}

TEST_CASE("environment too large for the dimension cap") {
  CHECK_THROWS_AS(plus_environment(23), CapacityError);
  CHECK_THROWS_AS(plus_environment(64), CapacityError);
}

TEST_CASE("envariance: equal magnitudes are swap-invariant, unequal are not") {
  Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(3), e2 = Eigen::VectorXcd::Zero(3);
  e1[0] = 1.0;
  e2[2] = 1.0;
  const cplx a = std::polar(std::sqrt(0.5), 0.3), b = std::polar(std::sqrt(0.5), -1.2);
  CHECK(envariance_check(make_envariance_setup(a, b, e1, e2)) < 1e-12);
  const double d = envariance_check(make_envariance_setup(std::sqrt(0.3), std::sqrt(0.7), e1, e2));
  // ||SWAP Psi - Psi||^2 = 2 (|c1| - |c2|)^2 for orthogonal environment states.
  CHECK(d == doctest::Approx(std::sqrt(2.0) * (std::sqrt(0.7) - std::sqrt(0.3))).epsilon(1e-12));
  CHECK(d > 0.1);
}

TEST_CASE("envariance rejects non-orthonormal environments") {
  Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(2), e2 = Eigen::VectorXcd::Zero(2);
  e1[0] = 1.0;
  e2[0] = 1.0;
  CHECK_THROWS_AS(make_envariance_setup(1.0, 1.0, e1, e2), ContractError);
}

}
