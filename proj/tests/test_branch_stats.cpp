#include "everett/branch_stats.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace everett;
using namespace everett::stats;

namespace {

// Oracle: enumerate all 2^N outcome strings and accumulate weight by count.
std::vector<double> enumerated_counts(std::size_t n, double p) {
  std::vector<double> out(n + 1, 0.0);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    const auto m = static_cast<std::size_t>(__builtin_popcountll(mask));
    out[m] += std::pow(p, static_cast<double>(m)) * std::pow(1.0 - p, static_cast<double>(n - m));
  }
  return out;
}

// Oracle: binomial via lgamma, long double.
double lgamma_binomial(std::size_t m, std::size_t n, double p) {
  const long double lm = static_cast<long double>(m), ln = static_cast<long double>(n);
  const long double lg = std::lgammal(ln + 1) - std::lgammal(lm + 1) - std::lgammal(ln - lm + 1) +
                         lm * std::log(static_cast<long double>(p)) + (ln - lm) * std::log1p(-static_cast<long double>(p));
  return static_cast<double>(std::exp(lg));
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

}  // namespace

TEST_SUITE("branch_stats") {

TEST_CASE("N = 3 count density") {
  const auto d = exact_count_density(3, 0.3);
  const std::vector<double> expected{0.343, 0.441, 0.189, 0.027};
  REQUIRE(d.density.size() == 4);
  for (std::size_t m = 0; m < 4; ++m) CHECK(std::abs(d.density[m] - expected[m]) < 1e-15);
}

TEST_CASE("binomial term against enumeration and lgamma oracles") {
  for (double p : {0.1, 0.3, 0.5, 0.77}) {
    for (std::size_t n : {1u, 4u, 9u, 14u}) {
      const auto e = enumerated_counts(n, p);
      for (std::size_t m = 0; m <= n; ++m) CHECK(std::abs(binomial_term(m, n, p) - e[m]) < 1e-14);
    }
    for (std::size_t n : {100u, 1000u, 100000u}) {
      const auto mode = static_cast<std::size_t>(p * static_cast<double>(n));
      for (std::size_t m : {mode, mode / 2, std::min(n, mode + mode / 3)}) {
        const double ref = lgamma_binomial(m, n, p);
        CHECK(std::abs(binomial_term(m, n, p) - ref) <= 1e-11 * ref + 1e-300);
      }
    }
  }
}

TEST_CASE("binomial term edge probabilities") {
  CHECK(binomial_term(0, 5, 0.0) == 1.0);
  CHECK(binomial_term(1, 5, 0.0) == 0.0);
  CHECK(binomial_term(5, 5, 1.0) == 1.0);
  CHECK(binomial_term(4, 5, 1.0) == 0.0);
  CHECK(std::isinf(log_binomial_term(3, 5, 0.0)));
}

TEST_CASE("exact densities are normalized for large N") {
  for (std::size_t n : {1000u, 100000u, 1000000u}) CHECK(std::abs(exact_count_density(n, 0.3).total() - 1.0) < 1e-10);
}

TEST_CASE("count density contract and capacity errors") {
  CHECK_THROWS_AS(exact_count_density(10, 0.0), ContractError);
  CHECK_THROWS_AS(exact_count_density(10, 1.0), ContractError);
  CHECK_THROWS_AS(exact_count_density(0, 0.5), ContractError);
  CHECK_THROWS_AS(exact_count_density(10'000'001, 0.5), CapacityError);
}

TEST_CASE("Gaussian validity warning") {
  CHECK(gaussian_count_density(10, 0.3).validity_warning);
  CHECK_FALSE(gaussian_count_density(1000, 0.3).validity_warning);
}

TEST_CASE("Gaussian sup error at N = 1000") { CHECK(gaussian_sup_error(1000, 0.3) <= 2e-4); }

TEST_CASE("relative frequency peak") {
  CHECK(relative_frequency_peak(1000, 0.3) == doctest::Approx(std::sqrt(1000.0 / (2 * std::numbers::pi * 0.21))));
  CHECK(relative_frequency_peak(1000, 0.3) == doctest::Approx(27.53).epsilon(1e-3));
  CHECK(relative_frequency_value(1000, 0.3, 0.3) == doctest::Approx(relative_frequency_peak(1000, 0.3)));
}

TEST_CASE("relative frequency curve is symmetric at rho = 1/2") {
  const auto d = relative_frequency_density(400, 0.5, 1001);
  for (std::size_t i = 0; i < 1001; ++i) CHECK(std::abs(d.density[i] - d.density[1000 - i]) < 1e-12);
}

TEST_CASE("histogram intervals: shared edges, clipping, coverage") {
  const auto spec = make_histogram_spec(0.3, 0.1);
  CHECK(spec.intervals.front().lower == 0.0);
  CHECK(spec.intervals.back().upper == 1.0);
  CHECK(spec.intervals.back().closed_upper);
  for (std::size_t i = 1; i < spec.intervals.size(); ++i)
    CHECK(spec.intervals[i].lower == spec.intervals[i - 1].upper);
  CHECK(spec.central().k == 0);
  CHECK(spec.central().contains(0.3));
  // Every z lands in exactly the interval reported by locate().
  for (int i = 0; i <= 1000; ++i) {
    const double z = i / 1000.0;
    int hits = 0;
    for (const auto& iv : spec.intervals) hits += iv.contains(z) ? 1 : 0;
    CHECK(hits == 1);
    CHECK(spec.intervals[spec.locate(z)].contains(z));
  }
  CHECK_THROWS_AS(make_histogram_spec(0.3, 0.0), ContractError);
  CHECK_THROWS_AS(make_histogram_spec(1.3, 0.1), ContractError);
}

TEST_CASE("central mass at N = 1000, rho = 0.3, dz = 0.1") {
  const auto h = coarse_histogram(1000, 0.3, 0.1);
  CHECK(h.central_mass() >= 0.999);
  CHECK(std::abs(h.histogram.total() - 1.0) < 1e-10);
  // Oracle: direct sum of binomial terms for |m/N - 0.3| < 0.05.
  std::vector<double> terms;
  for (std::size_t m = 0; m <= 1000; ++m)
    if (h.spec.central().contains(static_cast<double>(m) / 1000.0)) terms.push_back(lgamma_binomial(m, 1000, 0.3));
  CHECK(std::abs(h.central_mass() - sum_descending(terms)) < 1e-12);
}

TEST_CASE("coarse histogram with wide bins decreases away from the centre") {
  const auto h = coarse_histogram(10, 0.5, 0.5);
  const auto c = h.spec.locate(0.5);
  for (std::size_t i = c + 1; i < h.spec.intervals.size(); ++i)
    CHECK(h.bar_graph.density[i] < h.bar_graph.density[i - 1]);
  for (std::size_t i = c; i-- > 0;) CHECK(h.bar_graph.density[i] < h.bar_graph.density[i + 1]);
}

TEST_CASE("Chebyshev bound values") {
  const auto r = chebyshev_bound_check(1000, 0.3, 0.1);
  CHECK(r.bound == doctest::Approx(0.084));
  CHECK(r.holds);
  const auto s = chebyshev_bound_check(4, 0.5, 2.0);
  CHECK(s.bound == doctest::Approx(0.0625));
  CHECK(s.tail_mass == 0.0);
  CHECK(s.holds);
}

TEST_CASE("Chebyshev tail is a strict inequality") {
  // N = 4, rho = 0.5, dz = 0.5: m/N = 0.25 and 0.75 sit exactly on the boundary.
  const auto r = chebyshev_bound_check(4, 0.5, 0.5);
  CHECK(r.tail_mass == doctest::Approx(binomial_term(0, 4, 0.5) + binomial_term(4, 4, 0.5)));
}

TEST_CASE("frequency operator: explicit tensor equals combinatorial") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_amplitudes(3, rng);
    for (std::size_t n : {1u, 4u, 7u}) {
      const auto x = frequency_operator_density(a, n, 1, Path::explicit_tensor);
      const auto y = frequency_operator_density(a, n, 1, Path::combinatorial);
      REQUIRE(x.density.size() == y.density.size());
      for (std::size_t m = 0; m < x.density.size(); ++m) {
        CHECK(x.support[m] == doctest::Approx(static_cast<double>(m) / static_cast<double>(n)));
        CHECK(std::abs(x.density[m] - y.density[m]) < 1e-12);
      }
    }
  }
}

TEST_CASE("frequency operator handles rho = 0 and rho = 1") {
  const std::vector<cplx> a{1.0, 0.0};
  const auto x = frequency_operator_density(a, 3, 0, Path::explicit_tensor);
  CHECK(x.density.back() == doctest::Approx(1.0));
  const auto y = frequency_operator_density(a, 3, 1, Path::explicit_tensor);
  CHECK(y.density.front() == doctest::Approx(1.0));
}

TEST_CASE("frequency operator explicit path size limit") {
  const std::vector<cplx> a{std::sqrt(0.5), std::sqrt(0.5)};
  CHECK_THROWS_AS(frequency_operator_density(a, 21, 0, Path::explicit_tensor), ContractError);
  CHECK_THROWS_AS(frequency_operator_density(a, 3, 2, Path::combinatorial), ContractError);
}

TEST_CASE("coarse eigenvalue agrees with a linear scan over intervals") {
  const auto spec = make_histogram_spec(0.3, 0.15);
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> pick(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> outcomes(1 + trial % 13);
    for (auto& o : outcomes) o = pick(rng);
    const double f = static_cast<double>(std::count(outcomes.begin(), outcomes.end(), std::size_t{1})) /
                     static_cast<double>(outcomes.size());
    double expected = NAN;
    for (const auto& iv : spec.intervals)
      if (iv.contains(f)) expected = iv.center;
    CHECK(coarse_frequency_eigenvalue(spec, outcomes, 1) == expected);
  }
}

TEST_CASE("coarse frequency operator density matches the bar graph") {
  const std::vector<cplx> a{std::sqrt(0.7), std::sqrt(0.3)};
  const auto spec = make_histogram_spec(0.3, 0.2);
  const auto x = frequency_operator_density(a, 8, 1, Path::explicit_tensor, spec);
  const auto y = frequency_operator_density(a, 8, 1, Path::combinatorial, spec);
  REQUIRE(x.density.size() == y.density.size());
  for (std::size_t i = 0; i < x.density.size(); ++i) CHECK(std::abs(x.density[i] - y.density[i]) < 1e-12);
  CHECK(std::abs(x.total() - 1.0) < 1e-12);
}

TEST_CASE("Hartle variance") {
  const std::vector<cplx> a{std::sqrt(0.7), std::sqrt(0.3)};
  CHECK(hartle_variance(a, 1000, 1, Path::combinatorial) == doctest::Approx(2.1e-4).epsilon(1e-12));
  CHECK(std::abs(hartle_variance(a, 8, 1, Path::explicit_tensor) - 0.21 / 8.0) < 1e-12);
}

TEST_CASE("estimator mixture") {
  const auto d = estimator_distribution(1000, 0.3);
  CHECK(d.support.size() == 2048);
  CHECK(std::abs(grid_mass(d, 0.0, 1.0) - 1.0) < 1e-6);
  CHECK(std::abs(grid_mean(d) - (300.0 + 1.0) / 1002.0) < 1e-6);
  CHECK(grid_mass(d, 0.25, 0.35) > grid_mass(estimator_distribution(100, 0.3), 0.25, 0.35));
  CHECK_THROWS_AS(estimator_distribution(10, 0.3, Prior::uniform, 1), ContractError);
}

TEST_CASE("sum_descending is order independent") {
  std::vector<double> t{1e-20, 1.0, 1e-16, 1e-16, 1e-16, 1e-16};
  std::vector<double> r(t.rbegin(), t.rend());
  CHECK(sum_descending(t) == sum_descending(r));
}

TEST_CASE("csv layout") {
  std::ostringstream out;
  write_csv(out, exact_count_density(2, 0.5));
  const auto s = out.str();
  CHECK(s.rfind("kind,N,rho_u,delta_z\nexact_count,2,0.5,\nsupport,density\n0,0.25\n", 0) == 0);
  CHECK(format_number(0.1) == "0.10000000000000001");
}

}
