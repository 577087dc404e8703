#include "everett/branch_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace everett::stats {

namespace {

constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;
constexpr std::size_t kMaxTrials = 10'000'000;

// log(n!) - log(sqrt(2 pi n) (n/e)^n)
double stirling_error(double n) {
  if (n <= 15.0) return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - kLnSqrt2Pi;
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  const double nn = n * n;
  if (n > 500) return (s0 - s1 / nn) / n;
  if (n > 80) return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x log(x/np) + np - x, without cancellation when x ~ np.
double deviance_term(double x, double np) {
  if (std::abs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log(x / np) + np - x;
}

void require_rho(double rho_u) {
  if (!(rho_u > 0.0 && rho_u < 1.0)) throw ContractError("rho_u must lie in (0, 1)");
}

void require_trials(std::size_t n) {
  if (n == 0) throw ContractError("N must be positive");
  if (n > kMaxTrials) throw CapacityError("N exceeds 10^7");
}

std::vector<double> count_terms(std::size_t n, double p) {
  std::vector<double> d(n + 1);
  for (std::size_t m = 0; m <= n; ++m) d[m] = binomial_term(m, n, p);
  return d;
}

// rho~ per interval of `spec` for the count distribution with weight p.
std::vector<double> bin_masses(const HistogramSpec& spec, std::size_t n, double p) {
  std::vector<std::vector<double>> terms(spec.intervals.size());
  for (std::size_t m = 0; m <= n; ++m) {
    const double z = static_cast<double>(m) / static_cast<double>(n);
    terms[spec.locate(z)].push_back(binomial_term(m, n, p));
  }
  std::vector<double> out;
  out.reserve(terms.size());
  for (auto& t : terms) out.push_back(sum_descending(std::move(t)));
  return out;
}

double gaussian_cdf(double z, double mean, double sigma) {
  return 0.5 * std::erfc(-(z - mean) / (sigma * std::numbers::sqrt2));
}

double gaussian_count_value(std::size_t n, double rho_u, double m) {
  const double var = static_cast<double>(n) * rho_u * (1.0 - rho_u);
  const double d = m - static_cast<double>(n) * rho_u;
  return std::exp(-d * d / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

StateVector product_state(std::span<const cplx> amplitudes, std::size_t n, const Tolerances& tol) {
  if (amplitudes.empty()) throw ContractError("empty amplitude array");
  Eigen::VectorXcd a(static_cast<Eigen::Index>(amplitudes.size()));
  for (std::size_t i = 0; i < amplitudes.size(); ++i) a[static_cast<Eigen::Index>(i)] = amplitudes[i];
  const auto single = StateVector::normalized({amplitudes.size()}, std::move(a), 1, tol);
  std::vector<std::size_t> dims(n, amplitudes.size());
  checked_product(dims, 1, tol.max_dimension);
  auto out = single;
  for (std::size_t i = 1; i < n; ++i) out = tensor(out, single, tol);
  return out;
}

// Calls f(flat, count of u among the N factors) for every product basis state.
template <class F>
void for_each_count(std::size_t total, std::size_t d, std::size_t n, std::size_t u, F f) {
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rest % d == u) ++count;
      rest /= d;
    }
    f(flat, count);
  }
}

}  // namespace

std::string to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::exact_count: return "exact_count";
    case DistributionKind::gaussian_count: return "gaussian_count";
    case DistributionKind::gaussian_frequency: return "gaussian_frequency";
    case DistributionKind::histogram: return "histogram";
    case DistributionKind::bar_graph: return "bar_graph";
    case DistributionKind::estimator: return "estimator";
  }
  return "unknown";
}

double FrequencyDistribution::total() const {
  if (kind == DistributionKind::histogram) {
    std::vector<double> t;
    for (std::size_t i = 0; i < density.size(); ++i) t.push_back(density[i] * (upper[i] - lower[i]));
    return sum_descending(std::move(t));
  }
  return sum_descending(density);
}

double sum_descending(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  // Neumaier compensation on top of the ordering.
  double s = 0.0;
  double c = 0.0;
  for (double t : terms) {
    const double next = s + t;
    c += std::abs(s) >= std::abs(t) ? (s - next) + t : (t - next) + s;
    s = next;
  }
  return s + c;
}

double log_binomial_term(std::size_t m, std::size_t n, double p) {
  if (m > n) return -INFINITY;
  if (p <= 0.0) return m == 0 ? 0.0 : -INFINITY;
  if (p >= 1.0) return m == n ? 0.0 : -INFINITY;
  const double nn = static_cast<double>(n);
  const double x = static_cast<double>(m);
  if (m == 0) return nn * std::log1p(-p);
  if (m == n) return nn * std::log(p);
  const double lc = stirling_error(nn) - stirling_error(x) - stirling_error(nn - x) - deviance_term(x, nn * p) -
                    deviance_term(nn - x, nn * (1.0 - p));
  const double lf = 2.0 * kLnSqrt2Pi + std::log(x) + std::log1p(-x / nn);
  return lc - 0.5 * lf;
}

double binomial_term(std::size_t m, std::size_t n, double p) { return std::exp(log_binomial_term(m, n, p)); }

FrequencyDistribution exact_count_density(std::size_t n, double rho_u) {
  require_trials(n);
  require_rho(rho_u);
  FrequencyDistribution d;
  d.kind = DistributionKind::exact_count;
  d.trials = n;
  d.rho_u = rho_u;
  d.density = count_terms(n, rho_u);
  d.support.resize(n + 1);
  for (std::size_t m = 0; m <= n; ++m) d.support[m] = static_cast<double>(m);
  return d;
}

FrequencyDistribution gaussian_count_density(std::size_t n, double rho_u) {
  require_trials(n);
  require_rho(rho_u);
  FrequencyDistribution d;
  d.kind = DistributionKind::gaussian_count;
  d.trials = n;
  d.rho_u = rho_u;
  d.validity_warning = static_cast<double>(n) * rho_u * (1.0 - rho_u) < 9.0;
  d.support.resize(n + 1);
  d.density.resize(n + 1);
  for (std::size_t m = 0; m <= n; ++m) {
    d.support[m] = static_cast<double>(m);
    d.density[m] = gaussian_count_value(n, rho_u, static_cast<double>(m));
  }
  return d;
}

double relative_frequency_value(std::size_t n, double rho_u, double z) {
  const double var = rho_u * (1.0 - rho_u);
  const double nn = static_cast<double>(n);
  return std::sqrt(nn / (2.0 * std::numbers::pi * var)) * std::exp(-nn * (z - rho_u) * (z - rho_u) / (2.0 * var));
}

double relative_frequency_peak(std::size_t n, double rho_u) { return relative_frequency_value(n, rho_u, rho_u); }

FrequencyDistribution relative_frequency_density(std::size_t n, double rho_u, std::size_t points) {
  require_trials(n);
  require_rho(rho_u);
  if (points < 2) throw ContractError("need at least two z points");
  FrequencyDistribution d;
  d.kind = DistributionKind::gaussian_frequency;
  d.trials = n;
  d.rho_u = rho_u;
  d.validity_warning = static_cast<double>(n) * rho_u * (1.0 - rho_u) < 9.0;
  d.support.resize(points);
  d.density.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double z = static_cast<double>(i) / static_cast<double>(points - 1);
    d.support[i] = z;
    d.density[i] = relative_frequency_value(n, rho_u, z);
  }
  return d;
}

std::size_t HistogramSpec::locate(double z) const {
  if (!(z >= 0.0 && z <= 1.0)) throw ContractError("frequency outside [0, 1]");
  const double guess = std::floor((z - rho_u) / delta_z + 0.5);
  const auto last = static_cast<long long>(intervals.size()) - 1;
  auto i = std::clamp(static_cast<long long>(guess) - k_min(), 0LL, last);
  while (i > 0 && z < intervals[static_cast<std::size_t>(i)].lower) --i;
  while (i < last && !intervals[static_cast<std::size_t>(i)].contains(z)) ++i;
  return static_cast<std::size_t>(i);
}

const Interval& HistogramSpec::central() const {
  return intervals.at(static_cast<std::size_t>(-k_min()));
}

HistogramSpec make_histogram_spec(double rho_u, double delta_z) {
  if (!(rho_u >= 0.0 && rho_u <= 1.0)) throw ContractError("rho_u must lie in [0, 1]");
  if (!(delta_z > 0.0 && delta_z < 1.0)) throw ContractError("delta_z must lie in (0, 1)");
  // Shared edges e_k = rho_u + (k - 1/2) dz make neighbours meet exactly.
  auto edge = [&](long long k) { return rho_u + (static_cast<double>(k) - 0.5) * delta_z; };
  long long k_min = static_cast<long long>(std::floor(-rho_u / delta_z - 0.5)) + 1;
  while (edge(k_min) > 0.0) --k_min;
  while (edge(k_min + 1) <= 0.0) ++k_min;
  long long k_max = static_cast<long long>(std::ceil((1.0 - rho_u) / delta_z + 0.5)) - 1;
  while (edge(k_max + 1) < 1.0) ++k_max;
  while (edge(k_max) >= 1.0) --k_max;

  HistogramSpec spec{rho_u, delta_z, {}};
  for (long long k = k_min; k <= k_max; ++k) {
    Interval iv;
    iv.k = static_cast<int>(k);
    iv.center = rho_u + static_cast<double>(k) * delta_z;
    iv.lower = std::max(0.0, edge(k));
    iv.upper = std::min(1.0, edge(k + 1));
    iv.closed_upper = k == k_max;
    spec.intervals.push_back(iv);
  }
  return spec;
}

double CoarseHistogram::central_mass() const {
  return bar_graph.density.at(static_cast<std::size_t>(-spec.k_min()));
}

CoarseHistogram coarse_histogram(std::size_t n, double rho_u, double delta_z) {
  require_trials(n);
  require_rho(rho_u);
  auto spec = make_histogram_spec(rho_u, delta_z);
  const auto masses = bin_masses(spec, n, rho_u);

  FrequencyDistribution bars;
  bars.kind = DistributionKind::bar_graph;
  bars.trials = n;
  bars.rho_u = rho_u;
  bars.delta_z = delta_z;
  FrequencyDistribution hist = bars;
  hist.kind = DistributionKind::histogram;
  for (std::size_t i = 0; i < spec.intervals.size(); ++i) {
    const auto& iv = spec.intervals[i];
    bars.support.push_back(iv.center);
    bars.density.push_back(masses[i]);
    hist.support.push_back(iv.center);
    hist.density.push_back(masses[i] / iv.width());
    hist.lower.push_back(iv.lower);
    hist.upper.push_back(iv.upper);
  }
  return CoarseHistogram{std::move(spec), std::move(bars), std::move(hist)};
}

HistogramDeviation histogram_gaussian_deviation(const CoarseHistogram& hist) {
  const auto n = hist.histogram.trials;
  const double rho = hist.histogram.rho_u;
  const double sigma = std::sqrt(rho * (1.0 - rho) / static_cast<double>(n));
  HistogramDeviation out;
  out.peak = relative_frequency_peak(n, rho);
  for (std::size_t i = 0; i < hist.spec.intervals.size(); ++i) {
    const auto& iv = hist.spec.intervals[i];
    const double curve_mean = (gaussian_cdf(iv.upper, rho, sigma) - gaussian_cdf(iv.lower, rho, sigma)) / iv.width();
    out.sup_abs = std::max(out.sup_abs, std::abs(hist.histogram.density[i] - curve_mean));
  }
  return out;
}

double gaussian_sup_error(std::size_t n, double rho_u) {
  const auto exact = exact_count_density(n, rho_u);
  double worst = 0.0;
  for (std::size_t m = 0; m <= n; ++m)
    worst = std::max(worst, std::abs(gaussian_count_value(n, rho_u, static_cast<double>(m)) - exact.density[m]));
  return worst;
}

ChebyshevCheck chebyshev_bound_check(std::size_t n, double rho_u, double delta_z) {
  require_trials(n);
  require_rho(rho_u);
  if (!(delta_z > 0.0)) throw ContractError("delta_z must be positive");
  std::vector<double> tail;
  const double half = delta_z / 2.0;
  for (std::size_t m = 0; m <= n; ++m) {
    const double z = static_cast<double>(m) / static_cast<double>(n);
    if (std::abs(z - rho_u) > half) tail.push_back(binomial_term(m, n, rho_u));
  }
  ChebyshevCheck out;
  out.tail_mass = sum_descending(std::move(tail));
  out.bound = 4.0 * rho_u * (1.0 - rho_u) / (delta_z * delta_z * static_cast<double>(n));
  out.holds = out.tail_mass <= out.bound;
  return out;
}

double target_weight(std::span<const cplx> amplitudes, std::size_t u_index) {
  if (u_index >= amplitudes.size()) throw ContractError("u_index out of range");
  double total = 0.0;
  for (auto a : amplitudes) total += std::norm(a);
  if (!(total > 0.0)) throw ContractError("zero amplitude vector");
  return std::norm(amplitudes[u_index]) / total;
}

double coarse_frequency_eigenvalue(const HistogramSpec& spec, std::span<const std::size_t> outcomes,
                                   std::size_t u_index) {
  if (outcomes.empty()) throw ContractError("empty outcome sequence");
  const auto m = static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), u_index));
  const double z = static_cast<double>(m) / static_cast<double>(outcomes.size());
  return spec.intervals[spec.locate(z)].center;
}

FrequencyDistribution frequency_operator_density(std::span<const cplx> amplitudes, std::size_t n,
                                                 std::size_t u_index, Path path,
                                                 const std::optional<HistogramSpec>& coarse, const Tolerances& tol) {
  if (n == 0) throw ContractError("N must be positive");
  const double rho = target_weight(amplitudes, u_index);
  FrequencyDistribution d;
  d.trials = n;
  d.rho_u = rho;
  const double nn = static_cast<double>(n);

  if (path == Path::explicit_tensor) {
    if (n > 20) throw ContractError("explicit frequency operator path is limited to N <= 20");
    const auto psi = product_state(amplitudes, n, tol);
    const auto d0 = amplitudes.size();
    const std::size_t bins = coarse ? coarse->intervals.size() : n + 1;
    std::vector<std::vector<double>> terms(bins);
    // F_N is diagonal in the product basis with eigenvalue m/N.
    for_each_count(psi.size(), d0, n, u_index, [&](std::size_t flat, std::size_t count) {
      const double w = std::norm(psi[flat]);
      const auto bin = coarse ? coarse->locate(static_cast<double>(count) / nn) : count;
      terms[bin].push_back(w);
    });
    for (auto& t : terms) d.density.push_back(sum_descending(std::move(t)));
  } else {
    require_trials(n);
    d.density = coarse ? bin_masses(*coarse, n, rho) : count_terms(n, rho);
  }

  if (coarse) {
    d.kind = DistributionKind::bar_graph;
    d.delta_z = coarse->delta_z;
    for (const auto& iv : coarse->intervals) d.support.push_back(iv.center);
  } else {
    d.kind = DistributionKind::exact_count;
    for (std::size_t m = 0; m <= n; ++m) d.support.push_back(static_cast<double>(m) / nn);
  }
  return d;
}

double hartle_variance(std::span<const cplx> amplitudes, std::size_t n, std::size_t u_index, Path path,
                       const Tolerances& tol) {
  if (n == 0) throw ContractError("N must be positive");
  const double rho = target_weight(amplitudes, u_index);
  const double nn = static_cast<double>(n);
  if (path == Path::combinatorial) return rho * (1.0 - rho) / nn;

  if (n > 20) throw ContractError("explicit frequency operator path is limited to N <= 20");
  const auto psi = product_state(amplitudes, n, tol);
  std::vector<double> terms;
  terms.reserve(psi.size());
  for_each_count(psi.size(), amplitudes.size(), n, u_index, [&](std::size_t flat, std::size_t count) {
    const double dev = static_cast<double>(count) / nn - rho;
    terms.push_back(std::norm(psi[flat]) * dev * dev);
  });
  return sum_descending(std::move(terms));
}

FrequencyDistribution estimator_distribution(std::size_t n, double rho_u, Prior, std::size_t grid_points) {
  require_trials(n);
  require_rho(rho_u);
  if (grid_points < 2) throw ContractError("estimator grid needs at least two points");
  const auto weights = count_terms(n, rho_u);
  const double w_max = *std::max_element(weights.begin(), weights.end());

  FrequencyDistribution d;
  d.kind = DistributionKind::estimator;
  d.trials = n;
  d.rho_u = rho_u;
  d.support.resize(grid_points);
  d.density.assign(grid_points, 0.0);
  for (std::size_t i = 0; i < grid_points; ++i)
    d.support[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(grid_points);

  // Uniform prior: the posterior after m of N is Beta(m+1, N-m+1), whose
  // density is (N+1) times the binomial term evaluated at P_u.
  double used = 0.0;
  const double scale = static_cast<double>(n) + 1.0;
  for (std::size_t m = 0; m <= n; ++m) {
    const double w = weights[m];
    if (w < 1e-17 * w_max) continue;
    used += w;
    for (std::size_t i = 0; i < grid_points; ++i) d.density[i] += w * scale * binomial_term(m, n, d.support[i]);
  }
  for (auto& v : d.density) v /= used;
  return d;
}

double grid_mass(const FrequencyDistribution& dist, double lo, double hi) {
  const double h = 1.0 / static_cast<double>(dist.support.size());
  std::vector<double> terms;
  for (std::size_t i = 0; i < dist.support.size(); ++i)
    if (dist.support[i] >= lo && dist.support[i] <= hi) terms.push_back(dist.density[i] * h);
  return sum_descending(std::move(terms));
}

double grid_mean(const FrequencyDistribution& dist) {
  const double h = 1.0 / static_cast<double>(dist.support.size());
  std::vector<double> terms;
  for (std::size_t i = 0; i < dist.support.size(); ++i) terms.push_back(dist.support[i] * dist.density[i] * h);
  return sum_descending(std::move(terms));
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(std::ostream& out, const FrequencyDistribution& dist) {
  out << "kind,N,rho_u,delta_z\n";
  out << to_string(dist.kind) << ',' << dist.trials << ',' << format_number(dist.rho_u) << ','
      << (dist.delta_z ? format_number(*dist.delta_z) : std::string{}) << '\n';
  out << "support,density\n";
  for (std::size_t i = 0; i < dist.support.size(); ++i)
    out << format_number(dist.support[i]) << ',' << format_number(dist.density[i]) << '\n';
}

}  // namespace everett::stats
