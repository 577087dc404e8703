#pragma once

// Branch-weight statistics for N repeated measurements: exact binomial
// densities over counts, Gaussian approximations, coarse-grained frequency
// histograms, the frequency operator, concentration bounds and the mixed
// observer estimator.

#include "everett/hilbert.hpp"

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace everett::stats {

enum class DistributionKind { exact_count, gaussian_count, gaussian_frequency, histogram, bar_graph, estimator };

std::string to_string(DistributionKind kind);

struct FrequencyDistribution {
  DistributionKind kind = DistributionKind::exact_count;
  std::vector<double> support;
  std::vector<double> density;
  std::size_t trials = 0;  // N
  double rho_u = 0.0;
  std::optional<double> delta_z;
  /// Interval edges, filled for histogram views.
  std::vector<double> lower;
  std::vector<double> upper;
  /// Set when a Gaussian form is used outside N rho (1 - rho) >= 9.
  bool validity_warning = false;

  double total() const;
};

/// Compensated sum after sorting by descending magnitude.
double sum_descending(std::vector<double> terms);

/// Binomial term C(N,m) p^m (1-p)^(N-m) via the saddle-point (Stirling error)
/// form of the log-gamma ratio. Accepts p in [0, 1].
double binomial_term(std::size_t m, std::size_t n, double p);
double log_binomial_term(std::size_t m, std::size_t n, double p);

FrequencyDistribution exact_count_density(std::size_t n, double rho_u);
FrequencyDistribution gaussian_count_density(std::size_t n, double rho_u);

/// rho(z|u): Gaussian in z with mean rho_u and variance rho_u (1 - rho_u) / N.
double relative_frequency_value(std::size_t n, double rho_u, double z);
/// Same density sampled on `points` evenly spaced z values over [0, 1].
FrequencyDistribution relative_frequency_density(std::size_t n, double rho_u, std::size_t points = 4001);
double relative_frequency_peak(std::size_t n, double rho_u);

struct Interval {
  int k = 0;
  double center = 0.0;  // z_k = rho_u + k dz; may fall outside [0,1] for clipped ends
  double lower = 0.0;
  double upper = 0.0;
  bool closed_upper = false;

  double width() const { return upper - lower; }
  bool contains(double z) const { return z >= lower && (z < upper || (closed_upper && z == upper)); }
};

/// Intervals of width delta_z centred on rho_u + k delta_z, clipped to [0, 1].
/// Half-open on the right except the last, which is closed at 1.
struct HistogramSpec {
  double rho_u = 0.0;
  double delta_z = 0.0;
  std::vector<Interval> intervals;  // ascending k

  int k_min() const { return intervals.front().k; }
  int k_max() const { return intervals.back().k; }
  /// Position in `intervals` of the interval containing z in [0, 1].
  std::size_t locate(double z) const;
  const Interval& central() const;
};

HistogramSpec make_histogram_spec(double rho_u, double delta_z);

struct CoarseHistogram {
  HistogramSpec spec;
  FrequencyDistribution bar_graph;  // rho~(k) at z_k
  FrequencyDistribution histogram;  // rho~(k) / |I_k| on I_k
  double central_mass() const;      // rho~(0)
};

CoarseHistogram coarse_histogram(std::size_t n, double rho_u, double delta_z);

struct HistogramDeviation {
  double sup_abs = 0.0;   // max_k |hist_k - mean of rho(z|u) over I_k|
  double peak = 0.0;      // rho(z|u) at z = rho_u
  double relative() const { return sup_abs / peak; }
};

/// Compares each histogram bar with the Gaussian frequency density averaged
/// over the same interval.
HistogramDeviation histogram_gaussian_deviation(const CoarseHistogram& hist);

/// max_m |gaussian(m) - exact(m)|.
double gaussian_sup_error(std::size_t n, double rho_u);

struct ChebyshevCheck {
  double tail_mass = 0.0;
  double bound = 0.0;
  bool holds = false;
};

ChebyshevCheck chebyshev_bound_check(std::size_t n, double rho_u, double delta_z);

enum class Path { explicit_tensor, combinatorial };

/// rho_u = |c_u|^2 of the (normalized) single-system amplitudes.
double target_weight(std::span<const cplx> amplitudes, std::size_t u_index);

/// Eigenvalue density of F_N (or, with `coarse`, of the interval-snapped
/// operator) on the N-fold product of the single-system state.
FrequencyDistribution frequency_operator_density(std::span<const cplx> amplitudes, std::size_t n,
                                                 std::size_t u_index, Path path,
                                                 const std::optional<HistogramSpec>& coarse = std::nullopt,
                                                 const Tolerances& tol = {});

/// Eigenvalue of the coarse frequency operator on a product basis state.
double coarse_frequency_eigenvalue(const HistogramSpec& spec, std::span<const std::size_t> outcomes,
                                   std::size_t u_index);

/// <psi^N| (F_N - rho_u)^2 |psi^N>.
double hartle_variance(std::span<const cplx> amplitudes, std::size_t n, std::size_t u_index, Path path,
                       const Tolerances& tol = {});

enum class Prior { uniform };

/// Branch-weighted mixture, over counts m, of the posterior for P_u after m
/// successes in N, on a grid of cell midpoints over [0, 1].
FrequencyDistribution estimator_distribution(std::size_t n, double rho_u, Prior prior = Prior::uniform,
                                             std::size_t grid_points = 2048);

/// Integral of a gridded density over cells whose midpoints lie in [lo, hi].
double grid_mass(const FrequencyDistribution& dist, double lo, double hi);
double grid_mean(const FrequencyDistribution& dist);

/// Header row (kind,N,rho_u,delta_z), its values, then support,density rows.
void write_csv(std::ostream& out, const FrequencyDistribution& dist);
std::string format_number(double value);

}  // namespace everett::stats
