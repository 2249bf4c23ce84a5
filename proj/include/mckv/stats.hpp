#pragma once
// Small statistics toolkit: least-squares fits for rate exponents and the
// goodness-of-fit tests used by the noise validation battery.

#include <cstddef>
#include <span>
#include <vector>

namespace mckv::stats {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x.  Needs n >= 2 (se needs
// n >= 3 and is 0 otherwise).
LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t dof = 0;
};

// One-sample Kolmogorov-Smirnov against Uniform[a, b].
TestResult ks_test_uniform(std::span<const double> samples, double a, double b);

// Two-sample Kolmogorov-Smirnov.
TestResult ks_test_two_sample(std::span<const double> x, std::span<const double> y);

// Chi-squared goodness of fit of integer counts against Poisson(mean).
// Tail bins are merged until every expected count is >= 5.
TestResult chi2_poisson_gof(std::span<const long> counts, double mean);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);        // unbiased
double standard_error(std::span<const double> xs);  // of the mean

struct EcfPoint {
  double value = 0.0;  // mean of cos(u x)
  double se = 0.0;     // Monte Carlo standard error of that mean
};

// Real part of the empirical characteristic function at frequency u.
EcfPoint ecf_cos(std::span<const double> samples, double u);

}  // namespace mckv::stats
