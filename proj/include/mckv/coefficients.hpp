#pragma once
// Coefficient sets b_t(x, mu), sigma_t(x-, mu) for the mean-field dynamics.
//
// The engine freezes the measure argument at the start of each Euler step.
// Coefficients declare how much of the measure they need: None, the mean
// vector only, or the full cloud.  Measure functionals (anything beyond the
// mean) go through the optional `summarize` hook so they are evaluated once
// per step instead of once per particle.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mckv/measure.hpp"

namespace mckv {

enum class MeasureDependence { None, MeanOnly, General };

// Borrowed view of the frozen measure argument during one step.  `mean` is
// always populated.  `cloud` is non-null only for General dependence.
// `summary` carries the output of CoefficientSet::summarize when present.
struct MeasureView {
  std::span<const double> mean;
  const EmpiricalMeasure* cloud = nullptr;
  std::span<const double> summary;
};

struct CoefficientSet {
  int dim = 1;
  MeasureDependence dependence = MeasureDependence::None;

  // Declared Assumption-style constants; diagnostics compare sampled ratios
  // against them.
  double lipschitz_bound = 0.0;
  double growth_bound = 0.0;

  // Per-step measure functional, evaluated once per (t, measure).
  std::function<std::vector<double>(double t, const MeasureView& mu)> summarize;

  // b_t(x, mu) -> out, d values.
  std::function<void(double t, std::span<const double> x, const MeasureView& mu,
                     std::span<double> out)>
      drift;

  // sigma_t(x-, mu) -> out, d x d row-major.  Ignored when
  // sigma_is_constant; then constant_sigma is used without a call.
  std::function<void(double t, std::span<const double> x, const MeasureView& mu,
                     std::span<double> out)>
      sigma;
  bool sigma_is_constant = true;
  std::vector<double> constant_sigma;  // d x d row-major

  // Optional drift over a component-major block: xs[j*n + i] -> out same
  // layout.  The engine falls back to the pointwise form when absent.
  std::function<void(double t, const double* xs, std::size_t n, const MeasureView& mu,
                     double* out)>
      drift_batch;

  void validate() const;
};

// Linear mean-field drift b(x, mu) = A x + A' <mu, id> with constant
// diffusion matrix B (all d x d row-major).
CoefficientSet stable_ou_coefficients(int dim, std::span<const double> a_mat,
                                      std::span<const double> a_prime_mat,
                                      std::span<const double> b_mat);
CoefficientSet stable_ou_coefficients(double a, double a_prime, double b_scale);

// Bounded-interaction Lipschitz test set: b_j(x, mu) = a x_j + c E_mu[sin y_j],
// sigma = s I.
CoefficientSet sin_mean_coefficients(int dim, double a, double c, double s);

// b(x, mu) = (E_mu |y|^beta) * (1,...,1), sigma = 0.  For beta < 1 this is
// only Holder in the measure; it drives the non-uniqueness demonstration.
CoefficientSet moment_drift_coefficients(int dim, double beta);

// Max observed ratio |b(x,mu)-b(x',mu')| / (|x-x'| + W1(mu,mu')) over random
// triples, and the analogue for sigma.  Sampled diagnostic for the declared
// lipschitz_bound.
struct LipschitzProbe {
  double drift_ratio = 0.0;
  double sigma_ratio = 0.0;
};
LipschitzProbe sampled_lipschitz_ratio(const CoefficientSet& coeffs, std::uint64_t seed,
                                       std::size_t trials);

}  // namespace mckv
