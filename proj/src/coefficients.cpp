#include "mckv/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include "mckv/errors.hpp"
#include "mckv/kernels.hpp"
#include "mckv/rng.hpp"

namespace mckv {

void CoefficientSet::validate() const {
  if (dim < 1) throw ParameterError("coefficients: dim must be >= 1");
  if (!drift) throw ParameterError("coefficients: drift callback required");
  if (sigma_is_constant) {
    if (constant_sigma.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim)) {
      throw ParameterError("coefficients: constant_sigma must be d x d");
    }
  } else if (!sigma) {
    throw ParameterError("coefficients: sigma callback required when not constant");
  }
  if (!(lipschitz_bound >= 0.0) || !(growth_bound >= 0.0)) {
    throw ParameterError("coefficients: declared bounds must be >= 0");
  }
}

namespace {

double frobenius(std::span<const double> m) {
  double s = 0.0;
  for (double x : m) s += x * x;
  return std::sqrt(s);
}

double max_abs_row_sum(std::span<const double> m, int d) {
  double worst = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row += std::fabs(m[static_cast<std::size_t>(i * d + j)]);
    worst = std::max(worst, row);
  }
  return worst;
}

}  // namespace

CoefficientSet stable_ou_coefficients(int dim, std::span<const double> a_mat,
                                      std::span<const double> a_prime_mat,
                                      std::span<const double> b_mat) {
  if (dim < 1) throw ParameterError("coefficients: dim must be >= 1");
  const std::size_t dd = static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim);
  if (a_mat.size() != dd || a_prime_mat.size() != dd || b_mat.size() != dd) {
    throw ParameterError("coefficients: matrices must be d x d");
  }
  std::vector<double> a(a_mat.begin(), a_mat.end());
  std::vector<double> ap(a_prime_mat.begin(), a_prime_mat.end());

  CoefficientSet c;
  c.dim = dim;
  c.dependence = MeasureDependence::MeanOnly;
  c.lipschitz_bound = max_abs_row_sum(a, dim) + max_abs_row_sum(ap, dim);
  c.growth_bound = c.lipschitz_bound + frobenius(b_mat);
  c.sigma_is_constant = true;
  c.constant_sigma.assign(b_mat.begin(), b_mat.end());

  c.drift = [dim, a, ap](double, std::span<const double> x, const MeasureView& mu,
                         std::span<double> out) {
    for (int i = 0; i < dim; ++i) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) {
        const auto ij = static_cast<std::size_t>(i * dim + j);
        s += a[ij] * x[static_cast<std::size_t>(j)] + ap[ij] * mu.mean[static_cast<std::size_t>(j)];
      }
      out[static_cast<std::size_t>(i)] = s;
    }
  };
  c.drift_batch = [dim, a, ap](double, const double* xs, std::size_t n, const MeasureView& mu,
                               double* out) {
    for (int i = 0; i < dim; ++i) {
      double* row = out + static_cast<std::size_t>(i) * n;
      double shift = 0.0;
      for (int j = 0; j < dim; ++j) {
        shift += ap[static_cast<std::size_t>(i * dim + j)] * mu.mean[static_cast<std::size_t>(j)];
      }
      std::fill(row, row + n, shift);
      for (int j = 0; j < dim; ++j) {
        const double aij = a[static_cast<std::size_t>(i * dim + j)];
        if (aij != 0.0) kernels::axpy(aij, xs + static_cast<std::size_t>(j) * n, row, n);
      }
    }
  };
  c.validate();
  return c;
}

CoefficientSet stable_ou_coefficients(double a, double a_prime, double b_scale) {
  const double am[1] = {a}, apm[1] = {a_prime}, bm[1] = {b_scale};
  return stable_ou_coefficients(1, am, apm, bm);
}

CoefficientSet sin_mean_coefficients(int dim, double a, double c, double s) {
  if (dim < 1) throw ParameterError("coefficients: dim must be >= 1");
  CoefficientSet set;
  set.dim = dim;
  set.dependence = MeasureDependence::General;
  set.lipschitz_bound = std::fabs(a) + std::fabs(c);
  set.growth_bound = std::fabs(a) + std::fabs(c) + std::fabs(s);
  set.sigma_is_constant = true;
  set.constant_sigma.assign(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);
  for (int j = 0; j < dim; ++j) set.constant_sigma[static_cast<std::size_t>(j * dim + j)] = s;

  // summary = per-component mean of sin(y_j) over the cloud
  set.summarize = [dim](double, const MeasureView& mu) {
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    const auto& cloud = *mu.cloud;
    const std::size_t n = cloud.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = cloud.point(i);
      for (int j = 0; j < dim; ++j) out[static_cast<std::size_t>(j)] += std::sin(p[static_cast<std::size_t>(j)]);
    }
    for (auto& v : out) v /= static_cast<double>(n);
    return out;
  };
  set.drift = [dim, a, c](double, std::span<const double> x, const MeasureView& mu,
                          std::span<double> out) {
    for (int j = 0; j < dim; ++j) {
      out[static_cast<std::size_t>(j)] =
          a * x[static_cast<std::size_t>(j)] + c * mu.summary[static_cast<std::size_t>(j)];
    }
  };
  set.validate();
  return set;
}

CoefficientSet moment_drift_coefficients(int dim, double beta) {
  if (dim < 1) throw ParameterError("coefficients: dim must be >= 1");
  if (!(beta > 0.0) || beta > 2.0) throw ParameterError("coefficients: beta out of (0,2]");
  CoefficientSet set;
  set.dim = dim;
  set.dependence = MeasureDependence::General;
  set.lipschitz_bound = 0.0;  // not Lipschitz in the measure for beta < 1
  set.growth_bound = 1.0;
  set.sigma_is_constant = true;
  set.constant_sigma.assign(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);

  set.summarize = [beta](double, const MeasureView& mu) {
    const auto& cloud = *mu.cloud;
    double acc = 0.0;
    const std::size_t n = cloud.size();
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (double v : cloud.point(i)) sq += v * v;
      acc += std::pow(sq, 0.5 * beta);
    }
    return std::vector<double>{acc / static_cast<double>(n)};
  };
  set.drift = [dim](double, std::span<const double>, const MeasureView& mu,
                    std::span<double> out) {
    for (int j = 0; j < dim; ++j) out[static_cast<std::size_t>(j)] = mu.summary[0];
  };
  set.validate();
  return set;
}

LipschitzProbe sampled_lipschitz_ratio(const CoefficientSet& coeffs, std::uint64_t seed,
                                       std::size_t trials) {
  coeffs.validate();
  const int d = coeffs.dim;
  RandomStream stream(SeedLineage{seed, purpose::kValidation, 0, 0});
  constexpr std::size_t cloud_n = 16;

  const auto make_cloud = [&](double spread) {
    std::vector<double> pts(cloud_n * static_cast<std::size_t>(d));
    for (auto& p : pts) p = spread * stream.normal();
    return EmpiricalMeasure(d, std::move(pts));
  };
  const auto view_of = [&](const EmpiricalMeasure& cloud, std::vector<double>& mean_store,
                           std::vector<double>& summary_store, double t) {
    mean_store.assign(static_cast<std::size_t>(d), 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto p = cloud.point(i);
      for (int j = 0; j < d; ++j) mean_store[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
    }
    for (auto& m : mean_store) m /= static_cast<double>(cloud.size());
    MeasureView view;
    view.mean = mean_store;
    view.cloud = &cloud;
    if (coeffs.summarize) {
      summary_store = coeffs.summarize(t, view);
      view.summary = summary_store;
    }
    return view;
  };

  LipschitzProbe probe;
  std::vector<double> x(static_cast<std::size_t>(d)), xp(static_cast<std::size_t>(d));
  std::vector<double> bx(static_cast<std::size_t>(d)), bxp(static_cast<std::size_t>(d));
  std::vector<double> sx(static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
  std::vector<double> sxp(sx.size());
  std::vector<double> mean_a, mean_b, sum_a, sum_b;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const double t = stream.uniform01();
    for (auto& v : x) v = 3.0 * stream.normal();
    for (std::size_t j = 0; j < x.size(); ++j) xp[j] = x[j] + 0.5 * stream.normal();
    const auto mu = make_cloud(2.0);
    EmpiricalMeasure nu = mu;
    for (auto& p : nu.pts) p += 0.3 * stream.normal();
    const auto va = view_of(mu, mean_a, sum_a, t);
    const auto vb = view_of(nu, mean_b, sum_b, t);

    double dx = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dx += (x[j] - xp[j]) * (x[j] - xp[j]);
    dx = std::sqrt(dx);
    const double dmu = w_beta(mu, nu, 1.0);
    const double denom = dx + dmu;
    if (denom < 1e-12) continue;

    coeffs.drift(t, x, va, bx);
    coeffs.drift(t, xp, vb, bxp);
    double db = 0.0;
    for (std::size_t j = 0; j < bx.size(); ++j) db += (bx[j] - bxp[j]) * (bx[j] - bxp[j]);
    probe.drift_ratio = std::max(probe.drift_ratio, std::sqrt(db) / denom);

    if (!coeffs.sigma_is_constant) {
      coeffs.sigma(t, x, va, sx);
      coeffs.sigma(t, xp, vb, sxp);
      double ds = 0.0;
      for (std::size_t j = 0; j < sx.size(); ++j) ds += (sx[j] - sxp[j]) * (sx[j] - sxp[j]);
      probe.sigma_ratio = std::max(probe.sigma_ratio, std::sqrt(ds) / denom);
    }
  }
  return probe;
}

}  // namespace mckv
