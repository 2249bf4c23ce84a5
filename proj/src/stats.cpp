#include "mckv/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>

#include "mckv/errors.hpp"

namespace mckv::stats {

LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ParameterError("fit_linear: size mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw ParameterError("fit_linear: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw ParameterError("fit_linear: degenerate abscissae");
  LinearFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ssr += r * r;
  }
  fit.r2 = (syy > 0.0) ? 1.0 - ssr / syy : 1.0;
  if (n > 2) fit.slope_se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  return fit;
}

namespace {

// Kolmogorov distribution tail, Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 l^2).
double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double d, double n_effective) {
  const double sn = std::sqrt(n_effective);
  return kolmogorov_q(d * (sn + 0.12 + 0.11 / sn));
}

}  // namespace

TestResult ks_test_uniform(std::span<const double> samples, double a, double b) {
  if (samples.empty()) throw ParameterError("ks: empty sample");
  if (!(b > a)) throw ParameterError("ks: invalid interval");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = std::clamp((s[i] - a) / (b - a), 0.0, 1.0);
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
  }
  return {d, ks_p_value(d, n), s.size()};
}

TestResult ks_test_two_sample(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ParameterError("ks: empty sample");
  std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return {d, ks_p_value(d, ne), a.size() + b.size()};
}

TestResult chi2_poisson_gof(std::span<const long> counts, double mean_rate) {
  if (counts.empty()) throw ParameterError("chi2: empty sample");
  if (!(mean_rate > 0.0)) throw ParameterError("chi2: mean must be positive");
  long max_count = 0;
  for (long c : counts) {
    if (c < 0) throw ParameterError("chi2: negative count");
    max_count = std::max(max_count, c);
  }
  const double n = static_cast<double>(counts.size());
  // observed histogram over 0..max_count
  std::vector<double> observed(static_cast<std::size_t>(max_count) + 1, 0.0);
  for (long c : counts) observed[static_cast<std::size_t>(c)] += 1.0;
  // expected Poisson masses, final cell absorbs the tail
  std::vector<double> expected(observed.size(), 0.0);
  double pmf = std::exp(-mean_rate), cdf = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    if (k > 0) pmf *= mean_rate / static_cast<double>(k);
    expected[k] = n * pmf;
    cdf += pmf;
  }
  expected.back() += n * std::max(0.0, 1.0 - cdf);
  // merge from the tail until every bin expects >= 5
  std::vector<double> obs_b, exp_b;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t k = expected.size(); k-- > 0;) {
    o_acc += observed[k];
    e_acc += expected[k];
    if (e_acc >= 5.0 || k == 0) {
      obs_b.push_back(o_acc);
      exp_b.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (obs_b.size() < 2) {
    // everything collapsed into one cell; no test possible
    return {0.0, 1.0, 0};
  }
  double stat = 0.0;
  for (std::size_t k = 0; k < obs_b.size(); ++k) {
    const double diff = obs_b[k] - exp_b[k];
    stat += diff * diff / exp_b[k];
  }
  const std::size_t dof = obs_b.size() - 1;
  boost::math::chi_squared dist(static_cast<double>(dof));
  const double p = boost::math::cdf(boost::math::complement(dist, stat));
  return {stat, p, dof};
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ParameterError("mean: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw ParameterError("variance: need at least two samples");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double standard_error(std::span<const double> xs) {
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

EcfPoint ecf_cos(std::span<const double> samples, double u) {
  if (samples.empty()) throw ParameterError("ecf: empty sample");
  double s = 0.0, s2 = 0.0;
  for (double x : samples) {
    const double c = std::cos(u * x);
    s += c;
    s2 += c * c;
  }
  const double n = static_cast<double>(samples.size());
  const double m = s / n;
  const double var = std::max(0.0, (s2 - n * m * m) / (n - 1.0));
  return {m, std::sqrt(var / n)};
}

}  // namespace mckv::stats
