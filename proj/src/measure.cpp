#include "mckv/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mckv/errors.hpp"
#include "mckv/kernels.hpp"

namespace mckv {

EmpiricalMeasure::EmpiricalMeasure(int d, std::vector<double> p) : dim(d), pts(std::move(p)) {
  if (dim < 1) throw ParameterError("measure: dim must be >= 1");
  if (pts.empty() || pts.size() % static_cast<std::size_t>(dim) != 0) {
    throw ParameterError("measure: point buffer size must be a positive multiple of dim");
  }
}

namespace {

void require_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim != 1 || nu.dim != 1) {
    throw ParameterError("measure: quantile coupling requires dim == 1");
  }
}

double ground_cost(std::span<const double> x, std::span<const double> y, double beta) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    s += d * d;
  }
  return std::pow(s, 0.5 * beta);
}

// integral of |F^-1 - G^-1|^beta over (0,1) for sorted samples
double quantile_integral(std::span<const double> x, std::span<const double> y,
                         double beta) {
  const std::size_t n = x.size(), m = y.size();
  std::size_t i = 0, j = 0;
  double q_prev = 0.0, acc = 0.0;
  while (i < n && j < m) {
    const double qi = static_cast<double>(i + 1) / static_cast<double>(n);
    const double qj = static_cast<double>(j + 1) / static_cast<double>(m);
    const double q = std::min(qi, qj);
    const double gap = std::fabs(x[i] - y[j]);
    acc += (q - q_prev) * (beta == 1.0 ? gap : std::pow(gap, beta));
    q_prev = q;
    if (qi <= q) ++i;
    if (qj <= q) ++j;
  }
  return acc;
}

}  // namespace

double w1_exact_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  require_1d(mu, nu);
  std::vector<double> x = mu.pts, y = nu.pts;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  if (x.size() == y.size()) {
    return kernels::sum_abs_diff(x.data(), y.data(), x.size()) /
           static_cast<double>(x.size());
  }
  return quantile_integral(x, y, 1.0);
}

double w_beta_exact_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double beta) {
  require_1d(mu, nu);
  if (!(beta >= 1.0)) {
    throw ParameterError("measure: monotone coupling is only exact for beta >= 1");
  }
  std::vector<double> x = mu.pts, y = nu.pts;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return std::pow(quantile_integral(x, y, beta), 1.0 / beta);
}

namespace detail {

double w1_sorted_1d(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ParameterError("measure: empty sample");
  if (x.size() == y.size()) {
    return kernels::sum_abs_diff(x.data(), y.data(), x.size()) /
           static_cast<double>(x.size());
  }
  return quantile_integral(x, y, 1.0);
}

std::pair<std::vector<int>, double> solve_assignment(std::span<const double> cost,
                                                     std::size_t n) {
  if (n == 0) throw ParameterError("assignment: empty problem");
  if (cost.size() != n * n) throw ParameterError("assignment: cost matrix must be n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based helpers; p[j] = row matched to column j, column 0 is virtual
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = static_cast<int>(i);
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = static_cast<std::size_t>(p[j0]);
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = static_cast<int>(j0);
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[static_cast<std::size_t>(p[j])] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = static_cast<std::size_t>(way[j0]);
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] > 0) {
      row_to_col[static_cast<std::size_t>(p[j] - 1)] = static_cast<int>(j - 1);
      total += cost[static_cast<std::size_t>(p[j] - 1) * n + (j - 1)];
    }
  }
  return {std::move(row_to_col), total};
}

}  // namespace detail

double w_beta_exact_matching(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                             double beta, std::size_t cap) {
  if (mu.dim != nu.dim) throw ParameterError("measure: dimension mismatch");
  if (!(beta > 0.0) || beta > 2.0) throw ParameterError("measure: beta out of (0,2]");
  const std::size_t n = mu.size();
  if (n != nu.size()) {
    throw ParameterError("measure: assignment route requires equal sample counts");
  }
  if (n > cap) {
    std::ostringstream msg;
    msg << "measure: exact matching capped at " << cap << " points (got " << n
        << "); use the 1-d quantile route or subsample";
    throw SizeError(msg.str());
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost[i * n + j] = ground_cost(mu.point(i), nu.point(j), beta);
    }
  }
  const auto [assign, total] = detail::solve_assignment(cost, n);
  (void)assign;
  const double mean_cost = total / static_cast<double>(n);
  return beta >= 1.0 ? std::pow(mean_cost, 1.0 / beta) : mean_cost;
}

double w_beta(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double beta,
              std::size_t cap) {
  if (mu.dim == 1 && nu.dim == 1 && beta >= 1.0) {
    return beta == 1.0 ? w1_exact_1d(mu, nu) : w_beta_exact_1d(mu, nu, beta);
  }
  return w_beta_exact_matching(mu, nu, beta, cap);
}

double moment_m_beta(const EmpiricalMeasure& mu, double beta) {
  if (!(beta > 0.0)) throw ParameterError("measure: beta must be positive");
  const std::size_t n = mu.size();
  double acc = 0.0;
  if (mu.dim == 1) {
    for (double x : mu.pts) acc += std::pow(std::fabs(x), beta);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double x : mu.point(i)) s += x * x;
      acc += std::pow(s, 0.5 * beta);
    }
  }
  const double mean = acc / static_cast<double>(n);
  return beta >= 1.0 ? std::pow(mean, 1.0 / beta) : mean;
}

// ---------------------------------------------------------------------------
// MeasureFlow

MeasureFlow MeasureFlow::constant_mean(std::shared_ptr<const TimeGrid> grid,
                                       std::span<const double> mean) {
  if (!grid) throw ParameterError("flow: null grid");
  MeasureFlow f;
  f.rep = Rep::MeanOnly;
  f.dim = static_cast<int>(mean.size());
  f.means.reserve(grid->num_nodes() * mean.size());
  for (std::size_t k = 0; k < grid->num_nodes(); ++k) {
    f.means.insert(f.means.end(), mean.begin(), mean.end());
  }
  f.grid = std::move(grid);
  f.validate();
  return f;
}

MeasureFlow MeasureFlow::constant_cloud(std::shared_ptr<const TimeGrid> grid,
                                        const EmpiricalMeasure& cloud) {
  if (!grid) throw ParameterError("flow: null grid");
  MeasureFlow f;
  f.rep = Rep::Cloud;
  f.dim = cloud.dim;
  f.cloud_size = cloud.size();
  f.clouds.reserve(grid->num_nodes() * cloud.pts.size());
  for (std::size_t k = 0; k < grid->num_nodes(); ++k) {
    f.clouds.insert(f.clouds.end(), cloud.pts.begin(), cloud.pts.end());
  }
  f.grid = std::move(grid);
  f.validate();
  return f;
}

std::span<const double> MeasureFlow::mean_at_node(std::size_t k) const {
  const auto d = static_cast<std::size_t>(dim);
  return {means.data() + k * d, d};
}

EmpiricalMeasure MeasureFlow::cloud_at_node(std::size_t k) const {
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t stride = cloud_size * d;
  std::vector<double> pts(clouds.begin() + static_cast<std::ptrdiff_t>(k * stride),
                          clouds.begin() + static_cast<std::ptrdiff_t>((k + 1) * stride));
  return EmpiricalMeasure(dim, std::move(pts));
}

void MeasureFlow::validate() const {
  if (!grid) throw ParameterError("flow: null grid");
  if (dim < 1) throw ParameterError("flow: dim must be >= 1");
  const std::size_t nodes = grid->num_nodes();
  const auto d = static_cast<std::size_t>(dim);
  if (rep == Rep::MeanOnly) {
    if (means.size() != nodes * d) throw ParameterError("flow: means size mismatch");
  } else {
    if (cloud_size == 0) throw ParameterError("flow: empty clouds");
    if (clouds.size() != nodes * cloud_size * d) {
      throw ParameterError("flow: cloud buffer size mismatch");
    }
  }
}

double flow_distance(const MeasureFlow& f, const MeasureFlow& g, double beta,
                     std::vector<double>* profile) {
  f.validate();
  g.validate();
  if (f.dim != g.dim) throw GridError("flow_distance: dimension mismatch");
  if (f.rep != g.rep) throw GridError("flow_distance: representation mismatch");
  if (!(*f.grid == *g.grid)) throw GridError("flow_distance: flows live on different grids");
  const std::size_t nodes = f.grid->num_nodes();
  if (profile) profile->assign(nodes, 0.0);
  double sup = 0.0;
  for (std::size_t k = 0; k < nodes; ++k) {
    double dist;
    if (f.rep == MeasureFlow::Rep::MeanOnly) {
      const auto a = f.mean_at_node(k), b = g.mean_at_node(k);
      dist = ground_cost(a, b, beta);
      if (beta >= 1.0) dist = std::pow(dist, 1.0 / beta);
    } else {
      dist = w_beta(f.cloud_at_node(k), g.cloud_at_node(k), beta);
    }
    if (profile) (*profile)[k] = dist;
    sup = std::max(sup, dist);
  }
  return sup;
}

}  // namespace mckv
