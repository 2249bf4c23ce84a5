#include "mckv/levy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "mckv/errors.hpp"
#include "mckv/quadrature.hpp"

namespace mckv {

namespace {

constexpr double kPi = std::numbers::pi;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Spherical average of cos(u.z) over the unit sphere at radius v,
// Lambda_d(v) = Gamma(d/2) (2/v)^{d/2-1} J_{d/2-1}(v).
double sphere_cos_avg(int d, double v) {
  if (v < 1e-4) {
    const double v2 = v * v;
    return 1.0 - v2 / (2.0 * d) + v2 * v2 / (8.0 * d * (d + 2.0));
  }
  switch (d) {
    case 1:
      return std::cos(v);
    case 2:
      return std::cyl_bessel_j(0.0, v);
    case 3:
      return std::sin(v) / v;
    default: {
      const double nu = 0.5 * d - 1.0;
      return std::tgamma(0.5 * d) * std::pow(2.0 / v, nu) * std::cyl_bessel_j(nu, v);
    }
  }
}

// I_{alpha,d} = int_0^inf (1 - Lambda_d(v)) v^{-1-alpha} dv, so that the
// radial intensity K/I... specifically K_{alpha,d} = 1 / I_{alpha,d} yields
// characteristic exponent |u|^alpha.  d = 1 has the closed form
// -Gamma(2-alpha) cos(pi alpha / 2) / (alpha (alpha - 1)).
double stable_radial_norm_integral(double alpha, int d) {
  if (d == 1) {
    if (alpha == 1.0) return kPi / 2.0;
    return -std::tgamma(2.0 - alpha) * std::cos(kPi * alpha / 2.0) /
           (alpha * (alpha - 1.0));
  }
  // Substituted body: v = t^p with p = 1/(2-alpha) flattens the v^{1-alpha}
  // behaviour at the origin.  Analytic tail from A with a one-term
  // integration-by-parts correction for the oscillatory remainder.
  const double p = 1.0 / (2.0 - alpha);
  const double A = 4000.0;
  const double t_max = std::pow(A, 1.0 / p);
  const auto body = [&](double t) {
    if (t <= 0.0) return p / (2.0 * d);
    const double v = std::pow(t, p);
    return p * (1.0 - sphere_cos_avg(d, v)) * std::pow(t, -p * alpha - 1.0);
  };
  double value = quad::integrate(body, 0.0, t_max, 1e-10);
  value += std::pow(A, -alpha) / alpha;
  if (d == 2) {
    value -= std::sqrt(2.0 / kPi) * std::pow(A, -1.5 - alpha) * std::sin(A - kPi / 4.0);
  } else if (d == 3) {
    value -= std::cos(A) * std::pow(A, -2.0 - alpha);
  }
  return value;
}

double cached_radial_norm_integral(double alpha, int d) {
  static std::map<std::pair<double, int>, double> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(alpha, d);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const double value = stable_radial_norm_integral(alpha, d);
  cache.emplace(key, value);
  return value;
}

void fill_direction(int d, RandomStream& stream, std::span<double> out) {
  stream.unit_sphere(out.data(), static_cast<std::size_t>(d));
}

}  // namespace

// ---------------------------------------------------------------------------
// LevyModel

LevyModel LevyModel::isotropic_stable(double alpha, int dim, double beta) {
  if (!(alpha > 0.0) || !(alpha < 2.0)) throw ParameterError("levy: alpha out of (0,2)");
  if (dim < 1) throw ParameterError("levy: dim must be >= 1");
  if (!(beta > 0.0) || !(beta < alpha)) {
    throw ParameterError("levy: stable model requires moment index beta in (0, alpha)");
  }
  LevyModel m;
  m.kind_ = Kind::IsotropicStable;
  m.dim_ = dim;
  m.beta_ = beta;
  m.alpha_ = alpha;
  m.intensity_k_ = 1.0 / cached_radial_norm_integral(alpha, dim);
  return m;
}

LevyModel LevyModel::compound_poisson(std::vector<CompoundPoissonAtom> atoms, int dim,
                                      double beta) {
  if (dim < 1) throw ParameterError("levy: dim must be >= 1");
  if (!(beta > 0.0) || beta > 2.0) throw ParameterError("levy: beta out of (0,2]");
  for (const auto& a : atoms) {
    if (static_cast<int>(a.z.size()) != dim) {
      throw ParameterError("levy: atom dimension mismatch");
    }
    if (!(a.rate > 0.0) || !std::isfinite(a.rate)) {
      throw ParameterError("levy: atom rate must be positive and finite");
    }
    if (norm2(a.z) == 0.0) throw ParameterError("levy: atom at the origin");
  }
  LevyModel m;
  m.kind_ = Kind::CompoundPoisson;
  m.dim_ = dim;
  m.beta_ = beta;
  m.atoms_ = std::move(atoms);
  return m;
}

LevyModel LevyModel::radial_density(std::vector<double> r, std::vector<double> g, int dim,
                                    double beta) {
  if (dim < 1) throw ParameterError("levy: dim must be >= 1");
  if (!(beta > 0.0) || beta > 2.0) throw ParameterError("levy: beta out of (0,2]");
  if (r.size() != g.size() || r.size() < 2) {
    throw ParameterError("levy: radial table needs matching abscissae/density, >= 2 points");
  }
  if (!(r.front() >= 0.0)) throw ParameterError("levy: radial abscissae must be >= 0");
  double mass = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i + 1 < r.size() && !(r[i] < r[i + 1])) {
      throw ParameterError("levy: radial abscissae must be strictly increasing");
    }
    if (!(g[i] >= 0.0) || !std::isfinite(g[i])) {
      throw ParameterError("levy: radial density must be finite and >= 0");
    }
  }
  LevyModel m;
  m.kind_ = Kind::RadialDensity;
  m.dim_ = dim;
  m.beta_ = beta;
  m.rad_cum_.assign(r.size(), 0.0);
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    mass += 0.5 * (g[i] + g[i + 1]) * (r[i + 1] - r[i]);
    m.rad_cum_[i + 1] = mass;
  }
  if (!(mass > 0.0)) throw ParameterError("levy: radial table has zero total mass");
  m.rad_r_ = std::move(r);
  m.rad_g_ = std::move(g);
  return m;
}

double LevyModel::alpha() const {
  if (kind_ != Kind::IsotropicStable) {
    throw ParameterError("levy: alpha() is only defined for the stable kind");
  }
  return alpha_;
}

double LevyModel::rate_annulus(double a, double b) const {
  if (!(a >= 0.0) || !(b >= a)) throw ParameterError("levy: bad annulus bounds");
  if (a == b) return 0.0;
  switch (kind_) {
    case Kind::IsotropicStable: {
      if (a == 0.0) return kInf;
      const double hi = std::isinf(b) ? 0.0 : std::pow(b, -alpha_);
      return intensity_k_ / alpha_ * (std::pow(a, -alpha_) - hi);
    }
    case Kind::CompoundPoisson: {
      double s = 0.0;
      for (const auto& atom : atoms_) {
        const double r = norm2(atom.z);
        if (r >= a && r < b) s += atom.rate;
      }
      return s;
    }
    case Kind::RadialDensity:
      return radial_moment(0.0, a, b);
  }
  return 0.0;
}

double LevyModel::radial_moment(double p, double a, double b) const {
  if (!(a >= 0.0) || !(b >= a)) throw ParameterError("levy: bad annulus bounds");
  if (a == b) return 0.0;
  switch (kind_) {
    case Kind::IsotropicStable: {
      const double e = p - alpha_;
      if (std::isinf(b)) {
        if (e >= 0.0) return kInf;
        if (a == 0.0) return kInf;
        return intensity_k_ * std::pow(a, e) / -e;
      }
      if (a == 0.0) {
        if (e <= 0.0) return kInf;
        return intensity_k_ * std::pow(b, e) / e;
      }
      if (e == 0.0) return intensity_k_ * std::log(b / a);
      return intensity_k_ * (std::pow(b, e) - std::pow(a, e)) / e;
    }
    case Kind::CompoundPoisson: {
      double s = 0.0;
      for (const auto& atom : atoms_) {
        const double r = norm2(atom.z);
        if (r >= a && r < b) s += atom.rate * std::pow(r, p);
      }
      return s;
    }
    case Kind::RadialDensity: {
      // integral of r^p times the piecewise-linear density, segment by segment
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < rad_r_.size(); ++i) {
        double lo = std::max(a, rad_r_[i]);
        double hi = std::min(b, rad_r_[i + 1]);
        if (!(lo < hi)) continue;
        const double r0 = rad_r_[i], r1 = rad_r_[i + 1];
        const double slope = (rad_g_[i + 1] - rad_g_[i]) / (r1 - r0);
        const double c0 = rad_g_[i] - slope * r0;
        const auto prim = [&](double r) {
          const double t1 = (p == -1.0) ? std::log(r) : std::pow(r, p + 1.0) / (p + 1.0);
          const double t2 = (p == -2.0) ? std::log(r) : std::pow(r, p + 2.0) / (p + 2.0);
          return c0 * t1 + slope * t2;
        };
        if (lo == 0.0 && p <= -1.0) return kInf;
        s += prim(hi) - prim(lo);
      }
      return s;
    }
  }
  return 0.0;
}

std::vector<double> LevyModel::mean_annulus(double a, double b) const {
  std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
  if (kind_ == Kind::CompoundPoisson) {
    for (const auto& atom : atoms_) {
      const double r = norm2(atom.z);
      if (r >= a && r < b) {
        for (int j = 0; j < dim_; ++j) out[static_cast<std::size_t>(j)] += atom.rate * atom.z[static_cast<std::size_t>(j)];
      }
    }
  }
  // isotropic kinds integrate to zero by symmetry
  return out;
}

void LevyModel::sample_annulus(double a, double b, RandomStream& stream,
                               std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(dim_)) {
    throw ParameterError("levy: sample_annulus output size mismatch");
  }
  switch (kind_) {
    case Kind::IsotropicStable: {
      if (!(a > 0.0)) throw ParameterError("levy: stable annulus needs a > 0");
      const double pa = std::pow(a, -alpha_);
      const double pb = std::isinf(b) ? 0.0 : std::pow(b, -alpha_);
      const double u = stream.uniform01();
      const double r = std::pow(pa - u * (pa - pb), -1.0 / alpha_);
      fill_direction(dim_, stream, out);
      for (auto& x : out) x *= r;
      return;
    }
    case Kind::CompoundPoisson: {
      const double total = rate_annulus(a, b);
      if (!(total > 0.0)) throw ParameterError("levy: empty annulus");
      double u = stream.uniform01() * total;
      for (const auto& atom : atoms_) {
        const double r = norm2(atom.z);
        if (r < a || r >= b) continue;
        u -= atom.rate;
        if (u <= 0.0) {
          std::copy(atom.z.begin(), atom.z.end(), out.begin());
          return;
        }
      }
      std::copy(atoms_.back().z.begin(), atoms_.back().z.end(), out.begin());
      return;
    }
    case Kind::RadialDensity: {
      const double lo_mass = radial_moment(0.0, 0.0, std::max(a, rad_r_.front()));
      const double hi_mass = lo_mass + rate_annulus(a, b);
      if (!(hi_mass > lo_mass)) throw ParameterError("levy: empty annulus");
      const double target = lo_mass + stream.uniform01() * (hi_mass - lo_mass);
      // locate segment by cumulative mass, then invert the linear density
      std::size_t i = 0;
      while (i + 2 < rad_cum_.size() && rad_cum_[i + 1] < target) ++i;
      const double r0 = rad_r_[i], r1 = rad_r_[i + 1];
      const double g0 = rad_g_[i], g1 = rad_g_[i + 1];
      const double rem = target - rad_cum_[i];
      const double slope = (g1 - g0) / (r1 - r0);
      double r;
      if (std::fabs(slope) < 1e-14 * std::max(g0, 1.0)) {
        r = g0 > 0.0 ? r0 + rem / g0 : r1;
      } else {
        // solve g0 (r - r0) + slope (r - r0)^2 / 2 = rem
        const double disc = g0 * g0 + 2.0 * slope * rem;
        r = r0 + (std::sqrt(std::max(disc, 0.0)) - g0) / slope;
      }
      r = std::clamp(r, r0, r1);
      fill_direction(dim_, stream, out);
      for (auto& x : out) x *= r;
      return;
    }
  }
}

double LevyModel::refinement_sd(double eps) const {
  if (!(eps >= 0.0)) throw ParameterError("levy: eps must be >= 0");
  if (eps == 0.0) return 0.0;
  const double second = radial_moment(2.0, 0.0, eps);
  return std::sqrt(second / static_cast<double>(dim_));
}

double beta_moment(const LevyModel& model, double p) {
  if (!(p > 0.0)) throw ParameterError("levy: moment index must be positive");
  return model.radial_moment(p, 1.0, kInf);
}

// ---------------------------------------------------------------------------
// Samplers

void sample_stable_increment(double alpha, double dt, RandomStream& stream,
                             std::span<double> out) {
  if (!(alpha > 0.0) || !(alpha < 2.0)) throw ParameterError("levy: alpha out of (0,2)");
  if (!(dt >= 0.0)) throw ParameterError("levy: dt must be >= 0");
  if (dt == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double scale = std::pow(dt, 1.0 / alpha);
  if (out.size() == 1) {
    out[0] = scale * stream.stable_symmetric(alpha);
    return;
  }
  // sub-Gaussian representation: sqrt(2W) G with W positive (alpha/2)-stable
  const double w = stream.stable_positive(0.5 * alpha);
  const double factor = std::sqrt(2.0 * w) * scale;
  for (auto& x : out) x = factor * stream.normal();
}

std::vector<BigJumpEvent> sample_big_jumps(const LevyModel& model, double horizon,
                                           double level, RandomStream& stream) {
  if (!(horizon > 0.0)) throw ParameterError("levy: horizon must be positive");
  if (!(level > 1.0)) throw ParameterError("levy: truncation level must exceed 1");
  const double rate = model.rate_annulus(1.0, level);
  std::vector<BigJumpEvent> events;
  if (rate == 0.0) return events;
  const long n = stream.poisson(rate * horizon);
  events.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    BigJumpEvent ev;
    ev.time = horizon * stream.uniform_pos();
    ev.size.resize(static_cast<std::size_t>(model.dim()));
    model.sample_annulus(1.0, level, stream, ev.size);
    events.push_back(std::move(ev));
  }
  std::sort(events.begin(), events.end(),
            [](const BigJumpEvent& x, const BigJumpEvent& y) { return x.time < y.time; });
  return events;
}

namespace {

void check_events_on_grid(const TimeGrid& grid, std::span<const BigJumpEvent> events) {
  const auto& nodes = grid.nodes();
  for (const auto& ev : events) {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), ev.time);
    if (it == nodes.end() || *it != ev.time) {
      std::ostringstream msg;
      msg << "levy: event time " << ev.time << " is not a grid node (grid not jump-adapted)";
      throw GridError(msg.str());
    }
  }
}

}  // namespace

std::vector<double> synthesize_small_jump_increments(const LevyModel& model,
                                                     const TimeGrid& grid,
                                                     std::span<const BigJumpEvent> events,
                                                     RandomStream& stream,
                                                     SmallJumpScheme scheme) {
  const int d = model.dim();
  const std::size_t steps = grid.num_steps();
  check_events_on_grid(grid, events);
  std::vector<double> small(steps * static_cast<std::size_t>(d), 0.0);
  std::vector<double> tmp(static_cast<std::size_t>(d));

  if (model.kind() == LevyModel::Kind::IsotropicStable &&
      scheme == SmallJumpScheme::ExactTotal) {
    const double alpha = model.alpha();
    std::size_t ev = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      double* row = small.data() + k * static_cast<std::size_t>(d);
      sample_stable_increment(alpha, grid.dt(k), stream, {row, static_cast<std::size_t>(d)});
      const double t_end = grid.node(k + 1);
      while (ev < events.size() && events[ev].time <= t_end) {
        for (int j = 0; j < d; ++j) row[j] -= events[ev].size[static_cast<std::size_t>(j)];
        ++ev;
      }
    }
    return small;
  }

  if (model.kind() == LevyModel::Kind::IsotropicStable) {
    // InnerCutoff: compensated compound Poisson on [eps_k, 1) plus Gaussian
    // refinement below eps_k.  Means vanish by symmetry, so the compensation
    // is implicit.
    const double alpha = model.alpha();
    for (std::size_t k = 0; k < steps; ++k) {
      const double dt = grid.dt(k);
      double* row = small.data() + k * static_cast<std::size_t>(d);
      const double eps = std::min(1.0, std::pow(dt, 1.0 / alpha));
      if (eps < 1.0) {
        const double rate = model.rate_annulus(eps, 1.0);
        const long n = stream.poisson(rate * dt);
        for (long i = 0; i < n; ++i) {
          model.sample_annulus(eps, 1.0, stream, tmp);
          for (int j = 0; j < d; ++j) row[j] += tmp[static_cast<std::size_t>(j)];
        }
      }
      const double sd = model.refinement_sd(eps) * std::sqrt(dt);
      if (sd > 0.0) {
        for (int j = 0; j < d; ++j) row[j] += sd * stream.normal();
      }
    }
    return small;
  }

  // Finite-activity kinds: sample the small-jump events exactly and subtract
  // the small-region compensator.
  const std::vector<double> small_mean = model.mean_annulus(0.0, 1.0);
  const double small_rate = model.rate_annulus(0.0, 1.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double dt = grid.dt(k);
    double* row = small.data() + k * static_cast<std::size_t>(d);
    if (small_rate > 0.0) {
      const long n = stream.poisson(small_rate * dt);
      for (long i = 0; i < n; ++i) {
        model.sample_annulus(0.0, 1.0, stream, tmp);
        for (int j = 0; j < d; ++j) row[j] += tmp[static_cast<std::size_t>(j)];
      }
    }
    for (int j = 0; j < d; ++j) row[j] -= dt * small_mean[static_cast<std::size_t>(j)];
  }
  return small;
}

NoiseRealization synthesize_realization(const LevyModel& model, const TimeGrid& base_grid,
                                        const SeedLineage& lineage, SmallJumpScheme scheme,
                                        double level) {
  RandomStream stream(lineage);
  NoiseRealization noise;
  noise.lineage = lineage;
  noise.dim = model.dim();
  noise.truncation_level = level;
  noise.events = sample_big_jumps(model, base_grid.horizon(), level, stream);
  std::vector<double> times;
  times.reserve(noise.events.size());
  for (const auto& ev : noise.events) times.push_back(ev.time);
  noise.grid = std::make_shared<TimeGrid>(base_grid.refined_with(times));
  noise.small = synthesize_small_jump_increments(model, *noise.grid, noise.events, stream, scheme);
  noise.comp_rate.assign(static_cast<std::size_t>(model.dim()), 0.0);
  if (!std::isinf(level)) {
    const auto mean = model.mean_annulus(1.0, level);
    for (int j = 0; j < model.dim(); ++j) {
      noise.comp_rate[static_cast<std::size_t>(j)] = -mean[static_cast<std::size_t>(j)];
    }
  }
  return noise;
}

NoiseRealization truncate_realization(const LevyModel& model, const NoiseRealization& noise,
                                      double level) {
  if (!(level > 1.0)) throw ParameterError("levy: truncation level must exceed 1");
  NoiseRealization out;
  out.grid = noise.grid;
  out.lineage = noise.lineage;
  out.dim = noise.dim;
  out.small = noise.small;
  out.truncation_level = std::min(noise.truncation_level, level);
  out.events.reserve(noise.events.size());
  for (const auto& ev : noise.events) {
    if (norm2(ev.size) < level) out.events.push_back(ev);
  }
  out.comp_rate.assign(static_cast<std::size_t>(noise.dim), 0.0);
  if (!std::isinf(out.truncation_level)) {
    const auto mean = model.mean_annulus(1.0, out.truncation_level);
    for (int j = 0; j < noise.dim; ++j) {
      out.comp_rate[static_cast<std::size_t>(j)] = -mean[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

}  // namespace mckv
