#include "mckv/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mckv {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t mix_field(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

std::uint64_t lineage_key(const SeedLineage& l) {
  std::uint64_t h = l.master;
  h = mix_field(h, l.purpose);
  h = mix_field(h, l.replication);
  h = mix_field(h, l.particle);
  return h;
}

}  // namespace

Xoshiro256pp::Xoshiro256pp(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& w : s_) w = splitmix64(sm);
  // all-zero state is the one invalid configuration
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t Xoshiro256pp::next() {
  const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

RandomStream::RandomStream(const SeedLineage& lineage) : gen_(lineage_key(lineage)) {}

std::uint64_t RandomStream::next_u64() { return gen_.next(); }

std::uint64_t RandomStream::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
  if (bound == 1) return 0;
  const int width = 64 - std::countl_zero(bound - 1);
  const std::uint64_t mask = (width == 64) ? ~0ULL : ((1ULL << width) - 1);
  for (;;) {
    const std::uint64_t v = gen_.next() & mask;
    if (v < bound) return v;
  }
}

double RandomStream::uniform01() { return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53; }

double RandomStream::uniform_pos() {
  return static_cast<double>((gen_.next() >> 11) + 1) * 0x1.0p-53;
}

double RandomStream::uniform(double a, double b) { return a + (b - a) * uniform01(); }

double RandomStream::exponential() { return -std::log(uniform_pos()); }

double RandomStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
  const double theta = 2.0 * std::numbers::pi * uniform01();
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

long RandomStream::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson: mean must be finite and >= 0");
  }
  if (mean == 0.0) return 0;
  if (mean > 30.0) {
    const double half = mean * 0.5;
    return poisson(half) + poisson(half);
  }
  const double u = uniform01();
  double p = std::exp(-mean);
  double cdf = p;
  long k = 0;
  while (u >= cdf) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
    if (k > 2000) break;  // u in the far tail beyond double resolution
  }
  return k;
}

void RandomStream::fill_normal(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = normal();
}

void RandomStream::unit_sphere(double* out, std::size_t d) {
  if (d == 0) throw std::invalid_argument("unit_sphere: dimension must be positive");
  if (d == 1) {
    out[0] = (gen_.next() >> 63) ? 1.0 : -1.0;
    return;
  }
  for (;;) {
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = normal();
      norm_sq += out[j] * out[j];
    }
    if (norm_sq > 1e-300) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
      return;
    }
  }
}

double RandomStream::stable_symmetric(double alpha) {
  if (!(alpha > 0.0) || alpha > 2.0) {
    throw std::invalid_argument("stable_symmetric: alpha must lie in (0, 2]");
  }
  if (alpha == 2.0) return std::numbers::sqrt2 * normal();  // CF exp(-u^2)
  const double v = std::numbers::pi * (uniform01() - 0.5);
  if (alpha == 1.0) return std::tan(v);  // Cauchy, CF exp(-|u|)
  const double e = exponential();
  const double a = alpha;
  const double s = std::sin(a * v) / std::pow(std::cos(v), 1.0 / a);
  const double t = std::pow(std::cos((1.0 - a) * v) / e, (1.0 - a) / a);
  return s * t;
}

double RandomStream::stable_positive(double theta) {
  if (!(theta > 0.0) || !(theta < 1.0)) {
    throw std::invalid_argument("stable_positive: theta must lie in (0, 1)");
  }
  // Kanter: A(u) = sin(t*u)^(t/(1-t)) * sin((1-t)*u) / sin(u)^(1/(1-t)), u in (0, pi)
  const double u = std::numbers::pi * uniform_pos();  // (0, pi]; sin stays positive in fp
  const double e = exponential();
  const double t = theta;
  const double A = std::pow(std::sin(t * u), t / (1.0 - t)) * std::sin((1.0 - t) * u) /
                   std::pow(std::sin(u), 1.0 / (1.0 - t));
  return std::pow(A / e, (1.0 - t) / t);
}

}  // namespace mckv
