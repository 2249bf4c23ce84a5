#include "mckv/kernels.hpp"

#include <cmath>

// Reference lane.  Reductions use the fixed 4-accumulator blocked order that
// the AVX2 lane reproduces exactly: acc[j] collects x[4k+j] in k order, the
// combine is ((a0+a1)+(a2+a3)), and the n%4 tail is folded in sequentially
// afterwards.  Do not "simplify" these loops into a single running sum.

namespace mckv::kernels::scalar {

namespace {

template <class Term>
inline double blocked_reduce(std::size_t n, Term term) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    a0 += term(i);
    a1 += term(i + 1);
    a2 += term(i + 2);
    a3 += term(i + 3);
  }
  double total = (a0 + a1) + (a2 + a3);
  for (std::size_t i = n4; i < n; ++i) total += term(i);
  return total;
}

}  // namespace

double sum(const double* x, std::size_t n) {
  return blocked_reduce(n, [&](std::size_t i) { return x[i]; });
}

double sum_abs(const double* x, std::size_t n) {
  return blocked_reduce(n, [&](std::size_t i) { return std::fabs(x[i]); });
}

double sum_sq(const double* x, std::size_t n) {
  return blocked_reduce(n, [&](std::size_t i) { return x[i] * x[i]; });
}

double sum_abs_diff(const double* x, const double* y, std::size_t n) {
  return blocked_reduce(n, [&](std::size_t i) { return std::fabs(x[i] - y[i]); });
}

double dot(const double* x, const double* y, std::size_t n) {
  return blocked_reduce(n, [&](std::size_t i) { return x[i] * y[i]; });
}

double max_abs(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
  return m;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(x[i] - y[i]));
  return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_add(double* x, double s, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = s * x[i] + c;
}

void add(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void sub(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] -= x[i];
}

void acc_sq(double* acc, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] * x[i];
}

void max_abs_update(double* m, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) m[i] = std::fmax(m[i], std::fabs(x[i]));
}

void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) m[i] = std::fmax(m[i], std::fabs(x[i] - y[i]));
}

void sqrt_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sqrt(x[i]);
}

bool all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace mckv::kernels::scalar
