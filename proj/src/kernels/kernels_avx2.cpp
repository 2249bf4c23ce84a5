#include "mckv/kernels.hpp"

// AVX2 lane.  Compiled with -mavx2 (no fma) when the toolchain allows it;
// entered only through the runtime dispatch.  The lane layout mirrors the
// scalar blocked reduction exactly: vector accumulator lane j holds the
// partial sum of x[4k+j], the horizontal combine is ((a0+a1)+(a2+a3)) done
// in scalar arithmetic, and tails are folded sequentially.  Outputs are
// bit-identical to the scalar lane for finite inputs.

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace mckv::kernels::avx2 {

namespace {

inline double combine(__m256d acc) {
  alignas(32) double a[4];
  _mm256_store_pd(a, acc);
  return (a[0] + a[1]) + (a[2] + a[3]);
}

inline __m256d abs_pd(__m256d v) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  return _mm256_and_pd(v, mask);
}

}  // namespace

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = combine(acc);
  for (std::size_t i = n4; i < n; ++i) total += x[i];
  return total;
}

double sum_abs(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) acc = _mm256_add_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
  double total = combine(acc);
  for (std::size_t i = n4; i < n; ++i) total += std::fabs(x[i]);
  return total;
}

double sum_sq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double total = combine(acc);
  for (std::size_t i = n4; i < n; ++i) total += x[i] * x[i];
  return total;
}

double sum_abs_diff(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, abs_pd(d));
  }
  double total = combine(acc);
  for (std::size_t i = n4; i < n; ++i) total += std::fabs(x[i] - y[i]);
  return total;
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double total = combine(acc);
  for (std::size_t i = n4; i < n; ++i) total += x[i] * y[i];
  return total;
}

double max_abs(const double* x, std::size_t n) {
  // max is exact, so the fold order cannot change the result bits.
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) acc = _mm256_max_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
  alignas(32) double a[4];
  _mm256_store_pd(a, acc);
  double m = std::fmax(std::fmax(a[0], a[1]), std::fmax(a[2], a[3]));
  for (std::size_t i = n4; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
  return m;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_max_pd(acc, abs_pd(d));
  }
  alignas(32) double a[4];
  _mm256_store_pd(a, acc);
  double m = std::fmax(std::fmax(a[0], a[1]), std::fmax(a[2], a[3]));
  for (std::size_t i = n4; i < n; ++i) m = std::fmax(m, std::fabs(x[i] - y[i]));
  return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d t = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
  }
  for (std::size_t i = n4; i < n; ++i) y[i] += a * x[i];
}

void scale_add(double* x, double s, double c, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  const __m256d vc = _mm256_set1_pd(c);
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_add_pd(_mm256_mul_pd(vs, _mm256_loadu_pd(x + i)), vc));
  }
  for (std::size_t i = n4; i < n; ++i) x[i] = s * x[i] + c;
}

void add(double* y, const double* x, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (std::size_t i = n4; i < n; ++i) y[i] += x[i];
}

void sub(double* y, const double* x, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (std::size_t i = n4; i < n; ++i) y[i] -= x[i];
}

void acc_sq(double* acc, const double* x, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(v, v)));
  }
  for (std::size_t i = n4; i < n; ++i) acc[i] += x[i] * x[i];
}

void max_abs_update(double* m, const double* x, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(m + i, _mm256_max_pd(_mm256_loadu_pd(m + i), abs_pd(_mm256_loadu_pd(x + i))));
  }
  for (std::size_t i = n4; i < n; ++i) m[i] = std::fmax(m[i], std::fabs(x[i]));
}

void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(m + i, _mm256_max_pd(_mm256_loadu_pd(m + i), abs_pd(d)));
  }
  for (std::size_t i = n4; i < n; ++i) m[i] = std::fmax(m[i], std::fabs(x[i] - y[i]));
}

void sqrt_inplace(double* x, std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_sqrt_pd(_mm256_loadu_pd(x + i)));
  }
  for (std::size_t i = n4; i < n; ++i) x[i] = std::sqrt(x[i]);
}

bool all_finite(const double* x, std::size_t n) {
  const __m256d inf = _mm256_set1_pd(__builtin_inf());
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    // |x| < inf is false for inf and (unordered) for NaN, so a full mask
    // means every lane is finite.
    const __m256d ok = _mm256_cmp_pd(abs_pd(_mm256_loadu_pd(x + i)), inf, _CMP_LT_OQ);
    if (_mm256_movemask_pd(ok) != 0xf) return false;
  }
  for (std::size_t i = n4; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace mckv::kernels::avx2

#else  // !defined(__AVX2__)

// Toolchain without AVX2: keep the symbols, forward to the reference lane.
// The dispatcher never selects this lane in such builds.

namespace mckv::kernels::avx2 {

double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
double sum_abs(const double* x, std::size_t n) { return scalar::sum_abs(x, n); }
double sum_sq(const double* x, std::size_t n) { return scalar::sum_sq(x, n); }
double sum_abs_diff(const double* x, const double* y, std::size_t n) {
  return scalar::sum_abs_diff(x, y, n);
}
double max_abs(const double* x, std::size_t n) { return scalar::max_abs(x, n); }
double max_abs_diff(const double* x, const double* y, std::size_t n) {
  return scalar::max_abs_diff(x, y, n);
}
double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { scalar::axpy(a, x, y, n); }
void scale_add(double* x, double s, double c, std::size_t n) { scalar::scale_add(x, s, c, n); }
void add(double* y, const double* x, std::size_t n) { scalar::add(y, x, n); }
void sub(double* y, const double* x, std::size_t n) { scalar::sub(y, x, n); }
void acc_sq(double* acc, const double* x, std::size_t n) { scalar::acc_sq(acc, x, n); }
void max_abs_update(double* m, const double* x, std::size_t n) { scalar::max_abs_update(m, x, n); }
void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n) {
  scalar::max_abs_diff_update(m, x, y, n);
}
void sqrt_inplace(double* x, std::size_t n) { scalar::sqrt_inplace(x, n); }
bool all_finite(const double* x, std::size_t n) { return scalar::all_finite(x, n); }

}  // namespace mckv::kernels::avx2

#endif
