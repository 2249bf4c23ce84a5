#pragma once
// Dense double-precision primitives used by the particle engine inner loops.
//
// Every operation ships in two implementations: a scalar reference and an
// AVX2 variant.  The active one is chosen once at startup from cpuid and can
// be forced for tests and benchmarks.  Both lanes are required to produce
// bit-identical output, not merely close output: reductions fix the summation
// order to four independent accumulators over i % 4 classes combined as
// ((a0+a1)+(a2+a3)) plus a sequential tail, and no lane may contract a*b+c
// into fma.  This is what makes runs reproducible byte-for-byte regardless of
// which lane the host selects.

#include <cstddef>

namespace mckv::kernels {

enum class Impl { Scalar, Avx2 };

// Lane picked at startup (Avx2 when the cpu supports it and the build
// included it).  force_impl overrides; forcing Avx2 on a cpu without it is
// rejected.
Impl active_impl();
void force_impl(Impl impl);
void reset_impl();
bool cpu_supports_avx2();

namespace scalar {
double sum(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
double max_abs(const double* x, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_add(double* x, double s, double c, std::size_t n);
void add(double* y, const double* x, std::size_t n);
void sub(double* y, const double* x, std::size_t n);
void acc_sq(double* acc, const double* x, std::size_t n);
void max_abs_update(double* m, const double* x, std::size_t n);
void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n);
void sqrt_inplace(double* x, std::size_t n);
bool all_finite(const double* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
double sum(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
double max_abs(const double* x, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_add(double* x, double s, double c, std::size_t n);
void add(double* y, const double* x, std::size_t n);
void sub(double* y, const double* x, std::size_t n);
void acc_sq(double* acc, const double* x, std::size_t n);
void max_abs_update(double* m, const double* x, std::size_t n);
void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n);
void sqrt_inplace(double* x, std::size_t n);
bool all_finite(const double* x, std::size_t n);
}  // namespace avx2

// Dispatched entry points.
double sum(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
double max_abs(const double* x, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);   // y += a*x
void scale_add(double* x, double s, double c, std::size_t n);     // x = s*x + c
void add(double* y, const double* x, std::size_t n);              // y += x
void sub(double* y, const double* x, std::size_t n);              // y -= x
void acc_sq(double* acc, const double* x, std::size_t n);         // acc += x*x
void max_abs_update(double* m, const double* x, std::size_t n);   // m = max(m, |x|)
void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n);
void sqrt_inplace(double* x, std::size_t n);
bool all_finite(const double* x, std::size_t n);

}  // namespace mckv::kernels
