#include "mckv/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace mckv::kernels {

namespace {

bool compiled_with_avx2() {
#if defined(MCKV_COMPILE_AVX2)
  return true;
#else
  return false;
#endif
}

Impl detect() {
  return (compiled_with_avx2() && cpu_supports_avx2()) ? Impl::Avx2 : Impl::Scalar;
}

std::atomic<Impl>& impl_slot() {
  static std::atomic<Impl> slot{detect()};
  return slot;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

Impl active_impl() { return impl_slot().load(std::memory_order_relaxed); }

void force_impl(Impl impl) {
  if (impl == Impl::Avx2 && !(compiled_with_avx2() && cpu_supports_avx2())) {
    throw std::runtime_error("kernels: avx2 lane unavailable on this host/build");
  }
  impl_slot().store(impl, std::memory_order_relaxed);
}

void reset_impl() { impl_slot().store(detect(), std::memory_order_relaxed); }

#define MCKV_DISPATCH(fn, ...)                                              \
  (active_impl() == Impl::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))

double sum(const double* x, std::size_t n) { return MCKV_DISPATCH(sum, x, n); }
double sum_abs(const double* x, std::size_t n) { return MCKV_DISPATCH(sum_abs, x, n); }
double sum_sq(const double* x, std::size_t n) { return MCKV_DISPATCH(sum_sq, x, n); }
double sum_abs_diff(const double* x, const double* y, std::size_t n) {
  return MCKV_DISPATCH(sum_abs_diff, x, y, n);
}
double max_abs(const double* x, std::size_t n) { return MCKV_DISPATCH(max_abs, x, n); }
double max_abs_diff(const double* x, const double* y, std::size_t n) {
  return MCKV_DISPATCH(max_abs_diff, x, y, n);
}
double dot(const double* x, const double* y, std::size_t n) { return MCKV_DISPATCH(dot, x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { MCKV_DISPATCH(axpy, a, x, y, n); }
void scale_add(double* x, double s, double c, std::size_t n) { MCKV_DISPATCH(scale_add, x, s, c, n); }
void add(double* y, const double* x, std::size_t n) { MCKV_DISPATCH(add, y, x, n); }
void sub(double* y, const double* x, std::size_t n) { MCKV_DISPATCH(sub, y, x, n); }
void acc_sq(double* acc, const double* x, std::size_t n) { MCKV_DISPATCH(acc_sq, acc, x, n); }
void max_abs_update(double* m, const double* x, std::size_t n) {
  MCKV_DISPATCH(max_abs_update, m, x, n);
}
void max_abs_diff_update(double* m, const double* x, const double* y, std::size_t n) {
  MCKV_DISPATCH(max_abs_diff_update, m, x, y, n);
}
void sqrt_inplace(double* x, std::size_t n) { MCKV_DISPATCH(sqrt_inplace, x, n); }
bool all_finite(const double* x, std::size_t n) { return MCKV_DISPATCH(all_finite, x, n); }

#undef MCKV_DISPATCH

}  // namespace mckv::kernels
