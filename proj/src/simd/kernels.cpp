#include "mdt/simd/kernels.hpp"

#include <cmath>
#include <cstdlib>

namespace mdt::kern {

namespace ref {

void vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    if (v > 708.0) v = 708.0;
    if (v < -708.0) v = -708.0;
    y[i] = std::exp(v);
  }
}

void expit(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      const double t = std::exp(-v);
      y[i] = 1.0 / (1.0 + t);
    } else {
      const double t = std::exp(v);
      y[i] = t / (1.0 + t);
    }
  }
}

void clamp(const double* x, double* y, std::size_t n, double lo, double hi) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    y[i] = v;
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i] * c[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_sq(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy(double c, const double* b, double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] += c * b[i];
}

double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n) {
  double s = 0.0;
  const std::size_t words = (n + 63) / 64;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t m = bits[w];
    while (m) {
      const unsigned b = static_cast<unsigned>(__builtin_ctzll(m));
      s += v[w * 64 + b];
      m &= m - 1;
    }
  }
  return s;
}

void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n) {
  const std::size_t words = (n + 63) / 64;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t m = bits[w];
    while (m) {
      const unsigned b = static_cast<unsigned>(__builtin_ctzll(m));
      v[w * 64 + b] += c;
      m &= m - 1;
    }
  }
}

void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n) {
  const std::size_t words = (n + 63) / 64;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t m = bits[w];
    while (m) {
      const unsigned b = static_cast<unsigned>(__builtin_ctzll(m));
      dst[w * 64 + b] += c * src[w * 64 + b];
      m &= m - 1;
    }
  }
}

}  // namespace ref

namespace {

Isa detect_isa() {
  if (const char* env = std::getenv("MDT_SIMD")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::avx2;
#endif
  return Isa::scalar;
}

const Isa g_isa = detect_isa();

}  // namespace

Isa active_isa() { return g_isa; }

std::string isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

#if defined(__x86_64__)
#define MDT_DISPATCH(fn, ...) \
  return g_isa == Isa::avx2 ? avx2::fn(__VA_ARGS__) : ref::fn(__VA_ARGS__)
#else
#define MDT_DISPATCH(fn, ...) return ref::fn(__VA_ARGS__)
#endif

void vexp(const double* x, double* y, std::size_t n) { MDT_DISPATCH(vexp, x, y, n); }
void expit(const double* x, double* y, std::size_t n) { MDT_DISPATCH(expit, x, y, n); }
void clamp(const double* x, double* y, std::size_t n, double lo, double hi) {
  MDT_DISPATCH(clamp, x, y, n, lo, hi);
}
double dot(const double* a, const double* b, std::size_t n) { MDT_DISPATCH(dot, a, b, n); }
double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  MDT_DISPATCH(dot3, a, b, c, n);
}
double sum(const double* x, std::size_t n) { MDT_DISPATCH(sum, x, n); }
double sum_sq(const double* x, std::size_t n) { MDT_DISPATCH(sum_sq, x, n); }
void axpy(double c, const double* b, double* a, std::size_t n) { MDT_DISPATCH(axpy, c, b, a, n); }
double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n) {
  MDT_DISPATCH(bitset_dot, bits, v, n);
}
void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n) {
  MDT_DISPATCH(bitset_add, bits, c, v, n);
}
void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n) {
  MDT_DISPATCH(bitset_axpy, bits, c, src, dst, n);
}

#undef MDT_DISPATCH

}  // namespace mdt::kern
