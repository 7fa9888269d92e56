// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; nothing here runs unless the dispatcher verified CPU
// support at startup.

#if defined(__x86_64__)

#include "mdt/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace mdt::kern::avx2 {

namespace {

// Polynomial exp reduction (Cephes expm-style rational approximation).
// exp(x) = 2^n * exp(r), r = x - n*ln2, |r| <= ln2/2,
// exp(r) = 1 + 2r*P(r^2) / (Q(r^2) - r*P(r^2)).
inline __m256d exp4(__m256d x) {
  const __m256d max_x = _mm256_set1_pd(708.0);
  const __m256d min_x = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, min_x), max_x);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, x);
  r = _mm256_fnmadd_pd(n, c2, r);

  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);

  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000005e0));

  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^n through the exponent field
  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(n64));
}

inline __m256d expit4(__m256d x) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d ax = _mm256_andnot_pd(sign_mask, x);
  const __m256d t = exp4(_mm256_sub_pd(zero, ax));
  const __m256d inv = _mm256_div_pd(_mm256_set1_pd(1.0),
                                    _mm256_add_pd(_mm256_set1_pd(1.0), t));
  const __m256d pos = inv;                    // x >= 0
  const __m256d neg = _mm256_mul_pd(t, inv);  // x <  0
  const __m256d ge = _mm256_cmp_pd(x, zero, _CMP_GE_OQ);
  return _mm256_blendv_pd(neg, pos, ge);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

alignas(32) const std::uint64_t k_nibble_mask[16][4] = {
#define MDT_NM(b) {(b)&1 ? ~0ull : 0ull, (b)&2 ? ~0ull : 0ull, (b)&4 ? ~0ull : 0ull, (b)&8 ? ~0ull : 0ull}
    MDT_NM(0),  MDT_NM(1),  MDT_NM(2),  MDT_NM(3),  MDT_NM(4),  MDT_NM(5),
    MDT_NM(6),  MDT_NM(7),  MDT_NM(8),  MDT_NM(9),  MDT_NM(10), MDT_NM(11),
    MDT_NM(12), MDT_NM(13), MDT_NM(14), MDT_NM(15),
#undef MDT_NM
};

}  // namespace

void vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) {
    double v = x[i];
    if (v > 708.0) v = 708.0;
    if (v < -708.0) v = -708.0;
    y[i] = std::exp(v);
  }
}

void expit(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, expit4(_mm256_loadu_pd(x + i)));
  if (i < n) ref::expit(x + i, y + i, n - i);
}

void clamp(const double* x, double* y, std::size_t n, double lo, double hi) {
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vhi = _mm256_set1_pd(hi);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    v = _mm256_min_pd(_mm256_max_pd(v, vlo), vhi);
    _mm256_storeu_pd(y + i, v);
  }
  if (i < n) ref::clamp(x + i, y + i, n - i, lo, hi);
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ab = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(ab, _mm256_loadu_pd(c + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i] * c[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_sq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy(double c, const double* b, double* a, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_fmadd_pd(vc, _mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i));
    _mm256_storeu_pd(a + i, v);
  }
  for (; i < n; ++i) a[i] += c * b[i];
}

double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n) {
  const std::size_t full_words = n / 64;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t w = 0; w < full_words; ++w) {
    std::uint64_t m = bits[w];
    if (!m) continue;
    const double* base = v + w * 64;
    for (int k = 0; k < 16; ++k, m >>= 4) {
      const unsigned nib = static_cast<unsigned>(m & 0xF);
      if (!nib) continue;
      const __m256d mask =
          _mm256_load_pd(reinterpret_cast<const double*>(k_nibble_mask[nib]));
      acc = _mm256_add_pd(acc, _mm256_and_pd(_mm256_loadu_pd(base + 4 * k), mask));
    }
  }
  double s = hsum(acc);
  if (n % 64) s += ref::bitset_dot(bits + full_words, v + full_words * 64, n % 64);
  return s;
}

void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n) {
  const std::size_t full_words = n / 64;
  const __m256d vc = _mm256_set1_pd(c);
  for (std::size_t w = 0; w < full_words; ++w) {
    std::uint64_t m = bits[w];
    if (!m) continue;
    double* base = v + w * 64;
    for (int k = 0; k < 16; ++k, m >>= 4) {
      const unsigned nib = static_cast<unsigned>(m & 0xF);
      if (!nib) continue;
      const __m256d mask =
          _mm256_load_pd(reinterpret_cast<const double*>(k_nibble_mask[nib]));
      const __m256d add = _mm256_and_pd(vc, mask);
      _mm256_storeu_pd(base + 4 * k, _mm256_add_pd(_mm256_loadu_pd(base + 4 * k), add));
    }
  }
  if (n % 64) ref::bitset_add(bits + full_words, c, v + full_words * 64, n % 64);
}

void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n) {
  const std::size_t full_words = n / 64;
  const __m256d vc = _mm256_set1_pd(c);
  for (std::size_t w = 0; w < full_words; ++w) {
    std::uint64_t m = bits[w];
    if (!m) continue;
    const double* s = src + w * 64;
    double* t = dst + w * 64;
    for (int k = 0; k < 16; ++k, m >>= 4) {
      const unsigned nib = static_cast<unsigned>(m & 0xF);
      if (!nib) continue;
      const __m256d mask =
          _mm256_load_pd(reinterpret_cast<const double*>(k_nibble_mask[nib]));
      const __m256d add =
          _mm256_and_pd(_mm256_mul_pd(vc, _mm256_loadu_pd(s + 4 * k)), mask);
      _mm256_storeu_pd(t + 4 * k, _mm256_add_pd(_mm256_loadu_pd(t + 4 * k), add));
    }
  }
  if (n % 64)
    ref::bitset_axpy(bits + full_words, c, src + full_words * 64,
                     dst + full_words * 64, n % 64);
}

}  // namespace mdt::kern::avx2

#endif  // __x86_64__
