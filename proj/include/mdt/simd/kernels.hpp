#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Data-parallel inner loops shared by the estimation and simulation code.
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant selected once at startup. Set MDT_SIMD=scalar in the
// environment to force the reference path.

namespace mdt::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
std::string isa_name(Isa isa);

// y[i] = exp(x[i]); inputs outside [-708, 708] are clamped first.
void vexp(const double* x, double* y, std::size_t n);

// y[i] = 1 / (1 + exp(-x[i])), evaluated in the numerically stable form.
void expit(const double* x, double* y, std::size_t n);

// y[i] = min(max(x[i], lo), hi)
void clamp(const double* x, double* y, std::size_t n, double lo, double hi);

double dot(const double* a, const double* b, std::size_t n);

// sum_i a[i] * b[i] * c[i]
double dot3(const double* a, const double* b, const double* c, std::size_t n);

double sum(const double* x, std::size_t n);

double sum_sq(const double* x, std::size_t n);

// a[i] += c * b[i]
void axpy(double c, const double* b, double* a, std::size_t n);

// Indicator-column operations on packed bitsets (little-endian bit order,
// bit i of word i/64). Used by the lasso coordinate descent where basis
// columns are 0/1.
double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n);
void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n);
// dst[i] += c * src[i] for bits set
void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n);

namespace ref {
void vexp(const double* x, double* y, std::size_t n);
void expit(const double* x, double* y, std::size_t n);
void clamp(const double* x, double* y, std::size_t n, double lo, double hi);
double dot(const double* a, const double* b, std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
double sum(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
void axpy(double c, const double* b, double* a, std::size_t n);
double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n);
void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n);
void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n);
}  // namespace ref

#if defined(__x86_64__)
namespace avx2 {
void vexp(const double* x, double* y, std::size_t n);
void expit(const double* x, double* y, std::size_t n);
void clamp(const double* x, double* y, std::size_t n, double lo, double hi);
double dot(const double* a, const double* b, std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
double sum(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
void axpy(double c, const double* b, double* a, std::size_t n);
double bitset_dot(const std::uint64_t* bits, const double* v, std::size_t n);
void bitset_add(const std::uint64_t* bits, double c, double* v, std::size_t n);
void bitset_axpy(const std::uint64_t* bits, double c, const double* src, double* dst,
                 std::size_t n);
}  // namespace avx2
#endif

}  // namespace mdt::kern
