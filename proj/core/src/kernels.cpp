#include "aoiseg/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(__i386__)
#define AOISEG_X86 1
#include <immintrin.h>
#endif

namespace aoiseg::detail {

namespace {

inline double reduce8(const double lanes[8]) {
  const double s01 = lanes[0] + lanes[1];
  const double s23 = lanes[2] + lanes[3];
  const double s45 = lanes[4] + lanes[5];
  const double s67 = lanes[6] + lanes[7];
  return (s01 + s23) + (s45 + s67);
}

// Scalar tail shared by all backends; `i` must be the first unprocessed
// index and a multiple of 8.
inline void tail_into_lanes(double lanes[8], const float* row, const double* q,
                            std::size_t i, std::size_t d) {
  for (; i < d; ++i) {
    lanes[i % 8] =
        std::fma(static_cast<double>(row[i]), q[i], lanes[i % 8]);
  }
}

double dot1_scalar(const float* row, const double* query, std::size_t d) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    for (int l = 0; l < 8; ++l) {
      lanes[l] = std::fma(static_cast<double>(row[i + l]), query[i + l],
                          lanes[l]);
    }
  }
  tail_into_lanes(lanes, row, query, i, d);
  return reduce8(lanes);
}

void dotq4_scalar(const float* row, const double* queries, std::size_t stride,
                  std::size_t d, double out[4]) {
  for (int q = 0; q < 4; ++q) {
    out[q] = dot1_scalar(row, queries + q * stride, d);
  }
}

void dotq8_scalar(const float* row, const double* queries, std::size_t stride,
                  std::size_t d, double out[8]) {
  for (int q = 0; q < 8; ++q) {
    out[q] = dot1_scalar(row, queries + q * stride, d);
  }
}

void dotr4_scalar(const float* r0, const float* r1, const float* r2,
                  const float* r3, const double* query, std::size_t d,
                  double out[4]) {
  out[0] = dot1_scalar(r0, query, d);
  out[1] = dot1_scalar(r1, query, d);
  out[2] = dot1_scalar(r2, query, d);
  out[3] = dot1_scalar(r3, query, d);
}

#if AOISEG_X86

__attribute__((target("avx512f"))) inline double reduce8_avx512(__m512d acc,
                                                                const float* row,
                                                                const double* q,
                                                                std::size_t i,
                                                                std::size_t d) {
  alignas(64) double lanes[8];
  _mm512_store_pd(lanes, acc);
  tail_into_lanes(lanes, row, q, i, d);
  return reduce8(lanes);
}

__attribute__((target("avx512f"))) double dot1_avx512(const float* row,
                                                      const double* query,
                                                      std::size_t d) {
  __m512d acc = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m512d r = _mm512_cvtps_pd(_mm256_loadu_ps(row + i));
    acc = _mm512_fmadd_pd(r, _mm512_loadu_pd(query + i), acc);
  }
  return reduce8_avx512(acc, row, query, i, d);
}

__attribute__((target("avx512f"))) void dotq4_avx512(const float* row,
                                                     const double* queries,
                                                     std::size_t stride,
                                                     std::size_t d,
                                                     double out[4]) {
  const double* q0 = queries;
  const double* q1 = queries + stride;
  const double* q2 = queries + 2 * stride;
  const double* q3 = queries + 3 * stride;
  __m512d a0 = _mm512_setzero_pd();
  __m512d a1 = _mm512_setzero_pd();
  __m512d a2 = _mm512_setzero_pd();
  __m512d a3 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m512d r = _mm512_cvtps_pd(_mm256_loadu_ps(row + i));
    a0 = _mm512_fmadd_pd(r, _mm512_loadu_pd(q0 + i), a0);
    a1 = _mm512_fmadd_pd(r, _mm512_loadu_pd(q1 + i), a1);
    a2 = _mm512_fmadd_pd(r, _mm512_loadu_pd(q2 + i), a2);
    a3 = _mm512_fmadd_pd(r, _mm512_loadu_pd(q3 + i), a3);
  }
  out[0] = reduce8_avx512(a0, row, q0, i, d);
  out[1] = reduce8_avx512(a1, row, q1, i, d);
  out[2] = reduce8_avx512(a2, row, q2, i, d);
  out[3] = reduce8_avx512(a3, row, q3, i, d);
}

__attribute__((target("avx512f"))) void dotq8_avx512(const float* row,
                                                     const double* queries,
                                                     std::size_t stride,
                                                     std::size_t d,
                                                     double out[8]) {
  const double* q[8];
  for (int j = 0; j < 8; ++j) q[j] = queries + j * stride;
  __m512d acc[8];
  for (auto& a : acc) a = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m512d r = _mm512_cvtps_pd(_mm256_loadu_ps(row + i));
    for (int j = 0; j < 8; ++j) {
      acc[j] = _mm512_fmadd_pd(r, _mm512_loadu_pd(q[j] + i), acc[j]);
    }
  }
  for (int j = 0; j < 8; ++j) {
    out[j] = reduce8_avx512(acc[j], row, q[j], i, d);
  }
}

__attribute__((target("avx512f"))) void dotr4_avx512(
    const float* r0, const float* r1, const float* r2, const float* r3,
    const double* query, std::size_t d, double out[4]) {
  __m512d a0 = _mm512_setzero_pd();
  __m512d a1 = _mm512_setzero_pd();
  __m512d a2 = _mm512_setzero_pd();
  __m512d a3 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m512d q = _mm512_loadu_pd(query + i);
    a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(r0 + i)), q, a0);
    a1 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(r1 + i)), q, a1);
    a2 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(r2 + i)), q, a2);
    a3 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(r3 + i)), q, a3);
  }
  out[0] = reduce8_avx512(a0, r0, query, i, d);
  out[1] = reduce8_avx512(a1, r1, query, i, d);
  out[2] = reduce8_avx512(a2, r2, query, i, d);
  out[3] = reduce8_avx512(a3, r3, query, i, d);
}

// AVX2 keeps two 4-wide f64 accumulators per dot: low register covers lanes
// 0..3, high register lanes 4..7, matching the scalar scheme exactly.
__attribute__((target("avx2,fma"))) inline double reduce8_avx2(
    __m256d lo, __m256d hi, const float* row, const double* q, std::size_t i,
    std::size_t d) {
  alignas(32) double lanes[8];
  _mm256_store_pd(lanes, lo);
  _mm256_store_pd(lanes + 4, hi);
  tail_into_lanes(lanes, row, q, i, d);
  return reduce8(lanes);
}

__attribute__((target("avx2,fma"))) double dot1_avx2(const float* row,
                                                     const double* query,
                                                     std::size_t d) {
  __m256d lo = _mm256_setzero_pd();
  __m256d hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m256 r = _mm256_loadu_ps(row + i);
    const __m256d rlo = _mm256_cvtps_pd(_mm256_castps256_ps128(r));
    const __m256d rhi = _mm256_cvtps_pd(_mm256_extractf128_ps(r, 1));
    lo = _mm256_fmadd_pd(rlo, _mm256_loadu_pd(query + i), lo);
    hi = _mm256_fmadd_pd(rhi, _mm256_loadu_pd(query + i + 4), hi);
  }
  return reduce8_avx2(lo, hi, row, query, i, d);
}

__attribute__((target("avx2,fma"))) void dotq4_avx2(const float* row,
                                                    const double* queries,
                                                    std::size_t stride,
                                                    std::size_t d,
                                                    double out[4]) {
  const double* q[4] = {queries, queries + stride, queries + 2 * stride,
                        queries + 3 * stride};
  __m256d lo[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(),
                   _mm256_setzero_pd(), _mm256_setzero_pd()};
  __m256d hi[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(),
                   _mm256_setzero_pd(), _mm256_setzero_pd()};
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m256 r = _mm256_loadu_ps(row + i);
    const __m256d rlo = _mm256_cvtps_pd(_mm256_castps256_ps128(r));
    const __m256d rhi = _mm256_cvtps_pd(_mm256_extractf128_ps(r, 1));
    for (int j = 0; j < 4; ++j) {
      lo[j] = _mm256_fmadd_pd(rlo, _mm256_loadu_pd(q[j] + i), lo[j]);
      hi[j] = _mm256_fmadd_pd(rhi, _mm256_loadu_pd(q[j] + i + 4), hi[j]);
    }
  }
  for (int j = 0; j < 4; ++j) {
    out[j] = reduce8_avx2(lo[j], hi[j], row, q[j], i, d);
  }
}

__attribute__((target("avx2,fma"))) void dotr4_avx2(
    const float* r0, const float* r1, const float* r2, const float* r3,
    const double* query, std::size_t d, double out[4]) {
  const float* rows[4] = {r0, r1, r2, r3};
  __m256d lo[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(),
                   _mm256_setzero_pd(), _mm256_setzero_pd()};
  __m256d hi[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(),
                   _mm256_setzero_pd(), _mm256_setzero_pd()};
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    const __m256d qlo = _mm256_loadu_pd(query + i);
    const __m256d qhi = _mm256_loadu_pd(query + i + 4);
    for (int j = 0; j < 4; ++j) {
      const __m256 r = _mm256_loadu_ps(rows[j] + i);
      lo[j] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(r)), qlo,
                              lo[j]);
      hi[j] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(r, 1)),
                              qhi, hi[j]);
    }
  }
  for (int j = 0; j < 4; ++j) {
    out[j] = reduce8_avx2(lo[j], hi[j], rows[j], query, i, d);
  }
}

#endif  // AOISEG_X86

#if AOISEG_X86
// AVX2 has no q8 tile (register pressure); two q4 passes keep the math
// identical.
void dotq8_via_q4(const float* row, const double* queries, std::size_t stride,
                  std::size_t d, double out[8]) {
  dotq4_avx2(row, queries, stride, d, out);
  dotq4_avx2(row, queries + 4 * stride, stride, d, out + 4);
}
#endif

struct Backend {
  double (*dot1)(const float*, const double*, std::size_t);
  void (*dotq4)(const float*, const double*, std::size_t, std::size_t,
                double*);
  void (*dotq8)(const float*, const double*, std::size_t, std::size_t,
                double*);
  void (*dotr4)(const float*, const float*, const float*, const float*,
                const double*, std::size_t, double*);
  const char* name;
};

const Backend& backend() {
  static const Backend b = [] {
#if AOISEG_X86
    if (__builtin_cpu_supports("avx512f")) {
      return Backend{dot1_avx512, dotq4_avx512, dotq8_avx512, dotr4_avx512,
                     "avx512"};
    }
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
      return Backend{dot1_avx2, dotq4_avx2, dotq8_via_q4, dotr4_avx2, "avx2"};
    }
#endif
    return Backend{dot1_scalar, dotq4_scalar, dotq8_scalar, dotr4_scalar,
                   "scalar"};
  }();
  return b;
}

}  // namespace

double dot_scalar(const float* row, const double* query, std::size_t d) {
  return dot1_scalar(row, query, d);
}

double dot(const float* row, const double* query, std::size_t d) {
  return backend().dot1(row, query, d);
}

void dot_q4(const float* row, const double* queries, std::size_t stride,
            std::size_t d, double out[4]) {
  backend().dotq4(row, queries, stride, d, out);
}

void dot_q8(const float* row, const double* queries, std::size_t stride,
            std::size_t d, double out[8]) {
  backend().dotq8(row, queries, stride, d, out);
}

void dot_r4(const float* r0, const float* r1, const float* r2, const float* r3,
            const double* query, std::size_t d, double out[4]) {
  backend().dotr4(r0, r1, r2, r3, query, d, out);
}

const char* kernel_backend() { return backend().name; }

double l2_norm_sq(const float* v, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    s = std::fma(static_cast<double>(v[i]), static_cast<double>(v[i]), s);
  }
  return s;
}

}  // namespace aoiseg::detail
