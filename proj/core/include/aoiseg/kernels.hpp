#pragma once

#include <cstddef>

namespace aoiseg::detail {

// Dot products accumulate exact f32*f32 products into eight f64 lanes
// (lane = element index mod 8) and reduce the lanes with a fixed pairwise
// tree. Every backend (scalar, AVX2+FMA, AVX-512) and every tiling follows
// the same scheme, so results are bit-identical regardless of dispatch.
//
// The query side is pre-widened to f64 once per batch; widening f32 to f64 is
// exact, so only the lane accumulation order matters.

double dot_scalar(const float* row, const double* query, std::size_t d);

/// Dispatched single row x single query.
double dot(const float* row, const double* query, std::size_t d);

/// One row against four queries laid out at `stride` doubles apart.
void dot_q4(const float* row, const double* queries, std::size_t stride,
            std::size_t d, double out[4]);

/// One row against eight queries (wider tile amortizes the row conversion).
void dot_q8(const float* row, const double* queries, std::size_t stride,
            std::size_t d, double out[8]);

/// Four rows against one query.
void dot_r4(const float* r0, const float* r1, const float* r2, const float* r3,
            const double* query, std::size_t d, double out[4]);

const char* kernel_backend();

/// Sequential f64 sum of squares (normalization path; not performance
/// critical, fully deterministic).
double l2_norm_sq(const float* v, std::size_t d);

}  // namespace aoiseg::detail
