// AVX2 + FMA variants. Built with -mavx2 -mfma -ffp-contract=off; only
// reached after a runtime CPU check. Distances use separate multiply and add
// so they match the scalar reference bit for bit.

#include "imd/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace imd::simd {
namespace {

inline __m256d sq_dist4(const PointBlock& pts, const double* q, std::size_t i) noexcept {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < pts.dims; ++k) {
        const __m256d diff =
            _mm256_sub_pd(_mm256_loadu_pd(pts.column(k) + i), _mm256_set1_pd(q[k]));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(diff, diff));
    }
    return acc;
}

inline double sq_dist_row(const PointBlock& pts, const double* q, std::size_t i) noexcept {
    double acc = 0.0;
    for (std::size_t k = 0; k < pts.dims; ++k) {
        const double diff = pts.column(k)[i] - q[k];
        acc += diff * diff;
    }
    return acc;
}

inline double hsum(__m256d v) noexcept {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmin(__m256d v) noexcept {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d m = _mm_min_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_min_sd(m, _mm_unpackhi_pd(m, m)));
}

inline double hmax(__m256d v) noexcept {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d m = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// exp(x) for x <= 0. Range reduction x = n ln2 + r with |r| <= ln2/2, then a
// degree-13 Taylor polynomial (truncation < 1e-17 relative). Arguments below
// -708 flush to zero instead of producing subnormals.
inline __m256d exp_nonpositive(__m256d x) noexcept {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d floor_arg = _mm256_set1_pd(-708.0);

    const __m256d underflow = _mm256_cmp_pd(x, floor_arg, _CMP_LT_OQ);
    x = _mm256_max_pd(x, floor_arg);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    static constexpr double inv_fact[] = {
        1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
        1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
        1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        0.5,
        1.0,                1.0};
    __m256d p = _mm256_set1_pd(inv_fact[0]);
    for (int j = 1; j < 14; ++j) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(inv_fact[j]));

    // 2^n through the exponent field; n in [-1022, 0] here.
    const __m128i n32 = _mm256_cvtpd_epi32(n);
    const __m256i n64 = _mm256_cvtepi32_epi64(n32);
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
    const __m256d scaled = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
    return _mm256_andnot_pd(underflow, scaled);
}

void squared_distances(const PointBlock& pts, const double* q, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= pts.rows; i += 4) _mm256_storeu_pd(out + i, sq_dist4(pts, q, i));
    for (; i < pts.rows; ++i) out[i] = sq_dist_row(pts, q, i);
}

double max_squared_distance(const PointBlock& pts, const double* q, std::size_t begin) {
    double best = 0.0;
    std::size_t i = begin;
    if (pts.rows - begin >= 4) {
        __m256d acc = _mm256_setzero_pd();
        for (; i + 4 <= pts.rows; i += 4) acc = _mm256_max_pd(acc, sq_dist4(pts, q, i));
        best = hmax(acc);
    }
    for (; i < pts.rows; ++i) best = std::max(best, sq_dist_row(pts, q, i));
    return best;
}

GaussianMoments gaussian_barycenter(const PointBlock& pts, const double* q, double a,
                                    double* bary) {
    const std::size_t vec_end = pts.rows - pts.rows % 4;

    double dmin = std::numeric_limits<double>::infinity();
    if (vec_end > 0) {
        __m256d m = _mm256_set1_pd(dmin);
        for (std::size_t i = 0; i < vec_end; i += 4) m = _mm256_min_pd(m, sq_dist4(pts, q, i));
        dmin = hmin(m);
    }
    for (std::size_t i = vec_end; i < pts.rows; ++i) dmin = std::min(dmin, sq_dist_row(pts, q, i));

    // Up to 16 ambient dimensions are accumulated in registers; larger inputs
    // fall back to a two-level loop over the weights.
    constexpr std::size_t kMaxRegDims = 16;
    std::fill(bary, bary + pts.dims, 0.0);
    const __m256d neg_a = _mm256_set1_pd(-a);
    const __m256d vmin = _mm256_set1_pd(dmin);
    __m256d vtotal = _mm256_setzero_pd();

    if (pts.dims <= kMaxRegDims) {
        __m256d acc[kMaxRegDims];
        for (std::size_t k = 0; k < pts.dims; ++k) acc[k] = _mm256_setzero_pd();
        for (std::size_t i = 0; i < vec_end; i += 4) {
            const __m256d w = exp_nonpositive(_mm256_mul_pd(neg_a, _mm256_sub_pd(sq_dist4(pts, q, i), vmin)));
            vtotal = _mm256_add_pd(vtotal, w);
            for (std::size_t k = 0; k < pts.dims; ++k)
                acc[k] = _mm256_fmadd_pd(w, _mm256_loadu_pd(pts.column(k) + i), acc[k]);
        }
        for (std::size_t k = 0; k < pts.dims; ++k) bary[k] = hsum(acc[k]);
    } else {
        alignas(32) double w4[4];
        for (std::size_t i = 0; i < vec_end; i += 4) {
            const __m256d w = exp_nonpositive(_mm256_mul_pd(neg_a, _mm256_sub_pd(sq_dist4(pts, q, i), vmin)));
            vtotal = _mm256_add_pd(vtotal, w);
            _mm256_store_pd(w4, w);
            for (std::size_t k = 0; k < pts.dims; ++k) {
                const double* col = pts.column(k) + i;
                bary[k] += w4[0] * col[0] + w4[1] * col[1] + w4[2] * col[2] + w4[3] * col[3];
            }
        }
    }

    double total = hsum(vtotal);
    for (std::size_t i = vec_end; i < pts.rows; ++i) {
        const double w = std::exp(-a * (sq_dist_row(pts, q, i) - dmin));
        total += w;
        for (std::size_t k = 0; k < pts.dims; ++k) bary[k] += w * pts.column(k)[i];
    }
    for (std::size_t k = 0; k < pts.dims; ++k) bary[k] /= total;
    return {std::log(total) - a * dmin, dmin};
}

}  // namespace

const KernelTable* avx2_kernels() noexcept {
    static const KernelTable table{"avx2", &squared_distances, &max_squared_distance,
                                   &gaussian_barycenter};
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &table : nullptr;
}

}  // namespace imd::simd
