// AVX2 backend. Compiled with -mavx2 -mfma; only ever called after the
// dispatcher has confirmed CPU support. Each op performs the same arithmetic
// as the scalar backend (same fma placement, same reduction tree), so results
// are bit-identical across backends.

#include "uqeval/kernels.hpp"

#include <immintrin.h>

#include "kernels_detail.hpp"

namespace uqeval::kern {

namespace d = detail;

namespace {

inline __m256d splat(double v) { return _mm256_set1_pd(v); }

// exp(x[i]) elementwise, Cephes rational form. Out-of-range lanes are clamped
// first and patched to 0 / +inf afterwards.
inline __m256d vexp(__m256d x0) {
    const __m256d hi_mask = _mm256_cmp_pd(x0, splat(d::kMaxLog), _CMP_GT_OQ);
    const __m256d lo_mask = _mm256_cmp_pd(x0, splat(d::kMinLog), _CMP_LT_OQ);
    __m256d x = _mm256_min_pd(_mm256_max_pd(x0, splat(d::kMinLog - 1.0)), splat(d::kMaxLog + 1.0));

    __m256d px = _mm256_floor_pd(_mm256_fmadd_pd(splat(d::kLog2E), x, splat(0.5)));
    const __m256d n = px;
    x = _mm256_fnmadd_pd(px, splat(d::kExpC1), x);
    x = _mm256_fnmadd_pd(px, splat(d::kExpC2), x);
    const __m256d xx = _mm256_mul_pd(x, x);
    px = _mm256_mul_pd(
        x, _mm256_fmadd_pd(_mm256_fmadd_pd(splat(d::kExpP0), xx, splat(d::kExpP1)), xx, splat(d::kExpP2)));
    const __m256d q = _mm256_fmadd_pd(
        _mm256_fmadd_pd(_mm256_fmadd_pd(splat(d::kExpQ0), xx, splat(d::kExpQ1)), xx, splat(d::kExpQ2)), xx,
        splat(d::kExpQ3));
    __m256d e = _mm256_div_pd(px, _mm256_sub_pd(q, px));
    e = _mm256_fmadd_pd(splat(2.0), e, splat(1.0));

    // ldexp(e, n)
    const __m128i n32 = _mm256_cvtpd_epi32(n);
    const __m256i n64 = _mm256_cvtepi32_epi64(n32);
    const __m256i bits = _mm256_add_epi64(_mm256_castpd_si256(e), _mm256_slli_epi64(n64, 52));
    __m256d r = _mm256_castsi256_pd(bits);

    r = _mm256_andnot_pd(lo_mask, r);
    r = _mm256_blendv_pd(r, splat(HUGE_VAL), hi_mask);
    return r;
}

// ln(x[i]) elementwise for normal positive inputs (callers mask the rest).
inline __m256d vlog(__m256d x) {
    const __m256i bits = _mm256_castpd_si256(x);
    const __m256i e_i64 = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7FF));
    // low dword of each qword -> 4 x i32
    const __m256i packed = _mm256_permutevar8x32_epi32(e_i64, _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0));
    __m256d e = _mm256_cvtepi32_pd(_mm256_castsi256_si128(packed));
    e = _mm256_sub_pd(e, splat(1022.0));

    __m256d m = _mm256_castsi256_pd(
        _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll)),
                        _mm256_set1_epi64x(0x3FE0000000000000ll)));

    const __m256d small = _mm256_cmp_pd(m, splat(d::kSqrtHalf), _CMP_LT_OQ);
    e = _mm256_add_pd(e, _mm256_and_pd(small, splat(-1.0)));
    const __m256d m_small = _mm256_fmadd_pd(splat(2.0), m, splat(-1.0));
    const __m256d m_big = _mm256_sub_pd(m, splat(1.0));
    m = _mm256_blendv_pd(m_big, m_small, small);

    const __m256d z = _mm256_mul_pd(m, m);
    __m256d p = _mm256_fmadd_pd(splat(d::kLogP0), m, splat(d::kLogP1));
    p = _mm256_fmadd_pd(p, m, splat(d::kLogP2));
    p = _mm256_fmadd_pd(p, m, splat(d::kLogP3));
    p = _mm256_fmadd_pd(p, m, splat(d::kLogP4));
    p = _mm256_fmadd_pd(p, m, splat(d::kLogP5));
    __m256d q = _mm256_add_pd(m, splat(d::kLogQ0));
    q = _mm256_fmadd_pd(q, m, splat(d::kLogQ1));
    q = _mm256_fmadd_pd(q, m, splat(d::kLogQ2));
    q = _mm256_fmadd_pd(q, m, splat(d::kLogQ3));
    q = _mm256_fmadd_pd(q, m, splat(d::kLogQ4));

    __m256d y = _mm256_mul_pd(m, _mm256_div_pd(_mm256_mul_pd(z, p), q));
    y = _mm256_fmadd_pd(e, splat(d::kLn2Lo), y);
    y = _mm256_fmadd_pd(splat(-0.5), z, y);
    __m256d r = _mm256_add_pd(m, y);
    r = _mm256_fmadd_pd(e, splat(d::kLn2Hi), r);
    return r;
}

inline double reduce_tree(__m256d acc) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    return d::combine_lanes(lanes[0], lanes[1], lanes[2], lanes[3]);
}

double avx2_reduce_max(const double* x, std::size_t n) {
    if (n < 4) {
        double m = x[0];
        for (std::size_t i = 1; i < n; ++i) {
            if (x[i] > m) m = x[i];
        }
        return m;
    }
    __m256d acc = _mm256_loadu_pd(x);
    const std::size_t blocks = n / 4;
    for (std::size_t b = 1; b < blocks; ++b) {
        acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + 4 * b));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double m = lanes[0];
    for (int i = 1; i < 4; ++i) {
        if (lanes[i] > m) m = lanes[i];
    }
    for (std::size_t i = blocks * 4; i < n; ++i) {
        if (x[i] > m) m = x[i];
    }
    return m;
}

void avx2_exp_store(const double* x, std::size_t n, double shift, double* out) {
    const __m256d vshift = splat(shift);
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        const __m256d v = _mm256_sub_pd(_mm256_loadu_pd(x + 4 * b), vshift);
        _mm256_storeu_pd(out + 4 * b, vexp(v));
    }
    for (std::size_t i = blocks * 4; i < n; ++i) {
        out[i] = d::exp_pd(x[i] - shift);
    }
}

double avx2_sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + 4 * b));
    }
    double total = reduce_tree(acc);
    for (std::size_t i = blocks * 4; i < n; ++i) {
        total += x[i];
    }
    return total;
}

void avx2_scale(double* x, std::size_t n, double c) {
    const __m256d vc = splat(c);
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        _mm256_storeu_pd(x + 4 * b, _mm256_mul_pd(_mm256_loadu_pd(x + 4 * b), vc));
    }
    for (std::size_t i = blocks * 4; i < n; ++i) {
        x[i] *= c;
    }
}

double avx2_entropy(const double* p, std::size_t n) {
    const __m256d sign = splat(-0.0);
    const __m256d floor_v = splat(d::kProbFloor);
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        const __m256d pv = _mm256_loadu_pd(p + 4 * b);
        const __m256d lp = vlog(pv);
        __m256d term = _mm256_xor_pd(_mm256_mul_pd(pv, lp), sign);
        const __m256d keep = _mm256_cmp_pd(pv, floor_v, _CMP_GE_OQ);
        term = _mm256_and_pd(term, keep);
        acc = _mm256_add_pd(acc, term);
    }
    double total = reduce_tree(acc);
    for (std::size_t i = blocks * 4; i < n; ++i) {
        total += d::entropy_term(p[i]);
    }
    return total;
}

} // namespace

const Ops& avx2_ops() {
    static const Ops ops{
        "avx2",
        avx2_reduce_max,
        avx2_exp_store,
        avx2_sum,
        avx2_scale,
        avx2_entropy,
    };
    return ops;
}

} // namespace uqeval::kern
