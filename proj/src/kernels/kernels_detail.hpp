#pragma once

// Shared scalar building blocks for the softmax/entropy kernels.
//
// Both the scalar and the AVX2 backends are built from these exact operations
// (explicit std::fma, Cephes-derived exp/log polynomials, 4-lane blocked
// accumulation with a fixed reduction tree), so the two backends return
// bit-identical results. Compiled with -ffp-contract=off; every fused
// multiply-add is spelled out.

#include <cmath>
#include <cstdint>
#include <cstring>

namespace uqeval::kern::detail {

inline constexpr double kLog2E    = 1.4426950408889634073599;
inline constexpr double kExpC1    = 6.93145751953125E-1;          // ln2 high part
inline constexpr double kExpC2    = 1.42860682030941723212E-6;    // ln2 low part
inline constexpr double kMaxLog   = 709.782712893383996732;
inline constexpr double kMinLog   = -708.396418532264106224;
inline constexpr double kSqrtHalf = 0.70710678118654752440;
inline constexpr double kLn2Hi    = 0.693359375;
inline constexpr double kLn2Lo    = -2.121944400546905827679e-4;
inline constexpr double kProbFloor = 1e-300;   // below this, p*ln(p) is treated as 0

// exp rational approximation (Cephes exp.c)
inline constexpr double kExpP0 = 1.26177193074810590878E-4;
inline constexpr double kExpP1 = 3.02994407707441961300E-2;
inline constexpr double kExpP2 = 9.99999999999999999910E-1;
inline constexpr double kExpQ0 = 3.00198505138664455042E-6;
inline constexpr double kExpQ1 = 2.52448340349684104192E-3;
inline constexpr double kExpQ2 = 2.27265548208155028766E-1;
inline constexpr double kExpQ3 = 2.00000000000000000005E0;

// log rational approximation (Cephes log.c)
inline constexpr double kLogP0 = 1.01875663804580931796E-4;
inline constexpr double kLogP1 = 4.97494994976747001425E-1;
inline constexpr double kLogP2 = 4.70579119878881725854E0;
inline constexpr double kLogP3 = 1.44989225341610930846E1;
inline constexpr double kLogP4 = 1.79368678507819816313E1;
inline constexpr double kLogP5 = 7.70838733755885391666E0;
inline constexpr double kLogQ0 = 1.12873587189167450590E1;
inline constexpr double kLogQ1 = 4.52279145837532221105E1;
inline constexpr double kLogQ2 = 8.29875266912776603211E1;
inline constexpr double kLogQ3 = 7.11544750618563894466E1;
inline constexpr double kLogQ4 = 2.31251620126765340583E1;

inline double bits_to_double(std::uint64_t b) {
    double d;
    std::memcpy(&d, &b, sizeof(d));
    return d;
}

inline std::uint64_t double_to_bits(double d) {
    std::uint64_t b;
    std::memcpy(&b, &d, sizeof(b));
    return b;
}

// exp(x) for finite x; clamps to 0 / +inf outside the representable range.
inline double exp_pd(double x) {
    if (x > kMaxLog) return HUGE_VAL;
    if (x < kMinLog) return 0.0;
    double px = std::floor(std::fma(kLog2E, x, 0.5));
    const double n = px;
    x = std::fma(-px, kExpC1, x);
    x = std::fma(-px, kExpC2, x);
    const double xx = x * x;
    px = x * std::fma(std::fma(kExpP0, xx, kExpP1), xx, kExpP2);
    const double q = std::fma(std::fma(std::fma(kExpQ0, xx, kExpQ1), xx, kExpQ2), xx, kExpQ3);
    double e = px / (q - px);
    e = std::fma(2.0, e, 1.0);
    // ldexp(e, n): n is in [-1022, 1024] after the clamp, result stays normal
    const std::uint64_t bits = double_to_bits(e) + (static_cast<std::uint64_t>(static_cast<std::int64_t>(n)) << 52);
    return bits_to_double(bits);
}

// ln(x) for normal positive x (callers mask values below kProbFloor).
inline double log_pd(double x) {
    const std::uint64_t bits = double_to_bits(x);
    double e = static_cast<double>(static_cast<std::int64_t>((bits >> 52) & 0x7FF) - 1022);
    double m = bits_to_double((bits & 0x000FFFFFFFFFFFFFull) | 0x3FE0000000000000ull);
    if (m < kSqrtHalf) {
        e -= 1.0;
        m = std::fma(2.0, m, -1.0);
    } else {
        m -= 1.0;
    }
    const double z = m * m;
    double p = std::fma(kLogP0, m, kLogP1);
    p = std::fma(p, m, kLogP2);
    p = std::fma(p, m, kLogP3);
    p = std::fma(p, m, kLogP4);
    p = std::fma(p, m, kLogP5);
    double q = m + kLogQ0;
    q = std::fma(q, m, kLogQ1);
    q = std::fma(q, m, kLogQ2);
    q = std::fma(q, m, kLogQ3);
    q = std::fma(q, m, kLogQ4);
    double y = m * (z * p / q);
    y = std::fma(e, kLn2Lo, y);
    y = std::fma(-0.5, z, y);
    double r = m + y;
    r = std::fma(e, kLn2Hi, r);
    return r;
}

// -p*ln(p) with the 0*ln(0) := 0 convention extended to denormal-range inputs.
inline double entropy_term(double p) {
    if (p < kProbFloor) return 0.0;
    return -(p * log_pd(p));
}

// Reduction tree shared by both backends: lanes are combined as
// (l0 + l1) + (l2 + l3), then tail elements are added sequentially.
inline double combine_lanes(double l0, double l1, double l2, double l3) {
    return (l0 + l1) + (l2 + l3);
}

} // namespace uqeval::kern::detail
