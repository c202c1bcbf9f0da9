#include "uqeval/kernels.hpp"

#include "kernels_detail.hpp"

namespace uqeval::kern {

namespace d = detail;

namespace {

double scalar_reduce_max(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] > m) m = x[i];
    }
    return m;
}

void scalar_exp_store(const double* x, std::size_t n, double shift, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = d::exp_pd(x[i] - shift);
    }
}

double scalar_sum(const double* x, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        acc0 += x[4 * b + 0];
        acc1 += x[4 * b + 1];
        acc2 += x[4 * b + 2];
        acc3 += x[4 * b + 3];
    }
    double total = d::combine_lanes(acc0, acc1, acc2, acc3);
    for (std::size_t i = blocks * 4; i < n; ++i) {
        total += x[i];
    }
    return total;
}

void scalar_scale(double* x, std::size_t n, double c) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= c;
    }
}

double scalar_entropy(const double* p, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t blocks = n / 4;
    for (std::size_t b = 0; b < blocks; ++b) {
        acc0 += d::entropy_term(p[4 * b + 0]);
        acc1 += d::entropy_term(p[4 * b + 1]);
        acc2 += d::entropy_term(p[4 * b + 2]);
        acc3 += d::entropy_term(p[4 * b + 3]);
    }
    double total = d::combine_lanes(acc0, acc1, acc2, acc3);
    for (std::size_t i = blocks * 4; i < n; ++i) {
        total += d::entropy_term(p[i]);
    }
    return total;
}

} // namespace

const Ops& scalar_ops() {
    static const Ops ops{
        "scalar",
        scalar_reduce_max,
        scalar_exp_store,
        scalar_sum,
        scalar_scale,
        scalar_entropy,
    };
    return ops;
}

} // namespace uqeval::kern
