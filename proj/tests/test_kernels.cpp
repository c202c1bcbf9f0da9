#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "uqeval/kernels.hpp"
#include "uqeval/rng.hpp"

#include "oracles.hpp"

using namespace uqeval;

namespace {

std::vector<double> random_logits(SplitMix64& rng, std::size_t n, double lo = -40.0,
                                  double hi = 40.0) {
    std::vector<double> z(n);
    for (auto& v : z) v = rng.next_range(lo, hi);
    return z;
}

std::vector<double> random_probs(SplitMix64& rng, std::size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& v : p) {
        v = rng.next_range(1e-8, 1.0);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

bool bits_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

} // namespace

TEST_CASE("scalar backend is always available") {
    CHECK(kern::backend_available(kern::Backend::scalar));
    CHECK(kern::ops_for(kern::Backend::scalar).name == std::string("scalar"));
}

TEST_CASE("kernel exp matches libm within accumulation tolerance") {
    SplitMix64 rng(11);
    const auto& ops = kern::ops_for(kern::Backend::scalar);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t n = 1 + rng.next_below(600);
        const auto z = random_logits(rng, n, -700.0, 700.0);
        const double m = ops.reduce_max(z.data(), n);
        std::vector<double> got(n);
        ops.exp_store(z.data(), n, m, got.data());
        for (std::size_t i = 0; i < n; ++i) {
            const double want = std::exp(z[i] - m);
            CHECK(got[i] == doctest::Approx(want).epsilon(1e-13));
        }
    }
}

TEST_CASE("scalar and avx2 backends produce bit-identical results") {
    if (!kern::backend_available(kern::Backend::avx2)) {
        MESSAGE("avx2 unavailable on this host; skipping");
        return;
    }
    const auto& s = kern::ops_for(kern::Backend::scalar);
    const auto& v = kern::ops_for(kern::Backend::avx2);
    SplitMix64 rng(42);

    for (int iter = 0; iter < 300; ++iter) {
        const std::size_t n = 1 + rng.next_below(1200);
        const auto z = random_logits(rng, n);

        const double ms = s.reduce_max(z.data(), n);
        const double mv = v.reduce_max(z.data(), n);
        REQUIRE(bits_equal(ms, mv));

        std::vector<double> es(n), ev(n);
        s.exp_store(z.data(), n, ms, es.data());
        v.exp_store(z.data(), n, mv, ev.data());
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(bits_equal(es[i], ev[i]));
        }

        REQUIRE(bits_equal(s.sum(es.data(), n), v.sum(ev.data(), n)));

        const double inv = 1.0 / s.sum(es.data(), n);
        std::vector<double> ps = es, pv = ev;
        s.scale(ps.data(), n, inv);
        v.scale(pv.data(), n, inv);
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(bits_equal(ps[i], pv[i]));
        }

        REQUIRE(bits_equal(s.entropy_nats(ps.data(), n), v.entropy_nats(pv.data(), n)));
    }
}

TEST_CASE("entropy kernel matches the naive oracle on every backend") {
    SplitMix64 rng(7);
    for (kern::Backend b : kern::available_backends()) {
        const auto& ops = kern::ops_for(b);
        for (int iter = 0; iter < 500; ++iter) {
            const std::size_t n = 1 + rng.next_below(257);
            const auto p = random_probs(rng, n);
            const double got = ops.entropy_nats(p.data(), n);
            const double want = testing::naive_entropy(p);
            CHECK(std::abs(got - want) < 1e-12);
        }
    }
}

TEST_CASE("entropy kernel treats sub-1e-300 entries as zero") {
    for (kern::Backend b : kern::available_backends()) {
        const auto& ops = kern::ops_for(b);
        const std::vector<double> p = {1.0, 0.0, 1e-320, 0.0};
        CHECK(ops.entropy_nats(p.data(), p.size()) == 0.0);
    }
}

TEST_CASE("exp kernel clamps its range") {
    for (kern::Backend b : kern::available_backends()) {
        const auto& ops = kern::ops_for(b);
        const std::vector<double> z = {-800.0, -1e6, 800.0, 0.0};
        std::vector<double> out(z.size());
        ops.exp_store(z.data(), z.size(), 0.0, out.data());
        CHECK(out[0] == 0.0);
        CHECK(out[1] == 0.0);
        CHECK(std::isinf(out[2]));
        CHECK(out[3] == 1.0);
    }
}

TEST_CASE("backend selection respects overrides") {
    const kern::Backend prior = kern::active_backend();
    CHECK(kern::set_backend(kern::Backend::scalar));
    CHECK(kern::active_backend() == kern::Backend::scalar);
    if (kern::backend_available(kern::Backend::avx2)) {
        CHECK(kern::set_backend(kern::Backend::avx2));
        CHECK(kern::active_backend() == kern::Backend::avx2);
    }
    kern::set_backend(prior);
}
