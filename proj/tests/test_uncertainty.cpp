#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "uqeval/errors.hpp"
#include "uqeval/gateway.hpp"
#include "uqeval/kernels.hpp"
#include "uqeval/rng.hpp"
#include "uqeval/uncertainty.hpp"

#include "oracles.hpp"

using namespace uqeval;

namespace {

TokenDistribution dist_from_logprobs(std::vector<double> logprobs) {
    TokenDistribution d;
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        d.entries.push_back({"t" + std::to_string(i), logprobs[i]});
    }
    canonicalize_distribution(d);
    return d;
}

} // namespace

TEST_CASE("softmax of equal logits is uniform") {
    const std::vector<double> z{0.0, 0.0};
    const auto p = softmax(z);
    CHECK(p.probs()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.probs()[1] == doctest::Approx(0.5).epsilon(1e-12));

    const std::vector<double> z4{3.7, 3.7, 3.7, 3.7};
    const auto p4 = softmax(z4);
    for (double v : p4.probs()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax matches the analytic two-point case") {
    const std::vector<double> z{std::log(2.0), 0.0};
    const auto p = softmax(z);
    CHECK(p.probs()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p.probs()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects empty and non-finite input") {
    CHECK_THROWS_AS(softmax(std::vector<double>{}), UqError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), UqError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), UqError);
}

TEST_CASE("softmax shift invariance and sum-to-one over random vectors") {
    SplitMix64 rng(101);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::size_t n = 1 + rng.next_below(64);
        std::vector<double> z(n);
        for (auto& v : z) v = rng.next_range(-50.0, 50.0);
        const double c = rng.next_range(-100.0, 100.0);

        const auto p = softmax(z);
        double sum = 0.0;
        for (double v : p.probs()) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);

        std::vector<double> shifted = z;
        for (auto& v : shifted) v += c;
        const auto ps = softmax(shifted);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(p.probs()[i] - ps.probs()[i]) < 1e-12);
        }
    }
}

TEST_CASE("entropy of degenerate and uniform distributions") {
    CHECK(entropy(ProbVector({1.0, 0.0, 0.0})) == 0.0);
    for (int k = 2; k <= 10; ++k) {
        std::vector<double> u(static_cast<std::size_t>(k), 1.0 / k);
        CHECK(std::abs(entropy(ProbVector(u)) - std::log(static_cast<double>(k))) < 1e-12);
    }
    CHECK(entropy(ProbVector(std::vector<double>(10, 0.1))) ==
          doctest::Approx(2.302585093).epsilon(1e-9));
}

TEST_CASE("entropy matches the independently computed example") {
    // direct summation oracle: -(0.5 ln 0.5 + 0.25 ln 0.25 + 0.25 ln 0.25)
    const ProbVector p({0.5, 0.25, 0.25});
    CHECK(entropy(p) == doctest::Approx(1.039720771).epsilon(1e-9));
    CHECK(std::abs(entropy(p) - testing::naive_entropy(p.probs())) < 1e-12);
}

TEST_CASE("entropy oracle equivalence over random distributions") {
    SplitMix64 rng(555);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::size_t k = 1 + rng.next_below(32);
        std::vector<double> p(k);
        double sum = 0.0;
        for (auto& v : p) {
            v = rng.next_range(0.0, 1.0);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        const ProbVector pv(p);
        CHECK(std::abs(entropy(pv) - testing::naive_entropy(p)) < 1e-12);
    }
}

TEST_CASE("entropy is permutation invariant and bounded") {
    SplitMix64 rng(77);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t k = 2 + rng.next_below(16);
        std::vector<double> p(k);
        double sum = 0.0;
        for (auto& v : p) {
            v = rng.next_range(0.0, 1.0);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        const double u = entropy(ProbVector(p));
        CHECK(u >= 0.0);
        CHECK(u <= std::log(static_cast<double>(k)) + 1e-12);

        std::vector<double> shuffled = p;
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
        }
        CHECK(std::abs(entropy(ProbVector(shuffled)) - u) < 1e-12);
    }
}

TEST_CASE("ProbVector validates its invariants") {
    CHECK_THROWS_AS(ProbVector(std::vector<double>{}), UqError);
    CHECK_THROWS_AS(ProbVector({0.5, 0.6}), UqError);
    CHECK_THROWS_AS(ProbVector({1.2, -0.2}), UqError);
}

TEST_CASE("entropy_from_topk: single certain token") {
    const auto d = dist_from_logprobs({0.0});
    for (auto policy : {TopkPolicy::renormalize, TopkPolicy::tail_bucket}) {
        const auto r = entropy_from_topk(d, policy);
        CHECK(r.entropy == 0.0);
        CHECK(r.effective_support == 1);
    }
}

TEST_CASE("entropy_from_topk: full mass gives identical results under both policies") {
    const auto d = dist_from_logprobs({std::log(0.5), std::log(0.5)});
    const auto renorm = entropy_from_topk(d, TopkPolicy::renormalize);
    const auto tail = entropy_from_topk(d, TopkPolicy::tail_bucket);
    CHECK(renorm.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(tail.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(renorm.effective_support == 2);
    CHECK(tail.effective_support == 2);
}

TEST_CASE("entropy_from_topk: truncated mass splits the policies") {
    // two entries at p=0.25 each, missing half the mass
    const auto d = dist_from_logprobs({std::log(0.25), std::log(0.25)});

    const auto renorm = entropy_from_topk(d, TopkPolicy::renormalize);
    CHECK(renorm.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(renorm.effective_support == 2);

    // direct summation: -(0.25 ln 0.25 + 0.25 ln 0.25 + 0.5 ln 0.5)
    const auto tail = entropy_from_topk(d, TopkPolicy::tail_bucket);
    CHECK(tail.entropy == doctest::Approx(1.039720771).epsilon(1e-9));
    CHECK(tail.effective_support == 3);
}

TEST_CASE("entropy_from_topk rejects over-unit mass") {
    TokenDistribution d;
    d.entries = {{"a", std::log(0.7)}, {"b", std::log(0.7)}};
    std::sort(d.entries.begin(), d.entries.end(),
              [](auto& x, auto& y) { return x.logprob > y.logprob; });
    CHECK_THROWS_AS(entropy_from_topk(d, TopkPolicy::tail_bucket), UqError);
}

TEST_CASE("confidence endpoints and linearity") {
    CHECK(confidence(0.0, 10) == 1.0);
    CHECK(confidence(std::log(10.0), 10) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(confidence(0.5 * std::log(10.0), 10) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("confidence is strictly decreasing in entropy") {
    SplitMix64 rng(31);
    for (int iter = 0; iter < 100; ++iter) {
        const int k = 2 + static_cast<int>(rng.next_below(30));
        const double lnk = std::log(static_cast<double>(k));
        const double u1 = rng.next_range(0.0, lnk);
        const double u2 = rng.next_range(0.0, lnk);
        if (u1 == u2) continue;
        const double lo = std::min(u1, u2), hi = std::max(u1, u2);
        CHECK(confidence(lo, k) > confidence(hi, k));
    }
}

TEST_CASE("confidence domain errors") {
    CHECK_THROWS_AS(confidence(0.0, 1), UqError);
    CHECK_THROWS_AS(confidence(-0.1, 4), UqError);
    CHECK_THROWS_AS(confidence(std::log(4.0) + 0.1, 4), UqError);
}
