#include "uqeval/uncertainty.hpp"

#include <cmath>
#include <utility>

#include "uqeval/errors.hpp"
#include "uqeval/gateway.hpp"
#include "uqeval/kernels.hpp"

namespace uqeval {

namespace {
constexpr double kSumTolerance = 1e-9;
constexpr double kMassTolerance = 1e-6;
constexpr double kTailFloor = 1e-9;
} // namespace

ProbVector::ProbVector(std::vector<double> probs) {
    if (probs.empty()) {
        throw UqError(ErrorKind::domain, "probability vector must be non-empty");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw UqError(ErrorKind::domain,
                          "probability " + std::to_string(p) + " outside [0,1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw UqError(ErrorKind::domain,
                      "probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
    probs_ = std::move(probs);
}

ProbVector ProbVector::unchecked(std::vector<double> probs) {
    ProbVector v;
    v.probs_ = std::move(probs);
    return v;
}

ProbVector softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw UqError(ErrorKind::domain, "softmax of empty logit vector");
    }
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw UqError(ErrorKind::domain, "softmax input must be finite");
        }
    }
    const auto& k = kern::active();
    const double shift = k.reduce_max(logits.data(), logits.size());
    std::vector<double> out(logits.size());
    k.exp_store(logits.data(), logits.size(), shift, out.data());
    const double sum = k.sum(out.data(), out.size());
    k.scale(out.data(), out.size(), 1.0 / sum);
    return ProbVector::unchecked(std::move(out));
}

double entropy(const ProbVector& p) {
    const auto s = p.probs();
    double u = kern::active().entropy_nats(s.data(), s.size());
    // guard against a tiny negative from rounding when p is one-hot
    return u < 0.0 ? 0.0 : u;
}

TopkEntropy entropy_from_topk(const TokenDistribution& dist, TopkPolicy policy) {
    if (dist.entries.empty()) {
        throw UqError(ErrorKind::data, "token distribution has no entries");
    }
    std::vector<double> probs;
    probs.reserve(dist.entries.size() + 1);
    double mass = 0.0;
    for (const auto& e : dist.entries) {
        const double p = std::exp(e.logprob);
        probs.push_back(p);
        mass += p;
    }
    if (mass > 1.0 + kMassTolerance) {
        throw UqError(ErrorKind::data,
                      "top-k probability mass " + std::to_string(mass) + " exceeds 1");
    }

    const auto& k = kern::active();
    int support = static_cast<int>(probs.size());
    if (policy == TopkPolicy::renormalize) {
        k.scale(probs.data(), probs.size(), 1.0 / mass);
    } else {
        const double tail = 1.0 - mass;
        if (tail > kTailFloor) {
            probs.push_back(tail);
            support += 1;
        }
    }
    double u = k.entropy_nats(probs.data(), probs.size());
    if (u < 0.0) u = 0.0;
    return TopkEntropy{u, support};
}

double confidence(double entropy_nats, int support) {
    if (support < 2) {
        throw UqError(ErrorKind::domain, "confidence requires support >= 2");
    }
    const double ln_k = std::log(static_cast<double>(support));
    if (entropy_nats < 0.0 || entropy_nats > ln_k + 1e-9) {
        throw UqError(ErrorKind::domain,
                      "entropy " + std::to_string(entropy_nats) + " outside [0, ln k]");
    }
    double c = 1.0 - entropy_nats / ln_k;
    if (c < 0.0) c = 0.0;
    if (c > 1.0) c = 1.0;
    return c;
}

} // namespace uqeval
